#pragma once

// File formats. Every binary format starts with an 8-byte magic whose last
// character is the format version; integers are u32 and reals are IEEE
// binary64, both little-endian.
//
//   MOLEMAT1  u32 rows, u32 cols, rows·cols reals (row-major)
//   MOLETEN1  u32 channels, u32 side, channels·side² reals; a tensor file
//             holds zero or more such records back to back
//   MOLEROW1  u32 count, u32 len, count·len reals
//   MOLEKER1  u32 α, u32 β, u32 p, α·β·p² reals in (i, j, a, b) order

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mole/augconv.hpp"
#include "mole/d2r.hpp"
#include "mole/error.hpp"
#include "mole/linalg.hpp"

namespace mole {

inline constexpr std::string_view kMatrixMagic = "MOLEMAT1";
inline constexpr std::string_view kTensorMagic = "MOLETEN1";
inline constexpr std::string_view kRowsMagic = "MOLEROW1";
inline constexpr std::string_view kKernelMagic = "MOLEKER1";

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline void put_reals(std::ostream& os, std::span<const double> xs) {
  std::vector<char> buf(xs.size() * 8);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(xs[i]);
    for (int k = 0; k < 8; ++k) buf[i * 8 + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw Error(Errc::Format, std::string("truncated ") + what);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::vector<double> get_reals(std::istream& is, std::size_t n, const char* what) {
  std::vector<unsigned char> buf(n * 8);
  read_exact(is, reinterpret_cast<char*>(buf.data()), buf.size(), what);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | buf[i * 8 + static_cast<std::size_t>(k)];
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::array<char, 8> b{};
  read_exact(is, b.data(), 8, "header");
  if (std::string_view(b.data(), 8) != magic)
    throw Error(Errc::Format, "bad magic: expected " + std::string(magic));
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw Error(Errc::Format, std::string(what) + " exceeds the u32 range");
  return static_cast<std::uint32_t>(v);
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot open " + p.string() + " for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + p.string());
  return is;
}

inline void finish(std::ostream& os, const std::filesystem::path& p) {
  os.flush();
  if (!os) throw Error(Errc::Io, "write failed: " + p.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matrices

inline void write_matrix(std::ostream& os, const Matrix& a) {
  os.write(kMatrixMagic.data(), 8);
  detail::put_u32(os, detail::checked_u32(a.rows(), "rows"));
  detail::put_u32(os, detail::checked_u32(a.cols(), "cols"));
  detail::put_reals(os, a.data());
}

inline Matrix read_matrix(std::istream& is) {
  detail::expect_magic(is, kMatrixMagic);
  const std::uint32_t r = detail::get_u32(is, "matrix header");
  const std::uint32_t c = detail::get_u32(is, "matrix header");
  if (r == 0 || c == 0) throw Error(Errc::Format, "matrix file with an empty dimension");
  return Matrix(r, c, detail::get_reals(is, std::size_t{r} * c, "matrix data"));
}

inline void save_matrix(const std::filesystem::path& p, const Matrix& a) {
  auto os = detail::open_out(p);
  write_matrix(os, a);
  detail::finish(os, p);
}

inline Matrix load_matrix(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_matrix(is);
}

// ---------------------------------------------------------------------------
// row sets

inline void write_rows(std::ostream& os, const std::vector<RowVector>& rows, std::size_t len) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != len)
      throw Error(Errc::DimensionMismatch, "row " + std::to_string(i) + " has length " +
                                               std::to_string(rows[i].size()) + ", expected " + std::to_string(len));
  os.write(kRowsMagic.data(), 8);
  detail::put_u32(os, detail::checked_u32(rows.size(), "row count"));
  detail::put_u32(os, detail::checked_u32(len, "row length"));
  for (const auto& r : rows) detail::put_reals(os, r.data());
}

struct RowSet {
  std::size_t len = 0;
  std::vector<RowVector> rows;
};

inline RowSet read_rows(std::istream& is) {
  detail::expect_magic(is, kRowsMagic);
  const std::uint32_t count = detail::get_u32(is, "row header");
  const std::uint32_t len = detail::get_u32(is, "row header");
  RowSet out{len, {}};
  out.rows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) out.rows.emplace_back(detail::get_reals(is, len, "row data"));
  return out;
}

inline void save_rows(const std::filesystem::path& p, const std::vector<RowVector>& rows, std::size_t len) {
  auto os = detail::open_out(p);
  write_rows(os, rows, len);
  detail::finish(os, p);
}

inline RowSet load_rows(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_rows(is);
}

// ---------------------------------------------------------------------------
// tensors

template <class Tag>
void write_tensor(std::ostream& os, const ChannelTensor<Tag>& t) {
  os.write(kTensorMagic.data(), 8);
  detail::put_u32(os, detail::checked_u32(t.channels(), "channels"));
  detail::put_u32(os, detail::checked_u32(t.side(), "side"));
  detail::put_reals(os, t.data());
}

/// Reads every record until end of stream.
template <class Tag>
std::vector<ChannelTensor<Tag>> read_tensors(std::istream& is) {
  std::vector<ChannelTensor<Tag>> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    detail::expect_magic(is, kTensorMagic);
    const std::uint32_t ch = detail::get_u32(is, "tensor header");
    const std::uint32_t side = detail::get_u32(is, "tensor header");
    if (ch == 0 || side == 0) throw Error(Errc::Format, "tensor record with an empty dimension");
    out.emplace_back(ch, side, detail::get_reals(is, std::size_t{ch} * side * side, "tensor data"));
  }
  return out;
}

template <class Tag>
void save_tensors(const std::filesystem::path& p, const std::vector<ChannelTensor<Tag>>& ts) {
  auto os = detail::open_out(p);
  for (const auto& t : ts) write_tensor(os, t);
  detail::finish(os, p);
}

template <class Tag>
std::vector<ChannelTensor<Tag>> load_tensors(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_tensors<Tag>(is);
}

// ---------------------------------------------------------------------------
// kernels

inline void write_kernels(std::ostream& os, const KernelSet& k) {
  os.write(kKernelMagic.data(), 8);
  detail::put_u32(os, detail::checked_u32(k.alpha(), "alpha"));
  detail::put_u32(os, detail::checked_u32(k.beta(), "beta"));
  detail::put_u32(os, detail::checked_u32(k.p(), "p"));
  detail::put_reals(os, k.weights());
}

inline KernelSet read_kernels(std::istream& is) {
  detail::expect_magic(is, kKernelMagic);
  const std::uint32_t a = detail::get_u32(is, "kernel header");
  const std::uint32_t b = detail::get_u32(is, "kernel header");
  const std::uint32_t p = detail::get_u32(is, "kernel header");
  if (a == 0 || b == 0 || p == 0) throw Error(Errc::Format, "kernel file with an empty dimension");
  return KernelSet(a, b, p, detail::get_reals(is, std::size_t{a} * b * p * p, "kernel data"));
}

inline void save_kernels(const std::filesystem::path& p, const KernelSet& k) {
  auto os = detail::open_out(p);
  write_kernels(os, k);
  detail::finish(os, p);
}

inline KernelSet load_kernels(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_kernels(is);
}

// ---------------------------------------------------------------------------
// Netpbm images (binary P5 grey, P6 colour; square only)

namespace detail {

inline std::uint32_t pnm_token(std::istream& is) {
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = is.get();
  }
  if (c == EOF || !std::isdigit(c)) throw Error(Errc::Format, "malformed PNM header");
  std::uint64_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
    if (v > 0xffffffffu) throw Error(Errc::Format, "PNM header value out of range");
    c = is.get();
  }
  // exactly one whitespace byte separates the header from the raster
  if (c != EOF && !std::isspace(c)) throw Error(Errc::Format, "malformed PNM header");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Pixel values are divided by maxval, so the result lies in [0, 1].
inline ImageTensor read_pnm(std::istream& is) {
  std::array<char, 2> magic{};
  detail::read_exact(is, magic.data(), 2, "PNM magic");
  std::size_t channels = 0;
  if (magic[0] == 'P' && magic[1] == '5')
    channels = 1;
  else if (magic[0] == 'P' && magic[1] == '6')
    channels = 3;
  else
    throw Error(Errc::Format, "not a binary PGM/PPM file");
  const std::uint32_t w = detail::pnm_token(is);
  const std::uint32_t h = detail::pnm_token(is);
  const std::uint32_t maxval = detail::pnm_token(is);
  if (w == 0 || h == 0) throw Error(Errc::Format, "empty image");
  if (maxval == 0 || maxval > 65535) throw Error(Errc::Format, "maxval must lie in [1, 65535]");
  if (w != h) throw Error(Errc::InvalidGeometry, "image must be square, got " + std::to_string(w) + "x" + std::to_string(h));
  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t side = w;
  std::vector<unsigned char> raw(side * side * channels * bps);
  detail::read_exact(is, reinterpret_cast<char*>(raw.data()), raw.size(), "PNM raster");
  ImageTensor img(channels, side);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c)
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t idx = ((r * side + c) * channels + ch) * bps;
        const std::uint32_t v = bps == 1 ? raw[idx] : (static_cast<std::uint32_t>(raw[idx]) << 8) | raw[idx + 1];
        if (v > maxval) throw Error(Errc::Format, "pixel value exceeds maxval");
        img.at(ch, r, c) = static_cast<double>(v) * scale;
      }
  return img;
}

/// Values are clamped to [0, 1] and quantised to 8 bits.
inline void write_pnm(std::ostream& os, const ImageTensor& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw Error(Errc::InvalidGeometry, "PNM output needs 1 or 3 channels");
  const std::size_t side = img.side();
  os << (img.channels() == 1 ? "P5" : "P6") << '\n' << side << ' ' << side << "\n255\n";
  std::vector<char> raw(side * side * img.channels());
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c)
      for (std::size_t ch = 0; ch < img.channels(); ++ch) {
        const double v = std::clamp(img.at(ch, r, c), 0.0, 1.0);
        raw[(r * side + c) * img.channels() + ch] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

inline ImageTensor load_pnm(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  return read_pnm(is);
}

inline void save_pnm(const std::filesystem::path& p, const ImageTensor& img) {
  auto os = detail::open_out(p);
  write_pnm(os, img);
  detail::finish(os, p);
}

/// PGM/PPM by extension, otherwise a MOLETEN1 file (all records).
inline std::vector<ImageTensor> load_images(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return {load_pnm(p)};
  return load_tensors<ImageTag>(p);
}

// ---------------------------------------------------------------------------
// JSON documents

inline nlohmann::json read_json(const std::filesystem::path& p) {
  auto is = detail::open_in(p);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, p.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot open " + p.string() + " for writing");
  os << j.dump(2) << '\n';
  detail::finish(os, p);
}

/// Provider-only secret. The permutation may be absent, in which case it is
/// derived from the seed once the number of output channels is known.
struct MorphSecret {
  int version = 1;
  std::size_t alpha = 0;
  std::size_t m = 0;
  std::size_t kappa = 0;
  std::size_t q = 0;
  std::uint64_t seed = 0;
  std::string mprime_file;
  std::optional<std::vector<std::size_t>> permutation;
};

inline nlohmann::json to_json(const MorphSecret& s) {
  nlohmann::json j{{"version", s.version}, {"alpha", s.alpha}, {"m", s.m},     {"kappa", s.kappa},
                   {"q", s.q},             {"seed", s.seed},   {"mprime_file", s.mprime_file}};
  j["permutation"] = s.permutation ? nlohmann::json(*s.permutation) : nlohmann::json(nullptr);
  return j;
}

inline MorphSecret secret_from_json(const nlohmann::json& j) {
  try {
    MorphSecret s;
    s.version = j.at("version").get<int>();
    if (s.version != 1) throw Error(Errc::Format, "unsupported secret version " + std::to_string(s.version));
    s.alpha = j.at("alpha").get<std::size_t>();
    s.m = j.at("m").get<std::size_t>();
    s.kappa = j.at("kappa").get<std::size_t>();
    s.q = j.at("q").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.mprime_file = j.at("mprime_file").get<std::string>();
    if (j.contains("permutation") && !j.at("permutation").is_null())
      s.permutation = j.at("permutation").get<std::vector<std::size_t>>();
    if (s.alpha * s.m * s.m != s.kappa * s.q) throw Error(Errc::Format, "secret geometry is inconsistent");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("secret file: ") + e.what());
  }
}

/// Developer-facing description of an Aug-Conv matrix file.
inline nlohmann::json augconv_sidecar(const AugConvMatrix& ac) {
  return {{"alpha", ac.alpha}, {"m", ac.m}, {"beta", ac.beta}, {"n", ac.n},
          {"p", ac.p},         {"padding", to_string(ac.padding)}, {"permuted", ac.permuted}};
}

inline void save_augconv(const std::filesystem::path& matrix_path, const AugConvMatrix& ac) {
  save_matrix(matrix_path, ac.matrix);
  write_json(std::filesystem::path(matrix_path.string() + ".json"), augconv_sidecar(ac));
}

inline AugConvMatrix load_augconv(const std::filesystem::path& matrix_path) {
  const nlohmann::json j = read_json(std::filesystem::path(matrix_path.string() + ".json"));
  AugConvMatrix ac;
  try {
    ac.alpha = j.at("alpha").get<std::size_t>();
    ac.m = j.at("m").get<std::size_t>();
    ac.beta = j.at("beta").get<std::size_t>();
    ac.n = j.at("n").get<std::size_t>();
    ac.p = j.at("p").get<std::size_t>();
    ac.padding = parse_padding(j.at("padding").get<std::string>());
    ac.permuted = j.at("permuted").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("sidecar: ") + e.what());
  }
  ac.matrix = load_matrix(matrix_path);
  if (ac.matrix.rows() != ac.alpha * ac.m * ac.m || ac.matrix.cols() != ac.beta * ac.n * ac.n)
    throw Error(Errc::GeometryMismatch, "Aug-Conv matrix shape disagrees with its sidecar");
  return ac;
}

}  // namespace mole

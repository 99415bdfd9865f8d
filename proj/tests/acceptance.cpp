// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mole/mole.hpp"

using namespace mole;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ImageTensor random_image(std::size_t alpha, std::size_t m, SeededRng& rng) {
  ImageTensor img(alpha, m);
  for (double& v : img.data()) v = rng.uniform01();
  return img;
}

KernelSet random_kernels(std::size_t alpha, std::size_t beta, std::size_t p, SeededRng& rng) {
  KernelSet k(alpha, beta, p);
  for (double& v : k.weights()) v = rng.uniform(-1.0, 1.0);
  return k;
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  const double s = max_abs(b);
  return max_abs_diff(a, b) / (s > 0.0 ? s : 1.0);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %-28s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

Outcome d2r_equivalence() {
  const auto t0 = Clock::now();
  SeededRng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const Padding pad = rng.below(2) ? Padding::Valid : Padding::SameZero;
    const std::size_t alpha = 1 + rng.below(3), m = 1 + rng.below(8), beta = 1 + rng.below(4);
    const std::size_t p = pad == Padding::Valid ? 1 + rng.below(std::min<std::size_t>(3, m)) : 1 + 2 * rng.below(2);
    const ImageTensor d = random_image(alpha, m, rng);
    const KernelSet k = random_kernels(alpha, beta, p, rng);
    const FeatureTensor a = conv_via_d2r(d, build_conv_matrix(k, m, pad));
    worst = std::max(worst, max_abs_diff(a.data(), conv_direct(d, k, pad).data()));
  }
  for (Padding pad : {Padding::Valid, Padding::SameZero}) {
    const KernelSet k = random_kernels(1, 2, pad == Padding::Valid ? 2 : 3, rng);
    const ConvMatrix c = build_conv_matrix(k, 3, pad);
    for (unsigned bits = 0; bits < 512; ++bits) {
      ImageTensor d(1, 3);
      for (unsigned i = 0; i < 9; ++i) d.data()[i] = (bits >> i) & 1u;
      worst = std::max(worst, max_abs_diff(conv_via_d2r(d, c).data(), conv_direct(d, k, pad).data()));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0, fmt("max abs diff %.3g over 500 geometries + 2x512 binary images", worst)};
}

Outcome augconv_equivalence() {
  const auto t0 = Clock::now();
  SeededRng rng(202);
  double worst = 0.0;
  int done = 0;
  while (done < 200) {
    const std::size_t kappa = std::size_t{1} << rng.below(3);
    const Padding pad = rng.below(2) ? Padding::Valid : Padding::SameZero;
    const std::size_t alpha = 1 + rng.below(3), m = 2 + rng.below(7), beta = 1 + rng.below(4);
    const std::size_t p = pad == Padding::Valid ? 1 + rng.below(std::min<std::size_t>(3, m)) : 1 + 2 * rng.below(2);
    if ((alpha * m * m) % kappa != 0) continue;
    const ImageTensor d = random_image(alpha, m, rng);
    const KernelSet k = random_kernels(alpha, beta, p, rng);
    const MorphCore core = MorphCore::generate(alpha, m, kappa, rng, 1e6);
    const ChannelPermutation perm = random_permutation(beta, rng);
    const AugConvMatrix ac = build_augconv(core, build_conv_matrix(k, m, pad), perm);
    const FeatureTensor got = apply_augconv(morph(unroll(d), core), ac);
    const FeatureTensor want = permute_features(conv_direct(d, k, pad), perm);
    worst = std::max(worst, rel_diff(got.data(), want.data()));
    ++done;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 30.0, fmt("max relative diff %.3g over 200 cases, kappa in {1,2,4}", worst)};
}

Outcome morph_round_trip() {
  SeededRng rng(303);
  double worst = 0.0;
  int done = 0;
  while (done < 300) {
    const std::size_t alpha = 1 + rng.below(3), m = 1 + rng.below(10), kappa = 1 + rng.below(8);
    if ((alpha * m * m) % kappa != 0) continue;
    const MorphCore core = MorphCore::generate(alpha, m, kappa, rng);
    const ImageTensor d = random_image(alpha, m, rng);
    const RowVector dr = unroll(d);
    worst = std::max(worst, rel_diff(unmorph(morph(dr, core), core).data(), dr.data()));
    ++done;
  }
  return {worst <= 1e-8, fmt("max relative error %.3g over 300 cases", worst)};
}

Outcome dt_pair() {
  SeededRng rng(404);
  double worst = 0.0;
  bool insufficient_ok = true;
  for (std::size_t q : {4u, 16u, 64u}) {
    const Matrix mp = random_invertible(q, rng);
    std::vector<std::pair<RowVector, RowVector>> pairs;
    for (std::size_t i = 0; i < q; ++i) {
      RowVector d(q);
      for (double& v : d.data()) v = rng.uniform01();
      pairs.emplace_back(d, morph(d, mp, 1));
    }
    worst = std::max(worst, relative_max_error(dt_pair_attack(pairs, q, 1), mp));
    pairs.pop_back();
    try {
      dt_pair_attack(pairs, q, 1);
      insufficient_ok = false;
    } catch (const Error& e) {
      insufficient_ok = insufficient_ok && e.code() == Errc::InsufficientPairs;
    }
  }
  const std::size_t need = pairs_required(3072, 1, PairMode::Strict);
  return {worst <= 1e-6 && insufficient_ok && need == 3072,
          fmt("max relative error %.3g; q-1 pairs -> InsufficientPairs: %s; pairs needed at q=3072: %zu", worst,
              insufficient_ok ? "yes" : "no", need)};
}

Outcome closed_forms() {
  const double bf = bf_bound_M(0.5, 3, 32, 1).log2();
  const double rand = *bf_bound_rand(64).linear();
  const ReverseAnalysis ra = augconv_reverse_analysis(3, 32, 32, 3, 1, 0.5);
  const bool ok = bf == -9437184.0 && std::abs(rand / 7.9e-90 - 1.0) <= 0.01 && ra.log2_leading == -6291456.0 &&
                  ra.kappa_max == 3;
  return {ok, fmt("bf log2 %.0f; rand %.4g; reverse log2 leading %.0f (full exponent %.0f); kappa_max %llu", bf, rand,
                  ra.log2_leading, ra.p_ar.log2(), static_cast<unsigned long long>(ra.kappa_max))};
}

Outcome overheads() {
  const DataOverhead d = data_overhead(3, 32, 184320000);
  const std::uint64_t dev = dev_mac_overhead(/*alpha=*/3, /*m=*/32, /*p=*/3, /*beta=*/64, /*n=*/32);
  return {d.ratio == 0.0512 && dev == 199557120,
          fmt("data ratio %.6g (%.2f%%); dev MACs %llu", d.ratio, d.ratio * 100.0, static_cast<unsigned long long>(dev))};
}

Outcome lemma1() {
  const auto t0 = Clock::now();
  SeededRng rng(505);
  bool ok = true;
  double worst_margin = -1e9;
  double n3 = 0.0;
  for (std::size_t n : {2u, 3u, 4u, 8u})
    for (double d : {0.1, 0.3, 0.5, 1.0}) {
      SeededRng s = rng.split(n * 10 + static_cast<std::uint64_t>(d * 10));
      const MonteCarloResult r = lemma1_montecarlo(n, d, 100000, s);
      const double bound = *lemma1_bound(n, d).linear();
      const double margin = r.fraction() - bound - 3.0 * r.std_error(bound);
      worst_margin = std::max(worst_margin, margin);
      ok = ok && margin <= 0.0;
      if (n == 3 && d == 0.5) n3 = r.fraction();
    }
  ok = ok && std::abs(n3 - 0.0625) <= 0.003 && seconds_since(t0) < 60.0;
  return {ok, fmt("16 configs under bound + 3 SE (worst margin %.4f); N=3 d=0.5 fraction %.5f vs bound 0.125",
                  worst_margin, n3)};
}

Outcome lemma2() {
  SeededRng rng(606);
  const Lemma2Result a = lemma2_check(8, 100000, rng);
  const Lemma2Result b = lemma2_check(32, 100000, rng);
  return {a.residual <= 0.1 && b.residual <= 0.1,
          fmt("relative residual %.4f at N'=8, %.4f at N'=32", a.residual, b.residual)};
}

Outcome sweep() {
  std::vector<ImageTensor> imgs;
  for (const char* name : {"chelsea.ppm", "astronaut.ppm", "coffee.ppm"})
    imgs.push_back(load_pnm(fs::path(MOLE_TEST_DATA) / name));
  const auto rows = privacy_sweep(imgs, {6144, 1536, 16, 1}, SeededRng(0));
  bool dec = true;
  std::string vals;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i && !(rows[i].mean_ssim < rows[i - 1].mean_ssim)) dec = false;
    vals += fmt("%s%zu:%.4f", i ? ", " : "", rows[i].kappa, rows[i].mean_ssim);
  }
  return {dec && rows.size() == 4, "mean SSIM " + vals};
}

Outcome parity() {
  const auto t0 = Clock::now();
  const ParityTask t = default_parity_task(0);
  const ParityResult r = parity_experiment(t.dataset, t.kernels, t.core, t.perm, t.config, t.padding);
  const bool ok = std::abs(r.acc_clean - r.acc_morphed_augconv) <= 0.02 &&
                  r.acc_morphed_plainC <= r.acc_morphed_augconv - 0.20 && seconds_since(t0) < 120.0;
  return {ok, fmt("clean %.3f, augconv %.3f, plain C %.3f", r.acc_clean, r.acc_morphed_augconv, r.acc_morphed_plainC)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string cli(const std::string& args, const fs::path& dir) {
  const fs::path o = dir / "out.txt";
  const std::string cmd =
      std::string("\"") + MOLE_CLI_PATH + "\" " + args + " >\"" + o.string() + "\" 2>\"" + (dir / "err.txt").string() + "\"";
  const int st = std::system(cmd.c_str());
  if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) throw std::runtime_error("mole " + args + " failed: " + slurp(dir / "err.txt"));
  return slurp(o);
}

Outcome secrecy() {
  const fs::path dir = fs::temp_directory_path() / "mole_acceptance";
  fs::create_directories(dir);
  const auto p = [&](const char* n) { return (dir / n).string(); };
  const std::string seed = "5550123456789";
  SeededRng rng(707);
  save_tensors(dir / "img.bin", std::vector<ImageTensor>{random_image(3, 8, rng), random_image(3, 8, rng)});
  cli("keygen --alpha 3 --m 8 --kappa 4 --beta 5 --seed " + seed + " --out " + p("secret.json"), dir);
  cli("gen-kernels --alpha 3 --beta 5 --p 3 --out " + p("k.bin"), dir);

  std::vector<std::pair<std::string, std::string>> artifacts;
  artifacts.emplace_back("morph report",
                         cli("morph --secret " + p("secret.json") + " --in " + p("img.bin") + " --out " + p("rows.bin"), dir));
  artifacts.emplace_back("build report", cli("build-augconv --secret " + p("secret.json") + " --kernels " + p("k.bin") +
                                                 " --out " + p("ac.bin"),
                                             dir));
  artifacts.emplace_back("apply report",
                         cli("apply --augconv " + p("ac.bin") + " --in " + p("rows.bin") + " --out " + p("f.bin"), dir));
  artifacts.emplace_back("sidecar", slurp(dir / "ac.bin.json"));
  artifacts.emplace_back("morphed rows", slurp(dir / "rows.bin"));
  artifacts.emplace_back("aug-conv matrix", slurp(dir / "ac.bin"));
  artifacts.emplace_back("features", slurp(dir / "f.bin"));

  const auto secret = nlohmann::json::parse(slurp(dir / "secret.json"));
  const std::string perm = secret.at("permutation").dump();
  const Matrix mp = load_matrix(dir / "secret.json.mprime");
  std::vector<std::string> core_rows;
  const std::string core_file = slurp(dir / "secret.json.mprime");
  for (std::size_t r = 0; r < mp.rows(); ++r) core_rows.push_back(core_file.substr(16 + r * mp.cols() * 8, 8 * 4));

  const auto sidecar = nlohmann::json::parse(slurp(dir / "ac.bin.json"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : sidecar.items()) keys.push_back(k);
  std::ranges::sort(keys);
  bool ok = keys == std::vector<std::string>{"alpha", "beta", "m", "n", "p", "padding", "permuted"};
  std::string leak;
  for (const auto& [name, text] : artifacts) {
    bool bad = text.find(seed) != std::string::npos || text.find(perm) != std::string::npos ||
               text.find("permutation") != std::string::npos || text.find("mprime") != std::string::npos ||
               text.find("\"seed\"") != std::string::npos;
    for (const auto& cr : core_rows) bad = bad || text.find(cr) != std::string::npos;
    if (bad) leak += (leak.empty() ? "" : ", ") + name;
  }
  ok = ok && leak.empty();
  return {ok, leak.empty() ? fmt("%zu developer artifacts checked; sidecar keys limited to geometry", artifacts.size())
                           : "leak in " + leak};
}

}  // namespace

int main() {
  criterion(1, "d2r equivalence", d2r_equivalence);
  criterion(2, "Aug-Conv equivalence", augconv_equivalence);
  criterion(3, "morph round trip", morph_round_trip);
  criterion(4, "D-T pair attack", dt_pair);
  criterion(5, "closed-form bounds", closed_forms);
  criterion(6, "overhead figures", overheads);
  criterion(7, "cap-probability Monte Carlo", lemma1);
  criterion(8, "expected recovery error", lemma2);
  criterion(9, "privacy sweep", sweep);
  criterion(10, "accuracy parity (toy)", parity);
  criterion(11, "secrecy schema", secrecy);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

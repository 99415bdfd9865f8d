// mole: provider and developer commands for morphed-data training.
//
// Provider side (holds the secret): keygen, morph, unmorph, build-augconv.
// Developer side (never sees it):   lower, gen-kernels, apply, attack, analyze.
//
// Exit codes: 0 ok, 1 runtime or numeric failure, 2 usage or validation error.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mole/mole.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using mole::cli::ojson;
using mole::cli::OutFormat;

namespace {

constexpr double kNegligibleLog2 = -64.0;

const char* verdict_for(double log2p) { return log2p <= kNegligibleLog2 ? "negligible" : "non-negligible"; }

ojson log_prob_linear(const mole::LogProb& p) {
  const auto v = p.linear();
  return v ? ojson(*v) : ojson(nullptr);
}

struct Loaded {
  mole::MorphSecret secret;
  mole::Matrix mprime;
};

Loaded load_secret(const fs::path& path) {
  Loaded l{mole::secret_from_json(mole::read_json(path)), {}};
  fs::path mp = l.secret.mprime_file;
  if (mp.is_relative()) mp = path.parent_path() / mp;
  l.mprime = mole::load_matrix(mp);
  if (l.mprime.rows() != l.secret.q || l.mprime.cols() != l.secret.q)
    throw mole::Error(mole::Errc::Format, "core file shape disagrees with q in the secret");
  return l;
}

mole::ChannelPermutation secret_permutation(const mole::MorphSecret& s, std::size_t beta) {
  if (s.permutation) {
    if (s.permutation->size() != beta)
      throw mole::Error(mole::Errc::GeometryMismatch, "secret permutation has " +
                                                          std::to_string(s.permutation->size()) +
                                                          " channels, kernels have " + std::to_string(beta));
    return mole::ChannelPermutation(*s.permutation);
  }
  mole::SeededRng rng = mole::SeededRng(s.seed).split(1);
  return mole::random_permutation(beta, rng);
}

std::size_t resolve_n(std::size_t m, std::optional<std::size_t> n, std::optional<std::size_t> p,
                      const std::string& padding) {
  if (n) return *n;
  if (!p) throw mole::Error(mole::Errc::DomainError, "supply --n or --p");
  return mole::output_side(m, *p, mole::parse_padding(padding));
}

mole::ImageTensor load_single_image(const fs::path& p) {
  auto imgs = mole::load_images(p);
  if (imgs.size() != 1)
    throw mole::Error(mole::Errc::DomainError, p.string() + " holds " + std::to_string(imgs.size()) + " images");
  return std::move(imgs.front());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving data morphing and Aug-Conv tooling"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string format = "json";
  app.add_option("--format", format, "Report format")
      ->check(CLI::IsMember({"json", "text", "csv"}))
      ->capture_default_str();

  std::function<ojson()> action;
  auto seed_opt = [](CLI::App* sub, std::uint64_t& seed) {
    sub->add_option("--seed", seed, "Random seed (default from MOLE_SEED, else 0)")->envname("MOLE_SEED");
  };

  // ---------------------------------------------------------------- keygen
  struct {
    std::size_t alpha = 0, m = 0, kappa = 0;
    std::optional<std::size_t> beta, n, p;
    std::string padding = "valid";
    std::uint64_t seed = 0;
    double cond_max = 1e6;
    bool identity = false;
    std::string out, mprime_out;
  } kg;
  auto* keygen = app.add_subcommand("keygen", "Generate the secret core and channel order (provider)");
  keygen->add_option("--alpha", kg.alpha, "Input channels")->required();
  keygen->add_option("--m", kg.m, "Input side")->required();
  keygen->add_option("--kappa", kg.kappa, "Number of diagonal blocks")->required();
  keygen->add_option("--beta", kg.beta, "Output channels of the first layer (fixes the channel order now)");
  keygen->add_option("--n", kg.n, "Output side, for the kappa bound verdict");
  keygen->add_option("--p", kg.p, "Kernel side, for the kappa bound verdict");
  keygen->add_option("--padding", kg.padding, "valid|same")->capture_default_str();
  seed_opt(keygen, kg.seed);
  keygen->add_option("--cond-max", kg.cond_max, "Largest accepted condition estimate")->capture_default_str();
  keygen->add_flag("--identity", kg.identity, "Identity core and channel order (testing only; needs --beta)");
  keygen->add_option("--out", kg.out, "Secret JSON path")->required();
  keygen->add_option("--mprime-out", kg.mprime_out, "Core matrix path (default: <out>.mprime)");
  keygen->callback([&] {
    action = [&] {
      std::optional<std::size_t> n = kg.n;
      if (!n && kg.p) n = mole::output_side(kg.m, *kg.p, mole::parse_padding(kg.padding));
      const mole::QChoice qc = mole::choose_q(kg.alpha, kg.m, kg.kappa, n);
      if (kg.identity && !kg.beta) throw mole::Error(mole::Errc::DomainError, "--identity needs --beta");
      const mole::SeededRng root(kg.seed);
      mole::Matrix core;
      if (kg.identity) {
        core = mole::Matrix::identity(qc.q);
      } else {
        mole::SeededRng rng = root.split(0);
        core = mole::random_invertible_factored(qc.q, rng, {.cond_max = kg.cond_max}).first;
      }
      mole::MorphSecret s;
      s.alpha = kg.alpha;
      s.m = kg.m;
      s.kappa = kg.kappa;
      s.q = qc.q;
      s.seed = kg.seed;
      const fs::path out(kg.out);
      const fs::path mp = kg.mprime_out.empty() ? fs::path(kg.out + ".mprime") : fs::path(kg.mprime_out);
      s.mprime_file = mp.parent_path() == out.parent_path() ? mp.filename().string() : fs::absolute(mp).string();
      if (kg.beta) {
        mole::SeededRng rng = root.split(1);
        s.permutation = (kg.identity ? mole::ChannelPermutation::identity(*kg.beta)
                                     : mole::random_permutation(*kg.beta, rng))
                            .order();
      }
      mole::save_matrix(mp, core);
      mole::write_json(out, mole::to_json(s));
      std::cerr << "warning: " << out.string() << " and " << mp.string()
                << " are the security root; never share them with the developer\n";
      ojson r;
      r["command"] = "keygen";
      r["alpha"] = kg.alpha;
      r["m"] = kg.m;
      r["kappa"] = kg.kappa;
      r["q"] = qc.q;
      r["kappa_max"] = qc.kappa_bound ? ojson(*qc.kappa_bound) : ojson(nullptr);
      r["verdict"] = !qc.kappa_bound ? "unchecked (supply --n or --p)"
                     : qc.within_bound ? "kappa within the reverse-attack bound"
                                       : "kappa exceeds the reverse-attack bound";
      r["secret"] = out.string();
      r["mprime_file"] = mp.string();
      return r;
    };
  });

  // ----------------------------------------------------------------- morph
  struct {
    std::string secret, out, pairs_out;
    std::vector<std::string> in;
  } mo;
  auto* morph = app.add_subcommand("morph", "Morph images with the secret core (provider)");
  morph->add_option("--secret", mo.secret, "Secret JSON")->required()->check(CLI::ExistingFile);
  morph->add_option("--in", mo.in, "Input images (PGM/PPM or MOLETEN1); may be empty");
  morph->add_option("--out", mo.out, "Morphed rows (MOLEROW1)")->required();
  morph->add_option("--pairs-out", mo.pairs_out, "Also write interleaved original/morphed rows");
  morph->callback([&] {
    action = [&] {
      const Loaded l = load_secret(mo.secret);
      const std::size_t len = l.secret.alpha * l.secret.m * l.secret.m;
      std::vector<mole::RowVector> rows, pairs;
      std::size_t item = 0;
      for (const auto& f : mo.in)
        for (const auto& img : mole::load_images(f)) {
          if (img.channels() != l.secret.alpha || img.side() != l.secret.m)
            throw mole::Error(mole::Errc::GeometryMismatch,
                              "item " + std::to_string(item) + " (" + f + ") is " + std::to_string(img.channels()) +
                                  "x" + std::to_string(img.side()) + ", secret expects " +
                                  std::to_string(l.secret.alpha) + "x" + std::to_string(l.secret.m));
          const mole::RowVector dr = mole::unroll(img);
          rows.push_back(mole::morph(dr, l.mprime, l.secret.kappa));
          if (!mo.pairs_out.empty()) {
            pairs.push_back(dr);
            pairs.push_back(rows.back());
          }
          ++item;
        }
      mole::save_rows(mo.out, rows, len);
      if (!mo.pairs_out.empty()) mole::save_rows(mo.pairs_out, pairs, len);
      ojson r;
      r["command"] = "morph";
      r["count"] = rows.size();
      r["length"] = len;
      return r;
    };
  });

  // --------------------------------------------------------------- unmorph
  struct {
    std::string secret, in, out;
  } um;
  auto* unmorph = app.add_subcommand("unmorph", "Invert the morph (provider-side debugging)");
  unmorph->add_option("--secret", um.secret, "Secret JSON")->required()->check(CLI::ExistingFile);
  unmorph->add_option("--in", um.in, "Morphed rows (MOLEROW1)")->required()->check(CLI::ExistingFile);
  unmorph->add_option("--out", um.out, "Recovered images (MOLETEN1)")->required();
  unmorph->callback([&] {
    action = [&] {
      Loaded l = load_secret(um.secret);
      const mole::MorphCore core(std::move(l.mprime), l.secret.kappa);
      const mole::RowSet set = mole::load_rows(um.in);
      std::vector<mole::ImageTensor> imgs;
      for (const auto& tr : set.rows)
        imgs.push_back(mole::reroll_image(mole::unmorph(tr, core), l.secret.alpha, l.secret.m));
      mole::save_tensors(um.out, imgs);
      ojson r;
      r["command"] = "unmorph";
      r["count"] = imgs.size();
      return r;
    };
  });

  // --------------------------------------------------------- build-augconv
  struct {
    std::string secret, kernels, out, padding = "valid";
  } ba;
  auto* build = app.add_subcommand("build-augconv", "Fold the secret into the first layer (provider)");
  build->add_option("--secret", ba.secret, "Secret JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--kernels", ba.kernels, "Kernel bank (MOLEKER1)")->required()->check(CLI::ExistingFile);
  build->add_option("--padding", ba.padding, "valid|same")->capture_default_str();
  build->add_option("--out", ba.out, "Aug-Conv matrix (MOLEMAT1); sidecar written to <out>.json")->required();
  build->callback([&] {
    action = [&] {
      Loaded l = load_secret(ba.secret);
      const mole::KernelSet k = mole::load_kernels(ba.kernels);
      if (k.alpha() != l.secret.alpha)
        throw mole::Error(mole::Errc::GeometryMismatch, "kernels expect " + std::to_string(k.alpha()) +
                                                            " input channels, secret has " +
                                                            std::to_string(l.secret.alpha));
      const mole::ConvMatrix conv = mole::build_conv_matrix(k, l.secret.m, mole::parse_padding(ba.padding));
      const mole::ChannelPermutation perm = secret_permutation(l.secret, k.beta());
      const mole::MorphCore core(std::move(l.mprime), l.secret.kappa);
      const mole::AugConvMatrix ac = mole::build_augconv(core, conv, perm);
      mole::save_augconv(ba.out, ac);
      ojson r;
      r["command"] = "build-augconv";
      r["rows"] = ac.matrix.rows();
      r["cols"] = ac.matrix.cols();
      r["permuted"] = ac.permuted;
      return r;
    };
  });

  // ----------------------------------------------------------- gen-kernels
  struct {
    std::size_t alpha = 0, beta = 0, p = 0;
    std::uint64_t seed = 0;
    std::string kind = "random", out;
  } gk;
  auto* genk = app.add_subcommand("gen-kernels", "Write a kernel bank (developer)");
  genk->add_option("--alpha", gk.alpha, "Input channels")->required();
  genk->add_option("--beta", gk.beta, "Output channels")->required();
  genk->add_option("--p", gk.p, "Kernel side")->required();
  genk->add_option("--kind", gk.kind, "random: U[-1,1) weights; lowpass: 3x3 colour-opponent Gaussian bank")
      ->check(CLI::IsMember({"random", "lowpass"}))
      ->capture_default_str();
  seed_opt(genk, gk.seed);
  genk->add_option("--out", gk.out, "Kernel bank (MOLEKER1)")->required();
  genk->callback([&] {
    action = [&] {
      mole::KernelSet k;
      if (gk.kind == "lowpass") {
        if (gk.alpha != 3 || gk.beta != 3) throw mole::Error(mole::Errc::InvalidGeometry, "lowpass bank is 3x3");
        k = mole::lowpass_opponent_kernels(gk.p);
      } else {
        k = mole::KernelSet(gk.alpha, gk.beta, gk.p);
        mole::SeededRng rng(gk.seed);
        for (double& w : k.weights()) w = rng.uniform(-1.0, 1.0);
      }
      mole::save_kernels(gk.out, k);
      ojson r;
      r["command"] = "gen-kernels";
      r["alpha"] = k.alpha();
      r["beta"] = k.beta();
      r["p"] = k.p();
      return r;
    };
  });

  // ----------------------------------------------------------------- lower
  struct {
    std::string kernels, out, padding = "valid";
    std::size_t m = 0;
  } lo;
  auto* lower = app.add_subcommand("lower", "Write the plain lowered convolution matrix (developer)");
  lower->add_option("--kernels", lo.kernels, "Kernel bank (MOLEKER1)")->required()->check(CLI::ExistingFile);
  lower->add_option("--m", lo.m, "Input side")->required();
  lower->add_option("--padding", lo.padding, "valid|same")->capture_default_str();
  lower->add_option("--out", lo.out, "Matrix (MOLEMAT1); sidecar written to <out>.json")->required();
  lower->callback([&] {
    action = [&] {
      const mole::KernelSet k = mole::load_kernels(lo.kernels);
      const mole::ConvMatrix c = mole::build_conv_matrix(k, lo.m, mole::parse_padding(lo.padding));
      mole::save_augconv(lo.out, mole::AugConvMatrix{c.matrix, c.alpha, c.m, c.beta, c.n, c.p, c.padding, false});
      ojson r;
      r["command"] = "lower";
      r["rows"] = c.matrix.rows();
      r["cols"] = c.matrix.cols();
      return r;
    };
  });

  // ----------------------------------------------------------------- apply
  struct {
    std::string augconv, in, out;
  } ap;
  auto* apply = app.add_subcommand("apply", "Extract features from morphed rows (developer)");
  apply->add_option("--augconv", ap.augconv, "Aug-Conv matrix with sidecar")->required()->check(CLI::ExistingFile);
  apply->add_option("--in", ap.in, "Morphed rows (MOLEROW1)")->required()->check(CLI::ExistingFile);
  apply->add_option("--out", ap.out, "Features (MOLETEN1)")->required();
  apply->callback([&] {
    action = [&] {
      const mole::AugConvMatrix ac = mole::load_augconv(ap.augconv);
      const mole::RowSet set = mole::load_rows(ap.in);
      if (set.len != ac.matrix.rows())
        throw mole::Error(mole::Errc::DimensionMismatch, "rows have length " + std::to_string(set.len) +
                                                             ", layer expects " + std::to_string(ac.matrix.rows()));
      std::vector<mole::FeatureTensor> feats;
      for (const auto& tr : set.rows) feats.push_back(mole::apply_augconv(tr, ac));
      mole::save_tensors(ap.out, feats);
      ojson r;
      r["command"] = "apply";
      r["count"] = feats.size();
      return r;
    };
  });

  // ---------------------------------------------------------------- attack
  auto* attack = app.add_subcommand("attack", "Attack analyses and simulations");
  attack->require_subcommand(1);

  struct {
    std::size_t alpha = 0, m = 0, kappa = 0;
    std::optional<std::size_t> beta;
    double sigma = 0.5;
    std::uint64_t trials = 0, seed = 0;
  } bf;
  auto* abf = attack->add_subcommand("bruteforce", "Bound on guessing the core and the channel order");
  abf->add_option("--alpha", bf.alpha, "Input channels")->required();
  abf->add_option("--m", bf.m, "Input side")->required();
  abf->add_option("--kappa", bf.kappa, "Number of diagonal blocks")->required();
  abf->add_option("--beta", bf.beta, "Output channels (adds the channel-order bound)");
  abf->add_option("--sigma", bf.sigma, "Privacy reservation in (0,1)")->capture_default_str();
  abf->add_option("--trials", bf.trials, "Monte-Carlo guesses (q <= 64 only)")->capture_default_str();
  seed_opt(abf, bf.seed);
  abf->callback([&] {
    action = [&] {
      const mole::LogProb pm = mole::bf_bound_M(bf.sigma, bf.alpha, bf.m, bf.kappa);
      const std::size_t q = mole::choose_q(bf.alpha, bf.m, bf.kappa).q;
      ojson r;
      r["attack"] = "bruteforce";
      r["geometry"] = {{"alpha", bf.alpha}, {"m", bf.m}, {"kappa", bf.kappa}, {"q", q}};
      if (bf.beta) r["geometry"]["beta"] = *bf.beta;
      r["sigma"] = bf.sigma;
      r["log2_prob"] = pm.log2();
      r["log10_prob"] = pm.log10();
      if (bf.beta) {
        const mole::LogProb pr = mole::bf_bound_rand(*bf.beta);
        r["log2_prob_order"] = pr.log2();
        r["prob_order"] = log_prob_linear(pr);
      }
      if (bf.trials > 0) {
        if (q > 64) throw mole::Error(mole::Errc::DomainError, "Monte-Carlo guessing needs q <= 64");
        mole::SeededRng rng(bf.seed);
        const auto mc = mole::brute_force_montecarlo(q, bf.sigma, bf.trials, rng);
        r["empirical"] = mc.fraction();
      } else {
        r["empirical"] = nullptr;
      }
      r["trials"] = bf.trials;
      r["verdict"] = verdict_for(pm.log2());
      return r;
    };
  });

  struct {
    std::size_t alpha = 0, m = 0, p = 0, kappa = 0;
    std::optional<std::size_t> n;
    std::string padding = "valid";
    double sigma = 0.5;
  } rv;
  auto* arv = attack->add_subcommand("reverse", "Aug-Conv reversing analysis");
  arv->add_option("--alpha", rv.alpha, "Input channels")->required();
  arv->add_option("--m", rv.m, "Input side")->required();
  arv->add_option("--p", rv.p, "Kernel side")->required();
  arv->add_option("--kappa", rv.kappa, "Number of diagonal blocks")->required();
  arv->add_option("--n", rv.n, "Output side (default: from --p and --padding)");
  arv->add_option("--padding", rv.padding, "valid|same")->capture_default_str();
  arv->add_option("--sigma", rv.sigma, "Privacy reservation in (0,1)")->capture_default_str();
  arv->callback([&] {
    action = [&] {
      const std::size_t n = resolve_n(rv.m, rv.n, rv.p, rv.padding);
      const mole::ReverseAnalysis a = mole::augconv_reverse_analysis(rv.alpha, rv.m, n, rv.p, rv.kappa, rv.sigma);
      ojson r;
      r["attack"] = "reverse";
      r["geometry"] = {{"alpha", rv.alpha}, {"m", rv.m}, {"n", n}, {"p", rv.p}, {"kappa", rv.kappa},
                       {"q", rv.alpha * rv.m * rv.m / rv.kappa}};
      r["sigma"] = rv.sigma;
      r["log2_prob"] = a.p_ar.log2();
      r["log2_prob_leading"] = a.log2_leading;
      r["n_unknowns"] = a.n_unknowns;
      r["n_equations"] = a.n_equations;
      r["kappa_max"] = a.kappa_max;
      r["solvable_configuration"] = a.solvable_configuration;
      r["equations_cover_unknowns"] = a.equations_cover_unknowns;
      r["empirical"] = nullptr;
      r["trials"] = 0;
      r["verdict"] = a.solvable_configuration ? "insecure kappa" : verdict_for(a.p_ar.log2());
      return r;
    };
  });

  struct {
    std::string pairs, truth, out, mode = "strict";
    std::size_t q = 0, kappa = 1;
    bool generate = false;
    std::uint64_t seed = 0;
  } dt;
  auto* adt = attack->add_subcommand("dtpair", "Recover the core from known original/morphed pairs");
  adt->add_option("--pairs", dt.pairs, "Interleaved original/morphed rows (MOLEROW1)")->check(CLI::ExistingFile);
  adt->add_flag("--generate", dt.generate, "Simulate: draw a core and pairs, then attack them");
  adt->add_option("--q", dt.q, "Core side")->required();
  adt->add_option("--kappa", dt.kappa, "Number of diagonal blocks")->capture_default_str();
  adt->add_option("--mode", dt.mode, "strict: q pairs; segment: ceil(q/kappa) pairs")
      ->check(CLI::IsMember({"strict", "segment"}))
      ->capture_default_str();
  adt->add_option("--truth", dt.truth, "Reference core for scoring (MOLEMAT1)")->check(CLI::ExistingFile);
  adt->add_option("--out", dt.out, "Recovered core (MOLEMAT1)");
  seed_opt(adt, dt.seed);
  adt->callback([&] {
    action = [&] {
      if (dt.generate == !dt.pairs.empty())
        throw mole::Error(mole::Errc::DomainError, "give exactly one of --pairs and --generate");
      const auto mode = dt.mode == "strict" ? mole::PairMode::Strict : mole::PairMode::Segment;
      std::vector<std::pair<mole::RowVector, mole::RowVector>> pairs;
      std::optional<mole::Matrix> truth;
      if (dt.generate) {
        const mole::SeededRng root(dt.seed);
        mole::SeededRng core_rng = root.split(0);
        mole::SeededRng data_rng = root.split(1);
        truth = mole::random_invertible(dt.q, core_rng);
        for (std::size_t i = 0; i < mole::pairs_required(dt.q, dt.kappa, mode); ++i) {
          mole::RowVector d(dt.q * dt.kappa);
          for (double& v : d.data()) v = data_rng.uniform01();
          mole::RowVector t = mole::morph(d, *truth, dt.kappa);
          pairs.emplace_back(std::move(d), std::move(t));
        }
      } else {
        const mole::RowSet set = mole::load_rows(dt.pairs);
        if (set.rows.size() % 2 != 0)
          throw mole::Error(mole::Errc::Format, "pairs file must hold an even number of rows");
        for (std::size_t i = 0; i < set.rows.size(); i += 2) pairs.emplace_back(set.rows[i], set.rows[i + 1]);
      }
      if (!dt.truth.empty()) truth = mole::load_matrix(dt.truth);
      const mole::Matrix rec = mole::dt_pair_attack(pairs, dt.q, dt.kappa, mode);
      if (!dt.out.empty()) mole::save_matrix(dt.out, rec);
      ojson r;
      r["attack"] = "dtpair";
      r["geometry"] = {{"q", dt.q}, {"kappa", dt.kappa}, {"mode", dt.mode}};
      r["sigma"] = nullptr;
      r["log2_prob"] = 0.0;
      r["pairs_supplied"] = pairs.size();
      r["pairs_required"] = mole::pairs_required(dt.q, dt.kappa, mode);
      r["pairs_required_strict"] = dt.q;
      if (truth) {
        const double err = mole::relative_max_error(rec, *truth);
        r["max_relative_error"] = err;
        r["empirical"] = err;
        r["verdict"] = err <= 1e-6 ? "recovered" : "not recovered";
      } else {
        r["max_relative_error"] = nullptr;
        r["empirical"] = nullptr;
        r["verdict"] = "solved (no reference supplied)";
      }
      r["trials"] = 1;
      return r;
    };
  });

  // --------------------------------------------------------------- analyze
  auto* analyze = app.add_subcommand("analyze", "Overhead, similarity and privacy analyses");
  analyze->require_subcommand(1);

  struct {
    std::size_t alpha = 0, m = 0, p = 0, beta = 0, kappa = 1;
    std::optional<std::size_t> n;
    std::optional<std::uint64_t> base_macs, dataset_elems;
    std::string padding = "valid";
  } ov;
  auto* aov = analyze->add_subcommand("overhead", "Provider, developer and data overhead");
  aov->add_option("--alpha", ov.alpha, "Input channels")->required();
  aov->add_option("--m", ov.m, "Input side")->required();
  aov->add_option("--p", ov.p, "Kernel side")->required();
  aov->add_option("--beta", ov.beta, "Output channels")->required();
  aov->add_option("--kappa", ov.kappa, "Number of diagonal blocks")->capture_default_str();
  aov->add_option("--n", ov.n, "Output side (default: from --p and --padding)");
  aov->add_option("--padding", ov.padding, "valid|same")->capture_default_str();
  aov->add_option("--base-macs", ov.base_macs, "Baseline network MACs, for ratios");
  aov->add_option("--dataset-elems", ov.dataset_elems, "Dataset element count, for the data ratio");
  aov->callback([&] {
    action = [&] {
      const std::size_t n = resolve_n(ov.m, ov.n, ov.p, ov.padding);
      const mole::OverheadReport o =
          mole::overhead_report(ov.alpha, ov.m, ov.p, ov.beta, n, ov.kappa, ov.base_macs, ov.dataset_elems);
      auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
      ojson r;
      r["analysis"] = "overhead";
      r["geometry"] = {{"alpha", ov.alpha}, {"m", ov.m}, {"p", ov.p}, {"beta", ov.beta}, {"n", n}, {"kappa", ov.kappa}};
      r["dp_macs_by_alpha"] = o.dp_macs.by_alpha;
      r["dp_macs_direct"] = o.dp_macs.direct;
      r["dev_macs"] = o.dev_macs;
      r["data_elements"] = o.data_elements;
      r["dp_ratio_by_alpha"] = opt(o.dp_ratio_by_alpha);
      r["dp_ratio_direct"] = opt(o.dp_ratio_direct);
      r["dev_ratio"] = opt(o.dev_ratio);
      r["data_ratio"] = opt(o.data_ratio);
      r["data_ratio_percent"] = o.data_ratio ? ojson(*o.data_ratio * 100.0) : ojson(nullptr);
      r["note"] = o.note;
      return r;
    };
  });

  struct {
    std::string a, b;
    std::size_t window = 8;
    double range = 1.0;
  } ss;
  auto* ass = analyze->add_subcommand("ssim", "Windowed SSIM of two images");
  ass->add_option("--a", ss.a, "First image")->required()->check(CLI::ExistingFile);
  ass->add_option("--b", ss.b, "Second image")->required()->check(CLI::ExistingFile);
  ass->add_option("--window", ss.window, "Window side")->capture_default_str();
  ass->add_option("--range", ss.range, "Dynamic range L")->capture_default_str();
  ass->callback([&] {
    action = [&] {
      const double v = mole::ssim(load_single_image(ss.a), load_single_image(ss.b), {ss.window, ss.range});
      ojson r;
      r["analysis"] = "ssim";
      r["window"] = ss.window;
      r["ssim"] = v;
      return r;
    };
  });

  struct {
    std::vector<std::string> images;
    std::vector<std::size_t> kappas;
    std::string entries = "positive", display = "minmax";
    std::size_t window = 8;
    std::uint64_t seed = 0;
  } sw;
  auto* asw = analyze->add_subcommand("sweep", "SSIM between original and morphed images across kappa");
  asw->add_option("--image", sw.images, "Input images (repeatable)")->required()->check(CLI::ExistingFile);
  asw->add_option("--kappas", sw.kappas, "Comma-separated kappa values")->required()->delimiter(',');
  asw->add_option("--entries", sw.entries, "Core entry signs: positive|signed")
      ->check(CLI::IsMember({"positive", "signed"}))
      ->capture_default_str();
  asw->add_option("--display", sw.display, "Mapping of morphed values into [0,1]: minmax|clamp")
      ->check(CLI::IsMember({"minmax", "clamp"}))
      ->capture_default_str();
  asw->add_option("--window", sw.window, "SSIM window side")->capture_default_str();
  seed_opt(asw, sw.seed);
  asw->callback([&] {
    action = [&] {
      std::vector<mole::ImageTensor> imgs;
      for (const auto& f : sw.images) imgs.push_back(load_single_image(f));
      mole::SweepOptions o;
      o.entries = sw.entries == "positive" ? mole::EntryDistribution::PositiveGap : mole::EntryDistribution::SignedGap;
      o.display = sw.display == "minmax" ? mole::DisplayMap::MinMax : mole::DisplayMap::Clamp;
      o.ssim.window = sw.window;
      const auto rows = mole::privacy_sweep(imgs, sw.kappas, mole::SeededRng(sw.seed), o);
      ojson r;
      r["analysis"] = "sweep";
      r["images"] = imgs.size();
      r["entries"] = sw.entries;
      r["display"] = sw.display;
      bool decreasing = true;
      ojson table = ojson::array();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && !(rows[i].mean_ssim < rows[i - 1].mean_ssim)) decreasing = false;
        ojson row;
        row["kappa"] = rows[i].kappa;
        row["q"] = rows[i].q;
        row["mean_ssim"] = rows[i].mean_ssim;
        for (std::size_t k = 0; k < rows[i].ssim.size(); ++k) row["ssim_" + std::to_string(k)] = rows[i].ssim[k];
        table.push_back(row);
      }
      r["strictly_decreasing"] = decreasing;
      r["table"] = table;
      return r;
    };
  });

  struct {
    std::string image, out;
    double sigma = 0.5;
    std::size_t kappa = 1;
    std::uint64_t seed = 0;
  } pv;
  auto* apv = analyze->add_subcommand("privacy", "Image recovered at exactly the privacy-reservation threshold");
  apv->add_option("--image", pv.image, "Input image")->required()->check(CLI::ExistingFile);
  apv->add_option("--sigma", pv.sigma, "Privacy reservation in (0,1)")->capture_default_str();
  apv->add_option("--kappa", pv.kappa, "Number of diagonal blocks")->capture_default_str();
  apv->add_option("--out", pv.out, "Write the recovered image (PGM/PPM)");
  seed_opt(apv, pv.seed);
  apv->callback([&] {
    action = [&] {
      const mole::ImageTensor img = load_single_image(pv.image);
      mole::SeededRng rng(pv.seed);
      const auto demo = mole::privacy_reservation_demo(img, pv.sigma, pv.kappa, rng);
      if (!pv.out.empty()) mole::save_pnm(pv.out, demo.recovered);
      ojson r;
      r["analysis"] = "privacy";
      r["sigma"] = pv.sigma;
      r["kappa"] = pv.kappa;
      r["threshold"] = demo.threshold;
      r["e_rms"] = demo.e_rms;
      r["ssim"] = demo.ssim;
      return r;
    };
  });

  struct {
    std::uint64_t seed = 0;
  } pa;
  auto* apa = analyze->add_subcommand("parity", "Toy accuracy parity: clean, Aug-Conv, plain convolution");
  seed_opt(apa, pa.seed);
  apa->callback([&] {
    action = [&] {
      const mole::ParityTask t = mole::default_parity_task(pa.seed);
      const mole::ParityResult p =
          mole::parity_experiment(t.dataset, t.kernels, t.core, t.perm, t.config, t.padding);
      const std::size_t m = t.dataset.images.front().side();
      ojson r;
      r["seed"] = pa.seed;
      r["geometry"] = {{"alpha", t.kernels.alpha()}, {"m", m},          {"p", t.kernels.p()},
                       {"beta", t.kernels.beta()},   {"n", mole::output_side(m, t.kernels.p(), t.padding)},
                       {"kappa", t.core.kappa()},    {"classes", t.dataset.classes}};
      r["acc_clean"] = p.acc_clean;
      r["acc_morphed_augconv"] = p.acc_morphed_augconv;
      r["acc_morphed_plainC"] = p.acc_morphed_plainC;
      r["feature_max_diff"] = p.feature_max_diff;
      r["plainC_min_rel_error"] = p.plainC_min_rel_error;
      r["train_size"] = p.train_size;
      r["test_size"] = p.test_size;
      return r;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const ojson report = action();
    const OutFormat fmt = format == "text" ? OutFormat::Text : format == "csv" ? OutFormat::Csv : OutFormat::Json;
    mole::cli::emit(std::cout, report, fmt);
  } catch (const mole::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

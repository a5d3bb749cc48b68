// Acceptance suite: one checkable criterion per function, each printing a
// single PASS/FAIL line. Run all with no arguments or one with
// --criterion N. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "featinv/blackbox.hpp"
#include "featinv/config.hpp"
#include "featinv/dataset.hpp"
#include "featinv/defense.hpp"
#include "featinv/error.hpp"
#include "featinv/image_io.hpp"
#include "featinv/losses.hpp"
#include "featinv/metrics.hpp"
#include "featinv/priors.hpp"
#include "featinv/runner.hpp"
#include "featinv/serialize.hpp"
#include "featinv/splitnet.hpp"
#include "featinv/whitebox.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace featinv;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::string label;
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
};

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pixel_psnr(const data::Sample& s, const Tensor& recon_model,
                  const splitnet::Preprocessing& pre) {
  return metrics::psnr(metrics::to_255(s.pixels),
                       metrics::to_255(data::to_pixels(recon_model, pre)));
}

std::shared_ptr<splitnet::TargetModel> toy_cnn() {
  return splitnet::create_model("toy_cnn");
}

whitebox::InversionConfig attack_cfg(int iters, std::uint64_t seed,
                                     double lambda_s) {
  whitebox::InversionConfig c;
  c.iterations = iters;
  c.seed = seed;
  c.weights.lambda_s = lambda_s;
  return c;
}

// ---------------------------------------------------------------------- 1

Check criterion_1() {
  Check c{"loss oracles (tv brute force, negentropy monte carlo)"};
  for (int i = 0; i < 100; ++i) {
    const Tensor img = testsup::random_tensor({3, 8, 8}, 5000 + i);
    const double diff =
        std::fabs(losses::tv_loss(img) - oracles::tv_bruteforce(img));
    if (diff > 1e-6) {
      c.expect(false, "tv mismatch " + std::to_string(diff) + " on image " +
                          std::to_string(i));
      break;
    }
  }

  const int n = 100000;
  Tensor samples({n});
  Rng rng(616161);
  rng.fill_normal(samples, 0.0, 1.0);
  const double alpha = 1.0;
  const double got = losses::negentropy_loss(samples, alpha);
  const double expect = -oracles::gauss_expectation([&](double t) {
    return (2.0 / (alpha * alpha)) * losses::stable_logcosh(alpha * t);
  });
  double var = 0;
  for (int i = 0; i < n; ++i) {
    const double term = -2.0 * losses::stable_logcosh(samples[i]);
    var += (term - got) * (term - got);
  }
  var /= (n - 1.0);
  const double se = std::sqrt(var / n);
  c.expect(std::fabs(got - expect) < 3 * se,
           "negentropy off by " + std::to_string(got - expect) + " (3se=" +
               std::to_string(3 * se) + ")");
  return c;
}

// ---------------------------------------------------------------------- 2

Check criterion_2() {
  Check c{"gradient checks vs central differences (rel err < 1e-3)"};
  const Tensor img = testsup::random_tensor({3, 6, 6}, 21);
  const Tensor tgt = testsup::random_tensor({3, 6, 6}, 22);

  auto rel = [&](const std::function<double(const Tensor&)>& f,
                 const Tensor& x, const Tensor& g) {
    return testsup::gradcheck(f, x, g, 10, 23);
  };
  c.expect(rel([&](const Tensor& x) { return losses::reconstruction_loss(x, tgt); },
               img, losses::reconstruction_loss_grad(img, tgt)) < 1e-3,
           "reconstruction grad");
  c.expect(rel([&](const Tensor& x) { return losses::tv_loss(x); }, img,
               losses::tv_loss_grad(img)) < 1e-3,
           "tv grad");
  c.expect(rel([&](const Tensor& x) { return losses::negentropy_loss(x, 1.5); },
               img, losses::negentropy_loss_grad(img, 1.5)) < 1e-3,
           "negentropy grad");
  c.expect(rel([&](const Tensor& x) { return losses::temporal_loss(x, tgt); },
               img, losses::temporal_loss_grad(img, tgt)) < 1e-3,
           "temporal grad");

  // composite objective through decode and the user network
  auto model = toy_cnn();
  const auto sm = splitnet::split(model, 1);
  const auto prior = priors::ToyDecoderPrior::make_untrained(404);
  const auto sample = data::make_sample(405, model->preprocessing);
  const Tensor z = sm.f1(sample.model);
  const Tensor vbar = testsup::random_tensor({4, 8, 8}, 406, 0.1);
  losses::LossWeights w;
  w.lambda_s = 1.0;
  w.lambda_txt = 0.5;
  w.lambda_c = 0.25;
  w.alpha = 1.5;

  auto objective = [&](const Tensor& v) {
    const Tensor v_n = priors::normalize(v);
    const Tensor im = prior.decode(v_n, priors::TextEmbedding{});
    const double l_re = losses::reconstruction_loss(sm.f1(im), z);
    return l_re + w.lambda_s * losses::tv_loss(im) +
           w.lambda_txt * losses::negentropy_loss(v_n, w.alpha) +
           w.lambda_c * losses::temporal_loss(v, vbar);
  };

  const Tensor v0 = testsup::random_tensor({4, 8, 8}, 407, 0.1);
  const Tensor v_n = priors::normalize(v0);
  priors::DecodeTrace dtr;
  const Tensor im = prior.decode(v_n, priors::TextEmbedding{}, dtr);
  std::vector<nn::Ctx> ftr;
  const Tensor feat = sm.f1(im, ftr);
  Tensor g_img =
      sm.f1_backward(losses::reconstruction_loss_grad(feat, z), ftr);
  g_img.add_(losses::tv_loss_grad(im), w.lambda_s);
  Tensor g_vn = prior.decode_backward(g_img, dtr);
  g_vn.add_(losses::negentropy_loss_grad(v_n, w.alpha), w.lambda_txt);
  Tensor g_v = priors::normalize_backward(v0, g_vn);
  g_v.add_(losses::temporal_loss_grad(v0, vbar), w.lambda_c);

  c.expect(testsup::gradcheck(objective, v0, g_v, 10, 408) < 1e-3,
           "composite objective grad");
  return c;
}

// ---------------------------------------------------------------------- 3

Check criterion_3() {
  Check c{"split consistency on every toy model and split"};
  for (const auto& name : splitnet::registered_models()) {
    auto model = splitnet::create_model(name);
    for (int split = 1; split < model->layer_count(); ++split) {
      const auto sm = splitnet::split(model, split);
      for (int i = 0; i < 16; ++i) {
        Tensor x(model->input_shape);
        Rng rng(9000 + 17 * split + i);
        rng.fill_uniform(x, 0.0, 1.0);
        const double diff =
            max_abs_diff(model->forward(x), sm.f2(sm.extract(x).values));
        if (diff >= 1e-5)
          c.expect(false, name + " split " + std::to_string(split) +
                              " diff " + std::to_string(diff));
      }
    }
  }
  return c;
}

// ---------------------------------------------------------------------- 4

Check criterion_4() {
  Check c{"metric oracles (psnr offset, ssim reference, analytic IS)"};
  Tensor b({1, 16, 16}, 100.0), o({1, 16, 16}, 116.0);
  c.expect(std::fabs(metrics::psnr(b, o) - 24.05) <= 0.01,
           "psnr offset case: " + std::to_string(metrics::psnr(b, o)));

  for (int i = 0; i < 10; ++i) {
    Tensor x({3, 16, 16}), y({3, 16, 16});
    Rng rng(777 + i);
    rng.fill_uniform(x, 0.0, 255.0);
    for (long t = 0; t < y.size(); ++t)
      y[t] = 0.6 * x[t] + 0.4 * rng.uniform(0.0, 255.0);
    const double diff =
        std::fabs(metrics::ssim(x, y) - oracles::ssim_reference(x, y));
    if (diff >= 1e-4)
      c.expect(false, "ssim mismatch " + std::to_string(diff));
  }

  metrics::Classifier same{"c", [](const Tensor&) {
                             return std::vector<double>{1.0, 0.0};
                           }};
  std::vector<Tensor> two(2, Tensor({1, 16, 16}, 0.5));
  c.expect(std::fabs(metrics::inception_score(two, same) - 1.0) < 1e-9,
           "IS=1 case");
  int call = 0;
  metrics::Classifier alt{"a", [&call](const Tensor&) {
                            std::vector<double> p{0.0, 0.0};
                            p[static_cast<size_t>(call++ % 2)] = 1.0;
                            return p;
                          }};
  c.expect(std::fabs(metrics::inception_score(two, alt) - 2.0) < 1e-9,
           "IS=2 case");
  const int N = 6;
  int idx = 0;
  metrics::Classifier each{"e", [&idx, N](const Tensor&) {
                             std::vector<double> p(static_cast<size_t>(N), 0.0);
                             p[static_cast<size_t>(idx++ % N)] = 1.0;
                             return p;
                           }};
  std::vector<Tensor> many(static_cast<size_t>(N), Tensor({1, 16, 16}, 0.5));
  c.expect(std::fabs(metrics::inception_score(many, each) - N) < 1e-9,
           "IS=N case");
  return c;
}

// ---------------------------------------------------------------------- 5

Check criterion_5() {
  Check c{"white-box plumbing: exact identity recovery and depth trend"};
  // identity chain: the TV term is disabled so the exact minimizer of the
  // remaining objective is the target itself
  {
    auto model = splitnet::create_model("toy_cnn_idprefix");
    const auto sm = splitnet::split(model, 1);
    priors::IdentityPrior prior({3, 32, 32});
    const auto s = data::make_sample(1001, model->preprocessing, 3);
    splitnet::FeatureTensor z{sm.f1(s.model), 1};
    const auto res = whitebox::invert(sm, z, prior, attack_cfg(2000, 41, 0.0));
    const double psnr = pixel_psnr(s, res.images.at(0), model->preprocessing);
    c.expect(psnr > 50.0, "identity recovery " + std::to_string(psnr) + " dB");
  }

  // depth trend, 10 fixed-seed images, pixel-space optimization
  auto model = toy_cnn();
  const auto samples = data::generate(10, 515151, model->preprocessing);
  priors::IdentityPrior prior({3, 32, 32});
  std::vector<double> by_split;
  for (int split = 1; split <= 3; ++split) {
    const auto sm = splitnet::split(model, split);
    std::vector<double> psnrs;
    for (const auto& s : samples) {
      splitnet::FeatureTensor z{sm.f1(s.model), split};
      const auto res =
          whitebox::invert(sm, z, prior, attack_cfg(300, 42, 1.0));
      psnrs.push_back(pixel_psnr(s, res.images.at(0), model->preprocessing));
    }
    by_split.push_back(mean(psnrs));
  }
  c.detail << "depth means: " << by_split[0] << " / " << by_split[1] << " / "
           << by_split[2];
  c.expect(by_split[0] >= by_split[1] && by_split[1] >= by_split[2],
           "depth trend violated");
  return c;
}

// ---------------------------------------------------------------------- 6

Check criterion_6() {
  Check c{"learned prior beats pixel optimization at the deepest split"};
  auto model = toy_cnn();
  const auto sm = splitnet::split(model, 3);
  priors::IdentityPrior ident({3, 32, 32});
  auto dec = priors::ToyDecoderPrior::load(
      testsup::asset_path("toy_decoder.finv"));

  const auto samples = data::generate(10, 626262, model->preprocessing);
  std::vector<double> dec_psnr, id_psnr;
  for (std::uint64_t seed : {70ull, 71ull}) {
    for (const auto& s : samples) {
      splitnet::FeatureTensor z{sm.f1(s.model), 3};
      const auto rd =
          whitebox::invert(sm, z, dec, attack_cfg(400, seed, 1.0));
      dec_psnr.push_back(pixel_psnr(s, rd.images.at(0), model->preprocessing));
      const auto ri =
          whitebox::invert(sm, z, ident, attack_cfg(400, seed, 1.0));
      id_psnr.push_back(pixel_psnr(s, ri.images.at(0), model->preprocessing));
    }
  }
  const double dm = mean(dec_psnr), im = mean(id_psnr);
  c.detail << "toy_decoder " << dm << " dB vs identity " << im << " dB";
  c.expect(dm > im, "prior benefit not observed");
  return c;
}

// ---------------------------------------------------------------------- 7

Check criterion_7() {
  Check c{"temporal coupling gains at least 0.5 dB on translated frames"};
  auto model = toy_cnn();
  const auto sm = splitnet::split(model, 3);
  auto dec = priors::ToyDecoderPrior::load(
      testsup::asset_path("toy_decoder.finv"));

  std::vector<double> gains;
  for (std::uint64_t seed : {80ull, 81ull}) {
    const auto frames =
        data::frame_group(737373 + seed, 4, 2.0, model->preprocessing);
    whitebox::FrameGroup group;
    for (const auto& f : frames)
      group.frames.push_back({sm.f1(f.model), 3});

    auto run_with = [&](double lambda_c) {
      auto cfg = attack_cfg(300, seed, 1.0);
      cfg.weights.lambda_c = lambda_c;
      const auto results = whitebox::invert_multiframe(sm, group, dec, cfg);
      std::vector<double> psnrs;
      for (size_t k = 0; k < results.size(); ++k)
        psnrs.push_back(pixel_psnr(frames[k], results[k].images.at(0),
                                   model->preprocessing));
      return mean(psnrs);
    };
    const double with_c = run_with(5.0);
    const double without_c = run_with(0.0);
    gains.push_back(with_c - without_c);
    c.detail << " seed" << seed << ": " << without_c << " -> " << with_c;
  }
  c.expect(mean(gains) >= 0.5,
           "mean gain " + std::to_string(mean(gains)) + " dB < 0.5 dB");
  return c;
}

// ---------------------------------------------------------------------- 8

Check criterion_8() {
  Check c{"black-box pipeline: fidelity, white >= black, size trend"};
  auto id_model = splitnet::create_model("toy_cnn_idprefix");
  const auto id_sm = splitnet::split(id_model, 1);
  auto ident = std::make_shared<priors::IdentityPrior>(Shape{3, 32, 32});

  auto collect = [&](const splitnet::SplitModel& sm, int n,
                     std::uint64_t seed) {
    const auto samples = data::generate(n, seed, sm.base().preprocessing);
    std::vector<Tensor> models;
    for (const auto& s : samples) models.push_back(s.model);
    return blackbox::collect_queries_model(sm, models);
  };

  blackbox::InverterNetSpec linear_spec;
  linear_spec.input_feature_shape = {3, 32, 32};
  linear_spec.latent_shape = {3, 32, 32};
  linear_spec.block_plan = {{"conv", 3, 1, 1, 0, 0, 0, "none", "none"}};

  const auto test_samples = data::generate(10, 848484, id_model->preprocessing);

  // (a) 512 identity queries reach > 40 dB on held-out data
  {
    blackbox::TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 32;
    tc.learning_rate = 0.01;
    tc.seed = 90;
    tc.weights.lambda_s = 0.0;
    const auto ds = collect(id_sm, 512, 858585);
    const auto inv = blackbox::train_inverter(ds, linear_spec, ident, tc);
    std::vector<double> psnrs;
    for (const auto& s : test_samples)
      psnrs.push_back(pixel_psnr(s, inv.run(id_sm.f1(s.model)),
                                 id_model->preprocessing));
    c.detail << "identity pipeline " << mean(psnrs) << " dB";
    c.expect(mean(psnrs) > 40.0, "identity pipeline " +
                                     std::to_string(mean(psnrs)) + " dB");
  }

  // (b) white-box beats black-box at the same real split
  auto model = toy_cnn();
  const auto sm = splitnet::split(model, 2);
  const auto deep_test = data::generate(10, 868686, model->preprocessing);
  {
    std::vector<double> white;
    for (const auto& s : deep_test) {
      splitnet::FeatureTensor z{sm.f1(s.model), 2};
      const auto r = whitebox::invert(sm, z, *ident, attack_cfg(300, 91, 1.0));
      white.push_back(pixel_psnr(s, r.images.at(0), model->preprocessing));
    }
    blackbox::TrainConfig tc;
    tc.epochs = 25;
    tc.batch_size = 32;
    tc.learning_rate = 0.003;
    tc.seed = 92;
    const auto ds = collect(sm, 512, 878787);
    const auto spec = blackbox::build_inverter({32, 8, 8}, {3, 32, 32}, 1);
    const auto inv = blackbox::train_inverter(ds, spec, ident, tc);
    std::vector<double> black;
    for (const auto& s : deep_test)
      black.push_back(
          pixel_psnr(s, inv.run(sm.f1(s.model)), model->preprocessing));
    c.detail << "; white " << mean(white) << " dB vs black " << mean(black)
             << " dB";
    c.expect(mean(white) >= mean(black), "white-box fell below black-box");
  }

  // (c) non-decreasing test quality in training-set size (2-seed average)
  {
    const std::vector<int> sizes = {256, 512, 1024, 4096};
    std::vector<double> by_size;
    for (int n : sizes) {
      std::vector<double> accum;
      for (std::uint64_t seed : {93ull, 94ull}) {
        blackbox::TrainConfig tc;
        tc.epochs = 12;
        tc.batch_size = 32;
        tc.learning_rate = 0.01;
        tc.seed = seed;
        tc.weights.lambda_s = 0.0;
        const auto ds = collect(id_sm, n, 898989 + seed);
        const auto inv = blackbox::train_inverter(ds, linear_spec, ident, tc);
        for (const auto& s : test_samples)
          accum.push_back(pixel_psnr(s, inv.run(id_sm.f1(s.model)),
                                     id_model->preprocessing));
      }
      by_size.push_back(mean(accum));
    }
    c.detail << "; size sweep:";
    for (double v : by_size) c.detail << " " << v;
    for (size_t i = 1; i < by_size.size(); ++i)
      c.expect(by_size[i] >= by_size[i - 1] - 1e-9,
               "size sweep decreased at step " + std::to_string(i));
  }
  return c;
}

// ---------------------------------------------------------------------- 9

Check criterion_9() {
  Check c{"pointwise fusion matches or beats the unfused net at equal size"};
  auto model = toy_cnn();
  const auto sm = splitnet::split(model, 2);
  auto ident = std::make_shared<priors::IdentityPrior>(Shape{3, 32, 32});

  const int K = 4;
  auto make_groups = [&](int n, std::uint64_t seed) {
    blackbox::GroupedQueryDataset gds;
    for (int g = 0; g < n; ++g) {
      const auto frames =
          data::frame_group(seed + static_cast<std::uint64_t>(g) * 131, K,
                            2.0, model->preprocessing);
      std::vector<blackbox::QueryPair> group;
      for (const auto& f : frames)
        group.push_back({f.model, sm.f1(f.model), std::nullopt});
      gds.groups.push_back(std::move(group));
    }
    return gds;
  };

  const auto fused_spec =
      blackbox::build_inverter({32, 8, 8}, {3, 32, 32}, K, std::nullopt, true);
  const auto unfused_spec = blackbox::build_inverter(
      {32, 8, 8}, {3, 32, 32}, K, fused_spec.parameter_count, false);
  const double rel =
      std::fabs(double(unfused_spec.parameter_count -
                       fused_spec.parameter_count)) /
      double(fused_spec.parameter_count);
  c.expect(rel <= 0.05, "budgets differ by " + std::to_string(100 * rel) + "%");

  const auto train_groups = make_groups(96, 101010);
  const auto test_groups = make_groups(16, 121212);
  auto eval = [&](const blackbox::InverterNetSpec& spec) {
    blackbox::TrainConfig tc;
    tc.epochs = 16;
    tc.batch_size = 8;
    tc.learning_rate = 0.003;
    tc.seed = 95;
    const auto inv =
        blackbox::train_inverter_multiframe(train_groups, spec, ident, tc);
    std::vector<double> psnrs;
    for (const auto& g : test_groups.groups) {
      std::vector<Tensor> ys;
      for (const auto& p : g) ys.push_back(p.y);
      std::vector<Tensor> outs = inv.fusion.depth() > 0
                                     ? inv.run_group(ys)
                                     : [&] {
                                         std::vector<Tensor> o;
                                         for (const auto& y : ys)
                                           o.push_back(inv.run(y));
                                         return o;
                                       }();
      for (size_t k = 0; k < outs.size(); ++k) {
        data::Sample s;
        s.model = g[k].x_model;
        s.pixels = data::to_pixels(g[k].x_model, model->preprocessing);
        psnrs.push_back(pixel_psnr(s, outs[k], model->preprocessing));
      }
    }
    return mean(psnrs);
  };

  const double fused = eval(fused_spec);
  const double unfused = eval(unfused_spec);
  c.detail << "fused " << fused << " dB vs unfused " << unfused << " dB";
  c.expect(fused >= unfused, "fusion lost to the unfused baseline");
  return c;
}

// --------------------------------------------------------------------- 10

Check criterion_10() {
  Check c{"noise defense: exact no-op at zero, psnr drop, accuracy trend"};
  auto model = splitnet::create_model(
      "toy_cnn", testsup::asset_path("toy_cnn_cls.finv"));
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});

  // bit-exact no-op
  const auto s0 = data::make_sample(111, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(s0.model), 1};
  defense::DefenseConfig d0;
  d0.sigma = 0;
  c.expect(tensor_checksum(defense::perturb_features(z, d0).values) ==
               tensor_checksum(z.values),
           "sigma=0 not a bit-exact no-op");

  const auto samples = data::generate(64, 131313, model->preprocessing);
  whitebox::InversionConfig ic = attack_cfg(150, 96, 1.0);
  defense::AttackFn attack = [&](const splitnet::SplitModel& m,
                                 const splitnet::FeatureTensor& zz) {
    return whitebox::invert(m, zz, prior, ic).images.at(0);
  };
  defense::SweepOptions opts;
  opts.attack_images = 4;
  opts.accuracy_seeds = {1, 2, 3};
  const auto rows =
      defense::tradeoff_sweep(sm, samples, attack, {0.0, 0.5, 1.0}, opts);
  for (const auto& r : rows)
    c.detail << " s=" << r.sigma << " acc=" << r.task_accuracy
             << " psnr=" << r.mean_psnr << ";";
  c.expect(rows[0].status == "ok" && rows[1].status == "ok", "attack failed");
  c.expect(rows[1].mean_psnr <= rows[0].mean_psnr - 2.0,
           "psnr drop below 2 dB");
  c.expect(rows[0].task_accuracy >= rows[1].task_accuracy - 1e-9 &&
               rows[1].task_accuracy >= rows[2].task_accuracy - 1e-9,
           "task accuracy not non-increasing");
  return c;
}

// --------------------------------------------------------------------- 11

Check criterion_11() {
  Check c{"manifest re-execution is byte-identical"};
  const std::string base = "acceptance_runs";
  fs::remove_all(base);

  cli::RunConfig cfg;
  cfg.run.variant = "whitebox";
  cfg.run.output_dir = base + "/a";
  cfg.run.seed = 1717;
  cfg.model.name = "toy_cnn";
  cfg.model.split_index = 1;
  cfg.prior.name = "identity";
  cfg.attack.iterations = 40;
  cfg.data.count = 2;
  cfg.data.seed = 2024;

  const auto m1 = cli::run(cfg);
  const std::string manifest_path =
      (fs::path(cli::run_directory(cfg)) / "manifest.json").string();

  auto replay = cli::config_from_manifest(manifest_path);
  replay.run.output_dir = base + "/b";
  const auto m2 = cli::run(replay);

  c.expect(m1.artifacts.size() == m2.artifacts.size(), "artifact count");
  for (size_t i = 0; i < m1.artifacts.size() && i < m2.artifacts.size(); ++i)
    if (m1.artifacts[i].checksum != m2.artifacts[i].checksum)
      c.expect(false, "checksum mismatch for " + m1.artifacts[i].name);

  // byte-level comparison of the loss traces
  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
  };
  c.expect(slurp((fs::path(cli::run_directory(cfg)) / "loss_trace.csv")
                     .string()) ==
               slurp((fs::path(cli::run_directory(replay)) / "loss_trace.csv")
                         .string()),
           "loss traces differ");

#ifdef FEATINV_CLI_PATH
  // end-to-end through the CLI binary
  const std::string cfg_file = base + "/rerun.toml";
  {
    auto cli_cfg = cfg;
    cli_cfg.run.output_dir = base + "/c1";
    std::ofstream f(cfg_file);
    f << cli_cfg.to_toml();
  }
  const std::string cmd1 = std::string(FEATINV_CLI_PATH) +
                           " whitebox --config " + cfg_file + " > /dev/null";
  c.expect(std::system(cmd1.c_str()) == 0, "cli run 1 failed");
  const std::string cmd2 = std::string(FEATINV_CLI_PATH) +
                           " whitebox --config " + cfg_file + " --out " +
                           base + "/c2 > /dev/null";
  c.expect(std::system(cmd2.c_str()) == 0, "cli run 2 failed");
  if (c.ok) {
    auto find_run = [](const std::string& root) {
      for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) return e.path();
      return fs::path();
    };
    const auto r1 = find_run(base + "/c1");
    const auto r2 = find_run(base + "/c2");
    c.expect(!r1.empty() && !r2.empty(), "cli run dirs missing");
    if (c.ok)
      c.expect(slurp((r1 / "loss_trace.csv").string()) ==
                   slurp((r2 / "loss_trace.csv").string()),
               "cli loss traces differ");
  }
#endif
  fs::remove_all(base);
  return c;
}

using CriterionFn = Check (*)();

struct Entry {
  int id;
  CriterionFn fn;
};

const Entry kCriteria[] = {
    {1, criterion_1}, {2, criterion_2},  {3, criterion_3},
    {4, criterion_4}, {5, criterion_5},  {6, criterion_6},
    {7, criterion_7}, {8, criterion_8},  {9, criterion_9},
    {10, criterion_10}, {11, criterion_11},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
      only = std::atoi(argv[++i]);
  }

  int failures = 0;
  for (const auto& e : kCriteria) {
    if (only != 0 && e.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = e.fn();
    } catch (const std::exception& ex) {
      c.ok = false;
      c.detail << "exception: " << ex.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << e.id << " ["
              << c.label << "] (" << secs << "s)";
    if (!c.detail.str().empty()) std::cout << " -- " << c.detail.str();
    std::cout << std::endl;
    if (!c.ok) ++failures;
  }
  return failures;
}

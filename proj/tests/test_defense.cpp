#include <doctest.h>

#include <cmath>

#include "featinv/dataset.hpp"
#include "featinv/defense.hpp"
#include "featinv/metrics.hpp"
#include "featinv/error.hpp"
#include "featinv/priors.hpp"
#include "featinv/whitebox.hpp"
#include "test_support.hpp"

using namespace featinv;

namespace {

splitnet::FeatureTensor zero_features(int n) {
  return {Tensor({n}, 0.0), 1};
}

}  // namespace

TEST_CASE("sigma zero is a bit-exact no-op") {
  auto z = zero_features(64);
  Rng rng(1);
  rng.fill_normal(z.values, 0.0, 1.0);
  defense::DefenseConfig d;
  d.sigma = 0.0;
  const auto out = defense::perturb_features(z, d);
  CHECK(tensor_checksum(out.values) == tensor_checksum(z.values));
}

TEST_CASE("noise moments: mean within 3 standard errors, std near sigma") {
  for (const char* kind : {"gaussian", "laplace"}) {
    defense::DefenseConfig d;
    d.sigma = 1.0;
    d.noise_kind = kind;
    d.seed = 77;
    const auto out = defense::perturb_features(zero_features(100000), d);
    const double n = static_cast<double>(out.values.size());
    const double mean = out.values.mean();
    const double se = 1.0 / std::sqrt(n);
    CHECK(std::fabs(mean) < 3.0 * se);
    CHECK(std::sqrt(out.values.var_pop()) == doctest::Approx(1.0).epsilon(0.03));
  }
}

TEST_CASE("fixed seed reproduces the perturbation exactly") {
  auto z = zero_features(256);
  defense::DefenseConfig d;
  d.sigma = 0.5;
  d.seed = 1234;
  const auto a = defense::perturb_features(z, d);
  const auto b = defense::perturb_features(z, d);
  CHECK(tensor_checksum(a.values) == tensor_checksum(b.values));
  d.seed = 1235;
  const auto c = defense::perturb_features(z, d);
  CHECK(tensor_checksum(a.values) != tensor_checksum(c.values));
}

TEST_CASE("config validation") {
  defense::DefenseConfig d;
  d.sigma = -1;
  CHECK_THROWS_AS(d.validate(), Error);
  d.sigma = 0;
  d.noise_kind = "uniform";
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("sweep: sorted rows, clean row equals undefended attack") {
  auto model = splitnet::make_toy_cnn_idprefix();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  const auto samples = data::generate(3, 808, model->preprocessing);

  whitebox::InversionConfig ic;
  ic.iterations = 60;
  ic.weights.lambda_s = 0.0;
  ic.seed = 9;
  defense::AttackFn attack = [&](const splitnet::SplitModel& m,
                                 const splitnet::FeatureTensor& z) {
    return whitebox::invert(m, z, prior, ic).images.at(0);
  };

  defense::SweepOptions opts;
  opts.attack_images = 2;
  const auto rows =
      defense::tradeoff_sweep(sm, samples, attack, {0.8, 0.0}, opts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].sigma == 0.0);
  CHECK(rows[1].sigma == 0.8);
  CHECK(rows[0].status == "ok");
  CHECK(rows[1].status == "ok");
  CHECK(rows[0].mean_psnr > rows[1].mean_psnr);

  // undefended row must equal a direct attack on clean features
  double direct = 0;
  for (int i = 0; i < 2; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    splitnet::FeatureTensor z{sm.f1(s.model), 1};
    const Tensor recon = attack(sm, z);
    direct += metrics::psnr(
        metrics::to_255(s.pixels),
        metrics::to_255(data::to_pixels(recon, model->preprocessing)));
  }
  CHECK(rows[0].mean_psnr == doctest::Approx(direct / 2).epsilon(1e-12));
}

TEST_CASE("sweep survives a failing attack and records the error") {
  auto model = splitnet::make_toy_cnn_idprefix();
  const auto sm = splitnet::split(model, 1);
  const auto samples = data::generate(2, 809, model->preprocessing);

  defense::AttackFn flaky = [](const splitnet::SplitModel&,
                               const splitnet::FeatureTensor& z) -> Tensor {
    double energy = 0;
    for (long i = 0; i < z.values.size(); ++i)
      energy += z.values[i] * z.values[i];
    if (energy > 0) throw_numeric("attack exploded");
    return Tensor({3, 32, 32}, 0.0);
  };
  defense::SweepOptions opts;
  opts.attack_images = 1;
  const auto rows = defense::tradeoff_sweep(sm, samples, flaky, {0.0, 0.3}, opts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].status.find("error:") == 0);
  CHECK(rows[1].status.find("error:") == 0);
  // utility numbers still present
  CHECK(rows[0].task_accuracy >= 0.0);

  const std::string csv = defense::tradeoff_csv(rows);
  CHECK(csv.find("sigma,task_accuracy") == 0);
}

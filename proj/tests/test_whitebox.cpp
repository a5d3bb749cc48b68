#include <doctest.h>

#include <cmath>

#include "featinv/dataset.hpp"
#include "featinv/error.hpp"
#include "featinv/metrics.hpp"
#include "featinv/whitebox.hpp"
#include "test_support.hpp"

using namespace featinv;
using testsup::random_tensor;

namespace {

// identity user side over a small custom model
std::shared_ptr<splitnet::TargetModel> pool_model() {
  auto m = std::make_shared<splitnet::TargetModel>();
  m->name = "pool4";
  m->input_shape = {1, 4, 4};
  m->preprocessing = splitnet::Preprocessing::identity(1);
  m->layers.push_back(std::make_unique<nn::AvgPool2d>(2));
  m->layers.push_back(std::make_unique<nn::Identity>());
  return m;
}

whitebox::InversionConfig fast_cfg(int iters, std::uint64_t seed) {
  whitebox::InversionConfig c;
  c.iterations = iters;
  c.seed = seed;
  c.weights.lambda_s = 0.0;
  return c;
}

bool traces_equal(const std::vector<losses::LossBreakdown>& a,
                  const std::vector<losses::LossBreakdown>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].total != b[i].total || a[i].reconstruction != b[i].reconstruction ||
        a[i].tv != b[i].tv || a[i].negentropy != b[i].negentropy ||
        a[i].temporal != b[i].temporal)
      return false;
  return true;
}

// a prior that decodes normally, then starts emitting NaNs
class BrokenPrior final : public priors::GenerativePrior {
 public:
  explicit BrokenPrior(Shape s, int fail_after)
      : shape_(std::move(s)), fail_after_(fail_after) {}
  std::string name() const override { return "broken"; }
  Shape latent_shape() const override { return shape_; }
  Shape output_shape() const override { return shape_; }
  std::pair<double, double> output_range() const override {
    return {-1e30, 1e30};
  }
  Tensor decode(const Tensor& v, const priors::TextEmbedding&,
                priors::DecodeTrace&) const override {
    Tensor out = v;
    if (++calls_ > fail_after_) out[0] = std::nan("");
    return out;
  }
  Tensor decode_backward(const Tensor& g,
                         const priors::DecodeTrace&) const override {
    return g;
  }

 private:
  Shape shape_;
  int fail_after_;
  mutable int calls_ = 0;
};

}  // namespace

TEST_CASE("lr schedule: staged halving") {
  whitebox::InversionConfig c;
  c.iterations = 1500;
  c.learning_rate = 0.1;
  CHECK(whitebox::lr_at(c, 1) == doctest::Approx(0.1));
  CHECK(whitebox::lr_at(c, 500) == doctest::Approx(0.1));
  CHECK(whitebox::lr_at(c, 501) == doctest::Approx(0.05));
  CHECK(whitebox::lr_at(c, 1000) == doctest::Approx(0.05));
  CHECK(whitebox::lr_at(c, 1001) == doctest::Approx(0.025));
  CHECK(whitebox::lr_at(c, 1500) == doctest::Approx(0.025));
}

TEST_CASE("config validation") {
  whitebox::InversionConfig c;
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.init_std = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  CHECK_NOTHROW(c.validate());
  CHECK(c.iterations == 1500);
  CHECK(c.learning_rate == doctest::Approx(0.1));
  CHECK(c.beta1 == doctest::Approx(0.9));
  CHECK(c.beta2 == doctest::Approx(0.999));
  CHECK(c.init_std == doctest::Approx(0.1));
  CHECK(c.sampling_steps == 20);
}

TEST_CASE("identity prior + identity user side recovers a standardized target") {
  auto model = splitnet::make_toy_cnn_idprefix();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});

  const auto sample = data::make_sample(2024, model->preprocessing, 2);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};
  const auto res = whitebox::invert(sm, z, prior, fast_cfg(800, 5));
  REQUIRE(res.images.size() == 1);
  CHECK_FALSE(res.aborted);
  CHECK(res.trace.size() == 800);

  const double psnr = metrics::psnr(
      metrics::to_255(sample.pixels),
      metrics::to_255(data::to_pixels(res.images[0], model->preprocessing)));
  CHECK(psnr > 45.0);
  CHECK(res.trace.back().total <= res.trace.front().total);
}

TEST_CASE("underdetermined mean-pool system reaches near-zero residual") {
  auto model = pool_model();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({1, 4, 4});

  Tensor x = random_tensor({1, 4, 4}, 999);
  x = priors::normalize(x);  // reachable through latent normalization
  splitnet::FeatureTensor z{sm.f1(x), 1};
  const auto res = whitebox::invert(sm, z, prior, fast_cfg(1200, 3));
  CHECK(res.trace.back().reconstruction < 1e-4);
}

TEST_CASE("determinism: identical config gives bit-identical traces") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(7, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};

  const auto a = whitebox::invert(sm, z, prior, fast_cfg(40, 11));
  const auto b = whitebox::invert(sm, z, prior, fast_cfg(40, 11));
  CHECK(traces_equal(a.trace, b.trace));
  CHECK(tensor_checksum(a.images[0]) == tensor_checksum(b.images[0]));

  const auto c = whitebox::invert(sm, z, prior, fast_cfg(40, 12));
  CHECK_FALSE(traces_equal(a.trace, c.trace));
}

TEST_CASE("trace accounting: every iteration satisfies the compose identity") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 2);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(8, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 2};
  whitebox::InversionConfig cfg = fast_cfg(25, 21);
  cfg.weights.lambda_s = 0.7;

  const auto res = whitebox::invert(sm, z, prior, cfg);
  for (const auto& b : res.trace) {
    const double expect = b.reconstruction + 0.7 * b.tv;  // active terms
    CHECK(b.total == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("invert_with_text with zero embedding equals plain invert") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(9, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};

  whitebox::InversionConfig cfg = fast_cfg(30, 33);
  cfg.weights.lambda_txt = 0.0;
  priors::TextEmbedding zero;
  zero.values = Tensor({32}, 0.0);

  const auto plain = whitebox::invert(sm, z, prior, cfg);
  const auto texty = whitebox::invert_with_text(sm, z, prior, zero, cfg);
  CHECK(traces_equal(plain.trace, texty.trace));
  CHECK(tensor_checksum(plain.images[0]) == tensor_checksum(texty.images[0]));
}

TEST_CASE("non-zero text on a text-incapable prior is a capability error") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(10, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};
  priors::TextEmbedding e;
  e.values = Tensor({32}, 0.3);
  try {
    whitebox::invert_with_text(sm, z, prior, e, fast_cfg(5, 1));
    FAIL("expected capability error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::Capability);
  }
}

TEST_CASE("degenerate latent soft-aborts with flagged manifest") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(11, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};

  whitebox::InversionConfig cfg = fast_cfg(10, 2);
  cfg.init_std = 1e-300;  // collapses immediately
  const auto res = whitebox::invert(sm, z, prior, cfg);
  CHECK(res.aborted);
  CHECK(res.manifest.status.find("aborted") == 0);
}

TEST_CASE("NaN from the decode path raises a numeric error with iteration") {
  auto model = splitnet::make_toy_cnn_idprefix();
  const auto sm = splitnet::split(model, 1);
  BrokenPrior prior({3, 32, 32}, 3);
  const auto sample = data::make_sample(12, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};
  try {
    whitebox::invert(sm, z, prior, fast_cfg(10, 3));
    FAIL("expected numeric error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::Numeric);
    CHECK(std::string(err.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("multiframe K=1 reduces to the single-frame engine") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(13, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 1};

  whitebox::InversionConfig cfg = fast_cfg(30, 44);
  cfg.weights.lambda_c = 5.0;  // inert for K=1

  const auto single = whitebox::invert(sm, z, prior, cfg);
  whitebox::FrameGroup group;
  group.frames.push_back(z);
  const auto multi = whitebox::invert_multiframe(sm, group, prior, cfg);
  REQUIRE(multi.size() == 1);
  CHECK(traces_equal(single.trace, multi[0].trace));
  CHECK(tensor_checksum(single.images[0]) ==
        tensor_checksum(multi[0].images[0]));
}

TEST_CASE("temporal pull: identical frames end closer with lambda_c > 0") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 2);
  priors::IdentityPrior prior({3, 32, 32});
  const auto sample = data::make_sample(14, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 2};
  whitebox::FrameGroup group;
  for (int k = 0; k < 4; ++k) group.frames.push_back(z);

  auto mean_pairwise = [](const std::vector<whitebox::AttackResult>& rs) {
    double acc = 0;
    int cnt = 0;
    for (size_t i = 0; i < rs.size(); ++i)
      for (size_t j = i + 1; j < rs.size(); ++j) {
        acc += std::sqrt(losses::reconstruction_loss(rs[i].images[0],
                                                     rs[j].images[0]));
        ++cnt;
      }
    return acc / cnt;
  };

  whitebox::InversionConfig cfg = fast_cfg(150, 55);
  cfg.weights.lambda_c = 0.0;
  const double d_free = mean_pairwise(whitebox::invert_multiframe(sm, group, prior, cfg));
  cfg.weights.lambda_c = 5.0;
  const double d_tied = mean_pairwise(whitebox::invert_multiframe(sm, group, prior, cfg));
  CHECK(d_tied < d_free);
}

TEST_CASE("inconsistent frame shapes rejected") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  priors::IdentityPrior prior({3, 32, 32});
  whitebox::FrameGroup group;
  group.frames.push_back({Tensor({16, 16, 16}, 0.1), 1});
  group.frames.push_back({Tensor({16, 8, 8}, 0.1), 1});
  CHECK_THROWS_AS(whitebox::invert_multiframe(sm, group, prior, fast_cfg(5, 1)),
                  Error);
}

TEST_CASE("feature/prior shape mismatches are input errors") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 2);
  priors::IdentityPrior wrong({3, 16, 16});
  const auto sample = data::make_sample(15, model->preprocessing);
  splitnet::FeatureTensor z{sm.f1(sample.model), 2};
  CHECK_THROWS_AS(whitebox::invert(sm, z, wrong, fast_cfg(5, 1)), Error);

  priors::IdentityPrior prior({3, 32, 32});
  splitnet::FeatureTensor bad{Tensor({4, 4, 4}, 0.0), 2};
  CHECK_THROWS_AS(whitebox::invert(sm, bad, prior, fast_cfg(5, 1)), Error);
}

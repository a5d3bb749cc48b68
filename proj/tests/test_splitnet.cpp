#include <doctest.h>

#include <cmath>

#include "featinv/dataset.hpp"
#include "featinv/error.hpp"
#include "featinv/losses.hpp"
#include "featinv/splitnet.hpp"
#include "test_support.hpp"

using namespace featinv;
using testsup::gradcheck;
using testsup::random_tensor;

namespace {

Tensor random_pixels(std::uint64_t seed) {
  Tensor t({3, 32, 32});
  Rng rng(seed);
  rng.fill_uniform(t, 0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("split consistency across every registered model and split") {
  for (const auto& name : splitnet::registered_models()) {
    auto model = splitnet::create_model(name);
    for (int split = 1; split < model->layer_count(); ++split) {
      const auto sm = splitnet::split(model, split);
      for (int i = 0; i < 16; ++i) {
        const Tensor x = random_pixels(100 * split + i);
        const Tensor whole = model->forward(x);
        const Tensor composed = sm.f2(sm.extract(x).values);
        CHECK(max_abs_diff(whole, composed) < 1e-5);
      }
    }
  }
}

TEST_CASE("split index range errors name the valid range") {
  auto model = splitnet::make_toy_cnn();
  CHECK_THROWS_WITH_AS(splitnet::split(model, 0), doctest::Contains("[1,3]"),
                       Error);
  CHECK_THROWS_WITH_AS(splitnet::split(model, 4), doctest::Contains("[1,3]"),
                       Error);
  CHECK_NOTHROW(splitnet::split(model, 3));
}

TEST_CASE("toy cnn split partitions blocks as declared") {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 1);
  CHECK(sm.feature_shape() == Shape{16, 16, 16});
  const auto sm2 = splitnet::split(model, 2);
  CHECK(sm2.feature_shape() == Shape{32, 8, 8});
  const auto sm3 = splitnet::split(model, 3);
  CHECK(sm3.feature_shape() == Shape{64, 4, 4});
}

TEST_CASE("attention model: (tokens, dim) feature shape via symbolic oracle") {
  auto model = splitnet::make_toy_attention(4);
  const auto sm = splitnet::split(model, 2);
  // symbolic propagation
  CHECK(model->layer_output_shape(2) == Shape{16, 32});
  // concrete forward agrees
  const Tensor x = random_pixels(3141);
  CHECK(sm.extract(x).values.shape() == Shape{16, 32});
}

TEST_CASE("identity-prefixed model exposes the preprocessed input") {
  auto model = splitnet::make_toy_cnn_idprefix();
  const auto sm = splitnet::split(model, 1);
  const Tensor x = random_pixels(77);
  const auto z = splitnet::extract_features(sm, x);
  CHECK(max_abs_diff(z.values, model->preprocessing.apply(x)) == 0.0);
  CHECK(z.source_layer == 1);
}

TEST_CASE("mean-pool of a constant image is constant") {
  // a 2x2 average pool as the entire user side
  auto model = std::make_shared<splitnet::TargetModel>();
  model->name = "pool_only";
  model->input_shape = {1, 4, 4};
  model->preprocessing = splitnet::Preprocessing::identity(1);
  model->layers.push_back(std::make_unique<nn::AvgPool2d>(2));
  model->layers.push_back(std::make_unique<nn::Identity>());
  const auto sm = splitnet::split(model, 1);
  const Tensor ones({1, 4, 4}, 1.0);
  const auto z = sm.extract(ones);
  CHECK(z.values.shape() == Shape{1, 2, 2});
  for (long i = 0; i < z.values.size(); ++i)
    CHECK(z.values[i] == doctest::Approx(1.0));
}

TEST_CASE("extract_features is bit-identical across calls") {
  auto model = splitnet::create_model("toy_cnn");
  const auto sm = splitnet::split(model, 2);
  const Tensor x = random_pixels(4242);
  const auto a = splitnet::extract_features(sm, x);
  const auto b = splitnet::extract_features(sm, x);
  CHECK(tensor_checksum(a.values) == tensor_checksum(b.values));
}

TEST_CASE("input shape mismatch is an input error") {
  auto model = splitnet::create_model("toy_cnn");
  const auto sm = splitnet::split(model, 1);
  CHECK_THROWS_AS(sm.extract(Tensor({3, 16, 16})), Error);
  CHECK_THROWS_AS(sm.f2(Tensor({99})), Error);
}

TEST_CASE("f1 input gradients match finite differences (10-coordinate probe)") {
  for (const auto& name : {std::string("toy_cnn"), std::string("toy_vit")}) {
    auto model = splitnet::create_model(name);
    const auto sm = splitnet::split(model, 2);
    const Tensor x = model->preprocessing.apply(random_pixels(555));
    const Tensor z = random_tensor(sm.feature_shape(), 556, 0.5);

    std::vector<nn::Ctx> trace;
    const Tensor feat = sm.f1(x, trace);
    const Tensor g =
        sm.f1_backward(losses::reconstruction_loss_grad(feat, z), trace);
    auto f = [&](const Tensor& probe) {
      return losses::reconstruction_loss(sm.f1(probe), z);
    };
    CHECK(gradcheck(f, x, g, 10, 557) < 1e-3);
  }
}

TEST_CASE("model weights round-trip through the blob format") {
  auto model = splitnet::make_toy_cnn();
  const std::string path = "toy_cnn_test_weights.finv";
  splitnet::save_model_weights(*model, path);
  auto fresh = splitnet::make_toy_cnn(3, 4, 0xdead);  // different seed
  const Tensor x = random_pixels(9);
  CHECK(max_abs_diff(fresh->forward(x), model->forward(x)) > 1e-9);
  splitnet::load_model_weights(*fresh, path);
  CHECK(max_abs_diff(fresh->forward(x), model->forward(x)) == 0.0);
  std::remove(path.c_str());
}

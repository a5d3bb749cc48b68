#include <doctest.h>

#include "featinv/error.hpp"
#include "featinv/nn.hpp"
#include "test_support.hpp"

using namespace featinv;
using testsup::gradcheck;
using testsup::random_tensor;

namespace {

// Scalar probe: f(x) = sum of squares of layer(x); analytic grad comes from
// the layer's backward with gout = 2*y.
double layer_gradcheck(nn::Layer& layer, const Shape& in_shape,
                       std::uint64_t seed, int coords = 12) {
  const Tensor x = random_tensor(in_shape, seed);
  nn::Ctx ctx;
  const Tensor y = layer.forward(x, ctx);
  Tensor gout = y;
  gout.scale_(2.0);
  const Tensor gx = layer.backward(gout, ctx, false);
  auto f = [&](const Tensor& probe) {
    nn::Ctx c2;
    const Tensor out = layer.forward(probe, c2);
    return out.dot(out);
  };
  return gradcheck(f, x, gx, coords, seed ^ 0xabcd);
}

// Same probe but for parameter gradients of one named param tensor.
double param_gradcheck(nn::Layer& layer, const Shape& in_shape,
                       size_t param_idx, std::uint64_t seed) {
  const Tensor x = random_tensor(in_shape, seed);
  layer.zero_grads();
  nn::Ctx ctx;
  const Tensor y = layer.forward(x, ctx);
  Tensor gout = y;
  gout.scale_(2.0);
  layer.backward(gout, ctx, true);
  Tensor* p = layer.params()[param_idx];
  Tensor analytic = *layer.grads()[param_idx];

  Rng rng(seed ^ 0x1234);
  std::vector<long> coords;
  for (int i = 0; i < 8; ++i)
    coords.push_back(rng.next_u64() % static_cast<std::uint64_t>(p->size()));
  double worst = 0.0;
  for (long c : coords) {
    const double keep = (*p)[c];
    const double h = 1e-5;
    (*p)[c] = keep + h;
    nn::Ctx c1;
    Tensor y1 = layer.forward(x, c1);
    const double fp = y1.dot(y1);
    (*p)[c] = keep - h;
    nn::Ctx c2;
    Tensor y2 = layer.forward(x, c2);
    const double fm = y2.dot(y2);
    (*p)[c] = keep;
    const double fd = (fp - fm) / (2 * h);
    const double denom = std::max({std::fabs(fd), std::fabs(analytic[c]), 1e-8});
    worst = std::max(worst, std::fabs(fd - analytic[c]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.sum() == doctest::Approx(9.0));
  t.at(1, 2) = 4.5;
  CHECK(t.at(1, 2) == 4.5);
  CHECK(t.max() == 4.5);
  CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.at(2, 1) == 4.5);
}

TEST_CASE("rng determinism and moments") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  Rng c(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = c.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::fabs(sum / n) < 0.02);
  CHECK(std::fabs(sq / n - 1.0) < 0.03);
}

TEST_CASE("conv2d gradients") {
  Rng rng(11);
  nn::Conv2d conv(3, 4, 3, 1, 1);
  conv.init_params(rng);
  CHECK(layer_gradcheck(conv, {3, 6, 6}, 101) < 1e-6);
  CHECK(param_gradcheck(conv, {3, 6, 6}, 0, 102) < 1e-6);
  CHECK(param_gradcheck(conv, {3, 6, 6}, 1, 103) < 1e-6);

  nn::Conv2d strided(2, 3, 3, 2, 1);
  strided.init_params(rng);
  CHECK(layer_gradcheck(strided, {2, 8, 8}, 104) < 1e-6);
  CHECK(param_gradcheck(strided, {2, 8, 8}, 0, 105) < 1e-6);
}

TEST_CASE("conv2d shape contract") {
  nn::Conv2d conv(3, 8, 3, 2, 1);
  CHECK(conv.output_shape({3, 32, 32}) == Shape{8, 16, 16});
  CHECK_THROWS_AS(conv.output_shape({4, 32, 32}), Error);
}

TEST_CASE("conv_transpose2d gradients and shape") {
  Rng rng(13);
  nn::ConvTranspose2d dc(4, 3, 4, 2, 1);
  dc.init_params(rng);
  CHECK(dc.output_shape({4, 8, 8}) == Shape{3, 16, 16});
  CHECK(layer_gradcheck(dc, {4, 5, 5}, 201) < 1e-6);
  CHECK(param_gradcheck(dc, {4, 5, 5}, 0, 202) < 1e-6);
  CHECK(param_gradcheck(dc, {4, 5, 5}, 1, 203) < 1e-6);
}

TEST_CASE("linear gradients") {
  Rng rng(17);
  nn::Linear lin(10, 4);
  lin.init_params(rng);
  CHECK(layer_gradcheck(lin, {10}, 301) < 1e-6);
  CHECK(param_gradcheck(lin, {10}, 0, 302) < 1e-6);
}

TEST_CASE("activation and pooling gradients") {
  nn::LeakyReLU lrelu(0.2);
  CHECK(layer_gradcheck(lrelu, {2, 5, 5}, 401) < 1e-5);
  nn::Tanh th;
  CHECK(layer_gradcheck(th, {2, 5, 5}, 402) < 1e-6);
  nn::AvgPool2d pool(2);
  CHECK(pool.output_shape({3, 8, 8}) == Shape{3, 4, 4});
  CHECK(layer_gradcheck(pool, {3, 8, 8}, 403) < 1e-6);
  nn::GlobalAvgPool gap;
  CHECK(layer_gradcheck(gap, {3, 6, 6}, 404) < 1e-6);
}

TEST_CASE("normalization layer gradients") {
  nn::LayerNormAll ln(3);
  CHECK(layer_gradcheck(ln, {3, 5, 5}, 501) < 1e-5);
  CHECK(param_gradcheck(ln, {3, 5, 5}, 0, 502) < 1e-5);
  CHECK(param_gradcheck(ln, {3, 5, 5}, 1, 503) < 1e-5);
  nn::Standardize st;
  CHECK(layer_gradcheck(st, {2, 4, 4}, 504) < 1e-5);

  nn::Ctx ctx;
  const Tensor x = random_tensor({2, 4, 4}, 505);
  const Tensor y = st.forward(x, ctx);
  CHECK(std::fabs(y.mean()) < 1e-12);
  CHECK(std::fabs(std::sqrt(y.var_pop()) - 1.0) < 1e-6);
}

TEST_CASE("bilinear resize: constant preservation and gradients") {
  nn::BilinearResize rz(7, 9);
  Tensor c({2, 4, 4}, 3.25);
  nn::Ctx ctx;
  const Tensor y = rz.forward(c, ctx);
  CHECK(y.shape() == Shape{2, 7, 9});
  CHECK(y.min() == doctest::Approx(3.25));
  CHECK(y.max() == doctest::Approx(3.25));
  CHECK(layer_gradcheck(rz, {2, 4, 4}, 601) < 1e-6);
}

TEST_CASE("patch embed and attention block gradients") {
  Rng rng(19);
  nn::PatchEmbed pe(3, 8, 4);
  pe.init_params(rng);
  CHECK(pe.output_shape({3, 8, 8}) == Shape{4, 8});
  CHECK(layer_gradcheck(pe, {3, 8, 8}, 701) < 1e-6);
  CHECK(param_gradcheck(pe, {3, 8, 8}, 0, 702) < 1e-6);

  nn::AttentionBlock ab(8, 16);
  ab.init_params(rng);
  CHECK(ab.output_shape({4, 8}) == Shape{4, 8});
  CHECK(layer_gradcheck(ab, {4, 8}, 703, 16) < 1e-4);
  for (size_t p = 0; p < ab.params().size(); ++p)
    CHECK(param_gradcheck(ab, {4, 8}, p, 704 + p) < 1e-4);

  nn::TokenMean tm;
  CHECK(layer_gradcheck(tm, {4, 8}, 720) < 1e-6);
}

TEST_CASE("network composition, clone independence") {
  Rng rng(23);
  nn::Network net;
  net.add(std::make_unique<nn::Conv2d>(1, 2, 3, 1, 1));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::AvgPool2d>(2));
  net.init_params(rng);

  const Tensor x = random_tensor({1, 6, 6}, 801);
  nn::Trace tr;
  const Tensor y = net.forward(x, tr);
  CHECK(y.shape() == Shape{2, 3, 3});

  nn::Network copy = net;
  CHECK(max_abs_diff(copy.forward(x), y) == 0.0);
  (*copy.params()[0])[0] += 1.0;
  CHECK(max_abs_diff(net.forward(x), y) == 0.0);  // deep copy

  Tensor gout = y;
  gout.scale_(2.0);
  const Tensor gx = net.backward(gout, tr, false);
  auto f = [&](const Tensor& probe) {
    const Tensor out = net.forward(probe);
    return out.dot(out);
  };
  CHECK(gradcheck(f, x, gx, 10, 802) < 1e-6);
}

TEST_CASE("adam drives a quadratic to its minimum") {
  Tensor p({4}, 5.0);
  Tensor g({4});
  nn::Adam adam(0.1);
  for (int i = 0; i < 500; ++i) {
    for (long j = 0; j < 4; ++j) g[j] = 2.0 * (p[j] - 1.5);
    adam.step({&p}, {&g});
  }
  for (long j = 0; j < 4; ++j) CHECK(p[j] == doctest::Approx(1.5).epsilon(1e-3));
}

TEST_CASE("weight sharing: two contexts, one layer, accumulated grads") {
  Rng rng(29);
  nn::Conv2d conv(2, 2, 3, 1, 1);
  conv.init_params(rng);
  const Tensor x1 = random_tensor({2, 4, 4}, 901);
  const Tensor x2 = random_tensor({2, 4, 4}, 902);

  conv.zero_grads();
  nn::Ctx c1, c2;
  Tensor y1 = conv.forward(x1, c1);
  Tensor y2 = conv.forward(x2, c2);
  Tensor g1 = y1;
  g1.scale_(2.0);
  Tensor g2 = y2;
  g2.scale_(2.0);
  conv.backward(g1, c1, true);
  conv.backward(g2, c2, true);
  const Tensor sum_grad = *conv.grads()[0];

  conv.zero_grads();
  nn::Ctx c3;
  Tensor y3 = conv.forward(x1, c3);
  Tensor g3 = y3;
  g3.scale_(2.0);
  conv.backward(g3, c3, true);
  Tensor lone = *conv.grads()[0];

  conv.zero_grads();
  nn::Ctx c4;
  Tensor y4 = conv.forward(x2, c4);
  Tensor g4 = y4;
  g4.scale_(2.0);
  conv.backward(g4, c4, true);
  lone.add_(*conv.grads()[0]);

  CHECK(max_abs_diff(sum_grad, lone) < 1e-12);
}

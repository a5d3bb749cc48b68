#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "featinv/rng.hpp"
#include "featinv/tensor.hpp"

namespace featinv::nn {

// Saved forward state for one layer invocation. Backward never touches layer
// activations directly, so one layer object can serve several concurrent
// forward passes (weight-shared branches) with separate contexts.
struct Ctx {
  std::vector<Tensor> saved;
  std::vector<Ctx> children;
};

// Per-network forward trace: one Ctx per layer, in order.
struct Trace {
  std::vector<Ctx> layers;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  // Symbolic shape propagation; throws on impossible input shapes.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor forward(const Tensor& x, Ctx& ctx) const = 0;
  // Returns grad wrt input. When with_param_grads is set, accumulates into
  // the layer's internal grad buffers (call zero_grads() between steps).
  virtual Tensor backward(const Tensor& gout, const Ctx& ctx,
                          bool with_param_grads) = 0;

  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  virtual void init_params(Rng&) {}
  virtual long param_count() const;
  void zero_grads();

  virtual std::unique_ptr<Layer> clone() const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class Identity final : public Layer {
 public:
  std::string kind() const override { return "identity"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx&) const override { return x; }
  Tensor backward(const Tensor& g, const Ctx&, bool) override { return g; }
  std::unique_ptr<Layer> clone() const override;
};

class Conv2d final : public Layer {
 public:
  Conv2d(int in_c, int out_c, int kernel, int stride = 1, int pad = 0);
  void init_params(Rng& rng) override;

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  std::unique_ptr<Layer> clone() const override;

  Tensor w_, b_, gw_, gb_;  // w: (out_c, in_c, k, k)
  int in_c_, out_c_, k_, stride_, pad_;
};

// Transposed convolution; weight layout (in_c, out_c, k, k).
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(int in_c, int out_c, int kernel, int stride = 1,
                  int pad = 0);
  void init_params(Rng& rng) override;

  std::string kind() const override { return "conv_transpose2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  std::unique_ptr<Layer> clone() const override;

  Tensor w_, b_, gw_, gb_;
  int in_c_, out_c_, k_, stride_, pad_;
};

class Linear final : public Layer {
 public:
  Linear(int in_dim, int out_dim);
  void init_params(Rng& rng) override;

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  std::unique_ptr<Layer> clone() const override;

  Tensor w_, b_, gw_, gb_;  // w: (out, in)
  int in_dim_, out_dim_;
};

class ReLU final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
  double slope_;
};

class Tanh final : public Layer {
 public:
  std::string kind() const override { return "tanh"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
};

// Multiplies by a fixed constant (no parameters).
class Scale final : public Layer {
 public:
  explicit Scale(double factor) : factor_(factor) {}
  std::string kind() const override { return "scale"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx&) const override {
    Tensor y = x;
    return y.scale_(factor_), y;
  }
  Tensor backward(const Tensor& g, const Ctx&, bool) override {
    Tensor gx = g;
    return gx.scale_(factor_), gx;
  }
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Scale>(*this);
  }
  double factor_;
};

class AvgPool2d final : public Layer {
 public:
  explicit AvgPool2d(int kernel) : k_(kernel) {}
  std::string kind() const override { return "avg_pool2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
  int k_;
};

// Normalizes over every element of the sample, then applies a per-channel
// affine. Deterministic and identical in training and inference.
class LayerNormAll final : public Layer {
 public:
  explicit LayerNormAll(int channels, double eps = 1e-6);
  void init_params(Rng&) override;

  std::string kind() const override { return "layer_norm_all"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> grads() override { return {&ggamma_, &gbeta_}; }
  std::unique_ptr<Layer> clone() const override;

  Tensor gamma_, beta_, ggamma_, gbeta_;
  int channels_;
  double eps_;
};

// Standardizes the whole sample to zero mean / unit population std.
// No parameters; eps keeps training away from the zero-variance pole.
class Standardize final : public Layer {
 public:
  explicit Standardize(double eps = 1e-8) : eps_(eps) {}
  std::string kind() const override { return "standardize"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
  double eps_;
};

class BilinearResize final : public Layer {
 public:
  BilinearResize(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}
  std::string kind() const override { return "bilinear_resize"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
  int out_h_, out_w_;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
};

// (C,H,W) -> (tokens, dim) via non-overlapping patch projection.
class PatchEmbed final : public Layer {
 public:
  PatchEmbed(int in_c, int dim, int patch);
  void init_params(Rng& rng) override;

  std::string kind() const override { return "patch_embed"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override { return {&w_, &b_}; }
  std::vector<Tensor*> grads() override { return {&gw_, &gb_}; }
  std::unique_ptr<Layer> clone() const override;

  Tensor w_, b_, gw_, gb_;  // w: (dim, in_c, p, p)
  int in_c_, dim_, patch_;
};

// Pre-norm single-head transformer block on (tokens, dim):
//   x + Proj(Attn(LN(x))), then r + MLP(LN(r)).
class AttentionBlock final : public Layer {
 public:
  AttentionBlock(int dim, int mlp_hidden);
  void init_params(Rng& rng) override;

  std::string kind() const override { return "attention_block"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  std::unique_ptr<Layer> clone() const override;

  int dim_, hidden_;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  Tensor ln1_g_, ln1_b_, ln2_g_, ln2_b_;
  Tensor w1_, b1_, w2_, b2_;
  Tensor gwq_, gbq_, gwk_, gbk_, gwv_, gbv_, gwo_, gbo_;
  Tensor gln1_g_, gln1_b_, gln2_g_, gln2_b_;
  Tensor gw1_, gb1_, gw2_, gb2_;
};

// (tokens, dim) -> (dim) token mean; used in front of classifier heads.
class TokenMean final : public Layer {
 public:
  std::string kind() const override { return "token_mean"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool) override;
  std::unique_ptr<Layer> clone() const override;
};

// Ordered group of layers acting as a single block.
class Composite final : public Layer {
 public:
  Composite() = default;
  explicit Composite(std::string name) : name_(std::move(name)) {}
  Composite& add(LayerPtr l);

  std::string kind() const override {
    return name_.empty() ? "block" : name_;
  }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, Ctx& ctx) const override;
  Tensor backward(const Tensor& g, const Ctx& ctx, bool wpg) override;
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  void init_params(Rng& rng) override;
  std::unique_ptr<Layer> clone() const override;

  std::vector<LayerPtr>& layers() { return layers_; }
  const std::vector<LayerPtr>& layers() const { return layers_; }

 private:
  std::string name_;
  std::vector<LayerPtr> layers_;
};

// A plain sequence of layers with trace-based forward/backward.
class Network {
 public:
  Network() = default;
  Network(const Network& o);
  Network& operator=(const Network& o);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  Network& add(LayerPtr l);
  void init_params(Rng& rng);

  Shape output_shape(const Shape& in) const;
  Tensor forward(const Tensor& x, Trace& tr) const;
  Tensor forward(const Tensor& x) const;  // traceless convenience
  // Backward through every layer; returns grad wrt network input.
  Tensor backward(const Tensor& gout, const Trace& tr, bool with_param_grads);
  void zero_grads();

  std::vector<Tensor*> params();
  std::vector<Tensor*> grads();
  long param_count() const;

  size_t depth() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }
  const Layer& layer(size_t i) const { return *layers_[i]; }

 private:
  std::vector<LayerPtr> layers_;
};

// Adam with bias correction; persistent first/second moment per parameter.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(const std::vector<Tensor*>& params,
            const std::vector<Tensor*>& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Kaiming-style fan-in init used by every parametric layer.
void kaiming_fill(Tensor& w, long fan_in, Rng& rng);

std::vector<double> softmax(const std::vector<double>& logits);

// Finite-difference probe used by tests and by internal sanity checks:
// central differences of f at 'coords' of x with step h.
std::vector<double> central_diff(const std::function<double(const Tensor&)>& f,
                                 Tensor x, const std::vector<long>& coords,
                                 double h);

}  // namespace featinv::nn

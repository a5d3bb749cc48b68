#include "featinv/nn.hpp"

#include <algorithm>
#include <cmath>

#include "featinv/error.hpp"

namespace featinv::nn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw_input(msg);
}

void require_chw(const Shape& s, const std::string& who) {
  require(s.size() == 3, who + " expects a (C,H,W) input, got " + shape_str(s));
}

// out = A * B with A (n,k), B (k,m)
void mat_mul(const Tensor& a, const Tensor& b, Tensor& out) {
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  out = Tensor({n, m});
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data() + static_cast<long>(i) * k;
    double* orow = out.data() + static_cast<long>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.data() + static_cast<long>(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

// out = A^T * B with A (k,n), B (k,m)
void mat_mul_at(const Tensor& a, const Tensor& b, Tensor& out) {
  const int k = a.dim(0), n = a.dim(1), m = b.dim(1);
  out = Tensor({n, m});
  for (int p = 0; p < k; ++p) {
    const double* arow = a.data() + static_cast<long>(p) * n;
    const double* brow = b.data() + static_cast<long>(p) * m;
    for (int i = 0; i < n; ++i) {
      const double av = arow[i];
      double* orow = out.data() + static_cast<long>(i) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

// out = A * B^T with A (n,k), B (m,k)
void mat_mul_bt(const Tensor& a, const Tensor& b, Tensor& out) {
  const int n = a.dim(0), k = a.dim(1), m = b.dim(0);
  out = Tensor({n, m});
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data() + static_cast<long>(i) * k;
    double* orow = out.data() + static_cast<long>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b.data() + static_cast<long>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      orow[j] = s;
    }
  }
}

// y = x*W + b row-wise, W (d_in, d_out)
Tensor affine_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y;
  mat_mul(x, w, y);
  const int t = y.dim(0), d = y.dim(1);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) y.at(i, j) += b[j];
  return y;
}

// Standardization backward shared by Standardize / LayerNormAll:
// given xhat=(x-mu)/sigma and gh=dL/dxhat, dL/dx = (gh - mean(gh)
// - xhat*mean(gh.*xhat)) / sigma.
Tensor standardize_backward(const Tensor& xhat, const Tensor& gh,
                            double sigma) {
  const long n = xhat.size();
  double m_g = 0.0, m_gx = 0.0;
  for (long i = 0; i < n; ++i) {
    m_g += gh[i];
    m_gx += gh[i] * xhat[i];
  }
  m_g /= static_cast<double>(n);
  m_gx /= static_cast<double>(n);
  Tensor gx(xhat.shape());
  for (long i = 0; i < n; ++i)
    gx[i] = (gh[i] - m_g - xhat[i] * m_gx) / sigma;
  return gx;
}

// Per-token layer norm forward; emits xhat and 1/sigma per token.
void token_ln_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      double eps, Tensor& y, Tensor& xhat, Tensor& inv_sigma) {
  const int t = x.dim(0), d = x.dim(1);
  y = Tensor({t, d});
  xhat = Tensor({t, d});
  inv_sigma = Tensor({t});
  for (int i = 0; i < t; ++i) {
    const double* row = x.data() + static_cast<long>(i) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (int j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat.at(i, j) = xh;
      y.at(i, j) = gamma[j] * xh + beta[j];
    }
  }
}

Tensor token_ln_backward(const Tensor& g, const Tensor& xhat,
                         const Tensor& inv_sigma, const Tensor& gamma,
                         Tensor* ggamma, Tensor* gbeta) {
  const int t = g.dim(0), d = g.dim(1);
  Tensor gx({t, d});
  for (int i = 0; i < t; ++i) {
    double m_g = 0.0, m_gx = 0.0;
    for (int j = 0; j < d; ++j) {
      const double gh = g.at(i, j) * gamma[j];
      m_g += gh;
      m_gx += gh * xhat.at(i, j);
      if (ggamma) (*ggamma)[j] += g.at(i, j) * xhat.at(i, j);
      if (gbeta) (*gbeta)[j] += g.at(i, j);
    }
    m_g /= d;
    m_gx /= d;
    for (int j = 0; j < d; ++j) {
      const double gh = g.at(i, j) * gamma[j];
      gx.at(i, j) = (gh - m_g - xhat.at(i, j) * m_gx) * inv_sigma[i];
    }
  }
  return gx;
}

}  // namespace

long Layer::param_count() const {
  long n = 0;
  for (const Tensor* p : const_cast<Layer*>(this)->params()) n += p->size();
  return n;
}

void Layer::zero_grads() {
  for (Tensor* g : grads()) g->fill_(0.0);
}

void kaiming_fill(Tensor& w, long fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  rng.fill_normal(w, 0.0, std);
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> central_diff(const std::function<double(const Tensor&)>& f,
                                 Tensor x, const std::vector<long>& coords,
                                 double h) {
  std::vector<double> out;
  out.reserve(coords.size());
  for (long c : coords) {
    const double keep = x[c];
    x[c] = keep + h;
    const double fp = f(x);
    x[c] = keep - h;
    const double fm = f(x);
    x[c] = keep;
    out.push_back((fp - fm) / (2.0 * h));
  }
  return out;
}

std::unique_ptr<Layer> Identity::clone() const {
  return std::make_unique<Identity>(*this);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c, int out_c, int kernel, int stride, int pad)
    : w_({out_c, in_c, kernel, kernel}),
      b_({out_c}),
      gw_({out_c, in_c, kernel, kernel}),
      gb_({out_c}),
      in_c_(in_c),
      out_c_(out_c),
      k_(kernel),
      stride_(stride),
      pad_(pad) {}

void Conv2d::init_params(Rng& rng) {
  kaiming_fill(w_, static_cast<long>(in_c_) * k_ * k_, rng);
  b_.fill_(0.0);
}

Shape Conv2d::output_shape(const Shape& in) const {
  require_chw(in, "conv2d");
  require(in[0] == in_c_, "conv2d expects " + std::to_string(in_c_) +
                              " input channels, got " + std::to_string(in[0]));
  const int oh = (in[1] + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (in[2] + 2 * pad_ - k_) / stride_ + 1;
  require(oh >= 1 && ow >= 1, "conv2d output collapses for input " +
                                  shape_str(in));
  return {out_c_, oh, ow};
}

Tensor Conv2d::forward(const Tensor& x, Ctx& ctx) const {
  const Shape os = output_shape(x.shape());
  const int ih = x.dim(1), iw = x.dim(2), oh = os[1], ow = os[2];
  Tensor y(os);
  for (int oc = 0; oc < out_c_; ++oc) {
    for (int r = 0; r < oh; ++r) {
      double* yrow = &y.at(oc, r, 0);
      for (int c = 0; c < ow; ++c) yrow[c] = b_[oc];
      for (int ic = 0; ic < in_c_; ++ic) {
        for (int kh = 0; kh < k_; ++kh) {
          const int hi = r * stride_ - pad_ + kh;
          if (hi < 0 || hi >= ih) continue;
          const double* xrow = &x.at(ic, hi, 0);
          const double* wrow =
              w_.data() + (((static_cast<long>(oc) * in_c_) + ic) * k_ + kh) * k_;
          for (int kw = 0; kw < k_; ++kw) {
            const double wv = wrow[kw];
            const int off = -pad_ + kw;
            const int c0 = std::max(0, (-off + stride_ - 1) / stride_);
            for (int c = c0; c < ow; ++c) {
              const int wi = c * stride_ + off;
              if (wi >= iw) break;
              yrow[c] += wv * xrow[wi];
            }
          }
        }
      }
    }
  }
  ctx.saved = {x};
  return y;
}

Tensor Conv2d::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  const Tensor& x = ctx.saved[0];
  const int ih = x.dim(1), iw = x.dim(2);
  const int oh = g.dim(1), ow = g.dim(2);
  Tensor gx(x.shape());
  for (int oc = 0; oc < out_c_; ++oc) {
    for (int r = 0; r < oh; ++r) {
      const double* grow = &g.at(oc, r, 0);
      if (wpg) {
        double s = 0.0;
        for (int c = 0; c < ow; ++c) s += grow[c];
        gb_[oc] += s;
      }
      for (int ic = 0; ic < in_c_; ++ic) {
        for (int kh = 0; kh < k_; ++kh) {
          const int hi = r * stride_ - pad_ + kh;
          if (hi < 0 || hi >= ih) continue;
          const double* xrow = &x.at(ic, hi, 0);
          double* gxrow = &gx.at(ic, hi, 0);
          const long wbase =
              ((static_cast<long>(oc) * in_c_ + ic) * k_ + kh) * k_;
          for (int kw = 0; kw < k_; ++kw) {
            const double wv = w_[wbase + kw];
            double accw = 0.0;
            const int off = -pad_ + kw;
            const int c0 = std::max(0, (-off + stride_ - 1) / stride_);
            for (int c = c0; c < ow; ++c) {
              const int wi = c * stride_ + off;
              if (wi >= iw) break;
              gxrow[wi] += wv * grow[c];
              accw += grow[c] * xrow[wi];
            }
            if (wpg) gw_[wbase + kw] += accw;
          }
        }
      }
    }
  }
  return gx;
}

std::unique_ptr<Layer> Conv2d::clone() const {
  return std::make_unique<Conv2d>(*this);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_c, int out_c, int kernel, int stride,
                                 int pad)
    : w_({in_c, out_c, kernel, kernel}),
      b_({out_c}),
      gw_({in_c, out_c, kernel, kernel}),
      gb_({out_c}),
      in_c_(in_c),
      out_c_(out_c),
      k_(kernel),
      stride_(stride),
      pad_(pad) {}

void ConvTranspose2d::init_params(Rng& rng) {
  kaiming_fill(w_, static_cast<long>(in_c_) * k_ * k_, rng);
  b_.fill_(0.0);
}

Shape ConvTranspose2d::output_shape(const Shape& in) const {
  require_chw(in, "conv_transpose2d");
  require(in[0] == in_c_, "conv_transpose2d expects " + std::to_string(in_c_) +
                              " input channels, got " + std::to_string(in[0]));
  const int oh = (in[1] - 1) * stride_ - 2 * pad_ + k_;
  const int ow = (in[2] - 1) * stride_ - 2 * pad_ + k_;
  require(oh >= 1 && ow >= 1,
          "conv_transpose2d output collapses for input " + shape_str(in));
  return {out_c_, oh, ow};
}

Tensor ConvTranspose2d::forward(const Tensor& x, Ctx& ctx) const {
  const Shape os = output_shape(x.shape());
  const int ih = x.dim(1), iw = x.dim(2), oh = os[1], ow = os[2];
  Tensor y(os);
  for (int oc = 0; oc < out_c_; ++oc) {
    double* ybase = &y.at(oc, 0, 0);
    for (long i = 0; i < static_cast<long>(oh) * ow; ++i) ybase[i] = b_[oc];
  }
  for (int ic = 0; ic < in_c_; ++ic) {
    for (int r = 0; r < ih; ++r) {
      const double* xrow = &x.at(ic, r, 0);
      for (int oc = 0; oc < out_c_; ++oc) {
        for (int kh = 0; kh < k_; ++kh) {
          const int ho = r * stride_ - pad_ + kh;
          if (ho < 0 || ho >= oh) continue;
          double* yrow = &y.at(oc, ho, 0);
          const long wbase =
              ((static_cast<long>(ic) * out_c_ + oc) * k_ + kh) * k_;
          for (int c = 0; c < iw; ++c) {
            const double xv = xrow[c];
            if (xv == 0.0) continue;
            const int w0 = c * stride_ - pad_;
            for (int kw = 0; kw < k_; ++kw) {
              const int wo = w0 + kw;
              if (wo < 0 || wo >= ow) continue;
              yrow[wo] += xv * w_[wbase + kw];
            }
          }
        }
      }
    }
  }
  ctx.saved = {x};
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  const Tensor& x = ctx.saved[0];
  const int ih = x.dim(1), iw = x.dim(2);
  const int oh = g.dim(1), ow = g.dim(2);
  Tensor gx(x.shape());
  if (wpg) {
    for (int oc = 0; oc < out_c_; ++oc) {
      const double* gbase = &g.at(oc, 0, 0);
      double s = 0.0;
      for (long i = 0; i < static_cast<long>(oh) * ow; ++i) s += gbase[i];
      gb_[oc] += s;
    }
  }
  for (int ic = 0; ic < in_c_; ++ic) {
    for (int r = 0; r < ih; ++r) {
      const double* xrow = &x.at(ic, r, 0);
      double* gxrow = &gx.at(ic, r, 0);
      for (int oc = 0; oc < out_c_; ++oc) {
        for (int kh = 0; kh < k_; ++kh) {
          const int ho = r * stride_ - pad_ + kh;
          if (ho < 0 || ho >= oh) continue;
          const double* grow = &g.at(oc, ho, 0);
          const long wbase =
              ((static_cast<long>(ic) * out_c_ + oc) * k_ + kh) * k_;
          for (int c = 0; c < iw; ++c) {
            const int w0 = c * stride_ - pad_;
            double acc = 0.0;
            for (int kw = 0; kw < k_; ++kw) {
              const int wo = w0 + kw;
              if (wo < 0 || wo >= ow) continue;
              acc += grow[wo] * w_[wbase + kw];
              if (wpg) gw_[wbase + kw] += xrow[c] * grow[wo];
            }
            gxrow[c] += acc;
          }
        }
      }
    }
  }
  return gx;
}

std::unique_ptr<Layer> ConvTranspose2d::clone() const {
  return std::make_unique<ConvTranspose2d>(*this);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_dim, int out_dim)
    : w_({out_dim, in_dim}),
      b_({out_dim}),
      gw_({out_dim, in_dim}),
      gb_({out_dim}),
      in_dim_(in_dim),
      out_dim_(out_dim) {}

void Linear::init_params(Rng& rng) {
  kaiming_fill(w_, in_dim_, rng);
  b_.fill_(0.0);
}

Shape Linear::output_shape(const Shape& in) const {
  require(shape_numel(in) == in_dim_,
          "linear expects " + std::to_string(in_dim_) + " inputs, got " +
              shape_str(in));
  return {out_dim_};
}

Tensor Linear::forward(const Tensor& x, Ctx& ctx) const {
  output_shape(x.shape());
  Tensor y({out_dim_});
  for (int o = 0; o < out_dim_; ++o) {
    const double* wrow = w_.data() + static_cast<long>(o) * in_dim_;
    double s = b_[o];
    for (int i = 0; i < in_dim_; ++i) s += wrow[i] * x[i];
    y[o] = s;
  }
  ctx.saved = {x};
  return y;
}

Tensor Linear::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  const Tensor& x = ctx.saved[0];
  Tensor gx(x.shape());
  for (int o = 0; o < out_dim_; ++o) {
    const double go = g[o];
    const double* wrow = w_.data() + static_cast<long>(o) * in_dim_;
    double* gwrow = gw_.data() + static_cast<long>(o) * in_dim_;
    for (int i = 0; i < in_dim_; ++i) {
      gx[i] += go * wrow[i];
      if (wpg) gwrow[i] += go * x[i];
    }
    if (wpg) gb_[o] += go;
  }
  return gx;
}

std::unique_ptr<Layer> Linear::clone() const {
  return std::make_unique<Linear>(*this);
}

// ----------------------------------------------------------- activations

Tensor ReLU::forward(const Tensor& x, Ctx& ctx) const {
  Tensor y(x.shape());
  for (long i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  ctx.saved = {x};
  return y;
}

Tensor ReLU::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& x = ctx.saved[0];
  Tensor gx(x.shape());
  for (long i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
  return gx;
}

std::unique_ptr<Layer> ReLU::clone() const {
  return std::make_unique<ReLU>(*this);
}

Tensor LeakyReLU::forward(const Tensor& x, Ctx& ctx) const {
  Tensor y(x.shape());
  for (long i = 0; i < x.size(); ++i)
    y[i] = x[i] > 0.0 ? x[i] : slope_ * x[i];
  ctx.saved = {x};
  return y;
}

Tensor LeakyReLU::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& x = ctx.saved[0];
  Tensor gx(x.shape());
  for (long i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : slope_ * g[i];
  return gx;
}

std::unique_ptr<Layer> LeakyReLU::clone() const {
  return std::make_unique<LeakyReLU>(*this);
}

Tensor Tanh::forward(const Tensor& x, Ctx& ctx) const {
  Tensor y(x.shape());
  for (long i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  ctx.saved = {y};
  return y;
}

Tensor Tanh::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& y = ctx.saved[0];
  Tensor gx(y.shape());
  for (long i = 0; i < y.size(); ++i) gx[i] = g[i] * (1.0 - y[i] * y[i]);
  return gx;
}

std::unique_ptr<Layer> Tanh::clone() const {
  return std::make_unique<Tanh>(*this);
}

// -------------------------------------------------------------- pooling

Shape AvgPool2d::output_shape(const Shape& in) const {
  require_chw(in, "avg_pool2d");
  require(in[1] >= k_ && in[2] >= k_,
          "avg_pool2d kernel larger than input " + shape_str(in));
  return {in[0], in[1] / k_, in[2] / k_};
}

Tensor AvgPool2d::forward(const Tensor& x, Ctx& ctx) const {
  const Shape os = output_shape(x.shape());
  Tensor y(os);
  const double inv = 1.0 / (k_ * k_);
  for (int c = 0; c < os[0]; ++c)
    for (int r = 0; r < os[1]; ++r)
      for (int q = 0; q < os[2]; ++q) {
        double s = 0.0;
        for (int i = 0; i < k_; ++i)
          for (int j = 0; j < k_; ++j) s += x.at(c, r * k_ + i, q * k_ + j);
        y.at(c, r, q) = s * inv;
      }
  ctx.saved = {Tensor::from({3}, {double(x.dim(0)), double(x.dim(1)),
                                  double(x.dim(2))})};
  return y;
}

Tensor AvgPool2d::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& dims = ctx.saved[0];
  const Shape in{int(dims[0]), int(dims[1]), int(dims[2])};
  Tensor gx(in);
  const double inv = 1.0 / (k_ * k_);
  for (int c = 0; c < g.dim(0); ++c)
    for (int r = 0; r < g.dim(1); ++r)
      for (int q = 0; q < g.dim(2); ++q) {
        const double v = g.at(c, r, q) * inv;
        for (int i = 0; i < k_; ++i)
          for (int j = 0; j < k_; ++j) gx.at(c, r * k_ + i, q * k_ + j) += v;
      }
  return gx;
}

std::unique_ptr<Layer> AvgPool2d::clone() const {
  return std::make_unique<AvgPool2d>(*this);
}

// --------------------------------------------------------- normalization

LayerNormAll::LayerNormAll(int channels, double eps)
    : gamma_({channels}, 1.0),
      beta_({channels}),
      ggamma_({channels}),
      gbeta_({channels}),
      channels_(channels),
      eps_(eps) {}

void LayerNormAll::init_params(Rng&) {
  gamma_.fill_(1.0);
  beta_.fill_(0.0);
}

Tensor LayerNormAll::forward(const Tensor& x, Ctx& ctx) const {
  require_chw(x.shape(), "layer_norm_all");
  require(x.dim(0) == channels_, "layer_norm_all channel mismatch");
  const double mu = x.mean();
  const double sigma = std::sqrt(x.var_pop() + eps_);
  Tensor xhat(x.shape());
  Tensor y(x.shape());
  const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
  for (int c = 0; c < channels_; ++c) {
    const double gcv = gamma_[c], bcv = beta_[c];
    for (long i = 0; i < hw; ++i) {
      const long idx = c * hw + i;
      const double xh = (x[idx] - mu) / sigma;
      xhat[idx] = xh;
      y[idx] = gcv * xh + bcv;
    }
  }
  Tensor stats = Tensor::from({1}, {sigma});
  ctx.saved = {std::move(xhat), std::move(stats)};
  return y;
}

Tensor LayerNormAll::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  const Tensor& xhat = ctx.saved[0];
  const double sigma = ctx.saved[1][0];
  const long hw = static_cast<long>(xhat.dim(1)) * xhat.dim(2);
  Tensor gh(xhat.shape());
  for (int c = 0; c < channels_; ++c) {
    double dg = 0.0, db = 0.0;
    for (long i = 0; i < hw; ++i) {
      const long idx = c * hw + i;
      gh[idx] = g[idx] * gamma_[c];
      dg += g[idx] * xhat[idx];
      db += g[idx];
    }
    if (wpg) {
      ggamma_[c] += dg;
      gbeta_[c] += db;
    }
  }
  return standardize_backward(xhat, gh, sigma);
}

std::unique_ptr<Layer> LayerNormAll::clone() const {
  return std::make_unique<LayerNormAll>(*this);
}

Tensor Standardize::forward(const Tensor& x, Ctx& ctx) const {
  const double mu = x.mean();
  const double sigma = std::sqrt(x.var_pop() + eps_);
  Tensor y(x.shape());
  for (long i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / sigma;
  Tensor stats = Tensor::from({1}, {sigma});
  ctx.saved = {y, std::move(stats)};
  return y;
}

Tensor Standardize::backward(const Tensor& g, const Ctx& ctx, bool) {
  return standardize_backward(ctx.saved[0], g, ctx.saved[1][0]);
}

std::unique_ptr<Layer> Standardize::clone() const {
  return std::make_unique<Standardize>(*this);
}

// ------------------------------------------------------------- resizing

Shape BilinearResize::output_shape(const Shape& in) const {
  require_chw(in, "bilinear_resize");
  return {in[0], out_h_, out_w_};
}

namespace {
// half-pixel source coordinate mapping; emits floor index and blend weight
inline void src_coord(int dst, int src_n, int dst_n, int& i0, int& i1,
                      double& w1) {
  const double scale = static_cast<double>(src_n) / dst_n;
  double s = (dst + 0.5) * scale - 0.5;
  if (s < 0) s = 0;
  if (s > src_n - 1) s = src_n - 1;
  i0 = static_cast<int>(s);
  i1 = std::min(i0 + 1, src_n - 1);
  w1 = s - i0;
}
}  // namespace

Tensor BilinearResize::forward(const Tensor& x, Ctx& ctx) const {
  const Shape os = output_shape(x.shape());
  const int C = os[0], ih = x.dim(1), iw = x.dim(2);
  Tensor y(os);
  for (int r = 0; r < out_h_; ++r) {
    int r0, r1;
    double wr;
    src_coord(r, ih, out_h_, r0, r1, wr);
    for (int c = 0; c < out_w_; ++c) {
      int c0, c1;
      double wc;
      src_coord(c, iw, out_w_, c0, c1, wc);
      for (int ch = 0; ch < C; ++ch) {
        const double v = (1 - wr) * ((1 - wc) * x.at(ch, r0, c0) +
                                     wc * x.at(ch, r0, c1)) +
                         wr * ((1 - wc) * x.at(ch, r1, c0) +
                               wc * x.at(ch, r1, c1));
        y.at(ch, r, c) = v;
      }
    }
  }
  ctx.saved = {Tensor::from({3}, {double(C), double(ih), double(iw)})};
  return y;
}

Tensor BilinearResize::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& dims = ctx.saved[0];
  const int C = int(dims[0]), ih = int(dims[1]), iw = int(dims[2]);
  Tensor gx({C, ih, iw});
  for (int r = 0; r < out_h_; ++r) {
    int r0, r1;
    double wr;
    src_coord(r, ih, out_h_, r0, r1, wr);
    for (int c = 0; c < out_w_; ++c) {
      int c0, c1;
      double wc;
      src_coord(c, iw, out_w_, c0, c1, wc);
      for (int ch = 0; ch < C; ++ch) {
        const double gv = g.at(ch, r, c);
        gx.at(ch, r0, c0) += (1 - wr) * (1 - wc) * gv;
        gx.at(ch, r0, c1) += (1 - wr) * wc * gv;
        gx.at(ch, r1, c0) += wr * (1 - wc) * gv;
        gx.at(ch, r1, c1) += wr * wc * gv;
      }
    }
  }
  return gx;
}

std::unique_ptr<Layer> BilinearResize::clone() const {
  return std::make_unique<BilinearResize>(*this);
}

// ------------------------------------------------------------- pooling heads

Shape GlobalAvgPool::output_shape(const Shape& in) const {
  require_chw(in, "global_avg_pool");
  return {in[0]};
}

Tensor GlobalAvgPool::forward(const Tensor& x, Ctx& ctx) const {
  const int C = x.dim(0);
  const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
  Tensor y({C});
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    const double* p = x.data() + c * hw;
    for (long i = 0; i < hw; ++i) s += p[i];
    y[c] = s / static_cast<double>(hw);
  }
  ctx.saved = {Tensor::from({3}, {double(C), double(x.dim(1)),
                                  double(x.dim(2))})};
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& dims = ctx.saved[0];
  const int C = int(dims[0]), h = int(dims[1]), w = int(dims[2]);
  const long hw = static_cast<long>(h) * w;
  Tensor gx({C, h, w});
  for (int c = 0; c < C; ++c) {
    const double v = g[c] / static_cast<double>(hw);
    double* p = gx.data() + c * hw;
    for (long i = 0; i < hw; ++i) p[i] = v;
  }
  return gx;
}

std::unique_ptr<Layer> GlobalAvgPool::clone() const {
  return std::make_unique<GlobalAvgPool>(*this);
}

Shape TokenMean::output_shape(const Shape& in) const {
  require(in.size() == 2, "token_mean expects (tokens, dim)");
  return {in[1]};
}

Tensor TokenMean::forward(const Tensor& x, Ctx& ctx) const {
  const int t = x.dim(0), d = x.dim(1);
  Tensor y({d});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) y[j] += x.at(i, j);
  y.scale_(1.0 / t);
  ctx.saved = {Tensor::from({2}, {double(t), double(d)})};
  return y;
}

Tensor TokenMean::backward(const Tensor& g, const Ctx& ctx, bool) {
  const Tensor& dims = ctx.saved[0];
  const int t = int(dims[0]), d = int(dims[1]);
  Tensor gx({t, d});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) gx.at(i, j) = g[j] / t;
  return gx;
}

std::unique_ptr<Layer> TokenMean::clone() const {
  return std::make_unique<TokenMean>(*this);
}

// ------------------------------------------------------------ PatchEmbed

PatchEmbed::PatchEmbed(int in_c, int dim, int patch)
    : w_({dim, in_c, patch, patch}),
      b_({dim}),
      gw_({dim, in_c, patch, patch}),
      gb_({dim}),
      in_c_(in_c),
      dim_(dim),
      patch_(patch) {}

void PatchEmbed::init_params(Rng& rng) {
  kaiming_fill(w_, static_cast<long>(in_c_) * patch_ * patch_, rng);
  b_.fill_(0.0);
}

Shape PatchEmbed::output_shape(const Shape& in) const {
  require_chw(in, "patch_embed");
  require(in[0] == in_c_, "patch_embed channel mismatch");
  require(in[1] % patch_ == 0 && in[2] % patch_ == 0,
          "patch_embed requires spatial dims divisible by patch size");
  return {(in[1] / patch_) * (in[2] / patch_), dim_};
}

Tensor PatchEmbed::forward(const Tensor& x, Ctx& ctx) const {
  const Shape os = output_shape(x.shape());
  const int hp = x.dim(1) / patch_, wp = x.dim(2) / patch_;
  Tensor y(os);
  for (int ph = 0; ph < hp; ++ph)
    for (int pw = 0; pw < wp; ++pw) {
      const int tok = ph * wp + pw;
      for (int d = 0; d < dim_; ++d) {
        double s = b_[d];
        for (int c = 0; c < in_c_; ++c) {
          const double* wp =
              w_.data() + ((static_cast<long>(d) * in_c_ + c) * patch_) * patch_;
          for (int i = 0; i < patch_; ++i)
            for (int j = 0; j < patch_; ++j)
              s += x.at(c, ph * patch_ + i, pw * patch_ + j) *
                   wp[i * patch_ + j];
        }
        y.at(tok, d) = s;
      }
    }
  ctx.saved = {x};
  return y;
}

Tensor PatchEmbed::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  const Tensor& x = ctx.saved[0];
  const int hp = x.dim(1) / patch_, wp = x.dim(2) / patch_;
  Tensor gx(x.shape());
  for (int ph = 0; ph < hp; ++ph)
    for (int pw = 0; pw < wp; ++pw) {
      const int tok = ph * wp + pw;
      for (int d = 0; d < dim_; ++d) {
        const double gv = g.at(tok, d);
        if (wpg) gb_[d] += gv;
        for (int c = 0; c < in_c_; ++c) {
          const long wbase =
              ((static_cast<long>(d) * in_c_ + c) * patch_) * patch_;
          for (int i = 0; i < patch_; ++i)
            for (int j = 0; j < patch_; ++j) {
              gx.at(c, ph * patch_ + i, pw * patch_ + j) +=
                  gv * w_[wbase + i * patch_ + j];
              if (wpg)
                gw_[wbase + i * patch_ + j] +=
                    gv * x.at(c, ph * patch_ + i, pw * patch_ + j);
            }
        }
      }
    }
  return gx;
}

std::unique_ptr<Layer> PatchEmbed::clone() const {
  return std::make_unique<PatchEmbed>(*this);
}

// -------------------------------------------------------- AttentionBlock

AttentionBlock::AttentionBlock(int dim, int mlp_hidden)
    : dim_(dim),
      hidden_(mlp_hidden),
      wq_({dim, dim}),
      bq_({dim}),
      wk_({dim, dim}),
      bk_({dim}),
      wv_({dim, dim}),
      bv_({dim}),
      wo_({dim, dim}),
      bo_({dim}),
      ln1_g_({dim}, 1.0),
      ln1_b_({dim}),
      ln2_g_({dim}, 1.0),
      ln2_b_({dim}),
      w1_({dim, mlp_hidden}),
      b1_({mlp_hidden}),
      w2_({mlp_hidden, dim}),
      b2_({dim}),
      gwq_({dim, dim}),
      gbq_({dim}),
      gwk_({dim, dim}),
      gbk_({dim}),
      gwv_({dim, dim}),
      gbv_({dim}),
      gwo_({dim, dim}),
      gbo_({dim}),
      gln1_g_({dim}),
      gln1_b_({dim}),
      gln2_g_({dim}),
      gln2_b_({dim}),
      gw1_({dim, mlp_hidden}),
      gb1_({mlp_hidden}),
      gw2_({mlp_hidden, dim}),
      gb2_({dim}) {}

void AttentionBlock::init_params(Rng& rng) {
  for (Tensor* w : {&wq_, &wk_, &wv_, &wo_}) kaiming_fill(*w, dim_, rng);
  kaiming_fill(w1_, dim_, rng);
  kaiming_fill(w2_, hidden_, rng);
  for (Tensor* b : {&bq_, &bk_, &bv_, &bo_, &b1_, &b2_}) b->fill_(0.0);
  ln1_g_.fill_(1.0);
  ln1_b_.fill_(0.0);
  ln2_g_.fill_(1.0);
  ln2_b_.fill_(0.0);
}

Shape AttentionBlock::output_shape(const Shape& in) const {
  require(in.size() == 2 && in[1] == dim_,
          "attention_block expects (tokens," + std::to_string(dim_) + ")");
  return in;
}

std::vector<Tensor*> AttentionBlock::params() {
  return {&wq_, &bq_, &wk_, &bk_, &wv_, &bv_, &wo_, &bo_,
          &ln1_g_, &ln1_b_, &ln2_g_, &ln2_b_, &w1_, &b1_, &w2_, &b2_};
}

std::vector<Tensor*> AttentionBlock::grads() {
  return {&gwq_, &gbq_, &gwk_, &gbk_, &gwv_, &gbv_, &gwo_, &gbo_,
          &gln1_g_, &gln1_b_, &gln2_g_, &gln2_b_, &gw1_, &gb1_, &gw2_, &gb2_};
}

Tensor AttentionBlock::forward(const Tensor& x, Ctx& ctx) const {
  output_shape(x.shape());
  const int t = x.dim(0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));

  Tensor n1, xhat1, is1;
  token_ln_forward(x, ln1_g_, ln1_b_, 1e-6, n1, xhat1, is1);

  const Tensor q = affine_rows(n1, wq_, bq_);
  const Tensor k = affine_rows(n1, wk_, bk_);
  const Tensor v = affine_rows(n1, wv_, bv_);

  Tensor scores;
  mat_mul_bt(q, k, scores);
  scores.scale_(scale);

  Tensor attn({t, t});
  for (int i = 0; i < t; ++i) {
    double mx = scores.at(i, 0);
    for (int j = 1; j < t; ++j) mx = std::max(mx, scores.at(i, j));
    double z = 0.0;
    for (int j = 0; j < t; ++j) {
      const double e = std::exp(scores.at(i, j) - mx);
      attn.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < t; ++j) attn.at(i, j) /= z;
  }

  Tensor att;
  mat_mul(attn, v, att);
  Tensor o = affine_rows(att, wo_, bo_);

  Tensor r1 = x;
  r1.add_(o);

  Tensor n2, xhat2, is2;
  token_ln_forward(r1, ln2_g_, ln2_b_, 1e-6, n2, xhat2, is2);

  Tensor hpre = affine_rows(n2, w1_, b1_);
  Tensor h(hpre.shape());
  for (long i = 0; i < hpre.size(); ++i) h[i] = hpre[i] > 0 ? hpre[i] : 0.0;
  Tensor m = affine_rows(h, w2_, b2_);

  Tensor out = r1;
  out.add_(m);

  ctx.saved = {n1, xhat1, is1, q, k, v, attn, att,
               xhat2, is2, n2, hpre, h};
  return out;
}

Tensor AttentionBlock::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  const Tensor& n1 = ctx.saved[0];
  const Tensor& xhat1 = ctx.saved[1];
  const Tensor& is1 = ctx.saved[2];
  const Tensor& q = ctx.saved[3];
  const Tensor& k = ctx.saved[4];
  const Tensor& v = ctx.saved[5];
  const Tensor& attn = ctx.saved[6];
  const Tensor& att = ctx.saved[7];
  const Tensor& xhat2 = ctx.saved[8];
  const Tensor& is2 = ctx.saved[9];
  const Tensor& n2 = ctx.saved[10];
  const Tensor& hpre = ctx.saved[11];
  const Tensor& h = ctx.saved[12];
  const int t = g.dim(0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));

  // out = r1 + m
  Tensor g_r1 = g;
  // m = h*W2 + b2
  Tensor g_h;
  mat_mul_bt(g, w2_, g_h);
  if (wpg) {
    Tensor gw2;
    mat_mul_at(h, g, gw2);
    gw2_.add_(gw2);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < dim_; ++j) gb2_[j] += g.at(i, j);
  }
  // relu
  Tensor g_hpre(hpre.shape());
  for (long i = 0; i < hpre.size(); ++i)
    g_hpre[i] = hpre[i] > 0 ? g_h[i] : 0.0;
  // hpre = n2*W1 + b1
  Tensor g_n2;
  mat_mul_bt(g_hpre, w1_, g_n2);
  if (wpg) {
    Tensor gw1;
    mat_mul_at(n2, g_hpre, gw1);
    gw1_.add_(gw1);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < hidden_; ++j) gb1_[j] += g_hpre.at(i, j);
  }
  // n2 = LN2(r1)
  g_r1.add_(token_ln_backward(g_n2, xhat2, is2, ln2_g_,
                              wpg ? &gln2_g_ : nullptr,
                              wpg ? &gln2_b_ : nullptr));

  // r1 = x + o
  Tensor g_x = g_r1;
  // o = att*Wo + bo
  Tensor g_att;
  mat_mul_bt(g_r1, wo_, g_att);
  if (wpg) {
    Tensor gwo;
    mat_mul_at(att, g_r1, gwo);
    gwo_.add_(gwo);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < dim_; ++j) gbo_[j] += g_r1.at(i, j);
  }
  // att = attn * v
  Tensor g_attn;
  mat_mul_bt(g_att, v, g_attn);
  Tensor g_v;
  mat_mul_at(attn, g_att, g_v);
  // softmax rows
  Tensor g_scores({t, t});
  for (int i = 0; i < t; ++i) {
    double dot = 0.0;
    for (int j = 0; j < t; ++j) dot += g_attn.at(i, j) * attn.at(i, j);
    for (int j = 0; j < t; ++j)
      g_scores.at(i, j) = attn.at(i, j) * (g_attn.at(i, j) - dot);
  }
  g_scores.scale_(scale);
  // scores = q*k^T
  Tensor g_q;
  mat_mul(g_scores, k, g_q);
  Tensor g_k;
  mat_mul_at(g_scores, q, g_k);
  // q/k/v = n1*W + b
  Tensor g_n1;
  mat_mul_bt(g_q, wq_, g_n1);
  {
    Tensor tmp;
    mat_mul_bt(g_k, wk_, tmp);
    g_n1.add_(tmp);
    mat_mul_bt(g_v, wv_, tmp);
    g_n1.add_(tmp);
  }
  if (wpg) {
    Tensor gw;
    mat_mul_at(n1, g_q, gw);
    gwq_.add_(gw);
    mat_mul_at(n1, g_k, gw);
    gwk_.add_(gw);
    mat_mul_at(n1, g_v, gw);
    gwv_.add_(gw);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < dim_; ++j) {
        gbq_[j] += g_q.at(i, j);
        gbk_[j] += g_k.at(i, j);
        gbv_[j] += g_v.at(i, j);
      }
  }
  // n1 = LN1(x)
  g_x.add_(token_ln_backward(g_n1, xhat1, is1, ln1_g_,
                             wpg ? &gln1_g_ : nullptr,
                             wpg ? &gln1_b_ : nullptr));
  return g_x;
}

std::unique_ptr<Layer> AttentionBlock::clone() const {
  return std::make_unique<AttentionBlock>(*this);
}

// -------------------------------------------------------------- Composite

Composite& Composite::add(LayerPtr l) {
  layers_.push_back(std::move(l));
  return *this;
}

Shape Composite::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Composite::forward(const Tensor& x, Ctx& ctx) const {
  ctx.children.resize(layers_.size());
  Tensor h = x;
  for (size_t i = 0; i < layers_.size(); ++i)
    h = layers_[i]->forward(h, ctx.children[i]);
  return h;
}

Tensor Composite::backward(const Tensor& g, const Ctx& ctx, bool wpg) {
  Tensor gh = g;
  for (size_t i = layers_.size(); i-- > 0;)
    gh = layers_[i]->backward(gh, ctx.children[i], wpg);
  return gh;
}

std::vector<Tensor*> Composite::params() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> Composite::grads() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* p : l->grads()) out.push_back(p);
  return out;
}

void Composite::init_params(Rng& rng) {
  for (auto& l : layers_) l->init_params(rng);
}

std::unique_ptr<Layer> Composite::clone() const {
  auto c = std::make_unique<Composite>(name_);
  for (const auto& l : layers_) c->add(l->clone());
  return c;
}

// ---------------------------------------------------------------- Network

Network::Network(const Network& o) {
  layers_.reserve(o.layers_.size());
  for (const auto& l : o.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& o) {
  if (this != &o) {
    layers_.clear();
    layers_.reserve(o.layers_.size());
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Network& Network::add(LayerPtr l) {
  layers_.push_back(std::move(l));
  return *this;
}

void Network::init_params(Rng& rng) {
  for (auto& l : layers_) l->init_params(rng);
}

Shape Network::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

Tensor Network::forward(const Tensor& x, Trace& tr) const {
  tr.layers.resize(layers_.size());
  Tensor h = x;
  for (size_t i = 0; i < layers_.size(); ++i)
    h = layers_[i]->forward(h, tr.layers[i]);
  return h;
}

Tensor Network::forward(const Tensor& x) const {
  Trace tr;
  return forward(x, tr);
}

Tensor Network::backward(const Tensor& gout, const Trace& tr,
                         bool with_param_grads) {
  Tensor g = gout;
  for (size_t i = layers_.size(); i-- > 0;)
    g = layers_[i]->backward(g, tr.layers[i], with_param_grads);
  return g;
}

void Network::zero_grads() {
  for (auto& l : layers_) l->zero_grads();
}

std::vector<Tensor*> Network::params() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> Network::grads() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* p : l->grads()) out.push_back(p);
  return out;
}

long Network::param_count() const {
  long n = 0;
  for (const auto& l : layers_) n += l->param_count();
  return n;
}

// ------------------------------------------------------------------ Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<Tensor*>& grads) {
  if (params.size() != grads.size())
    throw_input("adam: params/grads arity mismatch");
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (long j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

}  // namespace featinv::nn

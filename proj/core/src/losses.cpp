#include "featinv/losses.hpp"

#include <cmath>
#include <string>

#include "featinv/error.hpp"

namespace featinv::losses {

namespace {

constexpr double kLog2 = 0.69314718055994530941723212145818;

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw_input(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()) + " (no implicit broadcasting)");
}

void require_image(const Tensor& x) {
  if (x.ndim() != 3 || x.dim(1) < 1 || x.dim(2) < 1)
    throw_input("tv_loss expects a (C,M,N) image, got " +
                shape_str(x.shape()));
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_s < 0 || lambda_txt < 0 || lambda_c < 0)
    throw_config("loss weights must be non-negative");
  if (alpha < 1.0 || alpha > 2.0)
    throw_config("negentropy alpha must lie in [1,2], got " +
                 std::to_string(alpha));
}

double reconstruction_loss(const Tensor& z_hat, const Tensor& z_mid) {
  require_same_shape(z_hat, z_mid, "reconstruction_loss");
  const long n = z_hat.size();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d = z_hat[i] - z_mid[i];
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

Tensor reconstruction_loss_grad(const Tensor& z_hat, const Tensor& z_mid) {
  require_same_shape(z_hat, z_mid, "reconstruction_loss");
  Tensor g(z_hat.shape());
  const double inv = 2.0 / static_cast<double>(z_hat.size());
  for (long i = 0; i < z_hat.size(); ++i) g[i] = inv * (z_hat[i] - z_mid[i]);
  return g;
}

double tv_loss(const Tensor& x) {
  require_image(x);
  const int C = x.dim(0), M = x.dim(1), N = x.dim(2);
  double acc = 0.0;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < M; ++i) {
      const double* row = &x.at(c, i, 0);
      const double* below = i + 1 < M ? &x.at(c, i + 1, 0) : nullptr;
      for (int j = 0; j < N; ++j) {
        if (below) {
          const double d = below[j] - row[j];
          acc += d * d;
        }
        if (j + 1 < N) {
          const double d = row[j + 1] - row[j];
          acc += d * d;
        }
      }
    }
  }
  return acc / (static_cast<double>(M) * N);
}

Tensor tv_loss_grad(const Tensor& x) {
  require_image(x);
  const int C = x.dim(0), M = x.dim(1), N = x.dim(2);
  Tensor g(x.shape());
  const double inv = 1.0 / (static_cast<double>(M) * N);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) {
        if (i + 1 < M) {
          const double d = x.at(c, i + 1, j) - x.at(c, i, j);
          g.at(c, i + 1, j) += 2.0 * d * inv;
          g.at(c, i, j) -= 2.0 * d * inv;
        }
        if (j + 1 < N) {
          const double d = x.at(c, i, j + 1) - x.at(c, i, j);
          g.at(c, i, j + 1) += 2.0 * d * inv;
          g.at(c, i, j) -= 2.0 * d * inv;
        }
      }
  return g;
}

double stable_logcosh(double t) {
  const double a = std::fabs(t);
  return a + std::log1p(std::exp(-2.0 * a)) - kLog2;
}

double negentropy_loss(const Tensor& v, double alpha) {
  if (alpha < 1.0 || alpha > 2.0)
    throw_config("negentropy alpha must lie in [1,2]");
  if (!v.all_finite()) throw_input("negentropy_loss: non-finite latent");
  const long n = v.size();
  double acc = 0.0;
  // log cosh^2(t) = 2 logcosh(t)
  for (long i = 0; i < n; ++i) acc += 2.0 * stable_logcosh(alpha * v[i]);
  return -(acc / static_cast<double>(n)) / (alpha * alpha);
}

Tensor negentropy_loss_grad(const Tensor& v, double alpha) {
  if (alpha < 1.0 || alpha > 2.0)
    throw_config("negentropy alpha must lie in [1,2]");
  Tensor g(v.shape());
  const double scale = -2.0 / (alpha * static_cast<double>(v.size()));
  for (long i = 0; i < v.size(); ++i) g[i] = scale * std::tanh(alpha * v[i]);
  return g;
}

double temporal_loss(const Tensor& v_k, const Tensor& v_bar) {
  require_same_shape(v_k, v_bar, "temporal_loss");
  const long n = v_k.size();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d = v_k[i] - v_bar[i];
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

Tensor temporal_loss_grad(const Tensor& v_k, const Tensor& v_bar) {
  require_same_shape(v_k, v_bar, "temporal_loss");
  Tensor g(v_k.shape());
  const double inv = 2.0 / static_cast<double>(v_k.size());
  for (long i = 0; i < v_k.size(); ++i) g[i] = inv * (v_k[i] - v_bar[i]);
  return g;
}

LossBreakdown compose(double reconstruction, double tv, double negentropy,
                      double temporal, const LossWeights& w) {
  w.validate();
  const struct {
    const char* name;
    double value;
  } parts[] = {{"reconstruction", reconstruction},
               {"tv", tv},
               {"negentropy", negentropy},
               {"temporal", temporal}};
  for (const auto& p : parts)
    if (!std::isfinite(p.value))
      throw_numeric(std::string("compose: non-finite loss component '") +
                    p.name + "'");
  LossBreakdown b;
  b.reconstruction = reconstruction;
  b.tv = tv;
  b.negentropy = negentropy;
  b.temporal = temporal;
  b.total = reconstruction + w.lambda_s * tv + w.lambda_txt * negentropy +
            w.lambda_c * temporal;
  if (!std::isfinite(b.total))
    throw_numeric("compose: non-finite total loss");
  return b;
}

}  // namespace featinv::losses

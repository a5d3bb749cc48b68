#pragma once

#include "featinv/tensor.hpp"

namespace featinv::losses {

// Weights of the composite inversion objective. alpha shapes the
// negentropy term and must stay in [1,2].
struct LossWeights {
  double lambda_s = 1.0;    // total-variation weight
  double lambda_txt = 0.0;  // negentropy weight
  double lambda_c = 0.0;    // temporal-smoothing weight
  double alpha = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double tv = 0.0;
  double negentropy = 0.0;
  double temporal = 0.0;
};

// All l2-style losses use MEAN reduction over elements (not sum), so weight
// defaults transfer across feature shapes. This rescales the effective
// lambdas relative to a sum-reduced implementation; see README.
double reconstruction_loss(const Tensor& z_hat, const Tensor& z_mid);
Tensor reconstruction_loss_grad(const Tensor& z_hat, const Tensor& z_mid);

// (1/MN) * sum over valid forward-difference neighbors of squared jumps,
// summed over channels; constant images score 0.
double tv_loss(const Tensor& image);
Tensor tv_loss_grad(const Tensor& image);

// -mean_i[(1/alpha^2) * log cosh^2(alpha*v_i)], overflow-safe via
// logcosh(t) = |t| + log1p(exp(-2|t|)) - log 2.
double negentropy_loss(const Tensor& v, double alpha);
Tensor negentropy_loss_grad(const Tensor& v, double alpha);

// Mean-squared distance of one frame latent from the group mean latent.
double temporal_loss(const Tensor& v_k, const Tensor& v_bar);
Tensor temporal_loss_grad(const Tensor& v_k, const Tensor& v_bar);

double stable_logcosh(double t);

// Assembles the weighted total; throws a numeric error naming the first
// non-finite component.
LossBreakdown compose(double reconstruction, double tv, double negentropy,
                      double temporal, const LossWeights& w);

}  // namespace featinv::losses

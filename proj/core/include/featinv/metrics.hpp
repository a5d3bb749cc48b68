#pragma once

#include <functional>
#include <string>
#include <vector>

#include "featinv/tensor.hpp"

namespace featinv::metrics {

// Classifier used by the Inception Score; must return a probability
// simplex. The name is recorded in every report so scores computed with
// different classifiers are never compared silently.
struct Classifier {
  std::string name;
  std::function<std::vector<double>(const Tensor& image01)> predict;
};

struct PerImage {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::vector<PerImage> per_image;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double inception_score = 1.0;
  std::string classifier_name;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& json_text);
  std::string to_csv() const;
};

// 10*log10(255^2 / MSE) on [0,255] images; identical inputs cap at 100 dB.
inline constexpr double kPsnrCap = 100.0;
double psnr(const Tensor& original, const Tensor& recon);

// Windowed SSIM, 11x11 Gaussian window (sigma 1.5), standard constants,
// valid-window region, luma conversion for color inputs, clamped to [0,1].
double ssim(const Tensor& original, const Tensor& recon);

// exp(mean_x KL(p(y|x) || p(y))) over the batch marginal.
double inception_score(const std::vector<Tensor>& images01,
                       const Classifier& classifier);

// Pairs are matched by position; ids label report rows.
MetricsReport evaluate(const std::vector<Tensor>& originals255,
                       const std::vector<Tensor>& recons255,
                       const std::vector<Tensor>& recons01,
                       const Classifier& classifier,
                       const std::vector<std::string>& ids = {});

// [0,1] pixel tensor scaled to [0,255] for the PSNR/SSIM contracts.
Tensor to_255(const Tensor& image01);

}  // namespace featinv::metrics

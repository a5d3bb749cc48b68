#pragma once

#include <functional>
#include <string>
#include <vector>

#include "featinv/dataset.hpp"
#include "featinv/splitnet.hpp"

namespace featinv::defense {

struct DefenseConfig {
  double sigma = 0.0;
  std::string noise_kind = "gaussian";  // gaussian | laplace
  std::uint64_t seed = 0;

  void validate() const;
};

// Additive noise on the transmitted feature; sigma = 0 returns the input
// bit-exactly.
splitnet::FeatureTensor perturb_features(const splitnet::FeatureTensor& z,
                                         const DefenseConfig& d);

struct TradeoffRow {
  double sigma = 0.0;
  double task_accuracy = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::string status = "ok";  // "ok" | "error: <what>"
};

// Reconstruction attack on a (possibly perturbed) feature; returns the
// model-space reconstruction.
using AttackFn = std::function<Tensor(const splitnet::SplitModel&,
                                      const splitnet::FeatureTensor&)>;

struct SweepOptions {
  std::vector<std::uint64_t> accuracy_seeds = {1, 2, 3};
  int attack_images = 4;   // attacks run on the first N samples
  std::uint64_t noise_seed = 0x5eed;
};

// Per-sigma utility/privacy table: cloud-side task accuracy under noise vs
// attack reconstruction quality. Rows come back ordered by sigma; a failing
// attack marks its row and the sweep continues.
std::vector<TradeoffRow> tradeoff_sweep(const splitnet::SplitModel& sm,
                                        const std::vector<data::Sample>& samples,
                                        const AttackFn& attack,
                                        std::vector<double> sigmas,
                                        const SweepOptions& opts = {});

std::string tradeoff_csv(const std::vector<TradeoffRow>& rows);

}  // namespace featinv::defense

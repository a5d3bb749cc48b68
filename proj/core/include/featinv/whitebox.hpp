#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featinv/losses.hpp"
#include "featinv/priors.hpp"
#include "featinv/splitnet.hpp"

namespace featinv::whitebox {

struct LrStage {
  double at_fraction;  // stage activates once iter/I exceeds this
  double factor;
};

struct InversionConfig {
  int iterations = 1500;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::vector<LrStage> lr_schedule = {{1.0 / 3.0, 0.5}, {2.0 / 3.0, 0.5}};
  double init_std = 0.1;
  std::uint64_t seed = 0;
  losses::LossWeights weights;
  int sampling_steps = 20;

  void validate() const;
  std::uint64_t fingerprint() const;
};

double lr_at(const InversionConfig& cfg, int iter);  // iter is 1-based

struct AttackManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string prior;
  std::string model;
  int split_index = 0;
  std::string variant;
  std::string status = "ok";  // "ok" | "aborted: <reason>"

  std::string to_json() const;
};

struct AttackResult {
  std::vector<Tensor> images;  // model-space reconstructions (one per frame)
  std::vector<losses::LossBreakdown> trace;
  AttackManifest manifest;
  bool aborted = false;
  std::string abort_reason;
};

struct FrameGroup {
  std::vector<splitnet::FeatureTensor> frames;
  int size() const { return static_cast<int>(frames.size()); }
};

// Plain inversion: optimizes one latent against z_mid under
// reconstruction + TV; text and temporal terms are inactive.
AttackResult invert(const splitnet::SplitModel& sm,
                    const splitnet::FeatureTensor& z_mid,
                    const priors::GenerativePrior& prior,
                    const InversionConfig& cfg);

// Text-conditioned variant: decode sees e, and the negentropy term with
// weight lambda_txt is applied to the normalized latent.
AttackResult invert_with_text(const splitnet::SplitModel& sm,
                              const splitnet::FeatureTensor& z_mid,
                              const priors::GenerativePrior& prior,
                              const priors::TextEmbedding& e,
                              const InversionConfig& cfg);

// Joint multi-frame inversion with the temporal pull toward the running
// mean latent; returns one result per frame sharing a single manifest.
std::vector<AttackResult> invert_multiframe(const splitnet::SplitModel& sm,
                                            const FrameGroup& group,
                                            const priors::GenerativePrior& prior,
                                            const InversionConfig& cfg);

}  // namespace featinv::whitebox

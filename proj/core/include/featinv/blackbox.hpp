#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "featinv/losses.hpp"
#include "featinv/nn.hpp"
#include "featinv/priors.hpp"
#include "featinv/splitnet.hpp"

namespace featinv::blackbox {

struct QueryPair {
  Tensor x_model;  // regression target in model space
  Tensor y;        // intercepted feature F1(x)
  std::optional<std::string> text;
};

struct QueryDataset {
  std::vector<QueryPair> pairs;
  std::string split_tag = "train";

  Shape feature_shape() const;
  bool empty() const { return pairs.empty(); }
};

// Groups of K consecutive frames for the fused inverter.
struct GroupedQueryDataset {
  std::vector<std::vector<QueryPair>> groups;
  std::string split_tag = "train";
};

// Builds (x, F1(x)) pairs by querying the user-side network only. Inputs
// are pixel-space images; targets are their preprocessed model-space form.
QueryDataset collect_queries(const splitnet::SplitModel& sm,
                             const std::vector<Tensor>& pixel_images,
                             const std::vector<std::string>& texts = {},
                             const std::string& split_tag = "train");

// Same collection from model-space tensors (exact targets, no pixel
// quantization on the way in).
QueryDataset collect_queries_model(const splitnet::SplitModel& sm,
                                   const std::vector<Tensor>& model_images,
                                   const std::vector<std::string>& texts = {},
                                   const std::string& split_tag = "train");

struct BlockSpec {
  std::string kind;  // resize | conv | deconv | pointwise
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int out_h = 0, out_w = 0;    // resize only
  std::string norm = "layer";  // layer | none
  std::string act = "relu";    // relu | none
};

struct InverterNetSpec {
  Shape input_feature_shape;
  Shape latent_shape;
  int frame_count = 1;                 // 1 = no fusion layer
  std::vector<BlockSpec> fusion_plan;  // pointwise stage on stacked frames
  std::vector<BlockSpec> block_plan;   // weight-shared per-frame trunk
  bool output_normalize = true;
  long parameter_count = 0;

  std::string to_json() const;
  static InverterNetSpec from_json(const std::string& text);
};

// Derives a trunk plan from the shapes: spatial resize, strided conv /
// deconv blocks with normalization and rectifier activations, a pointwise
// projection to the latent channels, then output normalization. K > 1
// prepends a 1x1 fusion layer over the K stacked feature maps. When
// param_budget is given, channel widths are scaled until the realized
// parameter count is within +/-5% of it.
InverterNetSpec build_inverter(const Shape& feature_shape,
                               const Shape& latent_shape, int K = 1,
                               std::optional<long> param_budget = std::nullopt,
                               bool with_fusion = true);

struct TrainConfig {
  int epochs = 96;
  int batch_size = 128;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  losses::LossWeights weights;
  double holdout_fraction = 0.1;

  void validate() const;
};

struct TrainedInverter {
  InverterNetSpec spec;
  nn::Network fusion;  // empty unless frame_count > 1
  nn::Network trunk;
  std::string prior_name;
  std::shared_ptr<const priors::GenerativePrior> prior;
  std::string manifest_json;  // epochs, batch size, seed, losses

  // Single-feature inference: D(F_u(y)), deterministic.
  Tensor run(const Tensor& y) const;
  // Fused inference over a K-frame group.
  std::vector<Tensor> run_group(const std::vector<Tensor>& ys) const;
  // Normalized latent the prior would consume (diagnostics/tests).
  Tensor latent_for(const Tensor& y) const;
};

TrainedInverter train_inverter(const QueryDataset& ds,
                               const InverterNetSpec& spec,
                               std::shared_ptr<const priors::GenerativePrior> prior,
                               const TrainConfig& cfg);

TrainedInverter train_inverter_with_text(
    const QueryDataset& ds, const InverterNetSpec& spec,
    std::shared_ptr<const priors::GenerativePrior> prior,
    const priors::TextEncoder& encoder, const TrainConfig& cfg);

TrainedInverter train_inverter_multiframe(
    const GroupedQueryDataset& ds, const InverterNetSpec& spec,
    std::shared_ptr<const priors::GenerativePrior> prior,
    const TrainConfig& cfg);

Tensor run_inverter(const TrainedInverter& inv, const Tensor& y);

void save_inverter(const TrainedInverter& inv, const std::string& path);
TrainedInverter load_inverter(const std::string& path,
                              const priors::PriorSettings& prior_settings);

// Realizes the per-frame trunk (and fusion stage) as networks; exposed for
// parameter accounting and tests.
nn::Network realize_trunk(const InverterNetSpec& spec);
nn::Network realize_fusion(const InverterNetSpec& spec);

}  // namespace featinv::blackbox

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "featinv/nn.hpp"
#include "featinv/tensor.hpp"

namespace featinv::splitnet {

// Per-channel affine normalization applied to pixel-space inputs in [0,1].
struct Preprocessing {
  std::vector<double> mean;
  std::vector<double> std;

  Tensor apply(const Tensor& pixels) const;    // pixels -> model space
  Tensor invert(const Tensor& model) const;    // model space -> pixels
  static Preprocessing identity(int channels);
  static Preprocessing centered(int channels);  // mean .5, std .5
};

// A target network at block granularity. Valid split points sit between
// blocks; block 0 may be an explicit identity to expose a raw-input tap.
struct TargetModel {
  std::string name;
  Shape input_shape;  // (C,H,W), pixel space
  Preprocessing preprocessing;
  std::vector<nn::LayerPtr> layers;
  int num_classes = 0;

  int layer_count() const { return static_cast<int>(layers.size()); }
  Shape layer_output_shape(int upto) const;  // symbolic, after `upto` blocks
  Tensor forward_model(const Tensor& model_space) const;
  Tensor forward(const Tensor& pixels) const;  // preprocess + all blocks
  std::vector<double> predict_probs(const Tensor& pixels) const;
};

struct FeatureTensor {
  Tensor values;
  int source_layer = 0;  // number of blocks applied
};

// Immutable view of a TargetModel partitioned at split_index: the user side
// runs blocks [0, split), the cloud side the rest.
class SplitModel {
 public:
  SplitModel(std::shared_ptr<TargetModel> base, int split_index);

  const TargetModel& base() const { return *base_; }
  int split_index() const { return split_; }
  Shape feature_shape() const;

  // user side, model-space input (used by attack engines)
  Tensor f1(const Tensor& model_space) const;
  Tensor f1(const Tensor& model_space, std::vector<nn::Ctx>& trace) const;
  Tensor f1_backward(const Tensor& g_feature,
                     const std::vector<nn::Ctx>& trace) const;

  // cloud side
  Tensor f2(const Tensor& feature) const;

  // full pipeline from pixels (preprocessing included)
  FeatureTensor extract(const Tensor& pixels) const;

 private:
  std::shared_ptr<TargetModel> base_;
  int split_;
};

SplitModel split(std::shared_ptr<TargetModel> model, int split_index);
FeatureTensor extract_features(const SplitModel& sm, const Tensor& pixels);

// Desk-scale model zoo. Weights are seeded at construction; classifier
// weights may be replaced afterwards from a trained blob.
std::shared_ptr<TargetModel> make_toy_cnn(int blocks = 3, int num_classes = 4,
                                          std::uint64_t seed = 0x7001);
std::shared_ptr<TargetModel> make_toy_cnn_idprefix(
    int blocks = 3, int num_classes = 4, std::uint64_t seed = 0x7001);
std::shared_ptr<TargetModel> make_toy_attention(int blocks = 4,
                                                int num_classes = 4,
                                                std::uint64_t seed = 0x7002);

// Registry keyed by name: toy_cnn | toy_cnn5 | toy_cnn_idprefix | toy_vit.
// weights_path, when non-empty, must point to a parameter blob written by
// save_model_weights.
std::shared_ptr<TargetModel> create_model(const std::string& name,
                                          const std::string& weights_path = "");
std::vector<std::string> registered_models();

void save_model_weights(const TargetModel& model, const std::string& path);
void load_model_weights(TargetModel& model, const std::string& path);

}  // namespace featinv::splitnet

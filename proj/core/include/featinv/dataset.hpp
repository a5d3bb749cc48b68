#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featinv/splitnet.hpp"
#include "featinv/tensor.hpp"

namespace featinv::data {

// Procedurally generated 3x32x32 desk-scale dataset: four pattern classes
// with randomized colors, frequencies and placements. Each sample's
// model-space tensor is standardized per image (zero mean, unit population
// std), which keeps attack targets reachable through latent normalization;
// the pixel view is the clamped de-normalization of that tensor.
struct Sample {
  Tensor pixels;  // (3,32,32) in [0,1]
  Tensor model;   // standardized model-space tensor
  int label = 0;
};

inline constexpr int kNumClasses = 4;
const std::vector<std::string>& class_names();

Sample make_sample(std::uint64_t seed, const splitnet::Preprocessing& pre,
                   int label = -1, double dx = 0.0, double dy = 0.0);

std::vector<Sample> generate(int count, std::uint64_t seed,
                             const splitnet::Preprocessing& pre);

// K views of one underlying pattern translated by shift_px per frame along
// both axes; mimics consecutive frames of a slow pan.
std::vector<Sample> frame_group(std::uint64_t seed, int k, double shift_px,
                                const splitnet::Preprocessing& pre,
                                int label = -1);

// Pixel view of a model-space tensor under the given preprocessing.
Tensor to_pixels(const Tensor& model, const splitnet::Preprocessing& pre);

}  // namespace featinv::data

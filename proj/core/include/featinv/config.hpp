#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featinv/blackbox.hpp"
#include "featinv/whitebox.hpp"

namespace featinv::cli {

// Declarative run configuration. Parsed from a single TOML file; every key
// is validated against the schema below and unknown keys are rejected with
// their full path. CLI flags override keys one-for-one via apply_override.
struct RunConfig {
  struct Run {
    std::string variant = "whitebox";
    std::string output_dir = "out";
    std::uint64_t seed = 0;
  } run;

  struct Model {
    std::string name = "toy_cnn";
    int split_index = 1;
    std::string weights_path;
  } model;

  struct Prior {
    std::string name = "identity";
    std::string weights_path;
    int sampling_steps = 20;
    double guidance_scale = 1.0;
    std::string scheduler = "linear";
  } prior;

  struct Attack {
    int iterations = 1500;
    double learning_rate = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double init_std = 0.1;
    double lambda_s = 1.0;
    double lambda_txt = 0.0;
    double lambda_c = 0.0;
    double alpha = 1.0;
    std::string text;
    int frames = 1;
    double frame_shift = 2.0;
    std::vector<double> lr_decay_points = {1.0 / 3.0, 2.0 / 3.0};
    double lr_decay_factor = 0.5;
  } attack;

  struct Data {
    std::string source = "synthetic";  // synthetic | dir
    int count = 4;
    std::uint64_t seed = 1234;
    std::string dir;          // PNG directory when source = dir
    std::string dataset_dir;  // collected query dataset
  } data;

  struct Train {
    int epochs = 96;
    int batch_size = 128;
    double learning_rate = 0.1;
    int train_size = 4096;
    int test_size = 1024;
    double holdout_fraction = 0.1;
    long param_budget = 0;  // 0 = unconstrained
    bool fusion = true;
    std::string inverter_path;
  } train;

  struct Defense {
    std::vector<double> sigmas = {0.0, 0.1, 0.5, 1.0};
    std::string noise = "gaussian";
  } defense;

  void validate() const;
  std::uint64_t fingerprint() const;  // excludes output/filesystem paths

  whitebox::InversionConfig inversion_config() const;
  blackbox::TrainConfig train_config() const;

  std::string to_toml() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& toml_text,
                            const std::string& origin = "<inline>");

// "section.key=value" override; value text is parsed per the key's type.
void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

const std::vector<std::string>& known_variants();

}  // namespace featinv::cli

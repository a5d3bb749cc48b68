#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "featinv/nn.hpp"
#include "featinv/tensor.hpp"

namespace featinv::priors {

struct LatentVariable {
  Tensor values;
  bool requires_grad = true;
};

struct TextEmbedding {
  Tensor values;
  std::optional<std::string> source_text;

  bool is_zero() const;
};

// Deterministic hash-based text embedding; a stand-in for a pretrained
// encoder with the contract the attack engines need: same canonical text,
// same vector. Empty text is the "no prompt" zero sentinel.
class TextEncoder {
 public:
  explicit TextEncoder(int dim = 32) : dim_(dim) {}
  int dim() const { return dim_; }
  TextEmbedding embed(const std::string& text) const;
  static std::string canonicalize(const std::string& text);

 private:
  int dim_;
};

TextEmbedding embed_text(const TextEncoder& encoder, const std::string& t);

// Standardize to zero mean / unit population std. Throws a numeric
// "degenerate latent" error when the population std is <= 1e-12.
Tensor normalize(const Tensor& v);
// Grad wrt v given grad wrt normalize(v); recomputes the statistics.
Tensor normalize_backward(const Tensor& v, const Tensor& g_vn);
LatentVariable normalize_latent(const LatentVariable& v);

// Opaque per-decode state handed back to decode_backward.
struct DecodeTrace {
  nn::Trace net;
  std::vector<Tensor> extra;
};

class GenerativePrior {
 public:
  virtual ~GenerativePrior() = default;

  virtual std::string name() const = 0;
  virtual Shape latent_shape() const = 0;
  virtual Shape output_shape() const = 0;
  virtual bool supports_text() const { return false; }
  virtual int sampling_steps() const { return 1; }
  // Declared output range; (-inf, inf) for unconstrained decoders.
  virtual std::pair<double, double> output_range() const = 0;

  virtual Tensor decode(const Tensor& v_n, const TextEmbedding& e,
                        DecodeTrace& tr) const = 0;
  // Grad wrt v_n of a scalar objective with grad g_image at the output.
  virtual Tensor decode_backward(const Tensor& g_image,
                                 const DecodeTrace& tr) const = 0;

  Tensor decode(const Tensor& v_n, const TextEmbedding& e) const;

 protected:
  // Common precondition checks: latent shape, text capability.
  void check_decode_inputs(const Tensor& v_n, const TextEmbedding& e) const;
};

// Latent reshaped to the image directly; turns latent optimization into
// plain pixel optimization and is used to validate engine plumbing.
class IdentityPrior final : public GenerativePrior {
 public:
  using GenerativePrior::decode;

  explicit IdentityPrior(Shape image_shape);

  std::string name() const override { return "identity"; }
  Shape latent_shape() const override { return shape_; }
  Shape output_shape() const override { return shape_; }
  std::pair<double, double> output_range() const override;
  Tensor decode(const Tensor& v_n, const TextEmbedding& e,
                DecodeTrace& tr) const override;
  Tensor decode_backward(const Tensor& g, const DecodeTrace&) const override;

 private:
  Shape shape_;
};

// Small convolutional decoder trained as an autoencoder on the synthetic
// desk dataset; optionally conditioned on a text embedding added to the
// latent input. Weights live in a versioned archive.
class ToyDecoderPrior final : public GenerativePrior {
 public:
  using GenerativePrior::decode;

  static ToyDecoderPrior make_untrained(std::uint64_t seed,
                                        int text_dim = 32);
  static ToyDecoderPrior load(const std::string& archive_path);

  std::string name() const override { return "toy_decoder"; }
  Shape latent_shape() const override { return {4, 8, 8}; }
  Shape output_shape() const override { return {3, 32, 32}; }
  bool supports_text() const override { return true; }
  std::pair<double, double> output_range() const override { return {-3, 3}; }

  Tensor decode(const Tensor& v_n, const TextEmbedding& e,
                DecodeTrace& tr) const override;
  Tensor decode_backward(const Tensor& g, const DecodeTrace& tr) const override;

  void save(const std::string& archive_path,
            const std::string& manifest_json) const;
  std::string training_manifest() const { return manifest_json_; }

  nn::Network& decoder_net() { return net_; }
  nn::Network& conditioner() { return cond_; }
  int text_dim() const { return text_dim_; }

 private:
  ToyDecoderPrior() = default;
  nn::Network net_;   // latent (4,8,8) -> image (3,32,32)
  nn::Network cond_;  // text embedding -> latent-shaped additive bias
  int text_dim_ = 32;
  std::string manifest_json_ = "{}";
};

// Matching encoder, used for autoencoder training and round-trip tests.
class ToyEncoder {
 public:
  static ToyEncoder make(std::uint64_t seed);
  Tensor encode(const Tensor& image) const;
  nn::Network& net() { return net_; }

 private:
  nn::Network net_;
};

// Interface adapter for an external latent-diffusion decoder. Runs the
// configured number of reverse steps; the bundled backend is a linear
// contraction placeholder so that plumbing (step counts, schedules,
// determinism) is exercisable without external weights. Loading real
// weights requires an external backend and reports a capability error.
class LdmAdapter final : public GenerativePrior {
 public:
  using GenerativePrior::decode;

  struct Settings {
    std::string weights_path;
    int sampling_steps = 20;
    double guidance_scale = 1.0;   // opaque pass-through
    std::string scheduler = "linear";
    Shape image_shape = {3, 32, 32};
  };

  explicit LdmAdapter(Settings s);

  std::string name() const override { return "ldm_adapter"; }
  Shape latent_shape() const override { return settings_.image_shape; }
  Shape output_shape() const override { return settings_.image_shape; }
  bool supports_text() const override { return true; }
  int sampling_steps() const override { return settings_.sampling_steps; }
  std::pair<double, double> output_range() const override { return {-1, 1}; }

  Tensor decode(const Tensor& v_n, const TextEmbedding& e,
                DecodeTrace& tr) const override;
  Tensor decode_backward(const Tensor& g, const DecodeTrace& tr) const override;

  // Test/diagnostic hook invoked once per reverse step with its index.
  void set_step_observer(std::function<void(int)> obs);

  const Settings& settings() const { return settings_; }

 private:
  Settings settings_;
  std::function<void(int)> observer_;
  std::vector<double> step_gains_;  // linear schedule, one gain per step
};

struct PriorSettings {
  std::string weights_path;
  int sampling_steps = 20;
  double guidance_scale = 1.0;
  std::string scheduler = "linear";
  Shape image_shape = {3, 32, 32};
  int text_dim = 32;
};

// Registry: identity | toy_decoder | ldm_adapter.
std::unique_ptr<GenerativePrior> create_prior(const std::string& name,
                                              const PriorSettings& settings);

// Default location of the shipped toy-decoder weights; honors the
// FEATINV_ASSETS environment variable.
std::string default_asset_path(const std::string& filename);

}  // namespace featinv::priors

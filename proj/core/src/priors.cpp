#include "featinv/priors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"
#include "featinv/serialize.hpp"

namespace featinv::priors {

using nlohmann::json;

bool TextEmbedding::is_zero() const {
  for (long i = 0; i < values.size(); ++i)
    if (values[i] != 0.0) return false;
  return true;
}

std::string TextEncoder::canonicalize(const std::string& text) {
  std::string out;
  bool in_space = true;  // swallow leading whitespace
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

TextEmbedding TextEncoder::embed(const std::string& text) const {
  TextEmbedding e;
  e.source_text = text;
  e.values = Tensor({dim_});
  const std::string canon = canonicalize(text);
  if (canon.empty()) return e;  // zero sentinel

  int tokens = 0;
  size_t pos = 0;
  while (pos < canon.size()) {
    size_t end = canon.find(' ', pos);
    if (end == std::string::npos) end = canon.size();
    const std::string tok = canon.substr(pos, end - pos);
    Rng rng(fnv1a64(tok.data(), tok.size()));
    for (int i = 0; i < dim_; ++i) e.values[i] += rng.normal();
    ++tokens;
    pos = end + 1;
  }
  // unit-norm so multi-word prompts stay comparable in scale
  double nrm = std::sqrt(e.values.dot(e.values));
  if (nrm > 0) e.values.scale_(1.0 / nrm);
  (void)tokens;
  return e;
}

TextEmbedding embed_text(const TextEncoder& encoder, const std::string& t) {
  return encoder.embed(t);
}

Tensor normalize(const Tensor& v) {
  const double sigma = std::sqrt(v.var_pop());
  if (!(sigma > 1e-12))
    throw DegenerateLatentError("degenerate latent: population std " +
                                std::to_string(sigma) +
                                " is too small to normalize");
  const double mu = v.mean();
  Tensor out(v.shape());
  for (long i = 0; i < v.size(); ++i) out[i] = (v[i] - mu) / sigma;
  return out;
}

Tensor normalize_backward(const Tensor& v, const Tensor& g_vn) {
  if (!v.same_shape(g_vn)) throw_input("normalize_backward: shape mismatch");
  const double sigma = std::sqrt(v.var_pop());
  if (!(sigma > 1e-12))
    throw DegenerateLatentError("degenerate latent in backward pass");
  const double mu = v.mean();
  const long n = v.size();
  double m_g = 0.0, m_gx = 0.0;
  for (long i = 0; i < n; ++i) {
    const double xh = (v[i] - mu) / sigma;
    m_g += g_vn[i];
    m_gx += g_vn[i] * xh;
  }
  m_g /= static_cast<double>(n);
  m_gx /= static_cast<double>(n);
  Tensor g(v.shape());
  for (long i = 0; i < n; ++i) {
    const double xh = (v[i] - mu) / sigma;
    g[i] = (g_vn[i] - m_g - xh * m_gx) / sigma;
  }
  return g;
}

LatentVariable normalize_latent(const LatentVariable& v) {
  LatentVariable out;
  out.values = normalize(v.values);
  out.requires_grad = v.requires_grad;
  return out;
}

Tensor GenerativePrior::decode(const Tensor& v_n,
                               const TextEmbedding& e) const {
  DecodeTrace tr;
  return decode(v_n, e, tr);
}

void GenerativePrior::check_decode_inputs(const Tensor& v_n,
                                          const TextEmbedding& e) const {
  if (!shape_eq(v_n.shape(), latent_shape()))
    throw_input("latent shape " + shape_str(v_n.shape()) +
                " does not match prior latent shape " +
                shape_str(latent_shape()));
  if (!supports_text() && !e.values.empty() && !e.is_zero())
    throw_capability("prior '" + name() +
                     "' does not support text conditioning");
}

// ----------------------------------------------------------- IdentityPrior

IdentityPrior::IdentityPrior(Shape image_shape) : shape_(std::move(image_shape)) {}

std::pair<double, double> IdentityPrior::output_range() const {
  const double inf = std::numeric_limits<double>::infinity();
  return {-inf, inf};
}

Tensor IdentityPrior::decode(const Tensor& v_n, const TextEmbedding& e,
                             DecodeTrace&) const {
  check_decode_inputs(v_n, e);
  return v_n.reshaped(shape_);
}

Tensor IdentityPrior::decode_backward(const Tensor& g,
                                      const DecodeTrace&) const {
  return g.reshaped(shape_);
}

// --------------------------------------------------------- ToyDecoderPrior

ToyDecoderPrior ToyDecoderPrior::make_untrained(std::uint64_t seed,
                                                int text_dim) {
  ToyDecoderPrior p;
  p.text_dim_ = text_dim;
  p.net_.add(std::make_unique<nn::ConvTranspose2d>(4, 32, 4, 2, 1));
  p.net_.add(std::make_unique<nn::LayerNormAll>(32));
  p.net_.add(std::make_unique<nn::ReLU>());
  p.net_.add(std::make_unique<nn::ConvTranspose2d>(32, 16, 4, 2, 1));
  p.net_.add(std::make_unique<nn::LayerNormAll>(16));
  p.net_.add(std::make_unique<nn::ReLU>());
  p.net_.add(std::make_unique<nn::Conv2d>(16, 3, 3, 1, 1));
  p.net_.add(std::make_unique<nn::Tanh>());
  p.net_.add(std::make_unique<nn::Scale>(3.0));
  p.cond_.add(std::make_unique<nn::Linear>(text_dim, 4 * 8 * 8));
  Rng rng(Rng::derive(seed, "toy_decoder"));
  p.net_.init_params(rng);
  p.cond_.init_params(rng);
  return p;
}

Tensor ToyDecoderPrior::decode(const Tensor& v_n, const TextEmbedding& e,
                               DecodeTrace& tr) const {
  check_decode_inputs(v_n, e);
  Tensor input = v_n;
  if (!e.values.empty() && !e.is_zero()) {
    if (e.values.size() != text_dim_)
      throw_input("text embedding dim " + std::to_string(e.values.size()) +
                  " does not match decoder conditioner dim " +
                  std::to_string(text_dim_));
    const Tensor bias = cond_.forward(e.values);
    input.add_(bias.reshaped(latent_shape()));
  }
  return net_.forward(input, tr.net);
}

Tensor ToyDecoderPrior::decode_backward(const Tensor& g,
                                        const DecodeTrace& tr) const {
  // conditioning is additive, so dL/dv_n is the grad at the net input
  return const_cast<nn::Network&>(net_).backward(g, tr.net, false);
}

void ToyDecoderPrior::save(const std::string& archive_path,
                           const std::string& manifest_json) const {
  std::vector<io::NamedTensor> ts;
  int idx = 0;
  auto& self = const_cast<ToyDecoderPrior&>(*this);
  for (Tensor* p : self.net_.params())
    ts.push_back({"dec" + std::to_string(idx++), *p});
  idx = 0;
  for (Tensor* p : self.cond_.params())
    ts.push_back({"cond" + std::to_string(idx++), *p});
  json meta;
  meta["kind"] = "toy_decoder";
  meta["format_version"] = 1;
  meta["text_dim"] = text_dim_;
  meta["manifest"] = json::parse(manifest_json.empty() ? "{}" : manifest_json);
  io::write_archive(archive_path, meta.dump(), ts);
}

ToyDecoderPrior ToyDecoderPrior::load(const std::string& archive_path) {
  const io::ArchiveContent ar = io::read_archive(archive_path);
  const json meta = json::parse(ar.meta_json);
  if (meta.value("kind", "") != "toy_decoder")
    throw_input(archive_path + " is not a toy_decoder archive");
  ToyDecoderPrior p = make_untrained(0, meta.value("text_dim", 32));
  p.manifest_json_ = meta.value("manifest", json::object()).dump();
  std::vector<Tensor*> params;
  for (Tensor* t : p.net_.params()) params.push_back(t);
  for (Tensor* t : p.cond_.params()) params.push_back(t);
  if (params.size() != ar.tensors.size())
    throw_input("toy_decoder archive tensor count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!shape_eq(params[i]->shape(), ar.tensors[i].value.shape()))
      throw_input("toy_decoder archive shape mismatch at tensor " +
                  std::to_string(i));
    *params[i] = ar.tensors[i].value;
  }
  return p;
}

ToyEncoder ToyEncoder::make(std::uint64_t seed) {
  ToyEncoder e;
  e.net_.add(std::make_unique<nn::Conv2d>(3, 16, 3, 2, 1));
  e.net_.add(std::make_unique<nn::ReLU>());
  e.net_.add(std::make_unique<nn::Conv2d>(16, 32, 3, 2, 1));
  e.net_.add(std::make_unique<nn::ReLU>());
  e.net_.add(std::make_unique<nn::Conv2d>(32, 4, 3, 1, 1));
  e.net_.add(std::make_unique<nn::Standardize>());
  Rng rng(Rng::derive(seed, "toy_encoder"));
  e.net_.init_params(rng);
  return e;
}

Tensor ToyEncoder::encode(const Tensor& image) const {
  return net_.forward(image);
}

// -------------------------------------------------------------- LdmAdapter

LdmAdapter::LdmAdapter(Settings s) : settings_(std::move(s)) {
  if (settings_.sampling_steps < 1)
    throw_config("ldm_adapter sampling_steps must be >= 1");
  if (settings_.scheduler != "linear")
    throw_config("ldm_adapter scheduler '" + settings_.scheduler +
                 "' is not recognized (supported: linear)");
  if (!settings_.weights_path.empty())
    throw_capability(
        "ldm_adapter: external diffusion weights require an external "
        "backend; the bundled placeholder runs without weights_path");
  // Linear schedule of per-step contraction gains over (0, 0.5].
  step_gains_.resize(static_cast<size_t>(settings_.sampling_steps));
  const int n = settings_.sampling_steps;
  for (int t = 0; t < n; ++t)
    step_gains_[static_cast<size_t>(t)] = 0.5 * (t + 1) / n / n;
}

void LdmAdapter::set_step_observer(std::function<void(int)> obs) {
  observer_ = std::move(obs);
}

Tensor LdmAdapter::decode(const Tensor& v_n, const TextEmbedding& e,
                          DecodeTrace& tr) const {
  check_decode_inputs(v_n, e);
  Tensor state = v_n;
  const double mu = v_n.mean();
  for (int t = 0; t < settings_.sampling_steps; ++t) {
    if (observer_) observer_(t);
    const double gdt = step_gains_[static_cast<size_t>(t)];
    // contraction toward the latent mean; stands in for one reverse step
    for (long i = 0; i < state.size(); ++i)
      state[i] = state[i] - gdt * (state[i] - mu);
  }
  tr.extra = {Tensor::from({1}, {mu})};
  return state.reshaped(output_shape());
}

Tensor LdmAdapter::decode_backward(const Tensor& g,
                                   const DecodeTrace&) const {
  // Each step is x <- (1-gdt) x + gdt*mu with mu = mean(v_n); adjoint of the
  // composite linear map.
  double scale = 1.0, mu_coeff = 0.0;
  for (int t = 0; t < settings_.sampling_steps; ++t) {
    const double gdt = step_gains_[static_cast<size_t>(t)];
    mu_coeff = mu_coeff * (1.0 - gdt) + gdt;
    scale *= (1.0 - gdt);
  }
  Tensor gx = g.reshaped(latent_shape());
  const double mg = gx.mean() * mu_coeff;
  Tensor out(gx.shape());
  for (long i = 0; i < gx.size(); ++i) out[i] = scale * gx[i] + mg;
  return out;
}

// ---------------------------------------------------------------- registry

std::string default_asset_path(const std::string& filename) {
  if (const char* env = std::getenv("FEATINV_ASSETS"))
    return (std::filesystem::path(env) / filename).string();
#ifdef FEATINV_ASSET_DIR
  return (std::filesystem::path(FEATINV_ASSET_DIR) / filename).string();
#else
  return (std::filesystem::path("assets") / filename).string();
#endif
}

std::unique_ptr<GenerativePrior> create_prior(const std::string& name,
                                              const PriorSettings& settings) {
  if (name == "identity")
    return std::make_unique<IdentityPrior>(settings.image_shape);
  if (name == "toy_decoder") {
    const std::string path = settings.weights_path.empty()
                                 ? default_asset_path("toy_decoder.finv")
                                 : settings.weights_path;
    return std::make_unique<ToyDecoderPrior>(ToyDecoderPrior::load(path));
  }
  if (name == "ldm_adapter") {
    LdmAdapter::Settings ls;
    ls.weights_path = settings.weights_path;
    ls.sampling_steps = settings.sampling_steps;
    ls.guidance_scale = settings.guidance_scale;
    ls.scheduler = settings.scheduler;
    ls.image_shape = settings.image_shape;
    return std::make_unique<LdmAdapter>(ls);
  }
  throw_config("unknown prior '" + name +
               "'; registered priors: identity, toy_decoder, ldm_adapter");
}

}  // namespace featinv::priors

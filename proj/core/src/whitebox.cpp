#include "featinv/whitebox.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"
#include "featinv/nn.hpp"

namespace featinv::whitebox {

using nlohmann::json;

void InversionConfig::validate() const {
  if (iterations < 1)
    throw_config("iterations must be >= 1, got " + std::to_string(iterations));
  if (!(learning_rate > 0)) throw_config("learning_rate must be positive");
  if (!(init_std > 0)) throw_config("init_std must be positive");
  if (sampling_steps < 1) throw_config("sampling_steps must be >= 1");
  weights.validate();
  for (const auto& st : lr_schedule)
    if (st.at_fraction < 0 || st.at_fraction > 1 || !(st.factor > 0))
      throw_config("invalid lr_schedule stage");
}

std::uint64_t InversionConfig::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << iterations << "|" << learning_rate << "|" << beta1 << "|" << beta2
     << "|" << init_std << "|" << seed << "|" << sampling_steps << "|"
     << weights.lambda_s << "|" << weights.lambda_txt << "|"
     << weights.lambda_c << "|" << weights.alpha;
  for (const auto& st : lr_schedule)
    os << "|" << st.at_fraction << ":" << st.factor;
  const std::string s = os.str();
  return fnv1a64(s.data(), s.size());
}

double lr_at(const InversionConfig& cfg, int iter) {
  double lr = cfg.learning_rate;
  for (const auto& st : cfg.lr_schedule)
    if (static_cast<double>(iter) >
        st.at_fraction * static_cast<double>(cfg.iterations))
      lr *= st.factor;
  return lr;
}

std::string AttackManifest::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["prior"] = prior;
  j["model"] = model;
  j["split_index"] = split_index;
  j["variant"] = variant;
  j["status"] = status;
  return j.dump();
}

namespace {

struct EngineSetup {
  const splitnet::SplitModel& sm;
  const priors::GenerativePrior& prior;
  const InversionConfig& cfg;
  priors::TextEmbedding text;
  double lambda_txt = 0.0;  // active term weights for this variant
  double lambda_c = 0.0;
  std::string variant;
};

void check_frames(const EngineSetup& s,
                  const std::vector<splitnet::FeatureTensor>& frames) {
  if (frames.empty()) throw_input("no feature frames to invert");
  const Shape want = s.sm.feature_shape();
  for (const auto& f : frames)
    if (!shape_eq(f.values.shape(), want))
      throw_input("feature shape " + shape_str(f.values.shape()) +
                  " does not match split output " + shape_str(want));
  if (!shape_eq(s.prior.output_shape(), s.sm.base().input_shape))
    throw_input("prior output " + shape_str(s.prior.output_shape()) +
                " does not feed model input " +
                shape_str(s.sm.base().input_shape));
  if (!s.text.values.empty() && !s.text.is_zero() && !s.prior.supports_text())
    throw_capability("prior '" + s.prior.name() +
                     "' cannot run a text-conditioned attack");
}

std::vector<AttackResult> run_engine(
    const EngineSetup& s, const std::vector<splitnet::FeatureTensor>& frames) {
  s.cfg.validate();
  check_frames(s, frames);

  const int K = static_cast<int>(frames.size());
  const long latent_n = shape_numel(s.prior.latent_shape());

  Rng init_rng(Rng::derive(s.cfg.seed, "latent_init"));
  std::vector<Tensor> v(static_cast<size_t>(K));
  for (auto& t : v) {
    t = Tensor(s.prior.latent_shape());
    init_rng.fill_normal(t, 0.0, s.cfg.init_std);
  }

  nn::Adam adam(s.cfg.learning_rate, s.cfg.beta1, s.cfg.beta2);
  std::vector<Tensor> grads(static_cast<size_t>(K));
  std::vector<Tensor*> vp, gp;
  for (int k = 0; k < K; ++k) {
    grads[static_cast<size_t>(k)] = Tensor(s.prior.latent_shape());
    vp.push_back(&v[static_cast<size_t>(k)]);
    gp.push_back(&grads[static_cast<size_t>(k)]);
  }

  std::vector<std::vector<losses::LossBreakdown>> traces(
      static_cast<size_t>(K));
  std::vector<Tensor> last_images(static_cast<size_t>(K));
  bool aborted = false;
  std::string abort_reason;

  for (int iter = 1; iter <= s.cfg.iterations && !aborted; ++iter) {
    adam.set_lr(lr_at(s.cfg, iter));

    Tensor v_bar;
    if (K > 1) {
      v_bar = Tensor(s.prior.latent_shape());
      for (const Tensor& t : v) v_bar.add_(t);
      v_bar.scale_(1.0 / K);
    }

    std::vector<losses::LossBreakdown> iter_bds;
    iter_bds.reserve(static_cast<size_t>(K));
    try {
      for (int k = 0; k < K; ++k) {
        const Tensor& vk = v[static_cast<size_t>(k)];
        const Tensor v_n = priors::normalize(vk);

        priors::DecodeTrace dtrace;
        const Tensor img = s.prior.decode(v_n, s.text, dtrace);

        std::vector<nn::Ctx> ftrace;
        const Tensor feat = s.sm.f1(img, ftrace);

        const double l_re =
            losses::reconstruction_loss(feat, frames[static_cast<size_t>(k)].values);
        const double l_tv = losses::tv_loss(img);
        const double l_ng = losses::negentropy_loss(v_n, s.cfg.weights.alpha);
        const double l_c = K > 1 ? losses::temporal_loss(vk, v_bar) : 0.0;

        losses::LossWeights active = s.cfg.weights;
        active.lambda_txt = s.lambda_txt;
        active.lambda_c = s.lambda_c;
        losses::LossBreakdown bd;
        try {
          bd = losses::compose(l_re, l_tv, l_ng, l_c, active);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::Numeric)
            throw_numeric(std::string(e.what()) + " at iteration " +
                          std::to_string(iter));
          throw;
        }
        iter_bds.push_back(bd);

        // backward chain: feature -> image -> normalized latent -> latent
        Tensor g_img = s.sm.f1_backward(
            losses::reconstruction_loss_grad(feat,
                                             frames[static_cast<size_t>(k)].values),
            ftrace);
        g_img.add_(losses::tv_loss_grad(img), active.lambda_s);

        Tensor g_vn = s.prior.decode_backward(g_img, dtrace);
        if (active.lambda_txt != 0.0)
          g_vn.add_(losses::negentropy_loss_grad(v_n, active.alpha),
                    active.lambda_txt);

        Tensor g_v = priors::normalize_backward(vk, g_vn);
        if (K > 1 && active.lambda_c != 0.0)
          g_v.add_(losses::temporal_loss_grad(vk, v_bar), active.lambda_c);

        grads[static_cast<size_t>(k)] = std::move(g_v);
        last_images[static_cast<size_t>(k)] = img;
      }
    } catch (const DegenerateLatentError& e) {
      aborted = true;
      abort_reason = std::string(e.what()) + " at iteration " +
                     std::to_string(iter);
      break;
    }

    for (int k = 0; k < K; ++k)
      traces[static_cast<size_t>(k)].push_back(iter_bds[static_cast<size_t>(k)]);
    adam.step(vp, gp);
  }

  AttackManifest manifest;
  manifest.config_hash = s.cfg.fingerprint();
  manifest.seed = s.cfg.seed;
  manifest.prior = s.prior.name();
  manifest.model = s.sm.base().name;
  manifest.split_index = s.sm.split_index();
  manifest.variant = s.variant;
  manifest.status = aborted ? "aborted: " + abort_reason : "ok";

  std::vector<AttackResult> results(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    AttackResult& r = results[static_cast<size_t>(k)];
    r.manifest = manifest;
    r.trace = std::move(traces[static_cast<size_t>(k)]);
    r.aborted = aborted;
    r.abort_reason = abort_reason;
    if (aborted) {
      // keep the last state that still decoded
      if (!last_images[static_cast<size_t>(k)].empty())
        r.images = {last_images[static_cast<size_t>(k)]};
    } else {
      const Tensor v_n = priors::normalize(v[static_cast<size_t>(k)]);
      r.images = {s.prior.decode(v_n, s.text)};
    }
  }
  (void)latent_n;
  return results;
}

}  // namespace

AttackResult invert(const splitnet::SplitModel& sm,
                    const splitnet::FeatureTensor& z_mid,
                    const priors::GenerativePrior& prior,
                    const InversionConfig& cfg) {
  EngineSetup s{sm, prior, cfg, priors::TextEmbedding{}, 0.0, 0.0, "whitebox"};
  return std::move(run_engine(s, {z_mid})[0]);
}

AttackResult invert_with_text(const splitnet::SplitModel& sm,
                              const splitnet::FeatureTensor& z_mid,
                              const priors::GenerativePrior& prior,
                              const priors::TextEmbedding& e,
                              const InversionConfig& cfg) {
  if (!e.values.empty() && !e.is_zero() && !prior.supports_text())
    throw_capability("prior '" + prior.name() +
                     "' cannot run a text-conditioned attack");
  EngineSetup s{sm,  prior, cfg, e, cfg.weights.lambda_txt, 0.0,
                "whitebox_text"};
  return std::move(run_engine(s, {z_mid})[0]);
}

std::vector<AttackResult> invert_multiframe(const splitnet::SplitModel& sm,
                                            const FrameGroup& group,
                                            const priors::GenerativePrior& prior,
                                            const InversionConfig& cfg) {
  if (group.frames.empty()) throw_input("frame group is empty");
  EngineSetup s{sm,  prior, cfg, priors::TextEmbedding{}, 0.0,
                cfg.weights.lambda_c, "multiframe"};
  return run_engine(s, group.frames);
}

}  // namespace featinv::whitebox

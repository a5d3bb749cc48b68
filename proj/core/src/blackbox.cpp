#include "featinv/blackbox.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"
#include "featinv/serialize.hpp"

namespace featinv::blackbox {

using nlohmann::json;

Shape QueryDataset::feature_shape() const {
  if (pairs.empty()) throw_input("empty query dataset");
  return pairs.front().y.shape();
}

namespace {

void check_uniform_features(const std::vector<QueryPair>& pairs) {
  for (const auto& p : pairs)
    if (!shape_eq(p.y.shape(), pairs.front().y.shape()))
      throw_input("query dataset has mixed feature shapes");
}

QueryDataset collect_impl(const splitnet::SplitModel& sm,
                          const std::vector<Tensor>& images, bool pixel_space,
                          const std::vector<std::string>& texts,
                          const std::string& split_tag) {
  if (!texts.empty() && texts.size() != images.size())
    throw_input("texts count does not match image count");
  QueryDataset ds;
  ds.split_tag = split_tag;
  ds.pairs.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    QueryPair p;
    if (pixel_space) {
      p.x_model = sm.base().preprocessing.apply(images[i]);
      p.y = sm.extract(images[i]).values;
    } else {
      p.x_model = images[i];
      p.y = sm.f1(images[i]);
    }
    if (!texts.empty()) p.text = texts[i];
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

}  // namespace

QueryDataset collect_queries(const splitnet::SplitModel& sm,
                             const std::vector<Tensor>& pixel_images,
                             const std::vector<std::string>& texts,
                             const std::string& split_tag) {
  return collect_impl(sm, pixel_images, true, texts, split_tag);
}

QueryDataset collect_queries_model(const splitnet::SplitModel& sm,
                                   const std::vector<Tensor>& model_images,
                                   const std::vector<std::string>& texts,
                                   const std::string& split_tag) {
  return collect_impl(sm, model_images, false, texts, split_tag);
}

// ------------------------------------------------------------------ specs

namespace {

json block_to_json(const BlockSpec& b) {
  return json{{"kind", b.kind},       {"out_channels", b.out_channels},
              {"kernel", b.kernel},   {"stride", b.stride},
              {"pad", b.pad},         {"out_h", b.out_h},
              {"out_w", b.out_w},     {"norm", b.norm},
              {"act", b.act}};
}

BlockSpec block_from_json(const json& j) {
  BlockSpec b;
  b.kind = j.at("kind").get<std::string>();
  b.out_channels = j.at("out_channels").get<int>();
  b.kernel = j.at("kernel").get<int>();
  b.stride = j.at("stride").get<int>();
  b.pad = j.at("pad").get<int>();
  b.out_h = j.at("out_h").get<int>();
  b.out_w = j.at("out_w").get<int>();
  b.norm = j.at("norm").get<std::string>();
  b.act = j.at("act").get<std::string>();
  return b;
}

}  // namespace

std::string InverterNetSpec::to_json() const {
  json j;
  j["input_feature_shape"] = input_feature_shape;
  j["latent_shape"] = latent_shape;
  j["frame_count"] = frame_count;
  j["output_normalize"] = output_normalize;
  j["parameter_count"] = parameter_count;
  json fp = json::array(), bp = json::array();
  for (const auto& b : fusion_plan) fp.push_back(block_to_json(b));
  for (const auto& b : block_plan) bp.push_back(block_to_json(b));
  j["fusion_plan"] = fp;
  j["block_plan"] = bp;
  return j.dump();
}

InverterNetSpec InverterNetSpec::from_json(const std::string& text) {
  const json j = json::parse(text);
  InverterNetSpec s;
  s.input_feature_shape = j.at("input_feature_shape").get<Shape>();
  s.latent_shape = j.at("latent_shape").get<Shape>();
  s.frame_count = j.at("frame_count").get<int>();
  s.output_normalize = j.at("output_normalize").get<bool>();
  s.parameter_count = j.at("parameter_count").get<long>();
  for (const auto& b : j.at("fusion_plan")) s.fusion_plan.push_back(block_from_json(b));
  for (const auto& b : j.at("block_plan")) s.block_plan.push_back(block_from_json(b));
  return s;
}

namespace {

Shape as_3d(const Shape& s) {
  if (s.size() == 3) return s;
  if (s.size() == 2) return {1, s[0], s[1]};
  throw_input("inverter supports (C,H,W) or (tokens,dim) features, got " +
              shape_str(s));
}

void append_block(nn::Network& net, const BlockSpec& b, int& in_c,
                  size_t stage) {
  const std::string where =
      "stage " + std::to_string(stage) + " (" + b.kind + ")";
  if (b.kind == "resize") {
    net.add(std::make_unique<nn::BilinearResize>(b.out_h, b.out_w));
    return;
  }
  if (b.kind == "conv" || b.kind == "pointwise") {
    net.add(std::make_unique<nn::Conv2d>(in_c, b.out_channels, b.kernel,
                                         b.stride, b.pad));
  } else if (b.kind == "deconv") {
    net.add(std::make_unique<nn::ConvTranspose2d>(in_c, b.out_channels,
                                                  b.kernel, b.stride, b.pad));
  } else {
    throw_config("unknown inverter block kind in " + where);
  }
  in_c = b.out_channels;
  if (b.norm == "layer")
    net.add(std::make_unique<nn::LayerNormAll>(b.out_channels));
  else if (b.norm != "none")
    throw_config("unknown norm '" + b.norm + "' in " + where);
  if (b.act == "relu")
    net.add(std::make_unique<nn::ReLU>());
  else if (b.act != "none")
    throw_config("unknown activation '" + b.act + "' in " + where);
}

}  // namespace

nn::Network realize_trunk(const InverterNetSpec& spec) {
  nn::Network net;
  const Shape in3 = as_3d(spec.input_feature_shape);
  int in_c = in3[0];
  size_t stage = 0;
  for (const auto& b : spec.block_plan) append_block(net, b, in_c, stage++);
  if (spec.output_normalize) net.add(std::make_unique<nn::Standardize>());

  Shape got;
  try {
    got = net.output_shape(in3);
  } catch (const Error& e) {
    throw_config(std::string("inverter trunk does not realize: ") + e.what());
  }
  const Shape want3 = as_3d(spec.latent_shape);
  if (!shape_eq(got, want3) && shape_numel(got) != shape_numel(want3))
    throw_config("inverter trunk output " + shape_str(got) +
                 " does not match latent shape " +
                 shape_str(spec.latent_shape));
  return net;
}

nn::Network realize_fusion(const InverterNetSpec& spec) {
  nn::Network net;
  if (spec.frame_count <= 1 || spec.fusion_plan.empty()) return net;
  const Shape in3 = as_3d(spec.input_feature_shape);
  int in_c = in3[0] * spec.frame_count;
  size_t stage = 0;
  for (const auto& b : spec.fusion_plan) append_block(net, b, in_c, stage++);
  if (in_c % spec.frame_count != 0)
    throw_config("fusion output channels must split evenly across frames");
  return net;
}

InverterNetSpec build_inverter(const Shape& feature_shape,
                               const Shape& latent_shape, int K,
                               std::optional<long> param_budget,
                               bool with_fusion) {
  if (K < 1) throw_config("frame count K must be >= 1");
  const Shape f3 = as_3d(feature_shape);
  const Shape l3 = as_3d(latent_shape);
  const int cf = f3[0], cl = l3[0], hl = l3[1], wl = l3[2];

  auto make = [&](int w) {
    InverterNetSpec s;
    s.input_feature_shape = feature_shape;
    s.latent_shape = latent_shape;
    s.frame_count = K;
    if (K > 1 && with_fusion)
      s.fusion_plan = {{"pointwise", K * cf, 1, 1, 0, 0, 0, "none", "none"}};
    s.block_plan = {
        {"resize", 0, 0, 0, 0, 2 * hl, 2 * wl, "none", "none"},
        {"conv", w, 3, 1, 1, 0, 0, "layer", "relu"},
        {"conv", 2 * w, 3, 2, 1, 0, 0, "layer", "relu"},
        {"conv", 2 * w, 3, 1, 1, 0, 0, "layer", "relu"},
        {"deconv", w, 4, 2, 1, 0, 0, "layer", "relu"},
        {"conv", 2 * w, 3, 2, 1, 0, 0, "layer", "relu"},
        {"pointwise", cl, 1, 1, 0, 0, 0, "none", "none"},
    };
    nn::Network trunk = realize_trunk(s);
    nn::Network fusion = realize_fusion(s);
    s.parameter_count = trunk.param_count() + fusion.param_count();
    return s;
  };

  if (!param_budget) return make(16);

  const long budget = *param_budget;
  if (budget < 1) throw_config("param_budget must be positive");
  int lo = 1, hi = 1024;
  while (make(hi).parameter_count < budget && hi < 65536) hi *= 2;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (make(mid).parameter_count < budget)
      lo = mid + 1;
    else
      hi = mid;
  }
  InverterNetSpec best;
  double best_err = 1e300;
  for (int w = std::max(1, lo - 2); w <= lo + 1; ++w) {
    InverterNetSpec cand = make(w);
    const double err =
        std::fabs(static_cast<double>(cand.parameter_count - budget)) /
        static_cast<double>(budget);
    if (err < best_err) {
      best_err = err;
      best = cand;
    }
  }
  if (best_err > 0.05)
    throw_config("cannot realize inverter within 5% of param budget " +
                 std::to_string(budget) + " (closest: " +
                 std::to_string(best.parameter_count) + ")");
  return best;
}

// --------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (epochs < 1) throw_config("epochs must be >= 1");
  if (batch_size < 1) throw_config("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw_config("learning_rate must be positive");
  if (holdout_fraction < 0 || holdout_fraction >= 1)
    throw_config("holdout_fraction must be in [0,1)");
  weights.validate();
}

namespace {

struct ForwardState {
  nn::Trace fusion_trace;
  std::vector<nn::Trace> trunk_traces;
  std::vector<priors::DecodeTrace> decode_traces;
  std::vector<Tensor> latents;
  std::vector<Tensor> images;
  Tensor fused;  // stacked fusion output, kept for backward shape
};

Tensor stack_channels(const std::vector<Tensor>& ys) {
  const Shape s = as_3d(ys[0].shape());
  Tensor out({static_cast<int>(ys.size()) * s[0], s[1], s[2]});
  long off = 0;
  for (const auto& y : ys) {
    const Tensor y3 = y.ndim() == 2 ? y.reshaped(as_3d(y.shape())) : y;
    std::copy(y3.data(), y3.data() + y3.size(), out.data() + off);
    off += y3.size();
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& stacked, int k) {
  const int c = stacked.dim(0) / k;
  std::vector<Tensor> out;
  const long chunk = stacked.size() / k;
  for (int i = 0; i < k; ++i) {
    Tensor t({c, stacked.dim(1), stacked.dim(2)});
    std::copy(stacked.data() + i * chunk, stacked.data() + (i + 1) * chunk,
              t.data());
    out.push_back(std::move(t));
  }
  return out;
}

// Forward through fusion (if any), shared trunk and prior decode.
ForwardState forward_group(const TrainedInverter& ti,
                           const std::vector<Tensor>& ys,
                           const priors::TextEmbedding& e) {
  ForwardState st;
  const int k = static_cast<int>(ys.size());
  std::vector<Tensor> trunk_inputs;
  if (ti.fusion.depth() > 0) {
    st.fused = ti.fusion.forward(stack_channels(ys), st.fusion_trace);
    trunk_inputs = split_channels(st.fused, k);
  } else {
    for (const auto& y : ys)
      trunk_inputs.push_back(y.ndim() == 2 ? y.reshaped(as_3d(y.shape())) : y);
  }
  st.trunk_traces.resize(static_cast<size_t>(k));
  st.decode_traces.resize(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    Tensor latent = ti.trunk.forward(trunk_inputs[static_cast<size_t>(i)],
                                     st.trunk_traces[static_cast<size_t>(i)]);
    latent = latent.reshaped(ti.prior->latent_shape());
    st.images.push_back(ti.prior->decode(
        latent, e, st.decode_traces[static_cast<size_t>(i)]));
    st.latents.push_back(std::move(latent));
  }
  return st;
}

struct TrainOutcome {
  double first_epoch_loss = 0;
  double final_epoch_loss = 0;
  double val_loss = 0;
  long train_count = 0;
  long val_count = 0;
};

// One gradient step worth of work for a group of frames; returns summed
// loss and accumulates parameter grads.
double group_loss_and_grads(TrainedInverter& ti,
                            const std::vector<const QueryPair*>& group,
                            const priors::TextEmbedding& e,
                            const losses::LossWeights& w, bool with_text,
                            bool do_backward) {
  std::vector<Tensor> ys;
  ys.reserve(group.size());
  for (const QueryPair* p : group) ys.push_back(p->y);
  ForwardState st = forward_group(ti, ys, e);

  const int k = static_cast<int>(group.size());
  double total = 0.0;
  std::vector<Tensor> trunk_grads;
  for (int i = 0; i < k; ++i) {
    const Tensor& img = st.images[static_cast<size_t>(i)];
    const Tensor& x = group[static_cast<size_t>(i)]->x_model;
    if (!img.same_shape(x))
      throw_input("prior output " + shape_str(img.shape()) +
                  " does not match target shape " + shape_str(x.shape()));
    const double l_re = losses::reconstruction_loss(img, x);
    const double l_tv = losses::tv_loss(img);
    double l = l_re + w.lambda_s * l_tv;
    if (with_text)
      l += w.lambda_txt *
           losses::negentropy_loss(st.latents[static_cast<size_t>(i)], w.alpha);
    total += l;

    if (do_backward) {
      Tensor g_img = losses::reconstruction_loss_grad(img, x);
      g_img.add_(losses::tv_loss_grad(img), w.lambda_s);
      Tensor g_latent = ti.prior->decode_backward(
          g_img, st.decode_traces[static_cast<size_t>(i)]);
      if (with_text)
        g_latent.add_(losses::negentropy_loss_grad(
                          st.latents[static_cast<size_t>(i)], w.alpha),
                      w.lambda_txt);
      Tensor g_in = ti.trunk.backward(
          g_latent.reshaped(ti.trunk.output_shape(
              as_3d(ti.spec.input_feature_shape))),
          st.trunk_traces[static_cast<size_t>(i)], true);
      trunk_grads.push_back(std::move(g_in));
    }
  }
  if (do_backward && ti.fusion.depth() > 0) {
    Tensor g_fused = stack_channels(trunk_grads);
    ti.fusion.backward(g_fused, st.fusion_trace, true);
  }
  return total;
}

TrainedInverter train_impl(const std::vector<std::vector<const QueryPair*>>& groups,
                           const InverterNetSpec& spec,
                           std::shared_ptr<const priors::GenerativePrior> prior,
                           const TrainConfig& cfg, bool with_text,
                           const priors::TextEncoder* encoder) {
  cfg.validate();
  if (groups.empty()) throw_input("query dataset is empty");
  if (!prior) throw_input("train_inverter: prior not loaded");
  if (!shape_eq(as_3d(spec.latent_shape), as_3d(prior->latent_shape())) &&
      shape_numel(spec.latent_shape) != shape_numel(prior->latent_shape()))
    throw_config("spec latent shape " + shape_str(spec.latent_shape) +
                 " does not match prior latent " +
                 shape_str(prior->latent_shape()));

  TrainedInverter ti;
  ti.spec = spec;
  ti.prior_name = prior->name();
  ti.prior = std::move(prior);
  ti.trunk = realize_trunk(spec);
  ti.fusion = realize_fusion(spec);
  Rng rng(Rng::derive(cfg.seed, "inverter_init"));
  ti.trunk.init_params(rng);
  ti.fusion.init_params(rng);

  // text embeddings resolved once, in dataset order
  std::vector<priors::TextEmbedding> embeds(groups.size());
  if (with_text) {
    std::vector<long> missing;
    for (size_t g = 0; g < groups.size(); ++g) {
      const auto& first = *groups[g][0];
      if (!first.text.has_value())
        missing.push_back(static_cast<long>(g));
      else
        embeds[g] = encoder->embed(*first.text);  // "" stays the zero sentinel
    }
    if (!missing.empty()) {
      std::ostringstream os;
      os << "text attack requires a prompt for every query; missing at ";
      for (size_t i = 0; i < missing.size() && i < 10; ++i)
        os << (i ? "," : "") << missing[i];
      if (missing.size() > 10) os << ",...";
      throw_input(os.str());
    }
  }

  const long n = static_cast<long>(groups.size());
  const long n_val = static_cast<long>(
      std::floor(cfg.holdout_fraction * static_cast<double>(n)));
  const long n_train = n - n_val;
  if (n_train < 1) throw_input("holdout leaves no training data");

  nn::Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  std::vector<Tensor*> params = ti.trunk.params();
  for (Tensor* p : ti.fusion.params()) params.push_back(p);
  std::vector<Tensor*> grads = ti.trunk.grads();
  for (Tensor* p : ti.fusion.grads()) grads.push_back(p);

  Rng shuffle_rng(Rng::derive(cfg.seed, "shuffle"));
  std::vector<int> order(static_cast<size_t>(n_train));
  for (long i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = int(i);

  TrainOutcome out;
  out.train_count = n_train;
  out.val_count = n_val;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    long seen = 0;
    for (long start = 0; start < n_train; start += cfg.batch_size) {
      const long end = std::min<long>(n_train, start + cfg.batch_size);
      ti.trunk.zero_grads();
      ti.fusion.zero_grads();
      double batch_loss = 0.0;
      for (long i = start; i < end; ++i) {
        const size_t g = static_cast<size_t>(order[static_cast<size_t>(i)]);
        batch_loss += group_loss_and_grads(ti, groups[g], embeds[g],
                                           cfg.weights, with_text, true);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor* gt : grads) gt->scale_(inv);
      if (!std::isfinite(batch_loss))
        throw_numeric("inverter training diverged at epoch " +
                      std::to_string(epoch));
      adam.step(params, grads);
      epoch_loss += batch_loss;
      seen += (end - start);
    }
    epoch_loss /= static_cast<double>(seen);
    if (epoch == 1) out.first_epoch_loss = epoch_loss;
    if (epoch == cfg.epochs) out.final_epoch_loss = epoch_loss;

    if (n_val > 0) {
      double val = 0.0;
      for (long i = n_train; i < n; ++i)
        val += group_loss_and_grads(ti, groups[static_cast<size_t>(i)],
                                    embeds[static_cast<size_t>(i)],
                                    cfg.weights, with_text, false);
      val /= static_cast<double>(n_val);
      out.val_loss = val;
      if (!std::isfinite(val))
        throw_numeric("validation loss diverged at epoch " +
                      std::to_string(epoch));
    }
  }

  json manifest;
  manifest["epochs"] = cfg.epochs;
  manifest["batch_size"] = cfg.batch_size;
  manifest["learning_rate"] = cfg.learning_rate;
  manifest["seed"] = cfg.seed;
  manifest["train_groups"] = out.train_count;
  manifest["val_groups"] = out.val_count;
  manifest["first_epoch_loss"] = out.first_epoch_loss;
  manifest["final_epoch_loss"] = out.final_epoch_loss;
  manifest["val_loss"] = out.val_loss;
  manifest["with_text"] = with_text;
  manifest["frame_count"] = spec.frame_count;
  ti.manifest_json = manifest.dump();
  return ti;
}

}  // namespace

TrainedInverter train_inverter(const QueryDataset& ds,
                               const InverterNetSpec& spec,
                               std::shared_ptr<const priors::GenerativePrior> prior,
                               const TrainConfig& cfg) {
  if (ds.empty()) throw_input("query dataset is empty");
  check_uniform_features(ds.pairs);
  std::vector<std::vector<const QueryPair*>> groups;
  groups.reserve(ds.pairs.size());
  for (const auto& p : ds.pairs) groups.push_back({&p});
  return train_impl(groups, spec, std::move(prior), cfg, false, nullptr);
}

TrainedInverter train_inverter_with_text(
    const QueryDataset& ds, const InverterNetSpec& spec,
    std::shared_ptr<const priors::GenerativePrior> prior,
    const priors::TextEncoder& encoder, const TrainConfig& cfg) {
  if (ds.empty()) throw_input("query dataset is empty");
  if (!prior->supports_text())
    throw_capability("prior '" + prior->name() +
                     "' cannot train a text-conditioned inverter");
  check_uniform_features(ds.pairs);
  std::vector<std::vector<const QueryPair*>> groups;
  groups.reserve(ds.pairs.size());
  for (const auto& p : ds.pairs) groups.push_back({&p});
  return train_impl(groups, spec, std::move(prior), cfg, true, &encoder);
}

TrainedInverter train_inverter_multiframe(
    const GroupedQueryDataset& ds, const InverterNetSpec& spec,
    std::shared_ptr<const priors::GenerativePrior> prior,
    const TrainConfig& cfg) {
  if (ds.groups.empty()) throw_input("grouped query dataset is empty");
  for (size_t g = 0; g < ds.groups.size(); ++g)
    if (static_cast<int>(ds.groups[g].size()) != spec.frame_count)
      throw_input("group " + std::to_string(g) + " has " +
                  std::to_string(ds.groups[g].size()) + " frames, expected " +
                  std::to_string(spec.frame_count));
  std::vector<std::vector<const QueryPair*>> groups;
  groups.reserve(ds.groups.size());
  for (const auto& g : ds.groups) {
    std::vector<const QueryPair*> ptrs;
    for (const auto& p : g) ptrs.push_back(&p);
    groups.push_back(std::move(ptrs));
  }
  return train_impl(groups, spec, std::move(prior), cfg, false, nullptr);
}

// -------------------------------------------------------------- inference

Tensor TrainedInverter::latent_for(const Tensor& y) const {
  const Tensor y3 = y.ndim() == 2 ? y.reshaped(as_3d(y.shape())) : y;
  nn::Trace tr;
  return trunk.forward(y3, tr).reshaped(prior->latent_shape());
}

Tensor TrainedInverter::run(const Tensor& y) const {
  if (spec.frame_count > 1 && fusion.depth() > 0)
    throw_input("fused multi-frame inverter requires run_group()");
  if (!shape_eq(y.shape(), spec.input_feature_shape))
    throw_input("feature shape " + shape_str(y.shape()) +
                " does not match inverter input " +
                shape_str(spec.input_feature_shape));
  return prior->decode(latent_for(y), priors::TextEmbedding{});
}

std::vector<Tensor> TrainedInverter::run_group(
    const std::vector<Tensor>& ys) const {
  if (static_cast<int>(ys.size()) != spec.frame_count)
    throw_input("group size " + std::to_string(ys.size()) +
                " does not match inverter frame count " +
                std::to_string(spec.frame_count));
  for (const auto& y : ys)
    if (!shape_eq(y.shape(), spec.input_feature_shape))
      throw_input("feature shape mismatch in group");
  ForwardState st =
      forward_group(*this, ys, priors::TextEmbedding{});
  return st.images;
}

Tensor run_inverter(const TrainedInverter& inv, const Tensor& y) {
  return inv.run(y);
}

// ----------------------------------------------------------- persistence

void save_inverter(const TrainedInverter& inv, const std::string& path) {
  std::vector<io::NamedTensor> ts;
  int idx = 0;
  auto& self = const_cast<TrainedInverter&>(inv);
  for (Tensor* p : self.fusion.params())
    ts.push_back({"fusion" + std::to_string(idx++), *p});
  idx = 0;
  for (Tensor* p : self.trunk.params())
    ts.push_back({"trunk" + std::to_string(idx++), *p});
  json meta;
  meta["kind"] = "trained_inverter";
  meta["format_version"] = 1;
  meta["spec"] = json::parse(inv.spec.to_json());
  meta["prior_name"] = inv.prior_name;
  meta["manifest"] = json::parse(inv.manifest_json.empty() ? "{}"
                                                           : inv.manifest_json);
  io::write_archive(path, meta.dump(), ts);
}

TrainedInverter load_inverter(const std::string& path,
                              const priors::PriorSettings& prior_settings) {
  const io::ArchiveContent ar = io::read_archive(path);
  const json meta = json::parse(ar.meta_json);
  if (meta.value("kind", "") != "trained_inverter")
    throw_input(path + " is not a trained inverter archive");
  TrainedInverter ti;
  ti.spec = InverterNetSpec::from_json(meta.at("spec").dump());
  ti.prior_name = meta.at("prior_name").get<std::string>();
  ti.manifest_json = meta.value("manifest", json::object()).dump();
  ti.prior = std::shared_ptr<const priors::GenerativePrior>(
      priors::create_prior(ti.prior_name, prior_settings));
  ti.trunk = realize_trunk(ti.spec);
  ti.fusion = realize_fusion(ti.spec);
  std::vector<Tensor*> params;
  for (Tensor* p : ti.fusion.params()) params.push_back(p);
  for (Tensor* p : ti.trunk.params()) params.push_back(p);
  if (params.size() != ar.tensors.size())
    throw_input("inverter archive tensor count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!shape_eq(params[i]->shape(), ar.tensors[i].value.shape()))
      throw_input("inverter archive shape mismatch at tensor " +
                  std::to_string(i));
    *params[i] = ar.tensors[i].value;
  }
  return ti;
}

}  // namespace featinv::blackbox

#include "featinv/splitnet.hpp"

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"
#include "featinv/serialize.hpp"

namespace featinv::splitnet {

using nlohmann::json;

Tensor Preprocessing::apply(const Tensor& pixels) const {
  const int C = pixels.dim(0);
  if (static_cast<int>(mean.size()) != C ||
      static_cast<int>(std.size()) != C)
    throw_input("preprocessing constants do not match channel count");
  Tensor out(pixels.shape());
  const long hw = pixels.size() / C;
  for (int c = 0; c < C; ++c)
    for (long i = 0; i < hw; ++i)
      out[c * hw + i] = (pixels[c * hw + i] - mean[c]) / std[c];
  return out;
}

Tensor Preprocessing::invert(const Tensor& model) const {
  const int C = model.dim(0);
  Tensor out(model.shape());
  const long hw = model.size() / C;
  for (int c = 0; c < C; ++c)
    for (long i = 0; i < hw; ++i)
      out[c * hw + i] = model[c * hw + i] * std[c] + mean[c];
  return out;
}

Preprocessing Preprocessing::identity(int channels) {
  Preprocessing p;
  p.mean.assign(channels, 0.0);
  p.std.assign(channels, 1.0);
  return p;
}

Preprocessing Preprocessing::centered(int channels) {
  Preprocessing p;
  p.mean.assign(channels, 0.5);
  p.std.assign(channels, 0.5);
  return p;
}

Shape TargetModel::layer_output_shape(int upto) const {
  Shape s = input_shape;
  for (int i = 0; i < upto; ++i) s = layers[i]->output_shape(s);
  return s;
}

Tensor TargetModel::forward_model(const Tensor& model_space) const {
  Tensor h = model_space;
  nn::Ctx ctx;
  for (const auto& l : layers) {
    ctx = nn::Ctx{};
    h = l->forward(h, ctx);
  }
  return h;
}

Tensor TargetModel::forward(const Tensor& pixels) const {
  if (!shape_eq(pixels.shape(), input_shape))
    throw_input("input shape " + shape_str(pixels.shape()) +
                " does not match model input " + shape_str(input_shape));
  return forward_model(preprocessing.apply(pixels));
}

std::vector<double> TargetModel::predict_probs(const Tensor& pixels) const {
  if (num_classes <= 0)
    throw_capability("model '" + name + "' has no classifier head");
  const Tensor logits = forward(pixels);
  return nn::softmax(logits.vec());
}

SplitModel::SplitModel(std::shared_ptr<TargetModel> base, int split_index)
    : base_(std::move(base)), split_(split_index) {
  const int n = base_->layer_count();
  if (split_ < 1 || split_ >= n)
    throw_config("split_index " + std::to_string(split_) +
                 " out of range for model '" + base_->name +
                 "'; valid range is [1," + std::to_string(n - 1) + "]");
}

Shape SplitModel::feature_shape() const {
  Shape s = base_->input_shape;
  for (int i = 0; i < split_; ++i) s = base_->layers[i]->output_shape(s);
  return s;
}

Tensor SplitModel::f1(const Tensor& model_space) const {
  std::vector<nn::Ctx> trace;
  return f1(model_space, trace);
}

Tensor SplitModel::f1(const Tensor& model_space,
                      std::vector<nn::Ctx>& trace) const {
  trace.assign(static_cast<size_t>(split_), nn::Ctx{});
  Tensor h = model_space;
  for (int i = 0; i < split_; ++i) h = base_->layers[i]->forward(h, trace[i]);
  return h;
}

Tensor SplitModel::f1_backward(const Tensor& g_feature,
                               const std::vector<nn::Ctx>& trace) const {
  Tensor g = g_feature;
  for (int i = split_; i-- > 0;)
    g = base_->layers[i]->backward(g, trace[i], /*with_param_grads=*/false);
  return g;
}

Tensor SplitModel::f2(const Tensor& feature) const {
  if (!shape_eq(feature.shape(), feature_shape()))
    throw_input("feature shape " + shape_str(feature.shape()) +
                " does not match split output " + shape_str(feature_shape()));
  Tensor h = feature;
  nn::Ctx ctx;
  for (int i = split_; i < base_->layer_count(); ++i) {
    ctx = nn::Ctx{};
    h = base_->layers[i]->forward(h, ctx);
  }
  return h;
}

FeatureTensor SplitModel::extract(const Tensor& pixels) const {
  if (!shape_eq(pixels.shape(), base_->input_shape))
    throw_input("input shape " + shape_str(pixels.shape()) +
                " does not match model input " +
                shape_str(base_->input_shape));
  FeatureTensor ft;
  ft.values = f1(base_->preprocessing.apply(pixels));
  ft.source_layer = split_;
  return ft;
}

SplitModel split(std::shared_ptr<TargetModel> model, int split_index) {
  return SplitModel(std::move(model), split_index);
}

FeatureTensor extract_features(const SplitModel& sm, const Tensor& pixels) {
  return sm.extract(pixels);
}

namespace {

nn::LayerPtr conv_block(int in_c, int out_c, bool pool, Rng& rng) {
  auto block = std::make_unique<nn::Composite>("conv_block");
  auto conv = std::make_unique<nn::Conv2d>(in_c, out_c, 3, 1, 1);
  conv->init_params(rng);
  block->add(std::move(conv));
  block->add(std::make_unique<nn::ReLU>());
  if (pool) block->add(std::make_unique<nn::AvgPool2d>(2));
  return block;
}

nn::LayerPtr classifier_head(int in_c, int classes, Rng& rng) {
  auto head = std::make_unique<nn::Composite>("classifier_head");
  head->add(std::make_unique<nn::GlobalAvgPool>());
  auto lin = std::make_unique<nn::Linear>(in_c, classes);
  lin->init_params(rng);
  head->add(std::move(lin));
  return head;
}

std::shared_ptr<TargetModel> build_toy_cnn(int blocks, int num_classes,
                                           std::uint64_t seed,
                                           bool id_prefix) {
  if (blocks < 3 || blocks > 5)
    throw_config("toy_cnn supports 3..5 blocks, got " +
                 std::to_string(blocks));
  Rng rng(Rng::derive(seed, "toy_cnn"));
  auto m = std::make_shared<TargetModel>();
  m->name = id_prefix ? "toy_cnn_idprefix" : ("toy_cnn" + std::string(blocks == 3 ? "" : std::to_string(blocks)));
  m->input_shape = {3, 32, 32};
  m->preprocessing = Preprocessing::centered(3);
  m->num_classes = num_classes;
  if (id_prefix) m->layers.push_back(std::make_unique<nn::Identity>());
  const int widths[] = {3, 16, 32, 64, 96, 96};
  for (int b = 0; b < blocks; ++b)
    m->layers.push_back(conv_block(widths[b], widths[b + 1], b < 3, rng));
  m->layers.push_back(classifier_head(widths[blocks], num_classes, rng));
  return m;
}

}  // namespace

std::shared_ptr<TargetModel> make_toy_cnn(int blocks, int num_classes,
                                          std::uint64_t seed) {
  return build_toy_cnn(blocks, num_classes, seed, false);
}

std::shared_ptr<TargetModel> make_toy_cnn_idprefix(int blocks, int num_classes,
                                                   std::uint64_t seed) {
  return build_toy_cnn(blocks, num_classes, seed, true);
}

std::shared_ptr<TargetModel> make_toy_attention(int blocks, int num_classes,
                                                std::uint64_t seed) {
  if (blocks < 2 || blocks > 4)
    throw_config("toy_attention supports 2..4 blocks, got " +
                 std::to_string(blocks));
  Rng rng(Rng::derive(seed, "toy_attention"));
  auto m = std::make_shared<TargetModel>();
  m->name = "toy_vit";
  m->input_shape = {3, 32, 32};
  m->preprocessing = Preprocessing::centered(3);
  m->num_classes = num_classes;

  const int dim = 32;
  auto pe = std::make_unique<nn::PatchEmbed>(3, dim, 8);
  pe->init_params(rng);
  m->layers.push_back(std::move(pe));
  for (int b = 0; b < blocks; ++b) {
    auto ab = std::make_unique<nn::AttentionBlock>(dim, 2 * dim);
    ab->init_params(rng);
    m->layers.push_back(std::move(ab));
  }
  auto head = std::make_unique<nn::Composite>("classifier_head");
  head->add(std::make_unique<nn::TokenMean>());
  auto lin = std::make_unique<nn::Linear>(dim, num_classes);
  lin->init_params(rng);
  head->add(std::move(lin));
  m->layers.push_back(std::move(head));
  return m;
}

std::shared_ptr<TargetModel> create_model(const std::string& name,
                                          const std::string& weights_path) {
  std::shared_ptr<TargetModel> m;
  if (name == "toy_cnn")
    m = make_toy_cnn(3);
  else if (name == "toy_cnn5")
    m = make_toy_cnn(5);
  else if (name == "toy_cnn_idprefix")
    m = make_toy_cnn_idprefix(3);
  else if (name == "toy_vit")
    m = make_toy_attention(4);
  else
    throw_config("unknown model '" + name + "'; registered models: toy_cnn, "
                 "toy_cnn5, toy_cnn_idprefix, toy_vit");
  if (!weights_path.empty()) load_model_weights(*m, weights_path);
  return m;
}

std::vector<std::string> registered_models() {
  return {"toy_cnn", "toy_cnn5", "toy_cnn_idprefix", "toy_vit"};
}

void save_model_weights(const TargetModel& model, const std::string& path) {
  std::vector<io::NamedTensor> ts;
  int idx = 0;
  for (const auto& l : model.layers)
    for (Tensor* p : const_cast<nn::Layer&>(*l).params())
      ts.push_back({"p" + std::to_string(idx++), *p});
  json meta;
  meta["kind"] = "model_weights";
  meta["model"] = model.name;
  io::write_archive(path, meta.dump(), ts);
}

void load_model_weights(TargetModel& model, const std::string& path) {
  const io::ArchiveContent ar = io::read_archive(path);
  const json meta = json::parse(ar.meta_json);
  if (meta.value("kind", "") != "model_weights")
    throw_input(path + " is not a model weights blob");
  if (meta.value("model", "") != model.name)
    throw_input("weights blob for '" + meta.value("model", "") +
                "' cannot be loaded into '" + model.name + "'");
  std::vector<Tensor*> params;
  for (auto& l : model.layers)
    for (Tensor* p : l->params()) params.push_back(p);
  if (params.size() != ar.tensors.size())
    throw_input("weights blob tensor count mismatch for " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    if (!shape_eq(params[i]->shape(), ar.tensors[i].value.shape()))
      throw_input("weights blob shape mismatch at tensor " +
                  std::to_string(i));
    *params[i] = ar.tensors[i].value;
  }
}

}  // namespace featinv::splitnet

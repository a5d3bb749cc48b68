// Regenerates the versioned weight blobs under assets/: the toy decoder
// prior (conditional autoencoder on the synthetic desk dataset) and the
// trained toy CNN classifier used for task-accuracy and inception scores.
//
//   featinv-gen-assets [--out assets] [--seed 91] [--ae-epochs 18]
//
// Training is deterministic for a fixed seed; blobs record their recipe.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "featinv/dataset.hpp"
#include "featinv/metrics.hpp"
#include "featinv/nn.hpp"
#include "featinv/priors.hpp"
#include "featinv/serialize.hpp"
#include "featinv/splitnet.hpp"

using namespace featinv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct AeOutcome {
  double final_loss = 0;
  double holdout_psnr = 0;
};

AeOutcome train_autoencoder(priors::ToyDecoderPrior& dec,
                            priors::ToyEncoder& enc,
                            const std::vector<data::Sample>& train,
                            const std::vector<data::Sample>& holdout,
                            int epochs, int batch, double lr,
                            std::uint64_t seed) {
  priors::TextEncoder text_enc;
  std::vector<priors::TextEmbedding> tags;
  for (const auto& name : data::class_names())
    tags.push_back(text_enc.embed(name));

  std::vector<Tensor*> params = enc.net().params();
  for (Tensor* p : dec.decoder_net().params()) params.push_back(p);
  for (Tensor* p : dec.conditioner().params()) params.push_back(p);
  std::vector<Tensor*> grads = enc.net().grads();
  for (Tensor* p : dec.decoder_net().grads()) grads.push_back(p);
  for (Tensor* p : dec.conditioner().grads()) grads.push_back(p);

  nn::Adam adam(lr);
  Rng rng(Rng::derive(seed, "ae_train"));
  std::vector<int> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const Shape latent_shape = dec.latent_shape();
  AeOutcome out;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    long seen = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(batch)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(batch));
      enc.net().zero_grads();
      dec.decoder_net().zero_grads();
      dec.conditioner().zero_grads();
      double batch_loss = 0;
      for (size_t i = start; i < end; ++i) {
        const data::Sample& s = train[static_cast<size_t>(order[i])];
        // conditioning dropout: half the passes see the class tag
        const bool with_tag = rng.uniform() < 0.5;
        nn::Trace enc_tr, cond_tr;
        Tensor latent = enc.net().forward(s.model, enc_tr);
        Tensor dec_in = latent.reshaped(latent_shape);
        if (with_tag) {
          const Tensor bias = dec.conditioner().forward(
              tags[static_cast<size_t>(s.label)].values, cond_tr);
          dec_in.add_(bias.reshaped(latent_shape));
        }
        nn::Trace dec_tr;
        Tensor recon = dec.decoder_net().forward(dec_in, dec_tr);

        const long n = recon.size();
        double loss = 0;
        Tensor g(recon.shape());
        for (long t = 0; t < n; ++t) {
          const double d = recon[t] - s.model[t];
          loss += d * d;
          g[t] = 2.0 * d / static_cast<double>(n);
        }
        loss /= static_cast<double>(n);
        batch_loss += loss;

        Tensor g_in = dec.decoder_net().backward(g, dec_tr, true);
        if (with_tag)
          dec.conditioner().backward(g_in.reshaped({latent_shape[0] *
                                                    latent_shape[1] *
                                                    latent_shape[2]}),
                                     cond_tr, true);
        enc.net().backward(g_in.reshaped(latent.shape()), enc_tr, true);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor* gt : grads) gt->scale_(inv);
      adam.step(params, grads);
      epoch_loss += batch_loss;
      seen += static_cast<long>(end - start);
    }
    epoch_loss /= static_cast<double>(seen);
    if (epoch == epochs) out.final_loss = epoch_loss;
    if (epoch % 5 == 0 || epoch == 1 || epoch == epochs)
      std::cout << "  ae epoch " << epoch << "/" << epochs
                << " loss=" << epoch_loss << "\n";
  }

  // unconditioned round-trip quality on held-out samples
  double psnr_sum = 0;
  const auto pre = splitnet::Preprocessing::centered(3);
  for (const auto& s : holdout) {
    const Tensor latent = enc.encode(s.model).reshaped(latent_shape);
    const Tensor recon = dec.decode(latent, priors::TextEmbedding{});
    psnr_sum += metrics::psnr(metrics::to_255(s.pixels),
                              metrics::to_255(data::to_pixels(recon, pre)));
  }
  out.holdout_psnr = psnr_sum / static_cast<double>(holdout.size());
  return out;
}

double train_classifier(splitnet::TargetModel& model,
                        const std::vector<data::Sample>& train,
                        const std::vector<data::Sample>& holdout, int epochs,
                        int batch, double lr, std::uint64_t seed) {
  std::vector<Tensor*> params, grads;
  for (auto& l : model.layers) {
    for (Tensor* p : l->params()) params.push_back(p);
    for (Tensor* g : l->grads()) grads.push_back(g);
  }
  nn::Adam adam(lr);
  Rng rng(Rng::derive(seed, "cls_train"));
  std::vector<int> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(batch)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(batch));
      for (auto& l : model.layers) l->zero_grads();
      double batch_loss = 0;
      for (size_t i = start; i < end; ++i) {
        const data::Sample& s = train[static_cast<size_t>(order[i])];
        std::vector<nn::Ctx> ctxs(model.layers.size());
        Tensor h = s.model;
        for (size_t li = 0; li < model.layers.size(); ++li)
          h = model.layers[li]->forward(h, ctxs[li]);
        const auto probs = nn::softmax(h.vec());
        batch_loss += -std::log(std::max(1e-12, probs[static_cast<size_t>(s.label)]));
        Tensor g(h.shape());
        for (long c = 0; c < h.size(); ++c)
          g[c] = probs[static_cast<size_t>(c)] -
                 (c == s.label ? 1.0 : 0.0);
        for (size_t li = model.layers.size(); li-- > 0;)
          g = model.layers[li]->backward(g, ctxs[li], true);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor* gt : grads) gt->scale_(inv);
      adam.step(params, grads);
      epoch_loss += batch_loss;
    }
    std::cout << "  cls epoch " << epoch << "/" << epochs
              << " loss=" << epoch_loss / train.size() << "\n";
  }

  double correct = 0;
  for (const auto& s : holdout) {
    const Tensor logits = model.forward_model(s.model);
    int arg = 0;
    for (long c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[arg]) arg = static_cast<int>(c);
    correct += (arg == s.label) ? 1 : 0;
  }
  return correct / static_cast<double>(holdout.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regenerate featinv weight assets"};
  std::string out_dir = "assets";
  std::uint64_t seed = 91;
  int ae_epochs = 18, ae_batch = 32, cls_epochs = 6, cls_batch = 64;
  int train_n = 2048, holdout_n = 128;
  double ae_lr = 2e-3, cls_lr = 2e-3;
  app.add_option("--out", out_dir);
  app.add_option("--seed", seed);
  app.add_option("--ae-epochs", ae_epochs);
  app.add_option("--cls-epochs", cls_epochs);
  app.add_option("--train-size", train_n);
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(out_dir);
  const auto pre = splitnet::Preprocessing::centered(3);
  std::cout << "generating dataset (" << train_n << "+" << holdout_n
            << " samples)\n";
  const auto train = data::generate(train_n, seed * 1000 + 1, pre);
  const auto holdout = data::generate(holdout_n, seed * 1000 + 2, pre);

  std::cout << "training toy decoder autoencoder\n";
  auto dec = priors::ToyDecoderPrior::make_untrained(seed);
  auto enc = priors::ToyEncoder::make(seed);
  const auto ae = train_autoencoder(dec, enc, train, holdout, ae_epochs,
                                    ae_batch, ae_lr, seed);
  std::cout << "  holdout round-trip psnr: " << ae.holdout_psnr << " dB\n";

  json ae_manifest;
  ae_manifest["training_seed"] = seed;
  ae_manifest["epochs"] = ae_epochs;
  ae_manifest["batch_size"] = ae_batch;
  ae_manifest["learning_rate"] = ae_lr;
  ae_manifest["train_size"] = train_n;
  ae_manifest["final_loss"] = ae.final_loss;
  ae_manifest["holdout_psnr"] = ae.holdout_psnr;
  ae_manifest["dataset"] = "desk-synthetic-v1";
  dec.save((fs::path(out_dir) / "toy_decoder.finv").string(),
           ae_manifest.dump());

  // encoder weights ride along for round-trip tests
  {
    std::vector<io::NamedTensor> ts;
    int idx = 0;
    for (Tensor* p : enc.net().params())
      ts.push_back({"enc" + std::to_string(idx++), *p});
    json meta;
    meta["kind"] = "toy_encoder";
    meta["training_seed"] = seed;
    io::write_archive((fs::path(out_dir) / "toy_encoder.finv").string(),
                      meta.dump(), ts);
  }

  std::cout << "training toy cnn classifier\n";
  auto model = splitnet::make_toy_cnn(3, data::kNumClasses, seed);
  const double acc = train_classifier(*model, train, holdout, cls_epochs,
                                      cls_batch, cls_lr, seed);
  std::cout << "  holdout accuracy: " << acc << "\n";
  splitnet::save_model_weights(*model,
                               (fs::path(out_dir) / "toy_cnn_cls.finv").string());

  json summary;
  summary["seed"] = seed;
  summary["toy_decoder"] = ae_manifest;
  summary["toy_cnn_cls"] = {{"epochs", cls_epochs},
                            {"batch_size", cls_batch},
                            {"learning_rate", cls_lr},
                            {"holdout_accuracy", acc}};
  std::ofstream f(fs::path(out_dir) / "ASSETS.json");
  f << summary.dump(2) << "\n";
  std::cout << "assets written to " << out_dir << "\n";
  return 0;
}

#include "featinv/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featinv/blackbox.hpp"
#include "featinv/dataset.hpp"
#include "featinv/defense.hpp"
#include "featinv/error.hpp"
#include "featinv/image_io.hpp"
#include "featinv/metrics.hpp"
#include "featinv/priors.hpp"
#include "featinv/serialize.hpp"
#include "featinv/whitebox.hpp"

namespace featinv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string toolkit_version() {
#ifdef FEATINV_VERSION_STRING
  return FEATINV_VERSION_STRING;
#else
  return "0.0.0";
#endif
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

bool deterministic_mode() {
  const char* env = std::getenv("FEATINV_DETERMINISTIC");
  // kernels are unconditionally deterministic; the flag is recorded so
  // manifests state the mode they ran under
  return env == nullptr || std::string(env) != "0";
}

std::string run_id_of(const RunConfig& cfg) {
  return cfg.run.variant + "-" + hex64(cfg.fingerprint()) + "-s" +
         std::to_string(cfg.run.seed);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw_input("cannot write " + p.string());
  f << text;
}

// Sink collecting artifacts inside the staging directory.
struct Stage {
  fs::path dir;
  std::vector<ArtifactRecord> artifacts;

  void record(const std::string& name) {
    artifacts.push_back({name, hex64(io::file_checksum((dir / name).string()))});
  }
  void text(const std::string& name, const std::string& content) {
    write_text(dir / name, content);
    record(name);
  }
  void png(const std::string& name, const Tensor& image01) {
    io::write_png((dir / name).string(), image01);
    record(name);
  }
  void blob(const std::string& name, const Tensor& t) {
    io::write_tensor_blob((dir / name).string(), t);
    record(name);
  }
  // one combined checksum for a whole subdirectory of emitted files
  void record_dir(const std::string& name) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir / name))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& f : files) {
      const std::uint64_t c = io::file_checksum(f.string());
      h = fnv1a64(&c, sizeof(c), h);
    }
    std::ostringstream os;
    os << std::hex << h;
    artifacts.push_back({name + "/", os.str()});
  }
};

std::string trace_csv(const std::vector<whitebox::AttackResult>& results) {
  std::ostringstream os;
  os.precision(17);
  os << "frame,iteration,total,reconstruction,tv,negentropy,temporal\n";
  for (size_t k = 0; k < results.size(); ++k) {
    const auto& trace = results[k].trace;
    for (size_t i = 0; i < trace.size(); ++i) {
      const auto& b = trace[i];
      os << k << "," << (i + 1) << "," << b.total << "," << b.reconstruction
         << "," << b.tv << "," << b.negentropy << "," << b.temporal << "\n";
    }
  }
  return os.str();
}

struct LoadedTargets {
  std::vector<data::Sample> samples;
};

LoadedTargets load_targets(const RunConfig& cfg,
                           const splitnet::TargetModel& model, int count) {
  LoadedTargets t;
  if (cfg.data.source == "synthetic") {
    t.samples = data::generate(count, cfg.data.seed, model.preprocessing);
  } else {
    if (cfg.data.dir.empty())
      throw_config("data.dir must be set when data.source = \"dir\"");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg.data.dir))
      if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw_input("no .png files in " + cfg.data.dir);
    for (const auto& f : files) {
      if (static_cast<int>(t.samples.size()) >= count) break;
      data::Sample s;
      s.pixels = io::read_png(f.string());
      if (!shape_eq(s.pixels.shape(), model.input_shape))
        throw_input("image " + f.string() + " has shape " +
                    shape_str(s.pixels.shape()) + ", expected " +
                    shape_str(model.input_shape));
      s.model = model.preprocessing.apply(s.pixels);
      s.label = -1;
      t.samples.push_back(std::move(s));
    }
  }
  return t;
}

priors::PriorSettings prior_settings_of(const RunConfig& cfg,
                                        const Shape& image_shape) {
  priors::PriorSettings ps;
  ps.weights_path = cfg.prior.weights_path;
  ps.sampling_steps = cfg.prior.sampling_steps;
  ps.guidance_scale = cfg.prior.guidance_scale;
  ps.scheduler = cfg.prior.scheduler;
  ps.image_shape = image_shape;
  return ps;
}

metrics::Classifier toy_classifier(
    const std::shared_ptr<splitnet::TargetModel>& model) {
  return metrics::Classifier{
      "target:" + model->name, [model](const Tensor& img01) {
        return model->predict_probs(img01);
      }};
}

// ---------------------------------------------------------------- engines

void run_whitebox(const RunConfig& cfg, Stage& st, std::string& engine_json) {
  auto model = splitnet::create_model(cfg.model.name, cfg.model.weights_path);
  const auto sm = splitnet::split(model, cfg.model.split_index);
  auto prior = priors::create_prior(cfg.prior.name,
                                    prior_settings_of(cfg, model->input_shape));
  const auto ic = cfg.inversion_config();

  const bool multiframe = cfg.run.variant == "multiframe";
  LoadedTargets targets;
  if (multiframe) {
    std::vector<data::Sample> frames;
    if (cfg.data.source == "synthetic") {
      frames = data::frame_group(cfg.data.seed, cfg.attack.frames,
                                 cfg.attack.frame_shift, model->preprocessing);
    } else {
      frames = load_targets(cfg, *model, cfg.attack.frames).samples;
    }
    targets.samples = std::move(frames);
  } else {
    targets = load_targets(cfg, *model, cfg.data.count);
  }

  std::vector<whitebox::AttackResult> results;
  std::vector<Tensor> originals, recons, recons01;
  if (multiframe) {
    whitebox::FrameGroup group;
    for (const auto& s : targets.samples)
      group.frames.push_back({sm.f1(s.model), sm.split_index()});
    results = whitebox::invert_multiframe(sm, group, *prior, ic);
  } else {
    for (const auto& s : targets.samples) {
      splitnet::FeatureTensor z{sm.f1(s.model), sm.split_index()};
      if (cfg.run.variant == "whitebox_text") {
        priors::TextEncoder enc;
        results.push_back(whitebox::invert_with_text(
            sm, z, *prior, enc.embed(cfg.attack.text), ic));
      } else {
        results.push_back(whitebox::invert(sm, z, *prior, ic));
      }
    }
  }

  for (size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.images.empty()) {
      const Tensor px =
          data::to_pixels(r.images[0], model->preprocessing);
      char name[32];
      std::snprintf(name, sizeof(name), "recon_%04zu.png", i);
      st.png(name, px);
      originals.push_back(
          metrics::to_255(targets.samples[i].pixels));
      recons.push_back(metrics::to_255(px));
      recons01.push_back(px);
    }
  }
  st.text("loss_trace.csv", trace_csv(results));

  if (recons.size() >= 1) {
    const auto rep = metrics::evaluate(originals, recons, recons01,
                                       toy_classifier(model));
    st.text("report.json", rep.to_json());
    st.text("report.csv", rep.to_csv());
  }

  json ej = json::parse(results.empty() ? "{}" : results[0].manifest.to_json());
  ej["frames"] = results.size();
  engine_json = ej.dump();
}

constexpr const char* kIndexFile = "index.json";

void run_blackbox_collect(const RunConfig& cfg, Stage& st,
                          std::string& engine_json) {
  auto model = splitnet::create_model(cfg.model.name, cfg.model.weights_path);
  const auto sm = splitnet::split(model, cfg.model.split_index);
  const auto samples =
      data::generate(cfg.train.train_size + cfg.train.test_size,
                     cfg.data.seed, model->preprocessing);

  fs::create_directories(st.dir / "images");
  std::vector<io::NamedTensor> feats, targets;
  json ids = json::array(), labels = json::array(), texts = json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "q%05zu", i);
    const Tensor y = sm.f1(samples[i].model);
    feats.push_back({id, y});
    targets.push_back({id, samples[i].model});
    io::write_png((st.dir / "images" / (std::string(id) + ".png")).string(),
                  samples[i].pixels);
    ids.push_back(id);
    labels.push_back(samples[i].label);
    texts.push_back(data::class_names()[samples[i].label]);
  }
  io::write_archive((st.dir / "features.finv").string(), "{}", feats);
  st.record("features.finv");
  io::write_archive((st.dir / "targets.finv").string(), "{}", targets);
  st.record("targets.finv");
  st.record_dir("images");

  json index;
  index["model"] = cfg.model.name;
  index["split_index"] = cfg.model.split_index;
  index["train_size"] = cfg.train.train_size;
  index["test_size"] = cfg.train.test_size;
  index["ids"] = ids;
  index["labels"] = labels;
  index["texts"] = texts;
  st.text(kIndexFile, index.dump(2));
  engine_json = json{{"pairs", samples.size()}}.dump();
}

blackbox::QueryDataset load_query_dataset(const std::string& dir, long offset,
                                          long count, bool with_text) {
  const fs::path root(dir);
  std::ifstream f(root / kIndexFile);
  if (!f) throw_input("dataset index not found in " + dir);
  json index;
  f >> index;
  const auto feats = io::read_archive((root / "features.finv").string());
  const auto targets = io::read_archive((root / "targets.finv").string());
  if (feats.tensors.size() != targets.tensors.size())
    throw_input("dataset blobs disagree in " + dir);
  blackbox::QueryDataset ds;
  const long n = static_cast<long>(feats.tensors.size());
  for (long i = offset; i < std::min(n, offset + count); ++i) {
    blackbox::QueryPair p;
    p.y = feats.tensors[static_cast<size_t>(i)].value;
    p.x_model = targets.tensors[static_cast<size_t>(i)].value;
    if (with_text)
      p.text = index.at("texts")[static_cast<size_t>(i)].get<std::string>();
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

void run_blackbox_train(const RunConfig& cfg, Stage& st,
                        std::string& engine_json) {
  if (cfg.data.dataset_dir.empty())
    throw_config("data.dataset_dir must point to a collected dataset");
  auto model = splitnet::create_model(cfg.model.name, cfg.model.weights_path);
  auto prior = std::shared_ptr<const priors::GenerativePrior>(
      priors::create_prior(cfg.prior.name,
                           prior_settings_of(cfg, model->input_shape)));

  const bool with_text = cfg.run.variant == "blackbox_train" &&
                         cfg.attack.lambda_txt > 0;
  auto ds = load_query_dataset(cfg.data.dataset_dir, 0, cfg.train.train_size,
                               with_text);
  if (ds.empty()) throw_input("dataset is empty");

  auto spec = blackbox::build_inverter(
      ds.feature_shape(), prior->latent_shape(), cfg.attack.frames,
      cfg.train.param_budget > 0 ? std::optional<long>(cfg.train.param_budget)
                                 : std::nullopt,
      cfg.train.fusion);

  blackbox::TrainedInverter inv;
  const auto tc = cfg.train_config();
  if (with_text) {
    priors::TextEncoder enc;
    inv = blackbox::train_inverter_with_text(ds, spec, prior, enc, tc);
  } else {
    inv = blackbox::train_inverter(ds, spec, prior, tc);
  }
  blackbox::save_inverter(inv, (st.dir / "inverter.finv").string());
  st.record("inverter.finv");
  engine_json = inv.manifest_json;
}

void run_blackbox_run(const RunConfig& cfg, Stage& st,
                      std::string& engine_json) {
  if (cfg.train.inverter_path.empty())
    throw_config("train.inverter_path must point to a trained inverter");
  if (cfg.data.dataset_dir.empty())
    throw_config("data.dataset_dir must point to a collected dataset");
  auto model = splitnet::create_model(cfg.model.name, cfg.model.weights_path);
  auto inv = blackbox::load_inverter(
      cfg.train.inverter_path, prior_settings_of(cfg, model->input_shape));

  auto ds = load_query_dataset(cfg.data.dataset_dir, cfg.train.train_size,
                               cfg.data.count, false);
  if (ds.empty()) throw_input("no test pairs beyond train_size");

  std::vector<Tensor> originals, recons, recons01;
  for (size_t i = 0; i < ds.pairs.size(); ++i) {
    const Tensor img = inv.run(ds.pairs[i].y);
    const Tensor px = data::to_pixels(img, model->preprocessing);
    char name[32];
    std::snprintf(name, sizeof(name), "recon_%04zu.png", i);
    st.png(name, px);
    originals.push_back(metrics::to_255(
        data::to_pixels(ds.pairs[i].x_model, model->preprocessing)));
    recons.push_back(metrics::to_255(px));
    recons01.push_back(px);
  }
  const auto rep = metrics::evaluate(originals, recons, recons01,
                                     toy_classifier(model));
  st.text("report.json", rep.to_json());
  st.text("report.csv", rep.to_csv());
  engine_json = json{{"pairs", ds.pairs.size()},
                     {"mean_psnr", rep.mean_psnr}}.dump();
}

void run_defend(const RunConfig& cfg, Stage& st, std::string& engine_json) {
  auto model = splitnet::create_model(cfg.model.name, cfg.model.weights_path);
  const auto sm = splitnet::split(model, cfg.model.split_index);
  auto prior = priors::create_prior(cfg.prior.name,
                                    prior_settings_of(cfg, model->input_shape));
  const auto samples =
      data::generate(cfg.data.count, cfg.data.seed, model->preprocessing);
  const auto ic = cfg.inversion_config();

  defense::AttackFn attack = [&](const splitnet::SplitModel& m,
                                 const splitnet::FeatureTensor& z) {
    const auto r = whitebox::invert(m, z, *prior, ic);
    if (r.images.empty()) throw_numeric("attack produced no image");
    return r.images[0];
  };
  defense::SweepOptions opts;
  opts.noise_seed = cfg.run.seed + 0x5eed;
  const auto rows = defense::tradeoff_sweep(sm, samples, attack,
                                            cfg.defense.sigmas, opts);
  st.text("tradeoff.csv", defense::tradeoff_csv(rows));
  json ej = json::array();
  for (const auto& r : rows)
    ej.push_back({{"sigma", r.sigma},
                  {"task_accuracy", r.task_accuracy},
                  {"attack_psnr", r.mean_psnr},
                  {"status", r.status}});
  engine_json = json{{"rows", ej}}.dump();
}

}  // namespace

std::string RunManifest::to_json() const {
  json j;
  j["toolkit_version"] = toolkit_version;
  j["run_id"] = run_id;
  j["variant"] = variant;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["status"] = status;
  j["wall_seconds"] = wall_seconds;
  json arts = json::array();
  for (const auto& a : artifacts)
    arts.push_back({{"name", a.name}, {"checksum", a.checksum}});
  j["artifacts"] = arts;
  j["config"] = json::parse(config_json);
  j["engine"] = json::parse(engine_manifest.empty() ? "{}" : engine_manifest);
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunManifest m;
  m.toolkit_version = j.at("toolkit_version").get<std::string>();
  m.run_id = j.at("run_id").get<std::string>();
  m.variant = j.at("variant").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.deterministic = j.at("deterministic").get<bool>();
  m.status = j.at("status").get<std::string>();
  m.wall_seconds = j.at("wall_seconds").get<double>();
  for (const auto& a : j.at("artifacts"))
    m.artifacts.push_back({a.at("name").get<std::string>(),
                           a.at("checksum").get<std::string>()});
  m.config_json = j.at("config").dump();
  m.engine_manifest = j.at("engine").dump();
  return m;
}

std::string run_directory(const RunConfig& cfg) {
  return (fs::path(cfg.run.output_dir) / run_id_of(cfg)).string();
}

RunConfig config_from_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw_config("manifest not found: " + manifest_path);
  std::ostringstream os;
  os << f.rdbuf();
  const RunManifest m = RunManifest::from_json(os.str());
  return RunConfig::from_json(m.config_json);
}

RunManifest run(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const std::string id = run_id_of(cfg);
  const fs::path out_root(cfg.run.output_dir);
  const fs::path final_dir = out_root / id;
  const fs::path tmp_dir = out_root / (".tmp-" + id);
  if (fs::exists(final_dir))
    throw_config("output directory already exists: " + final_dir.string());
  fs::create_directories(tmp_dir);

  Stage st;
  st.dir = tmp_dir;

  RunManifest m;
  m.toolkit_version = toolkit_version();
  m.run_id = id;
  m.variant = cfg.run.variant;
  m.config_hash = hex64(cfg.fingerprint());
  m.seed = cfg.run.seed;
  m.deterministic = deterministic_mode();
  m.config_json = cfg.to_json();

  try {
    std::string engine_json = "{}";
    if (cfg.run.variant == "whitebox" || cfg.run.variant == "whitebox_text" ||
        cfg.run.variant == "multiframe")
      run_whitebox(cfg, st, engine_json);
    else if (cfg.run.variant == "blackbox_collect")
      run_blackbox_collect(cfg, st, engine_json);
    else if (cfg.run.variant == "blackbox_train")
      run_blackbox_train(cfg, st, engine_json);
    else if (cfg.run.variant == "blackbox_run")
      run_blackbox_run(cfg, st, engine_json);
    else if (cfg.run.variant == "defend")
      run_defend(cfg, st, engine_json);
    else
      throw_config("variant '" + cfg.run.variant + "' has no runner");
    m.engine_manifest = engine_json;
  } catch (...) {
    // quarantine partial outputs; the final directory is never created
    int n = 0;
    fs::path q;
    do {
      q = out_root / ("quarantine-" + id + "-" + std::to_string(n++));
    } while (fs::exists(q));
    std::error_code ec;
    fs::rename(tmp_dir, q, ec);
    throw;
  }

  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  m.artifacts = st.artifacts;
  write_text(tmp_dir / "manifest.json", m.to_json());
  fs::rename(tmp_dir, final_dir);
  return m;
}

}  // namespace featinv::cli

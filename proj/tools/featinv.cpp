// featinv: feature-inversion attack and evaluation toolkit for split-DNN
// privacy analysis. See README.md for the configuration format.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "featinv/config.hpp"
#include "featinv/error.hpp"
#include "featinv/image_io.hpp"
#include "featinv/metrics.hpp"
#include "featinv/runner.hpp"
#include "featinv/splitnet.hpp"

namespace fs = std::filesystem;
using namespace featinv;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

cli::RunConfig load_config(const CommonArgs& args,
                           const std::string& variant) {
  cli::RunConfig cfg;
  if (!args.config_path.empty()) {
    if (args.config_path.size() > 5 &&
        args.config_path.substr(args.config_path.size() - 5) == ".json")
      cfg = cli::config_from_manifest(args.config_path);
    else
      cfg = cli::parse_config(args.config_path);
  }
  cfg.run.variant = variant;
  if (!args.output_dir.empty()) cfg.run.output_dir = args.output_dir;
  if (args.seed_set) cfg.run.seed = args.seed;
  for (const auto& ov : args.overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw_config("--set expects section.key=value, got '" + ov + "'");
    cli::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "TOML run configuration (or a manifest.json to re-run)");
  cmd->add_option("--set", args.overrides,
                  "Override a config key, e.g. --set attack.iterations=200");
  cmd->add_option("--out", args.output_dir, "Output directory");
  cmd->add_option("--seed", args.seed, "Master seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

int execute(const cli::RunConfig& cfg) {
  const auto manifest = cli::run(cfg);
  std::cout << "run " << manifest.run_id << " -> "
            << cli::run_directory(cfg) << " (" << manifest.status << ", "
            << manifest.artifacts.size() << " artifacts)\n";
  return 0;
}

int cmd_metrics(const std::string& original_dir, const std::string& recon_dir,
                const std::string& out_path, const std::string& model_name) {
  auto model = splitnet::create_model(model_name);
  std::vector<fs::path> orig_files, recon_files;
  for (const auto& e : fs::directory_iterator(original_dir))
    if (e.path().extension() == ".png") orig_files.push_back(e.path());
  for (const auto& e : fs::directory_iterator(recon_dir))
    if (e.path().extension() == ".png") recon_files.push_back(e.path());
  std::sort(orig_files.begin(), orig_files.end());
  std::sort(recon_files.begin(), recon_files.end());
  if (orig_files.size() != recon_files.size())
    throw_input("original/recon image counts differ (" +
                std::to_string(orig_files.size()) + " vs " +
                std::to_string(recon_files.size()) + ")");
  if (orig_files.empty()) throw_input("no .png files to compare");

  std::vector<Tensor> originals, recons, recons01;
  std::vector<std::string> ids;
  for (size_t i = 0; i < orig_files.size(); ++i) {
    const Tensor a = io::read_png(orig_files[i].string());
    const Tensor b = io::read_png(recon_files[i].string());
    originals.push_back(metrics::to_255(a));
    recons.push_back(metrics::to_255(b));
    recons01.push_back(b);
    ids.push_back(orig_files[i].stem().string());
  }
  const auto rep = metrics::evaluate(
      originals, recons, recons01,
      metrics::Classifier{"target:" + model->name,
                          [&model](const Tensor& img) {
                            return model->predict_probs(img);
                          }},
      ids);
  std::ofstream f(out_path);
  if (!f) throw_input("cannot write " + out_path);
  f << rep.to_json();
  const std::string csv_path =
      (fs::path(out_path).parent_path() /
       (fs::path(out_path).stem().string() + ".csv"))
          .string();
  std::ofstream fc(csv_path);
  fc << rep.to_csv();
  std::cout << "mean_psnr=" << rep.mean_psnr << " mean_ssim=" << rep.mean_ssim
            << " is=" << rep.inception_score << " -> " << out_path << "\n";
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& grid_path) {
  const fs::path dir(run_dir);
  std::ifstream f(dir / "manifest.json");
  if (!f) throw_input("no manifest.json in " + run_dir);
  std::ostringstream os;
  os << f.rdbuf();
  const auto manifest = cli::RunManifest::from_json(os.str());
  std::cout << "run_id: " << manifest.run_id << "\n"
            << "variant: " << manifest.variant << "\n"
            << "status: " << manifest.status << "\n"
            << "config_hash: " << manifest.config_hash << "\n"
            << "artifacts: " << manifest.artifacts.size() << "\n";
  std::vector<Tensor> images;
  for (const auto& a : manifest.artifacts) {
    if (a.name.size() > 4 &&
        a.name.substr(a.name.size() - 4) == ".png") {
      images.push_back(io::read_png((dir / a.name).string()));
    }
  }
  if (!grid_path.empty()) {
    if (images.empty()) throw_input("run has no PNG artifacts to tile");
    io::write_png(grid_path,
                  io::make_grid(images, static_cast<int>(
                                            std::min<size_t>(4, images.size()))));
    std::cout << "grid: " << grid_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-inversion attacks and defenses for split DNNs"};
  app.require_subcommand(1);

  CommonArgs wb_args, wbt_args, mf_args, def_args;
  CommonArgs bb_collect_args, bb_train_args, bb_run_args;
  std::string text_prompt, frames_dir;

  auto* wb = app.add_subcommand("whitebox", "gradient inversion of features");
  add_common(wb, wb_args);

  auto* wbt = app.add_subcommand("whitebox-text",
                                 "inversion with a textual prior");
  add_common(wbt, wbt_args);
  wbt->add_option("--text", text_prompt, "Prompt describing the target");

  auto* mf = app.add_subcommand("multiframe",
                                "joint inversion of correlated frames");
  add_common(mf, mf_args);
  mf->add_option("--frames", frames_dir, "Directory of frame PNGs");

  auto* bb = app.add_subcommand("blackbox", "query-based inversion pipeline");
  bb->require_subcommand(1);
  auto* bbc = bb->add_subcommand("collect", "record (input, feature) queries");
  add_common(bbc, bb_collect_args);
  auto* bbt = bb->add_subcommand("train", "train the inversion network");
  add_common(bbt, bb_train_args);
  auto* bbr = bb->add_subcommand("run", "invert features with a trained net");
  add_common(bbr, bb_run_args);

  std::string m_original, m_recon, m_out = "report.json",
              m_model = "toy_cnn";
  auto* me = app.add_subcommand("metrics", "score reconstructions");
  me->add_option("--original", m_original, "Directory of originals")
      ->required();
  me->add_option("--recon", m_recon, "Directory of reconstructions")
      ->required();
  me->add_option("--out", m_out, "Report JSON path");
  me->add_option("--classifier-model", m_model,
                 "Registered model used for the inception score");

  auto* de = app.add_subcommand("defend", "noise-defense trade-off sweep");
  add_common(de, def_args);
  std::string sigmas_csv;
  de->add_option("--sigmas", sigmas_csv, "Comma-separated noise levels");

  std::string r_run, r_grid;
  auto* re = app.add_subcommand("report", "summarize a finished run");
  re->add_option("--run", r_run, "Run directory")->required();
  re->add_option("--grid", r_grid, "Write an image grid PNG here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (wb->parsed()) return execute(load_config(wb_args, "whitebox"));
    if (wbt->parsed()) {
      auto cfg = load_config(wbt_args, "whitebox_text");
      if (!text_prompt.empty()) cfg.attack.text = text_prompt;
      return execute(cfg);
    }
    if (mf->parsed()) {
      auto cfg = load_config(mf_args, "multiframe");
      if (!frames_dir.empty()) {
        cfg.data.source = "dir";
        cfg.data.dir = frames_dir;
      }
      return execute(cfg);
    }
    if (bbc->parsed())
      return execute(load_config(bb_collect_args, "blackbox_collect"));
    if (bbt->parsed())
      return execute(load_config(bb_train_args, "blackbox_train"));
    if (bbr->parsed())
      return execute(load_config(bb_run_args, "blackbox_run"));
    if (me->parsed()) return cmd_metrics(m_original, m_recon, m_out, m_model);
    if (de->parsed()) {
      auto cfg = load_config(def_args, "defend");
      if (!sigmas_csv.empty()) {
        cfg.defense.sigmas.clear();
        std::stringstream ss(sigmas_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
          cfg.defense.sigmas.push_back(std::stod(tok));
        cfg.validate();
      }
      return execute(cfg);
    }
    if (re->parsed()) return cmd_report(r_run, r_grid);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

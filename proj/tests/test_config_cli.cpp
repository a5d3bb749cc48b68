#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "featinv/config.hpp"
#include "featinv/error.hpp"
#include "featinv/runner.hpp"
#include "test_support.hpp"

using namespace featinv;
namespace fs = std::filesystem;

TEST_CASE("empty attack section resolves the standard defaults") {
  const auto cfg = cli::parse_config_text("[run]\nvariant = \"whitebox\"\n");
  CHECK(cfg.attack.iterations == 1500);
  CHECK(cfg.attack.learning_rate == doctest::Approx(0.1));
  CHECK(cfg.attack.beta1 == doctest::Approx(0.9));
  CHECK(cfg.attack.beta2 == doctest::Approx(0.999));
  CHECK(cfg.attack.init_std == doctest::Approx(0.1));
  CHECK(cfg.attack.lambda_s == doctest::Approx(1.0));  // omitted -> 1
  CHECK(cfg.prior.sampling_steps == 20);

  const auto ic = cfg.inversion_config();
  CHECK(ic.iterations == 1500);
  CHECK(ic.weights.lambda_s == doctest::Approx(1.0));
  CHECK(ic.lr_schedule.size() == 2);
}

TEST_CASE("validation errors carry key paths") {
  CHECK_THROWS_WITH_AS(
      cli::parse_config_text("[attack]\niterations = -5\n"),
      doctest::Contains("attack.iterations"), Error);
  CHECK_THROWS_WITH_AS(cli::parse_config_text("[attack]\nunknown_knob = 1\n"),
                       doctest::Contains("attack.unknown_knob"), Error);
  CHECK_THROWS_WITH_AS(cli::parse_config_text("[attack]\niterations = \"x\"\n"),
                       doctest::Contains("integer"), Error);
  CHECK_THROWS_AS(cli::parse_config_text("stray = 1\n"), Error);
  CHECK_THROWS_AS(cli::parse_config_text("[run]\nvariant = \"wat\"\n"), Error);
}

TEST_CASE("toml round trip is a fixed point") {
  auto cfg = cli::parse_config_text(
      "[run]\nvariant = \"multiframe\"\nseed = 17\n"
      "[attack]\nframes = 4\nlambda_c = 5.0\nlr_decay_points = [0.5]\n"
      "[defense]\nsigmas = [0.0, 0.25]\n");
  const std::string once = cfg.to_toml();
  const auto reparsed = cli::parse_config_text(once);
  CHECK(reparsed.to_toml() == once);
  const auto json_back = cli::RunConfig::from_json(cfg.to_json());
  CHECK(json_back.to_toml() == once);
}

TEST_CASE("overrides: one-for-one key replacement with validation") {
  cli::RunConfig cfg;
  cli::apply_override(cfg, "attack.iterations", "250");
  CHECK(cfg.attack.iterations == 250);
  cli::apply_override(cfg, "model.name", "\"toy_cnn5\"");
  CHECK(cfg.model.name == "toy_cnn5");
  CHECK_THROWS_AS(cli::apply_override(cfg, "attack.nope", "1"), Error);
  CHECK_THROWS_AS(cli::apply_override(cfg, "attack.iterations", "0"), Error);
}

TEST_CASE("fingerprint ignores the output directory only") {
  cli::RunConfig a, b;
  b.run.output_dir = "elsewhere";
  CHECK(a.fingerprint() == b.fingerprint());
  b.run.seed = 9;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("error kinds map to the documented exit codes") {
  CHECK(Error(ErrorKind::Config, "x").exit_code() == 2);
  CHECK(Error(ErrorKind::Input, "x").exit_code() == 2);
  CHECK(Error(ErrorKind::Contract, "x").exit_code() == 2);
  CHECK(Error(ErrorKind::Numeric, "x").exit_code() == 3);
  CHECK(Error(ErrorKind::Capability, "x").exit_code() == 4);
}

namespace {

cli::RunConfig tiny_whitebox(const std::string& out_dir, std::uint64_t seed) {
  cli::RunConfig cfg;
  cfg.run.variant = "whitebox";
  cfg.run.output_dir = out_dir;
  cfg.run.seed = seed;
  cfg.model.name = "toy_cnn_idprefix";
  cfg.model.split_index = 1;
  cfg.prior.name = "identity";
  cfg.attack.iterations = 25;
  cfg.attack.lambda_s = 0.0;
  cfg.data.count = 1;
  cfg.data.seed = 321;
  return cfg;
}

}  // namespace

TEST_CASE("runner emits the declared artifacts and a complete manifest") {
  const std::string out = "test_runs_a";
  fs::remove_all(out);
  const auto cfg = tiny_whitebox(out, 5);
  const auto manifest = cli::run(cfg);

  const fs::path dir = cli::run_directory(cfg);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "recon_0000.png"));
  CHECK(fs::exists(dir / "loss_trace.csv"));
  CHECK(fs::exists(dir / "report.json"));

  // every artifact in the directory is referenced by the manifest
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") ++files;
  CHECK(files == manifest.artifacts.size());
  CHECK(manifest.status == "ok");

  // no stray temp dirs
  for (const auto& e : fs::directory_iterator(out))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("re-running the same configuration reproduces every checksum") {
  fs::remove_all("test_runs_b1");
  fs::remove_all("test_runs_b2");
  auto c1 = tiny_whitebox("test_runs_b1", 6);
  auto c2 = tiny_whitebox("test_runs_b2", 6);
  const auto m1 = cli::run(c1);
  const auto m2 = cli::run(c2);
  REQUIRE(m1.artifacts.size() == m2.artifacts.size());
  for (size_t i = 0; i < m1.artifacts.size(); ++i) {
    CHECK(m1.artifacts[i].name == m2.artifacts[i].name);
    CHECK(m1.artifacts[i].checksum == m2.artifacts[i].checksum);
  }
  fs::remove_all("test_runs_b1");
  fs::remove_all("test_runs_b2");
}

TEST_CASE("a run can be reconstructed from its manifest") {
  fs::remove_all("test_runs_c1");
  fs::remove_all("test_runs_c2");
  auto cfg = tiny_whitebox("test_runs_c1", 7);
  const auto m1 = cli::run(cfg);

  const std::string manifest_path =
      (fs::path(cli::run_directory(cfg)) / "manifest.json").string();
  auto replay = cli::config_from_manifest(manifest_path);
  replay.run.output_dir = "test_runs_c2";
  const auto m2 = cli::run(replay);
  REQUIRE(m1.artifacts.size() == m2.artifacts.size());
  for (size_t i = 0; i < m1.artifacts.size(); ++i)
    CHECK(m1.artifacts[i].checksum == m2.artifacts[i].checksum);
  fs::remove_all("test_runs_c1");
  fs::remove_all("test_runs_c2");
}

TEST_CASE("failed runs leave nothing in the final output directory") {
  const std::string out = "test_runs_d";
  fs::remove_all(out);
  cli::RunConfig cfg = tiny_whitebox(out, 8);
  cfg.run.variant = "blackbox_train";  // requires dataset_dir, so it throws
  CHECK_THROWS_AS(cli::run(cfg), Error);
  bool final_dir_exists = false;
  bool quarantined = false;
  if (fs::exists(out)) {
    for (const auto& e : fs::directory_iterator(out)) {
      const std::string name = e.path().filename().string();
      if (name.find("quarantine-") == 0) quarantined = true;
      if (name.find("blackbox_train-") == 0) final_dir_exists = true;
    }
  }
  CHECK_FALSE(final_dir_exists);
  CHECK(quarantined);
  fs::remove_all(out);
}

TEST_CASE("manifest json round trips") {
  fs::remove_all("test_runs_e");
  const auto cfg = tiny_whitebox("test_runs_e", 9);
  const auto m = cli::run(cfg);
  const auto back = cli::RunManifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  CHECK(back.run_id == m.run_id);
  CHECK(back.config_hash == m.config_hash);
  fs::remove_all("test_runs_e");
}

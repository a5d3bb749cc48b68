#include "featinv/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"

namespace featinv::cli {

using nlohmann::json;

namespace {

// ------------------------------------------------------- TOML-subset value

struct TomlValue {
  enum Kind { Str, Num, Bool, NumArray, StrArray } kind = Str;
  std::string s;
  double num = 0;
  bool is_int = false;
  long i = 0;
  bool b = false;
  std::vector<double> nums;
  std::vector<std::string> strs;
};

std::string strip(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string parse_quoted(const std::string& text, const std::string& where) {
  if (text.size() < 2 || text.front() != '"' || text.back() != '"')
    throw_config(where + ": expected a quoted string, got " + text);
  std::string out;
  for (size_t i = 1; i + 1 < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 2 < text.size()) {
      const char n = text[++i];
      if (n == 'n') out.push_back('\n');
      else if (n == 't') out.push_back('\t');
      else if (n == '"') out.push_back('"');
      else if (n == '\\') out.push_back('\\');
      else throw_config(where + ": unsupported escape \\" + std::string(1, n));
    } else if (c == '"') {
      throw_config(where + ": stray quote inside string");
    } else {
      out.push_back(c);
    }
  }
  return out;
}

TomlValue parse_scalar(const std::string& raw, const std::string& where) {
  TomlValue v;
  const std::string t = strip(raw);
  if (t.empty()) throw_config(where + ": empty value");
  if (t.front() == '"') {
    v.kind = TomlValue::Str;
    v.s = parse_quoted(t, where);
    return v;
  }
  if (t == "true" || t == "false") {
    v.kind = TomlValue::Bool;
    v.b = (t == "true");
    return v;
  }
  try {
    size_t used = 0;
    const double d = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    v.kind = TomlValue::Num;
    v.num = d;
    if (t.find_first_of(".eE") == std::string::npos) {
      v.is_int = true;
      v.i = std::stol(t);
    }
    return v;
  } catch (const std::exception&) {
    throw_config(where + ": cannot parse value '" + t + "'");
  }
}

TomlValue parse_value(const std::string& raw, const std::string& where) {
  const std::string t = strip(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw_config(where + ": unterminated array");
    TomlValue v;
    const std::string inner = t.substr(1, t.size() - 2);
    std::vector<std::string> parts;
    std::string cur;
    bool in_str = false;
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!strip(cur).empty()) parts.push_back(cur);
    bool all_num = true;
    for (const auto& p : parts)
      if (strip(p).empty() || strip(p).front() == '"') all_num = false;
    if (all_num) {
      v.kind = TomlValue::NumArray;
      for (const auto& p : parts) v.nums.push_back(parse_scalar(p, where).num);
    } else {
      v.kind = TomlValue::StrArray;
      for (const auto& p : parts)
        v.strs.push_back(parse_quoted(strip(p), where));
    }
    return v;
  }
  return parse_scalar(t, where);
}

// ------------------------------------------------------------- the schema

struct Schema {
  using Setter = std::function<void(RunConfig&, const TomlValue&,
                                    const std::string& path)>;
  std::map<std::string, Setter> setters;

  void set(RunConfig& cfg, const std::string& path, const TomlValue& v) const {
    auto it = setters.find(path);
    if (it == setters.end())
      throw_config("unknown configuration key '" + path + "'");
    it->second(cfg, v, path);
  }
};

long need_int(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Num || !v.is_int)
    throw_config(path + ": expected an integer");
  return v.i;
}

double need_num(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Num) throw_config(path + ": expected a number");
  return v.num;
}

std::string need_str(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Str) throw_config(path + ": expected a string");
  return v.s;
}

bool need_bool(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Bool)
    throw_config(path + ": expected true or false");
  return v.b;
}

std::vector<double> need_num_array(const TomlValue& v,
                                   const std::string& path) {
  if (v.kind != TomlValue::NumArray)
    throw_config(path + ": expected an array of numbers");
  return v.nums;
}

const Schema& schema() {
  static const Schema s = [] {
    Schema sc;
    auto& m = sc.setters;
    m["run.variant"] = [](RunConfig& c, const TomlValue& v,
                          const std::string& p) {
      c.run.variant = need_str(v, p);
    };
    m["run.output_dir"] = [](RunConfig& c, const TomlValue& v,
                             const std::string& p) {
      c.run.output_dir = need_str(v, p);
    };
    m["run.seed"] = [](RunConfig& c, const TomlValue& v,
                       const std::string& p) {
      c.run.seed = static_cast<std::uint64_t>(need_int(v, p));
    };
    m["model.name"] = [](RunConfig& c, const TomlValue& v,
                         const std::string& p) {
      c.model.name = need_str(v, p);
    };
    m["model.split_index"] = [](RunConfig& c, const TomlValue& v,
                                const std::string& p) {
      c.model.split_index = static_cast<int>(need_int(v, p));
    };
    m["model.weights_path"] = [](RunConfig& c, const TomlValue& v,
                                 const std::string& p) {
      c.model.weights_path = need_str(v, p);
    };
    m["prior.name"] = [](RunConfig& c, const TomlValue& v,
                         const std::string& p) {
      c.prior.name = need_str(v, p);
    };
    m["prior.weights_path"] = [](RunConfig& c, const TomlValue& v,
                                 const std::string& p) {
      c.prior.weights_path = need_str(v, p);
    };
    m["prior.sampling_steps"] = [](RunConfig& c, const TomlValue& v,
                                   const std::string& p) {
      c.prior.sampling_steps = static_cast<int>(need_int(v, p));
    };
    m["prior.guidance_scale"] = [](RunConfig& c, const TomlValue& v,
                                   const std::string& p) {
      c.prior.guidance_scale = need_num(v, p);
    };
    m["prior.scheduler"] = [](RunConfig& c, const TomlValue& v,
                              const std::string& p) {
      c.prior.scheduler = need_str(v, p);
    };
    m["attack.iterations"] = [](RunConfig& c, const TomlValue& v,
                                const std::string& p) {
      c.attack.iterations = static_cast<int>(need_int(v, p));
    };
    m["attack.learning_rate"] = [](RunConfig& c, const TomlValue& v,
                                   const std::string& p) {
      c.attack.learning_rate = need_num(v, p);
    };
    m["attack.beta1"] = [](RunConfig& c, const TomlValue& v,
                           const std::string& p) {
      c.attack.beta1 = need_num(v, p);
    };
    m["attack.beta2"] = [](RunConfig& c, const TomlValue& v,
                           const std::string& p) {
      c.attack.beta2 = need_num(v, p);
    };
    m["attack.init_std"] = [](RunConfig& c, const TomlValue& v,
                              const std::string& p) {
      c.attack.init_std = need_num(v, p);
    };
    m["attack.lambda_s"] = [](RunConfig& c, const TomlValue& v,
                              const std::string& p) {
      c.attack.lambda_s = need_num(v, p);
    };
    m["attack.lambda_txt"] = [](RunConfig& c, const TomlValue& v,
                                const std::string& p) {
      c.attack.lambda_txt = need_num(v, p);
    };
    m["attack.lambda_c"] = [](RunConfig& c, const TomlValue& v,
                              const std::string& p) {
      c.attack.lambda_c = need_num(v, p);
    };
    m["attack.alpha"] = [](RunConfig& c, const TomlValue& v,
                           const std::string& p) {
      c.attack.alpha = need_num(v, p);
    };
    m["attack.text"] = [](RunConfig& c, const TomlValue& v,
                          const std::string& p) {
      c.attack.text = need_str(v, p);
    };
    m["attack.frames"] = [](RunConfig& c, const TomlValue& v,
                            const std::string& p) {
      c.attack.frames = static_cast<int>(need_int(v, p));
    };
    m["attack.frame_shift"] = [](RunConfig& c, const TomlValue& v,
                                 const std::string& p) {
      c.attack.frame_shift = need_num(v, p);
    };
    m["attack.lr_decay_points"] = [](RunConfig& c, const TomlValue& v,
                                     const std::string& p) {
      c.attack.lr_decay_points = need_num_array(v, p);
    };
    m["attack.lr_decay_factor"] = [](RunConfig& c, const TomlValue& v,
                                     const std::string& p) {
      c.attack.lr_decay_factor = need_num(v, p);
    };
    m["data.source"] = [](RunConfig& c, const TomlValue& v,
                          const std::string& p) {
      c.data.source = need_str(v, p);
    };
    m["data.count"] = [](RunConfig& c, const TomlValue& v,
                         const std::string& p) {
      c.data.count = static_cast<int>(need_int(v, p));
    };
    m["data.seed"] = [](RunConfig& c, const TomlValue& v,
                        const std::string& p) {
      c.data.seed = static_cast<std::uint64_t>(need_int(v, p));
    };
    m["data.dir"] = [](RunConfig& c, const TomlValue& v,
                       const std::string& p) {
      c.data.dir = need_str(v, p);
    };
    m["data.dataset_dir"] = [](RunConfig& c, const TomlValue& v,
                               const std::string& p) {
      c.data.dataset_dir = need_str(v, p);
    };
    m["train.epochs"] = [](RunConfig& c, const TomlValue& v,
                           const std::string& p) {
      c.train.epochs = static_cast<int>(need_int(v, p));
    };
    m["train.batch_size"] = [](RunConfig& c, const TomlValue& v,
                               const std::string& p) {
      c.train.batch_size = static_cast<int>(need_int(v, p));
    };
    m["train.learning_rate"] = [](RunConfig& c, const TomlValue& v,
                                  const std::string& p) {
      c.train.learning_rate = need_num(v, p);
    };
    m["train.train_size"] = [](RunConfig& c, const TomlValue& v,
                               const std::string& p) {
      c.train.train_size = static_cast<int>(need_int(v, p));
    };
    m["train.test_size"] = [](RunConfig& c, const TomlValue& v,
                              const std::string& p) {
      c.train.test_size = static_cast<int>(need_int(v, p));
    };
    m["train.holdout_fraction"] = [](RunConfig& c, const TomlValue& v,
                                     const std::string& p) {
      c.train.holdout_fraction = need_num(v, p);
    };
    m["train.param_budget"] = [](RunConfig& c, const TomlValue& v,
                                 const std::string& p) {
      c.train.param_budget = need_int(v, p);
    };
    m["train.fusion"] = [](RunConfig& c, const TomlValue& v,
                           const std::string& p) {
      c.train.fusion = need_bool(v, p);
    };
    m["train.inverter_path"] = [](RunConfig& c, const TomlValue& v,
                                  const std::string& p) {
      c.train.inverter_path = need_str(v, p);
    };
    m["defense.sigmas"] = [](RunConfig& c, const TomlValue& v,
                             const std::string& p) {
      c.defense.sigmas = need_num_array(v, p);
    };
    m["defense.noise"] = [](RunConfig& c, const TomlValue& v,
                            const std::string& p) {
      c.defense.noise = need_str(v, p);
    };
    return sc;
  }();
  return s;
}

}  // namespace

const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v = {
      "whitebox",        "whitebox_text", "multiframe", "blackbox_collect",
      "blackbox_train",  "blackbox_run",  "defend"};
  return v;
}

RunConfig parse_config_text(const std::string& toml_text,
                            const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(toml_text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside strings
    std::string code;
    bool in_str = false;
    for (char c : line) {
      if (c == '"') in_str = !in_str;
      if (c == '#' && !in_str) break;
      code.push_back(c);
    }
    code = strip(code);
    if (code.empty()) continue;
    const std::string where =
        origin + ":" + std::to_string(lineno);
    if (code.front() == '[') {
      if (code.back() != ']')
        throw_config(where + ": malformed section header");
      section = strip(code.substr(1, code.size() - 2));
      if (section.empty()) throw_config(where + ": empty section name");
      continue;
    }
    const size_t eq = code.find('=');
    if (eq == std::string::npos)
      throw_config(where + ": expected key = value");
    const std::string key = strip(code.substr(0, eq));
    if (key.empty()) throw_config(where + ": empty key");
    if (section.empty())
      throw_config(where + ": key '" + key + "' outside any [section]");
    const std::string path = section + "." + key;
    const TomlValue v = parse_value(code.substr(eq + 1), where + " (" + path + ")");
    schema().set(cfg, path, v);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw_config("config file not found: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config_text(os.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  const TomlValue v = parse_value(value, "--set " + dotted_key);
  schema().set(cfg, dotted_key, v);
  cfg.validate();
}

void RunConfig::validate() const {
  const auto& variants = known_variants();
  bool ok = false;
  for (const auto& v : variants) ok = ok || v == run.variant;
  if (!ok) throw_config("run.variant '" + run.variant + "' is not one of " +
                        [&] {
                          std::string all;
                          for (const auto& v : variants)
                            all += (all.empty() ? "" : "|") + v;
                          return all;
                        }());
  if (model.name.empty()) throw_config("model.name must be set");
  if (model.split_index < 1)
    throw_config("model.split_index must be >= 1, got " +
                 std::to_string(model.split_index));
  if (prior.name != "identity" && prior.name != "toy_decoder" &&
      prior.name != "ldm_adapter")
    throw_config("prior.name '" + prior.name +
                 "' is not one of identity|toy_decoder|ldm_adapter");
  if (prior.sampling_steps < 1)
    throw_config("prior.sampling_steps must be >= 1");
  if (attack.iterations < 1)
    throw_config("attack.iterations must be >= 1, got " +
                 std::to_string(attack.iterations));
  if (!(attack.learning_rate > 0))
    throw_config("attack.learning_rate must be positive");
  if (!(attack.init_std > 0)) throw_config("attack.init_std must be positive");
  if (attack.lambda_s < 0 || attack.lambda_txt < 0 || attack.lambda_c < 0)
    throw_config("attack.lambda_* must be non-negative");
  if (attack.alpha < 1 || attack.alpha > 2)
    throw_config("attack.alpha must lie in [1,2]");
  if (attack.frames < 1) throw_config("attack.frames must be >= 1");
  if (!(attack.lr_decay_factor > 0))
    throw_config("attack.lr_decay_factor must be positive");
  for (double p : attack.lr_decay_points)
    if (p < 0 || p > 1)
      throw_config("attack.lr_decay_points entries must lie in [0,1]");
  if (data.source != "synthetic" && data.source != "dir")
    throw_config("data.source must be synthetic or dir");
  if (data.count < 1) throw_config("data.count must be >= 1");
  if (train.epochs < 1) throw_config("train.epochs must be >= 1");
  if (train.batch_size < 1) throw_config("train.batch_size must be >= 1");
  if (!(train.learning_rate > 0))
    throw_config("train.learning_rate must be positive");
  if (train.train_size < 1 || train.test_size < 1)
    throw_config("train.train_size/test_size must be >= 1");
  if (train.holdout_fraction < 0 || train.holdout_fraction >= 1)
    throw_config("train.holdout_fraction must lie in [0,1)");
  if (train.param_budget < 0)
    throw_config("train.param_budget must be >= 0");
  if (defense.sigmas.empty()) throw_config("defense.sigmas must be non-empty");
  for (double s : defense.sigmas)
    if (s < 0) throw_config("defense.sigmas entries must be >= 0");
  if (defense.noise != "gaussian" && defense.noise != "laplace")
    throw_config("defense.noise must be gaussian or laplace");
}

whitebox::InversionConfig RunConfig::inversion_config() const {
  whitebox::InversionConfig ic;
  ic.iterations = attack.iterations;
  ic.learning_rate = attack.learning_rate;
  ic.beta1 = attack.beta1;
  ic.beta2 = attack.beta2;
  ic.init_std = attack.init_std;
  ic.seed = run.seed;
  ic.sampling_steps = prior.sampling_steps;
  ic.weights.lambda_s = attack.lambda_s;
  ic.weights.lambda_txt = attack.lambda_txt;
  ic.weights.lambda_c = attack.lambda_c;
  ic.weights.alpha = attack.alpha;
  ic.lr_schedule.clear();
  for (double p : attack.lr_decay_points)
    ic.lr_schedule.push_back({p, attack.lr_decay_factor});
  return ic;
}

blackbox::TrainConfig RunConfig::train_config() const {
  blackbox::TrainConfig tc;
  tc.epochs = train.epochs;
  tc.batch_size = train.batch_size;
  tc.learning_rate = train.learning_rate;
  tc.beta1 = attack.beta1;
  tc.beta2 = attack.beta2;
  tc.seed = run.seed;
  tc.holdout_fraction = train.holdout_fraction;
  tc.weights.lambda_s = attack.lambda_s;
  tc.weights.lambda_txt = attack.lambda_txt;
  tc.weights.alpha = attack.alpha;
  return tc;
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string num_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  // ensure a float marker so round-trips preserve the kind
  const std::string s = os.str();
  return s.find_first_of(".eE") == std::string::npos ? s + ".0" : s;
}

std::string arr_str(const std::vector<double>& v) {
  std::string out = "[";
  for (size_t i = 0; i < v.size(); ++i)
    out += (i ? ", " : "") + num_str(v[i]);
  return out + "]";
}

}  // namespace

std::string RunConfig::to_toml() const {
  std::ostringstream os;
  os << "[run]\n";
  os << "variant = " << quote(run.variant) << "\n";
  os << "output_dir = " << quote(run.output_dir) << "\n";
  os << "seed = " << run.seed << "\n\n";
  os << "[model]\n";
  os << "name = " << quote(model.name) << "\n";
  os << "split_index = " << model.split_index << "\n";
  os << "weights_path = " << quote(model.weights_path) << "\n\n";
  os << "[prior]\n";
  os << "name = " << quote(prior.name) << "\n";
  os << "weights_path = " << quote(prior.weights_path) << "\n";
  os << "sampling_steps = " << prior.sampling_steps << "\n";
  os << "guidance_scale = " << num_str(prior.guidance_scale) << "\n";
  os << "scheduler = " << quote(prior.scheduler) << "\n\n";
  os << "[attack]\n";
  os << "iterations = " << attack.iterations << "\n";
  os << "learning_rate = " << num_str(attack.learning_rate) << "\n";
  os << "beta1 = " << num_str(attack.beta1) << "\n";
  os << "beta2 = " << num_str(attack.beta2) << "\n";
  os << "init_std = " << num_str(attack.init_std) << "\n";
  os << "lambda_s = " << num_str(attack.lambda_s) << "\n";
  os << "lambda_txt = " << num_str(attack.lambda_txt) << "\n";
  os << "lambda_c = " << num_str(attack.lambda_c) << "\n";
  os << "alpha = " << num_str(attack.alpha) << "\n";
  os << "text = " << quote(attack.text) << "\n";
  os << "frames = " << attack.frames << "\n";
  os << "frame_shift = " << num_str(attack.frame_shift) << "\n";
  os << "lr_decay_points = " << arr_str(attack.lr_decay_points) << "\n";
  os << "lr_decay_factor = " << num_str(attack.lr_decay_factor) << "\n\n";
  os << "[data]\n";
  os << "source = " << quote(data.source) << "\n";
  os << "count = " << data.count << "\n";
  os << "seed = " << data.seed << "\n";
  os << "dir = " << quote(data.dir) << "\n";
  os << "dataset_dir = " << quote(data.dataset_dir) << "\n\n";
  os << "[train]\n";
  os << "epochs = " << train.epochs << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "learning_rate = " << num_str(train.learning_rate) << "\n";
  os << "train_size = " << train.train_size << "\n";
  os << "test_size = " << train.test_size << "\n";
  os << "holdout_fraction = " << num_str(train.holdout_fraction) << "\n";
  os << "param_budget = " << train.param_budget << "\n";
  os << "fusion = " << (train.fusion ? "true" : "false") << "\n";
  os << "inverter_path = " << quote(train.inverter_path) << "\n\n";
  os << "[defense]\n";
  os << "sigmas = " << arr_str(defense.sigmas) << "\n";
  os << "noise = " << quote(defense.noise) << "\n";
  return os.str();
}

std::string RunConfig::to_json() const {
  json j;
  j["run"] = {{"variant", run.variant},
              {"output_dir", run.output_dir},
              {"seed", run.seed}};
  j["model"] = {{"name", model.name},
                {"split_index", model.split_index},
                {"weights_path", model.weights_path}};
  j["prior"] = {{"name", prior.name},
                {"weights_path", prior.weights_path},
                {"sampling_steps", prior.sampling_steps},
                {"guidance_scale", prior.guidance_scale},
                {"scheduler", prior.scheduler}};
  j["attack"] = {{"iterations", attack.iterations},
                 {"learning_rate", attack.learning_rate},
                 {"beta1", attack.beta1},
                 {"beta2", attack.beta2},
                 {"init_std", attack.init_std},
                 {"lambda_s", attack.lambda_s},
                 {"lambda_txt", attack.lambda_txt},
                 {"lambda_c", attack.lambda_c},
                 {"alpha", attack.alpha},
                 {"text", attack.text},
                 {"frames", attack.frames},
                 {"frame_shift", attack.frame_shift},
                 {"lr_decay_points", attack.lr_decay_points},
                 {"lr_decay_factor", attack.lr_decay_factor}};
  j["data"] = {{"source", data.source},
               {"count", data.count},
               {"seed", data.seed},
               {"dir", data.dir},
               {"dataset_dir", data.dataset_dir}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"train_size", train.train_size},
                {"test_size", train.test_size},
                {"holdout_fraction", train.holdout_fraction},
                {"param_budget", train.param_budget},
                {"fusion", train.fusion},
                {"inverter_path", train.inverter_path}};
  j["defense"] = {{"sigmas", defense.sigmas}, {"noise", defense.noise}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunConfig c;
  const auto& r = j.at("run");
  c.run.variant = r.at("variant").get<std::string>();
  c.run.output_dir = r.at("output_dir").get<std::string>();
  c.run.seed = r.at("seed").get<std::uint64_t>();
  const auto& mo = j.at("model");
  c.model.name = mo.at("name").get<std::string>();
  c.model.split_index = mo.at("split_index").get<int>();
  c.model.weights_path = mo.at("weights_path").get<std::string>();
  const auto& pr = j.at("prior");
  c.prior.name = pr.at("name").get<std::string>();
  c.prior.weights_path = pr.at("weights_path").get<std::string>();
  c.prior.sampling_steps = pr.at("sampling_steps").get<int>();
  c.prior.guidance_scale = pr.at("guidance_scale").get<double>();
  c.prior.scheduler = pr.at("scheduler").get<std::string>();
  const auto& at = j.at("attack");
  c.attack.iterations = at.at("iterations").get<int>();
  c.attack.learning_rate = at.at("learning_rate").get<double>();
  c.attack.beta1 = at.at("beta1").get<double>();
  c.attack.beta2 = at.at("beta2").get<double>();
  c.attack.init_std = at.at("init_std").get<double>();
  c.attack.lambda_s = at.at("lambda_s").get<double>();
  c.attack.lambda_txt = at.at("lambda_txt").get<double>();
  c.attack.lambda_c = at.at("lambda_c").get<double>();
  c.attack.alpha = at.at("alpha").get<double>();
  c.attack.text = at.at("text").get<std::string>();
  c.attack.frames = at.at("frames").get<int>();
  c.attack.frame_shift = at.at("frame_shift").get<double>();
  c.attack.lr_decay_points = at.at("lr_decay_points").get<std::vector<double>>();
  c.attack.lr_decay_factor = at.at("lr_decay_factor").get<double>();
  const auto& da = j.at("data");
  c.data.source = da.at("source").get<std::string>();
  c.data.count = da.at("count").get<int>();
  c.data.seed = da.at("seed").get<std::uint64_t>();
  c.data.dir = da.at("dir").get<std::string>();
  c.data.dataset_dir = da.at("dataset_dir").get<std::string>();
  const auto& tr = j.at("train");
  c.train.epochs = tr.at("epochs").get<int>();
  c.train.batch_size = tr.at("batch_size").get<int>();
  c.train.learning_rate = tr.at("learning_rate").get<double>();
  c.train.train_size = tr.at("train_size").get<int>();
  c.train.test_size = tr.at("test_size").get<int>();
  c.train.holdout_fraction = tr.at("holdout_fraction").get<double>();
  c.train.param_budget = tr.at("param_budget").get<long>();
  c.train.fusion = tr.at("fusion").get<bool>();
  c.train.inverter_path = tr.at("inverter_path").get<std::string>();
  const auto& de = j.at("defense");
  c.defense.sigmas = de.at("sigmas").get<std::vector<double>>();
  c.defense.noise = de.at("noise").get<std::string>();
  c.validate();
  return c;
}

std::uint64_t RunConfig::fingerprint() const {
  RunConfig copy = *this;
  copy.run.output_dir.clear();
  const std::string s = copy.to_json();
  return fnv1a64(s.data(), s.size());
}

}  // namespace featinv::cli

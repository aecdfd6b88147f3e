#include "dssa/io/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dssa::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-') {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return std::size_t(n);
}

double parse_real(const std::string& key, const std::string& v) {
  const auto slash = v.find('/');
  if (slash != std::string::npos) {
    return parse_real(key, trim(v.substr(0, slash))) / parse_real(key, trim(v.substr(slash + 1)));
  }
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[') v.erase(0, 1);
  if (!v.empty() && v.back() == ']') v.pop_back();
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

template <typename T>
std::string join(const T& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ", ") + std::to_string(i);
  return s;
}

std::string real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"channels", [](RunConfig& c, auto& k, auto& v) { c.model.channels = parse_list(k, v); }},
      {"depths", [](RunConfig& c, auto& k, auto& v) { c.model.depths = parse_list(k, v); }},
      {"decoder_depths",
       [](RunConfig& c, auto& k, auto& v) { c.model.decoder_depths = parse_list(k, v); }},
      {"c_d", [](RunConfig& c, auto& k, auto& v) { c.model.decoder_width = parse_count(k, v); }},
      {"num_classes",
       [](RunConfig& c, auto& k, auto& v) { c.model.num_classes = parse_count(k, v); }},
      {"k1", [](RunConfig& c, auto& k, auto& v) { c.model.k1_schedule = parse_list(k, v); }},
      {"lambda", [](RunConfig& c, auto& k, auto& v) { c.model.lambda = parse_real(k, v); }},
      {"regions", [](RunConfig& c, auto& k, auto& v) { c.model.regions = parse_count(k, v); }},
      {"head_dim", [](RunConfig& c, auto& k, auto& v) { c.model.head_dim = parse_count(k, v); }},
      {"mlp_ratio", [](RunConfig& c, auto& k, auto& v) { c.model.mlp_ratio = parse_count(k, v); }},
      {"ppm_bins", [](RunConfig& c, auto& k, auto& v) { c.model.ppm_bins = parse_list(k, v); }},
      {"skips",
       [](RunConfig& c, auto& k, auto& v) {
         c.model.skips.clear();
         if (v == "none") return;
         for (auto s : parse_list(k, v)) c.model.skips.insert(s);
       }},
      {"mff", [](RunConfig& c, auto& k, auto& v) { c.model.mff_enabled = parse_bool(k, v); }},
      {"lr", [](RunConfig& c, auto& k, auto& v) { c.train.lr = parse_real(k, v); }},
      {"steps", [](RunConfig& c, auto& k, auto& v) { c.train.steps = parse_count(k, v); }},
      {"batch", [](RunConfig& c, auto& k, auto& v) { c.train.batch = parse_count(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_count(k, v); }},
      {"augment", [](RunConfig& c, auto& k, auto& v) { c.train.augment = parse_bool(k, v); }},
      {"val_every", [](RunConfig& c, auto& k, auto& v) { c.train.val_every = parse_count(k, v); }},
      {"checkpoint_every",
       [](RunConfig& c, auto& k, auto& v) { c.train.checkpoint_every = parse_count(k, v); }},
      {"train_dir", [](RunConfig& c, auto&, auto& v) { c.data.train_dir = v; }},
      {"val_dir", [](RunConfig& c, auto&, auto& v) { c.data.val_dir = v; }},
      {"out_dir", [](RunConfig& c, auto&, auto& v) { c.data.out_dir = v; }},
      {"image_size", [](RunConfig& c, auto& k, auto& v) { c.data.image_size = parse_count(k, v); }},
      {"spacing", [](RunConfig& c, auto& k, auto& v) { c.data.spacing = parse_real(k, v); }},
      {"deterministic",
       [](RunConfig& c, auto& k, auto& v) { c.deterministic = parse_bool(k, v); }},
      {"threads", [](RunConfig& c, auto& k, auto& v) { c.threads = parse_count(k, v); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!(train.lr > 0)) throw ConfigError("lr must be positive");
  if (train.batch == 0) throw ConfigError("batch must be positive");
  if (data.image_size == 0 || data.image_size % 32 != 0) {
    throw ConfigError("image_size must be a positive multiple of 32");
  }
  if (!(data.spacing > 0)) throw ConfigError("spacing must be positive");
}

RunConfig parse_run_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::string preset;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "preset") {
      preset = value;
    } else if (!setters().count(key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } else {
      pairs.emplace_back(std::move(key), std::move(value));
    }
  }
  RunConfig cfg;
  if (preset == "small") {
    cfg.model = ModelConfig::small();
  } else if (preset == "tiny") {
    cfg.model = ModelConfig::tiny();
  } else if (!preset.empty() && preset != "reference") {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  for (const auto& [k, v] : pairs) setters().at(k)(cfg, k, v);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_text(const RunConfig& c) {
  const auto& m = c.model;
  std::ostringstream os;
  os << "channels = " << join(m.channels) << "\n"
     << "depths = " << join(m.depths) << "\n"
     << "decoder_depths = " << join(m.resolved_decoder_depths()) << "\n"
     << "c_d = " << m.decoder_width << "\n"
     << "num_classes = " << m.num_classes << "\n"
     << "k1 = " << join(m.k1_schedule) << "\n"
     << "lambda = " << real(m.lambda) << "\n"
     << "regions = " << m.regions << "\n"
     << "head_dim = " << m.head_dim << "\n"
     << "mlp_ratio = " << m.mlp_ratio << "\n"
     << "ppm_bins = " << join(m.ppm_bins) << "\n"
     << "skips = " << (m.skips.empty() ? "none" : join(m.skips)) << "\n"
     << "mff = " << (m.mff_enabled ? "true" : "false") << "\n"
     << "lr = " << real(c.train.lr) << "\n"
     << "steps = " << c.train.steps << "\n"
     << "batch = " << c.train.batch << "\n"
     << "seed = " << c.train.seed << "\n"
     << "augment = " << (c.train.augment ? "true" : "false") << "\n"
     << "val_every = " << c.train.val_every << "\n"
     << "checkpoint_every = " << c.train.checkpoint_every << "\n"
     << "train_dir = " << c.data.train_dir.string() << "\n"
     << "val_dir = " << c.data.val_dir.string() << "\n"
     << "out_dir = " << c.data.out_dir.string() << "\n"
     << "image_size = " << c.data.image_size << "\n"
     << "spacing = " << real(c.data.spacing) << "\n"
     << "deterministic = " << (c.deterministic ? "true" : "false") << "\n"
     << "threads = " << c.threads << "\n";
  return os.str();
}

}  // namespace dssa::io

#include "wcdiff/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wcdiff/rng.hpp"

namespace wcdiff {
namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> kDefaults = {
      {"phantom.dims", "16"},
      {"phantom.train_cases", "16"},
      {"phantom.test_cases", "20"},
      // Background/uptake keep normalized volumes near zero mean: the
      // group-norm U-Net is insensitive to a constant shift of x_t, so the
      // reverse chain cannot steer its spatial mean toward the data.
      {"phantom.background", "2.0"},
      {"phantom.ellipsoids_min", "3"},
      {"phantom.ellipsoids_max", "3"},
      {"phantom.uptake_min", "3.0"},
      {"phantom.uptake_max", "5.0"},
      {"phantom.bias_amplitude", "0.2"},
      {"phantom.counts_per_unit", "50"},
      {"phantom.noise_model", "poisson"},
      {"phantom.seed", "11"},
      {"phantom.doses", "0.25,0.05,0.02"},
      {"schedule.T", "100"},
      {"schedule.beta_min", "0.001"},
      {"schedule.beta_max", "0.18"},
      {"unet.base_channels", "8"},
      {"unet.levels", "2"},
      {"unet.time_embed_width", "32"},
      {"unet.gn_groups", "4"},
      {"control.selector", "LLL"},
      {"control.stack_bands", "false"},
      {"train.backbone_steps", "2000"},
      {"train.control_steps", "2000"},
      {"train.batch", "2"},
      {"train.lr", "0.001"},
      {"train.seed", "1"},
      {"train.dose", "0.05"},
      {"sample.variance", "beta"},
      {"sample.seed", "7"},
      {"patch.size", "16"},
      {"patch.overlap", "4"},
      {"normalize.percentile", "99.5"},
      {"eval.ssim_window", "7"},
      {"eval.ssim_gaussian", "false"},
  };
  return kDefaults;
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

Dims3 parse_dims(const Config& c, const std::string& key) {
  const auto parts = split(c.get(key), ',');
  auto one = [&](const std::string& p) -> std::int64_t {
    try {
      return std::stoll(p);
    } catch (const std::exception&) {
      throw UsageError("config key " + key + " has non-integer entry '" + p + "'");
    }
  };
  if (parts.size() == 1) {
    const std::int64_t n = one(parts[0]);
    return Dims3{n, n, n};
  }
  if (parts.size() == 3) return Dims3{one(parts[0]), one(parts[1]), one(parts[2])};
  throw UsageError("config key " + key + " expects 1 or 3 comma-separated integers");
}

}  // namespace

Config::Config() : values_(defaults()) {}

void Config::check_known(const std::string& key, const std::string& origin) const {
  if (defaults().count(key) == 0) {
    throw UsageError("unknown config key '" + key + "' (" + origin + ")");
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  std::string section;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw FormatError("malformed section header at " + where);
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("expected 'key = value' at " + where);
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("empty key at " + where);
    if (!section.empty()) key = section + "." + key;
    check_known(key, where);
    values_[key] = value;
  }
}

void Config::set_override(const std::string& dotted_key, const std::string& value) {
  check_known(dotted_key, "--set override");
  values_[dotted_key] = trim(value);
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const std::int64_t n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + " expects an integer, got '" + v + "'");
  }
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + " expects a number, got '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key " + key + " expects a boolean, got '" + v + "'");
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  const std::string& v = get(key);
  std::vector<double> out;
  for (const auto& part : split(v, ',')) {
    if (part.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("config key " + key + " has non-numeric entry '" + part + "'");
    }
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

std::uint64_t Config::hash() const {
  Fnv1a h;
  const std::string c = canonical();
  h.update(c.data(), c.size());
  return h.digest();
}

std::string format_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

RunConfig RunConfig::from_config(const Config& c) {
  RunConfig r;
  r.dims = parse_dims(c, "phantom.dims");
  r.train_cases = c.get_int("phantom.train_cases");
  r.test_cases = c.get_int("phantom.test_cases");
  r.background = c.get_double("phantom.background");
  r.ellipsoids_min = c.get_int("phantom.ellipsoids_min");
  r.ellipsoids_max = c.get_int("phantom.ellipsoids_max");
  r.uptake_min = c.get_double("phantom.uptake_min");
  r.uptake_max = c.get_double("phantom.uptake_max");
  r.bias_amplitude = c.get_double("phantom.bias_amplitude");
  r.counts_per_unit = c.get_double("phantom.counts_per_unit");
  r.noise_model = parse_noise_model(c.get("phantom.noise_model"));
  r.phantom_seed = static_cast<std::uint64_t>(c.get_int("phantom.seed"));
  r.doses = c.get_double_list("phantom.doses");

  r.T = c.get_int("schedule.T");
  r.beta_min = c.get_double("schedule.beta_min");
  r.beta_max = c.get_double("schedule.beta_max");

  r.unet.base_channels = c.get_int("unet.base_channels");
  r.unet.levels = c.get_int("unet.levels");
  r.unet.time_embed_width = c.get_int("unet.time_embed_width");
  r.unet.gn_groups = c.get_int("unet.gn_groups");
  r.unet.validate();

  r.selector = parse_selector(c.get("control.selector"));
  r.stack_bands = c.get_bool("control.stack_bands");

  r.backbone_steps = c.get_int("train.backbone_steps");
  r.control_steps = c.get_int("train.control_steps");
  r.batch = c.get_int("train.batch");
  r.lr = c.get_double("train.lr");
  r.train_seed = static_cast<std::uint64_t>(c.get_int("train.seed"));
  r.train_dose = c.get_double("train.dose");

  r.variance = parse_variance_mode(c.get("sample.variance"));
  r.sample_seed = static_cast<std::uint64_t>(c.get_int("sample.seed"));

  r.patch = parse_dims(c, "patch.size");
  r.overlap = parse_dims(c, "patch.overlap");

  r.percentile = c.get_double("normalize.percentile");

  r.ssim_window = c.get_int("eval.ssim_window");
  r.ssim_gaussian = c.get_bool("eval.ssim_gaussian");

  r.config_hash = c.hash();

  if (!r.dims.positive()) throw UsageError("phantom.dims must be positive");
  if (r.train_cases < 1) throw UsageError("phantom.train_cases must be at least 1");
  if (r.test_cases < 1) throw UsageError("phantom.test_cases must be at least 1");
  if (r.background < 0.0) throw UsageError("phantom.background must be non-negative");
  if (r.ellipsoids_min < 1 || r.ellipsoids_max < r.ellipsoids_min) {
    throw UsageError("phantom.ellipsoids_min/max must satisfy 1 <= min <= max");
  }
  if (r.uptake_min <= 0.0 || r.uptake_max < r.uptake_min) {
    throw UsageError("phantom.uptake_min/max must satisfy 0 < min <= max");
  }
  if (r.bias_amplitude < 0.0 || r.bias_amplitude >= 1.0) {
    throw UsageError("phantom.bias_amplitude must lie in [0, 1)");
  }
  if (r.counts_per_unit <= 0.0) throw UsageError("phantom.counts_per_unit must be positive");
  if (r.doses.empty()) throw UsageError("phantom.doses must list at least one dose");
  for (const double d : r.doses) {
    if (!(d > 0.0 && d <= 1.0)) throw UsageError("phantom.doses entries must lie in (0, 1]");
  }
  if (!(r.train_dose > 0.0 && r.train_dose <= 1.0)) {
    throw UsageError("train.dose must lie in (0, 1]");
  }
  if (std::find(r.doses.begin(), r.doses.end(), r.train_dose) == r.doses.end()) {
    throw UsageError("train.dose must be one of phantom.doses");
  }
  if (r.backbone_steps < 0 || r.control_steps < 0) {
    throw UsageError("train.backbone_steps/control_steps must be non-negative");
  }
  if (r.batch < 1) throw UsageError("train.batch must be at least 1");
  if (r.lr <= 0.0) throw UsageError("train.lr must be positive");
  if (!r.patch.positive()) throw UsageError("patch.size must be positive");
  if (!r.patch.even()) throw UsageError("patch.size must be even for the wavelet transform");
  const std::int64_t factor = std::int64_t{1} << (r.unet.levels - 1);
  if (r.patch.d % factor != 0 || r.patch.h % factor != 0 || r.patch.w % factor != 0) {
    throw UsageError("patch.size must be divisible by 2^(unet.levels-1)");
  }
  if (r.overlap.d < 0 || r.overlap.h < 0 || r.overlap.w < 0 || r.overlap.d >= r.patch.d ||
      r.overlap.h >= r.patch.h || r.overlap.w >= r.patch.w) {
    throw UsageError("patch.overlap must lie in [0, patch.size)");
  }
  if (!(r.percentile > 0.0 && r.percentile <= 100.0)) {
    throw UsageError("normalize.percentile must lie in (0, 100]");
  }
  if (r.ssim_window < 2) throw UsageError("eval.ssim_window must be at least 2");

  // The schedule and selector constructors run their own validation.
  make_linear_schedule(r.T, r.beta_min, r.beta_max);
  return r;
}

}  // namespace wcdiff

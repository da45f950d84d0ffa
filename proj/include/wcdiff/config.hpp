#pragma once

#include <map>
#include <string>
#include <vector>

#include "wcdiff/error.hpp"
#include "wcdiff/nn/unet.hpp"
#include "wcdiff/param_store.hpp"
#include "wcdiff/phantom.hpp"
#include "wcdiff/schedule.hpp"
#include "wcdiff/wavelet.hpp"

namespace wcdiff {

// Flat `key = value` configuration with one [section] per module. Every key
// has a default; files and --set overrides may only touch known keys.
class Config {
 public:
  Config();

  void load_file(const std::string& path);
  void set_override(const std::string& dotted_key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // Sorted "key = value" lines of the effective configuration.
  std::string canonical() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  void check_known(const std::string& key, const std::string& origin) const;
  std::map<std::string, std::string> values_;
};

std::string format_hash(std::uint64_t h);

// Typed view of the full pipeline configuration, validated up front.
struct RunConfig {
  // phantom dataset
  Dims3 dims{16, 16, 16};
  std::int64_t train_cases = 16;
  std::int64_t test_cases = 20;
  double background = 0.5;
  std::int64_t ellipsoids_min = 2;
  std::int64_t ellipsoids_max = 4;
  double uptake_min = 2.0;
  double uptake_max = 6.0;
  double bias_amplitude = 0.2;
  double counts_per_unit = 40.0;
  NoiseModel noise_model = NoiseModel::Poisson;
  std::uint64_t phantom_seed = 11;
  std::vector<double> doses{0.25, 0.05, 0.02};

  // schedule
  std::int64_t T = 100;
  double beta_min = 1e-3;
  double beta_max = 0.18;

  // network
  nn::UNetConfig unet{};

  // control branch
  SubbandSelector selector{};
  bool stack_bands = false;

  // training
  std::int64_t backbone_steps = 2000;
  std::int64_t control_steps = 2000;
  std::int64_t batch = 2;
  double lr = 1e-3;
  std::uint64_t train_seed = 1;
  double train_dose = 0.05;

  // sampling
  VarianceMode variance = VarianceMode::Beta;
  std::uint64_t sample_seed = 7;

  // patch pipeline
  Dims3 patch{16, 16, 16};
  Dims3 overlap{4, 4, 4};

  // normalization
  double percentile = 99.5;

  // evaluation
  std::int64_t ssim_window = 7;
  bool ssim_gaussian = false;

  std::uint64_t config_hash = 0;

  static RunConfig from_config(const Config& c);

  NoiseSchedule schedule() const { return make_linear_schedule(T, beta_min, beta_max); }
  AdamConfig adam() const {
    AdamConfig a;
    a.lr = lr;
    return a;
  }
};

}  // namespace wcdiff

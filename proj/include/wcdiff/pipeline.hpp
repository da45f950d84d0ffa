#pragma once

#include <string>
#include <vector>

#include "wcdiff/config.hpp"
#include "wcdiff/control.hpp"
#include "wcdiff/report.hpp"
#include "wcdiff/training.hpp"

namespace wcdiff {

// Compact dose tag used in filenames and manifest keys, e.g. 0.05 -> "0.05".
std::string dose_label(double dose);

struct ManifestCase {
  std::string id;
  std::string kind;  // "train" or "test"
  std::uint64_t seed = 0;
  std::string clean_file;
  std::map<std::string, std::string> low_files;  // dose label -> file
};

struct DatasetManifest {
  std::uint64_t config_hash = 0;
  Dims3 dims{};
  std::vector<double> doses;
  std::vector<ManifestCase> cases;
};

DatasetManifest load_manifest(const std::string& data_dir);

struct LoadedCase {
  std::string id;
  Volume clean;
  Volume low;
};

// Reads clean plus low-dose volumes for one split at one dose.
std::vector<LoadedCase> load_cases(const std::string& data_dir, const std::string& kind,
                                   double dose);

// Random ellipsoid layout for one dataset case, bounded by the config ranges.
PhantomSpec random_phantom_spec(const RunConfig& cfg, std::uint64_t case_seed);

// lo = 0, hi = the requested percentile (nearest-rank) of the pooled voxels.
NormStats compute_norm_stats(const std::vector<Volume>& cleans, double percentile);

// Normalized patch pairs plus conditioning wavelet decompositions.
std::vector<TrainSample> build_train_samples(const RunConfig& cfg,
                                             const std::vector<LoadedCase>& cases,
                                             const NormStats& norm);

// Patchwise conditional sampling with cosine-blended stitching. Per-patch
// noise streams derive from the one seed, so the result is reproducible.
Volume denoise_volume(const RunConfig& cfg, BackboneModel& backbone, ControlBranch* branch,
                      const Volume& low, std::uint64_t seed);

void cmd_phantom_gen(const RunConfig& cfg, const std::string& out_dir);

std::vector<double> cmd_train_backbone(const RunConfig& cfg, const std::string& data_dir,
                                       const std::string& ckpt_path);

std::vector<double> cmd_train_control(const RunConfig& cfg, const std::string& backbone_path,
                                      const std::string& data_dir, const std::string& ckpt_path);

void cmd_denoise(const RunConfig& cfg, const std::string& backbone_path,
                 const std::string& branch_path, const std::string& input_path,
                 const std::string& output_path);

// Evaluates predictions against the clean test volumes. With pred_dir empty,
// the dataset's own low-dose volumes at pred_dose are scored instead, which
// gives the noisy-input baseline. comparator_path may name a previously saved
// report for paired significance testing.
MetricReport cmd_eval(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& pred_dir, double pred_dose, const std::string& label,
                      const std::string& comparator_path, const std::string& out_json);

// Trains one backbone, then one control branch per subband selector, denoises
// the identical test cases with identical seeds under every variant, and
// writes one report per variant (baseline "none" first) plus a summary.
std::vector<MetricReport> cmd_ablate(const RunConfig& cfg, const std::string& data_dir,
                                     const std::string& out_dir);

void cmd_dwt(const std::string& input_path, const std::string& out_stem);

}  // namespace wcdiff

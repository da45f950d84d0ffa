#pragma once

#include <string>
#include <vector>

#include "wcdiff/nn/unet.hpp"
#include "wcdiff/param_store.hpp"
#include "wcdiff/schedule.hpp"
#include "wcdiff/volume.hpp"

namespace wcdiff {

struct CheckpointEntry {
  std::string name;
  TensorShape shape;
  std::int64_t adam_steps = 0;
  bool has_adam = false;
  Tensor value, m, v;  // m/v present only when has_adam
};

// In-memory image of a VXC1 file: model config, schedule parameters,
// normalization stats, and every named parameter with optimizer state.
// Saving is deterministic, so save(load(f)) reproduces f byte for byte.
struct Checkpoint {
  std::string kind;  // "backbone" or "branch"
  nn::UNetConfig cfg;
  std::int64_t sched_T = 0;
  double sched_beta_min = 0.0, sched_beta_max = 0.0;
  NormStats norm;
  // branch-only fields
  std::int64_t prior_channels = 0;
  std::string selector;
  std::uint64_t backbone_checksum = 0;
  std::vector<CheckpointEntry> entries;  // sorted by name

  NoiseSchedule schedule() const {
    return make_linear_schedule(sched_T, sched_beta_min, sched_beta_max);
  }

  static Checkpoint from_store(const std::string& kind, const ParamStore& store,
                               const nn::UNetConfig& cfg, const NoiseSchedule& sched,
                               const NormStats& norm);

  // Inserts all entries into an empty store, preserving values and Adam
  // state; later model construction binds to these by name. Trainable flags
  // are session state and are not stored: loaded parameters start trainable,
  // and freezing is re-applied by whoever owns the training run.
  void populate(ParamStore& store) const;

  // After model construction: every entry must have been bound and no new
  // parameters created, else the file does not match the config.
  void verify_bound(const ParamStore& store) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wcdiff

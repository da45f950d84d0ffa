#include "wcdiff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "wcdiff/volume_io.hpp"

namespace wcdiff {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void log_line(const std::string& msg) { std::cerr << "[wcdiff] " << msg << "\n"; }

std::string case_id(const std::string& kind, std::int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03lld", kind.c_str(), static_cast<long long>(i));
  return std::string(buf);
}

std::string manifest_path(const std::string& data_dir) { return data_dir + "/manifest.json"; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_loss_log(const std::string& path, const std::vector<double>& history,
                    std::uint64_t config_hash) {
  json j;
  j["config_hash"] = format_hash(config_hash);
  j["steps"] = history.size();
  j["loss"] = history;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create loss log " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed to write loss log " + path);
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += v[i];
  return to > from ? s / double(to - from) : 0.0;
}

void log_loss_summary(const std::string& what, const std::vector<double>& h) {
  if (h.empty()) return;
  const std::size_t k = std::min<std::size_t>(h.size(), std::max<std::size_t>(1, h.size() / 10));
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s: loss %.6f (first %zu steps) -> %.6f (last %zu steps)",
                what.c_str(), mean_of(h, 0, k), k, mean_of(h, h.size() - k, h.size()), k);
  log_line(buf);
}

TrainHyper make_hyper(const RunConfig& cfg, std::int64_t steps) {
  TrainHyper hy;
  hy.steps = steps;
  hy.batch = cfg.batch;
  hy.adam = cfg.adam();
  hy.seed = cfg.train_seed;
  return hy;
}

// Shared by cmd_train_control and cmd_ablate: everything after the backbone
// is loaded, so ablation can reuse one backbone across selectors.
std::vector<double> train_branch(const RunConfig& cfg, BackboneModel& backbone,
                                 const ControlConfig& ccfg,
                                 const std::vector<TrainSample>& samples,
                                 const std::string& ckpt_path) {
  ControlBranch branch(backbone, ccfg, cfg.train_seed);

  // Identity self-test: at initialization the controlled prediction must be
  // bitwise equal to the backbone's.
  {
    ControlledModel controlled(backbone, branch);
    const TrainSample& s = samples.front();
    const std::int64_t t = std::max<std::int64_t>(1, backbone.schedule().T / 2);
    const Volume x_t = random_normal_volume(s.y.dims(), Rng(cfg.train_seed).stream(77));
    const Volume base = backbone.predict(x_t, t, s.y, nullptr);
    const Volume ctrl = controlled.predict(x_t, t, s.y, &s.bands);
    const double diff = (ctrl.data() - base.data()).abs().maxCoeff();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "identity at init (%s): max |controlled - backbone| = %g",
                  ccfg.selector.str().c_str(), diff);
    log_line(buf);
    if (diff != 0.0)
      throw IntegrityError("control branch is not an identity at initialization");
  }

  const std::vector<double> history =
      train_controlnet(backbone, branch, samples, make_hyper(cfg, cfg.control_steps));
  log_loss_summary("control " + ccfg.selector.str(), history);
  branch.save(ckpt_path, backbone.schedule(), backbone.norm());
  write_loss_log(ckpt_path + ".loss.json", history, cfg.config_hash);
  return history;
}

Volume load_pred(const std::string& pred_dir, const std::string& data_dir,
                 const ManifestCase& mc, double pred_dose) {
  if (!pred_dir.empty()) return read_volume(pred_dir + "/" + mc.id + ".vxv");
  const std::string label = dose_label(pred_dose);
  const auto it = mc.low_files.find(label);
  if (it == mc.low_files.end())
    throw UsageError("case " + mc.id + " has no low-dose volume at dose " + label);
  return read_volume(data_dir + "/" + it->second);
}

std::string sibling_txt(const std::string& json_path) {
  if (json_path.size() >= 5 && json_path.substr(json_path.size() - 5) == ".json")
    return json_path.substr(0, json_path.size() - 5) + ".txt";
  return json_path + ".txt";
}

void write_table(const std::string& path, const std::string& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create report table " + path);
  out << table;
  if (!out) throw IoError("failed to write report table " + path);
}

}  // namespace

std::string dose_label(double dose) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", dose);
  return std::string(buf);
}

DatasetManifest load_manifest(const std::string& data_dir) {
  const std::string path = manifest_path(data_dir);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path + " is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  try {
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    const auto& jd = j.at("dims");
    m.dims = Dims3{jd.at(0).get<std::int64_t>(), jd.at(1).get<std::int64_t>(),
                   jd.at(2).get<std::int64_t>()};
    m.doses = j.at("doses").get<std::vector<double>>();
    for (const auto& jc : j.at("cases")) {
      ManifestCase mc;
      mc.id = jc.at("id").get<std::string>();
      mc.kind = jc.at("kind").get<std::string>();
      mc.seed = jc.at("seed").get<std::uint64_t>();
      mc.clean_file = jc.at("clean").get<std::string>();
      for (const auto& [label, file] : jc.at("low").items())
        mc.low_files[label] = file.get<std::string>();
      m.cases.push_back(std::move(mc));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path + " has unexpected structure: " + e.what());
  }
  return m;
}

std::vector<LoadedCase> load_cases(const std::string& data_dir, const std::string& kind,
                                   double dose) {
  const DatasetManifest m = load_manifest(data_dir);
  const std::string label = dose_label(dose);
  std::vector<LoadedCase> out;
  for (const auto& mc : m.cases) {
    if (mc.kind != kind) continue;
    const auto it = mc.low_files.find(label);
    if (it == mc.low_files.end())
      throw UsageError("case " + mc.id + " has no low-dose volume at dose " + label);
    out.push_back({mc.id, read_volume(data_dir + "/" + mc.clean_file),
                   read_volume(data_dir + "/" + it->second)});
  }
  if (out.empty()) throw UsageError("dataset has no '" + kind + "' cases");
  return out;
}

PhantomSpec random_phantom_spec(const RunConfig& cfg, std::uint64_t case_seed) {
  const Rng rng = Rng(case_seed).stream(3);
  PhantomSpec spec;
  spec.dims = cfg.dims;
  spec.background = cfg.background;
  spec.bias_amplitude = cfg.bias_amplitude;
  spec.seed = case_seed;

  const std::uint64_t span = std::uint64_t(cfg.ellipsoids_max - cfg.ellipsoids_min + 1);
  const std::int64_t count = cfg.ellipsoids_min + std::int64_t(rng.bits(0) % span);
  std::uint64_t c = 1;
  for (std::int64_t e = 0; e < count; ++e) {
    Ellipsoid el;
    const auto axis = [&](std::int64_t dim, double& center, double& semi) {
      const double dmax = double(dim - 1);
      const double lo = std::max(1.0, 0.12 * dmax);
      const double hi = std::max(lo, 0.30 * dmax);
      semi = lo + rng.uniform(c++) * (hi - lo);
      center = semi + rng.uniform(c++) * std::max(0.0, dmax - 2.0 * semi);
    };
    axis(cfg.dims.d, el.cd, el.sd);
    axis(cfg.dims.h, el.ch, el.sh);
    axis(cfg.dims.w, el.cw, el.sw);
    el.uptake = cfg.uptake_min + rng.uniform(c++) * (cfg.uptake_max - cfg.uptake_min);
    spec.ellipsoids.push_back(el);
  }
  spec.validate();
  return spec;
}

NormStats compute_norm_stats(const std::vector<Volume>& cleans, double percentile) {
  if (cleans.empty()) throw UsageError("normalization stats require at least one volume");
  if (!(percentile > 0.0 && percentile <= 100.0))
    throw UsageError("percentile must lie in (0, 100]");
  std::vector<double> pool;
  for (const auto& v : cleans)
    pool.insert(pool.end(), v.data().data(), v.data().data() + v.size());
  const std::size_t n = pool.size();
  const std::size_t k =
      std::min(n, std::size_t(std::ceil(percentile / 100.0 * double(n))));
  std::nth_element(pool.begin(), pool.begin() + std::ptrdiff_t(k ? k - 1 : 0), pool.end());
  NormStats stats;
  stats.lo = 0.0;
  stats.hi = pool[k ? k - 1 : 0];
  if (!(stats.hi > stats.lo)) stats.hi = *std::max_element(pool.begin(), pool.end());
  if (!(stats.hi > stats.lo))
    throw UsageError("normalization range is degenerate: pooled maximum is not above 0");
  return stats;
}

std::vector<TrainSample> build_train_samples(const RunConfig& cfg,
                                             const std::vector<LoadedCase>& cases,
                                             const NormStats& norm) {
  std::vector<TrainSample> samples;
  for (const auto& lc : cases) {
    const Volume nc = normalize(lc.clean, norm).volume;
    const Volume nl = normalize(lc.low, norm).volume;
    auto [grid_c, patches_c] = extract_patches(nc, cfg.patch, cfg.overlap);
    auto [grid_l, patches_l] = extract_patches(nl, cfg.patch, cfg.overlap);
    (void)grid_l;
    for (std::size_t i = 0; i < patches_c.size(); ++i) {
      SubbandSet bands = dwt3(patches_l[i]);
      samples.push_back({std::move(patches_c[i]), std::move(patches_l[i]), std::move(bands)});
    }
  }
  if (samples.empty()) throw UsageError("no training patches produced");
  return samples;
}

Volume denoise_volume(const RunConfig& cfg, BackboneModel& backbone, ControlBranch* branch,
                      const Volume& low, std::uint64_t seed) {
  const NormStats norm = backbone.norm();
  const Volume nl = normalize(low, norm).volume;
  auto [grid, patches] = extract_patches(nl, cfg.patch, cfg.overlap);

  std::optional<ControlledModel> controlled;
  if (branch) controlled.emplace(backbone, *branch);
  NoisePredictor& predictor =
      branch ? static_cast<NoisePredictor&>(*controlled) : static_cast<NoisePredictor&>(backbone);

  const Rng seeds(seed);
  std::vector<Volume> out_patches;
  out_patches.reserve(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const SubbandSet bands = dwt3(patches[i]);
    const std::uint64_t pseed = seeds.stream(std::uint64_t(i)).key();
    out_patches.push_back(sample(predictor, patches[i], branch ? &bands : nullptr,
                                 backbone.schedule(), pseed, cfg.variance));
  }
  const Volume stitched = stitch_patches(grid, out_patches, nl.dims());
  return denormalize(stitched, norm, low.unit());
}

void cmd_phantom_gen(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Rng master(cfg.phantom_seed);

  json jcases = json::array();
  const auto gen_split = [&](const std::string& kind, std::int64_t count,
                             std::uint64_t stream_id) {
    const Rng split_rng = master.stream(stream_id);
    for (std::int64_t i = 0; i < count; ++i) {
      const std::string id = case_id(kind, i);
      const std::uint64_t case_seed = split_rng.bits(std::uint64_t(i));
      const Volume clean = generate_phantom(random_phantom_spec(cfg, case_seed));
      json jc;
      jc["id"] = id;
      jc["kind"] = kind;
      jc["seed"] = case_seed;
      jc["clean"] = id + ".clean.vxv";
      jc["low"] = json::object();
      write_volume(out_dir + "/" + id + ".clean.vxv", clean);
      for (std::size_t j = 0; j < cfg.doses.size(); ++j) {
        const double dose = cfg.doses[j];
        const std::uint64_t nseed = Rng(case_seed).stream(200 + std::uint64_t(j)).key();
        const Volume low =
            simulate_low_dose(clean, dose, cfg.counts_per_unit, nseed, cfg.noise_model);
        const std::string file = id + ".low_" + dose_label(dose) + ".vxv";
        write_volume(out_dir + "/" + file, low);
        jc["low"][dose_label(dose)] = file;
      }
      jcases.push_back(std::move(jc));
    }
  };
  gen_split("train", cfg.train_cases, 1);
  gen_split("test", cfg.test_cases, 2);

  json j;
  j["config_hash"] = format_hash(cfg.config_hash);
  j["dims"] = {cfg.dims.d, cfg.dims.h, cfg.dims.w};
  j["doses"] = cfg.doses;
  j["cases"] = std::move(jcases);
  const std::string path = manifest_path(out_dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create manifest " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed to write manifest " + path);
  log_line("wrote " + std::to_string(cfg.train_cases) + " train + " +
           std::to_string(cfg.test_cases) + " test cases to " + out_dir);
}

std::vector<double> cmd_train_backbone(const RunConfig& cfg, const std::string& data_dir,
                                       const std::string& ckpt_path) {
  const std::vector<LoadedCase> cases = load_cases(data_dir, "train", cfg.train_dose);
  std::vector<Volume> cleans;
  for (const auto& lc : cases) cleans.push_back(lc.clean);
  const NormStats norm = compute_norm_stats(cleans, cfg.percentile);
  {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "normalization window: [%g, %g]", norm.lo, norm.hi);
    log_line(buf);
  }
  const std::vector<TrainSample> samples = build_train_samples(cfg, cases, norm);

  BackboneModel model(cfg.unet, cfg.schedule(), norm, cfg.train_seed);
  log_line("backbone parameters: " + std::to_string(model.store().parameter_count()));
  const std::vector<double> history =
      train_backbone(model, samples, make_hyper(cfg, cfg.backbone_steps));
  log_loss_summary("backbone", history);
  model.save(ckpt_path);
  write_loss_log(ckpt_path + ".loss.json", history, cfg.config_hash);
  return history;
}

std::vector<double> cmd_train_control(const RunConfig& cfg, const std::string& backbone_path,
                                      const std::string& data_dir,
                                      const std::string& ckpt_path) {
  BackboneModel backbone = BackboneModel::load(backbone_path);
  const std::vector<LoadedCase> cases = load_cases(data_dir, "train", cfg.train_dose);
  const std::vector<TrainSample> samples = build_train_samples(cfg, cases, backbone.norm());
  const ControlConfig ccfg{cfg.selector, cfg.stack_bands};
  return train_branch(cfg, backbone, ccfg, samples, ckpt_path);
}

void cmd_denoise(const RunConfig& cfg, const std::string& backbone_path,
                 const std::string& branch_path, const std::string& input_path,
                 const std::string& output_path) {
  BackboneModel backbone = BackboneModel::load(backbone_path);
  std::optional<ControlBranch> branch;
  if (!branch_path.empty()) branch.emplace(backbone, load_checkpoint(branch_path));
  const Volume low = read_volume(input_path);
  const Volume out =
      denoise_volume(cfg, backbone, branch ? &*branch : nullptr, low, cfg.sample_seed);
  write_volume(output_path, out);
  log_line("denoised " + input_path + " -> " + output_path +
           (branch ? " (selector " + branch->control_config().selector.str() + ")"
                   : " (backbone only)"));
}

MetricReport cmd_eval(const RunConfig& cfg, const std::string& data_dir,
                      const std::string& pred_dir, double pred_dose, const std::string& label,
                      const std::string& comparator_path, const std::string& out_json) {
  const DatasetManifest m = load_manifest(data_dir);
  SsimOptions sopts;
  sopts.window = cfg.ssim_window;
  sopts.gaussian = cfg.ssim_gaussian;

  std::vector<CaseMetrics> cases;
  for (const auto& mc : m.cases) {
    if (mc.kind != "test") continue;
    const Volume ref = read_volume(data_dir + "/" + mc.clean_file);
    const Volume pred = load_pred(pred_dir, data_dir, mc, pred_dose);
    cases.push_back(evaluate_case(mc.id, pred, ref, sopts));
  }
  if (cases.empty()) throw UsageError("dataset has no test cases to evaluate");

  MetricReport report = make_report(label, std::move(cases), cfg.config_hash);
  if (!comparator_path.empty()) {
    const MetricReport baseline = load_report(comparator_path);
    attach_comparison(report, baseline);
  }
  save_report(out_json, report);
  write_table(sibling_txt(out_json), report_table(report));
  std::cerr << report_table(report);
  return report;
}

std::vector<MetricReport> cmd_ablate(const RunConfig& cfg, const std::string& data_dir,
                                     const std::string& out_dir) {
  ensure_dir(out_dir);

  const std::string backbone_path = out_dir + "/backbone.vxc";
  cmd_train_backbone(cfg, data_dir, backbone_path);
  BackboneModel backbone = BackboneModel::load(backbone_path);

  const std::vector<LoadedCase> train_cases = load_cases(data_dir, "train", cfg.train_dose);
  const std::vector<TrainSample> samples =
      build_train_samples(cfg, train_cases, backbone.norm());
  const std::vector<LoadedCase> test_cases = load_cases(data_dir, "test", cfg.train_dose);

  SsimOptions sopts;
  sopts.window = cfg.ssim_window;
  sopts.gaussian = cfg.ssim_gaussian;
  const Rng case_seeds = Rng(cfg.sample_seed);

  const auto evaluate_variant = [&](const std::string& label, ControlBranch* branch) {
    const std::string pred_dir = out_dir + "/denoised_" + label;
    ensure_dir(pred_dir);
    std::vector<CaseMetrics> metrics;
    for (std::size_t i = 0; i < test_cases.size(); ++i) {
      const auto& tc = test_cases[i];
      const std::uint64_t seed = case_seeds.stream(std::uint64_t(i)).key();
      const Volume den = denoise_volume(cfg, backbone, branch, tc.low, seed);
      write_volume(pred_dir + "/" + tc.id + ".vxv", den);
      metrics.push_back(evaluate_case(tc.id, den, tc.clean, sopts));
    }
    return make_report(label, std::move(metrics), cfg.config_hash);
  };

  std::vector<MetricReport> reports;
  log_line("ablation: denoising test cases with the uncontrolled backbone");
  reports.push_back(evaluate_variant("none", nullptr));
  save_report(out_dir + "/report_none.json", reports.back());
  write_table(out_dir + "/report_none.txt", report_table(reports.back()));

  const std::vector<std::string> selectors = {"LLL", "HHH", "AllHigh", "AllLow", "AllBands"};
  for (const auto& sel : selectors) {
    log_line("ablation: training control branch for selector " + sel);
    const ControlConfig ccfg{parse_selector(sel), cfg.stack_bands};
    const std::string branch_path = out_dir + "/branch_" + sel + ".vxc";
    train_branch(cfg, backbone, ccfg, samples, branch_path);
    ControlBranch trained(backbone, load_checkpoint(branch_path));
    MetricReport report = evaluate_variant(sel, &trained);
    attach_comparison(report, reports.front());
    save_report(out_dir + "/report_" + sel + ".json", report);
    write_table(out_dir + "/report_" + sel + ".txt", report_table(report));
    reports.push_back(std::move(report));
  }

  json summary;
  summary["config_hash"] = format_hash(cfg.config_hash);
  summary["reports"] = json::array();
  std::string table = "ablation summary\nvariant         psnr      ssim      gmsd      nmae\n";
  for (const auto& r : reports) {
    summary["reports"].push_back("report_" + r.label + ".json");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s%10.3f%10.4f%10.4f%10.4f\n", r.label.c_str(),
                  r.aggregate.at("psnr").mean, r.aggregate.at("ssim").mean,
                  r.aggregate.at("gmsd").mean, r.aggregate.at("nmae").mean);
    table += buf;
  }
  std::ofstream sj(out_dir + "/ablation.json", std::ios::binary);
  if (!sj) throw IoError("cannot create ablation summary");
  sj << summary.dump(2) << "\n";
  write_table(out_dir + "/ablation.txt", table);
  std::cerr << table;
  return reports;
}

void cmd_dwt(const std::string& input_path, const std::string& out_stem) {
  const Volume vol = read_volume(input_path);
  const SubbandSet set = dwt3(vol);
  for (int b = 0; b < kNumBands; ++b) {
    write_volume(out_stem + "." + band_name(b) + ".vxv", set.bands[std::size_t(b)]);
  }
  log_line("wrote 8 subband volumes with stem " + out_stem);
}

}  // namespace wcdiff

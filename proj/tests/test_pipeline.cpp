#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcdiff/pipeline.hpp"
#include "wcdiff/stats.hpp"
#include "wcdiff/volume_io.hpp"

using namespace wcdiff;
namespace fs = std::filesystem;

namespace {

fs::path tmp_root() {
  const fs::path p = fs::temp_directory_path() / "wcdiff_test_pipeline";
  fs::create_directories(p);
  return p;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = tmp_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(bool(out));
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WCDIFF_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

const std::vector<std::string>& mini_overrides() {
  static const std::vector<std::string> kv = {
      "phantom.dims=8",          "phantom.train_cases=2", "phantom.test_cases=2",
      "phantom.doses=0.25",      "train.dose=0.25",       "schedule.T=6",
      "schedule.beta_min=0.02",  "schedule.beta_max=0.3", "unet.base_channels=4",
      "unet.gn_groups=2",        "unet.time_embed_width=8", "train.backbone_steps=5",
      "train.control_steps=5",   "train.lr=0.001",        "patch.size=8",
      "patch.overlap=2",
  };
  return kv;
}

Config mini_config() {
  Config c;
  for (const auto& kv : mini_overrides()) {
    const auto eq = kv.find('=');
    c.set_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

std::string mini_cli_flags() {
  std::string flags;
  for (const auto& kv : mini_overrides()) flags += " --set " + kv;
  return flags;
}

RunConfig override_cfg(const std::vector<std::pair<std::string, std::string>>& kv) {
  Config c;
  for (const auto& [k, v] : kv) c.set_override(k, v);
  return RunConfig::from_config(c);
}

std::vector<CaseMetrics> hand_cases() {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<CaseMetrics> cases(3);
  cases[0] = {"a", 10.0, 0.90, 0.10, 0.20};
  cases[1] = {"b", 20.0, 0.80, 0.20, 0.10};
  cases[2] = {"c", inf, 0.70, 0.30, 0.30};
  return cases;
}

}  // namespace

TEST_CASE("config defaults, canonical form, and hashing") {
  Config a;
  CHECK(a.get("schedule.T") == "100");
  CHECK(a.get_int("unet.base_channels") == 8);
  CHECK(a.get_double("train.lr") == 0.001);
  CHECK_FALSE(a.get_bool("control.stack_bands"));
  CHECK(a.get_double_list("phantom.doses") == std::vector<double>{0.25, 0.05, 0.02});

  Config b;
  CHECK(a.hash() == b.hash());
  CHECK(a.canonical() == b.canonical());
  b.set_override("train.lr", "0.01");
  CHECK(a.hash() != b.hash());

  // Sorted lines, one per key.
  const std::string canon = a.canonical();
  CHECK(canon.find("control.selector = LLL\n") != std::string::npos);
  CHECK(canon.find("control.") < canon.find("eval."));
  CHECK(canon.find("eval.") < canon.find("phantom."));

  CHECK(format_hash(0x1f) == "000000000000001f");
  CHECK(format_hash(a.hash()).size() == 16);
}

TEST_CASE("config files: sections, comments, and error reporting") {
  const fs::path dir = fresh_dir("config");
  const fs::path good = dir / "good.cfg";
  write_text(good,
             "# comment line\n"
             "[schedule]\n"
             "T = 20   ; trailing comment\n"
             "beta_min = 0.002\n"
             "\n"
             "[unet]\n"
             "base_channels = 4\n");
  Config c;
  c.load_file(good.string());
  CHECK(c.get_int("schedule.T") == 20);
  CHECK(c.get_double("schedule.beta_min") == 0.002);
  CHECK(c.get_int("unet.base_channels") == 4);
  CHECK(c.get("schedule.beta_max") == "0.18");

  SUBCASE("unknown key names the offending line") {
    const fs::path bad = dir / "bad_key.cfg";
    write_text(bad, "[schedule]\nbogus = 1\n");
    Config d;
    CHECK_THROWS_WITH_AS(d.load_file(bad.string()),
                         doctest::Contains("unknown config key 'schedule.bogus'"), UsageError);
    CHECK_THROWS_WITH_AS(d.load_file(bad.string()), doctest::Contains("bad_key.cfg:2"),
                         UsageError);
  }
  SUBCASE("malformed section header") {
    const fs::path bad = dir / "bad_sec.cfg";
    write_text(bad, "[schedule\nT = 20\n");
    Config d;
    CHECK_THROWS_AS(d.load_file(bad.string()), FormatError);
  }
  SUBCASE("missing equals sign") {
    const fs::path bad = dir / "bad_eq.cfg";
    write_text(bad, "[schedule]\nT 20\n");
    Config d;
    CHECK_THROWS_AS(d.load_file(bad.string()), FormatError);
  }
  SUBCASE("missing file") {
    Config d;
    CHECK_THROWS_AS(d.load_file((dir / "nope.cfg").string()), IoError);
  }
}

TEST_CASE("config overrides and typed getter errors") {
  Config c;
  c.set_override("train.lr", " 0.01 ");
  CHECK(c.get_double("train.lr") == 0.01);
  CHECK_THROWS_WITH_AS(c.set_override("nope.key", "1"),
                       doctest::Contains("unknown config key 'nope.key'"), UsageError);
  c.set_override("schedule.T", "abc");
  CHECK_THROWS_AS(c.get_int("schedule.T"), UsageError);
  c.set_override("phantom.background", "1.5x");
  CHECK_THROWS_AS(c.get_double("phantom.background"), UsageError);
  c.set_override("control.stack_bands", "maybe");
  CHECK_THROWS_AS(c.get_bool("control.stack_bands"), UsageError);
  c.set_override("phantom.doses", "0.5,zero");
  CHECK_THROWS_AS(c.get_double_list("phantom.doses"), UsageError);
  CHECK_THROWS_AS(c.get("not.a.key"), UsageError);
}

TEST_CASE("run config validation") {
  const RunConfig r = RunConfig::from_config(Config());
  CHECK(r.dims == Dims3{16, 16, 16});
  CHECK(r.doses.size() == 3);
  CHECK(r.T == 100);
  CHECK(r.unet.base_channels == 8);
  CHECK(r.selector.str() == "LLL");
  CHECK(r.config_hash == Config().hash());

  CHECK(override_cfg({{"phantom.dims", "8,16,12"}}).dims == Dims3{8, 16, 12});

  CHECK_THROWS_AS(override_cfg({{"train.dose", "0.5"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"patch.size", "15"}, {"phantom.dims", "15"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"unet.levels", "3"}, {"patch.size", "18"},
                                {"phantom.dims", "18"}}),
                  UsageError);
  CHECK_THROWS_AS(override_cfg({{"patch.overlap", "16"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"normalize.percentile", "0"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"phantom.bias_amplitude", "1.0"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"phantom.counts_per_unit", "0"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"unet.gn_groups", "3"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"phantom.dims", "4,4"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"phantom.ellipsoids_min", "3"},
                                {"phantom.ellipsoids_max", "2"}}),
                  UsageError);
  CHECK_THROWS_AS(override_cfg({{"schedule.beta_max", "1.5"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"sample.variance", "gamma"}}), UsageError);
  CHECK_THROWS_AS(override_cfg({{"phantom.noise_model", "cauchy"}}), UsageError);
}

TEST_CASE("dose labels") {
  CHECK(dose_label(0.05) == "0.05");
  CHECK(dose_label(0.25) == "0.25");
  CHECK(dose_label(0.02) == "0.02");
  CHECK(dose_label(1.0) == "1");
}

TEST_CASE("report aggregates exclude infinite values") {
  const MetricReport r = make_report("demo", hand_cases(), 42);
  CHECK(r.label == "demo");
  CHECK(r.config_hash == 42);
  const MetricAggregate& ps = r.aggregate.at("psnr");
  CHECK(ps.mean == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(ps.stddev == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
  CHECK(ps.n == 2);
  CHECK(ps.inf_count == 1);
  const MetricAggregate& ss = r.aggregate.at("ssim");
  CHECK(ss.mean == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(ss.n == 3);
  CHECK(ss.inf_count == 0);

  const std::string table = report_table(r);
  CHECK(table.find("report: demo") != std::string::npos);
  CHECK(table.find("inf") != std::string::npos);
  CHECK(table.find("infinite case(s) excluded") != std::string::npos);
  CHECK(table.find("p_holm") == std::string::npos);
}

TEST_CASE("paired comparison matches the statistics primitives") {
  std::vector<CaseMetrics> pred, base;
  const std::vector<double> diffs = {1.0, 2.0, 3.0, -4.0, 5.0, -6.0, 7.0, 8.0, 9.0, 10.0};
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    CaseMetrics p, b;
    p.id = b.id = "case" + std::to_string(i);
    b.psnr = 20.0;
    p.psnr = 20.0 + diffs[i];
    p.ssim = b.ssim = 0.9;
    p.gmsd = b.gmsd = 0.1;
    p.nmae = b.nmae = 0.2;
    pred.push_back(p);
    base.push_back(b);
  }
  MetricReport rp = make_report("pred", pred, 7);
  const MetricReport rb = make_report("base", base, 7);
  attach_comparison(rp, rb);

  CHECK(rp.comparator == "base");
  const double p_psnr = wilcoxon_signed_rank(diffs);
  CHECK(rp.comparison.at("psnr").p_raw == p_psnr);
  CHECK(rp.comparison.at("ssim").p_raw == 1.0);
  const std::vector<double> p_holm = holm_correct({p_psnr, 1.0, 1.0, 1.0});
  CHECK(rp.comparison.at("psnr").p_holm == p_holm[0]);
  CHECK(rp.comparison.at("ssim").p_holm == p_holm[1]);
  CHECK(rp.comparison.at("psnr").sig_05 == (p_holm[0] < 0.05));
  CHECK(report_table(rp).find("p_holm") != std::string::npos);

  MetricReport short_base = rb;
  short_base.cases.pop_back();
  CHECK_THROWS_AS(attach_comparison(rp, short_base), UsageError);
  MetricReport renamed = rb;
  renamed.cases[0].id = "other";
  CHECK_THROWS_AS(attach_comparison(rp, renamed), UsageError);
}

TEST_CASE("report files round-trip including infinities") {
  const fs::path dir = fresh_dir("report");
  const fs::path f = dir / "report.json";

  MetricReport r = make_report("demo", hand_cases(), 0xabcdef);
  MetricReport base = make_report("base", hand_cases(), 0xabcdef);
  base.cases[0].psnr = 9.0;
  attach_comparison(r, base);
  save_report(f.string(), r);

  const MetricReport l = load_report(f.string());
  CHECK(l.label == r.label);
  CHECK(l.comparator == "base");
  CHECK(l.config_hash == r.config_hash);
  REQUIRE(l.cases.size() == r.cases.size());
  for (std::size_t i = 0; i < r.cases.size(); ++i) {
    CHECK(l.cases[i].id == r.cases[i].id);
    CHECK(l.cases[i].psnr == r.cases[i].psnr);
    CHECK(l.cases[i].ssim == r.cases[i].ssim);
    CHECK(l.cases[i].gmsd == r.cases[i].gmsd);
    CHECK(l.cases[i].nmae == r.cases[i].nmae);
  }
  CHECK(std::isinf(l.cases[2].psnr));
  for (const char* key : kMetricKeys) {
    CHECK(l.aggregate.at(key).mean == r.aggregate.at(key).mean);
    CHECK(l.aggregate.at(key).stddev == r.aggregate.at(key).stddev);
    CHECK(l.aggregate.at(key).n == r.aggregate.at(key).n);
    CHECK(l.aggregate.at(key).inf_count == r.aggregate.at(key).inf_count);
    CHECK(l.comparison.at(key).p_raw == r.comparison.at(key).p_raw);
    CHECK(l.comparison.at(key).p_holm == r.comparison.at(key).p_holm);
  }

  CHECK_THROWS_AS(load_report((dir / "nope.json").string()), IoError);
  const fs::path bad = dir / "bad.json";
  write_text(bad, "{ not json");
  CHECK_THROWS_AS(load_report(bad.string()), FormatError);
  write_text(bad, "{\"label\": \"x\"}");
  CHECK_THROWS_AS(load_report(bad.string()), FormatError);
}

TEST_CASE("case evaluation wires the four metrics") {
  const Volume ref = generate_phantom({{8, 8, 8}, 0.5, {{4, 4, 4, 2, 2, 2, 3.0}}, 0.0, 1});
  const Volume pred(ref.dims(), ref.data() * 0.9 + 0.05, ref.unit());
  const CaseMetrics m = evaluate_case("x", pred, ref);
  CHECK(m.id == "x");
  CHECK(m.psnr == psnr(pred, ref));
  CHECK(m.ssim == ssim3(pred, ref));
  CHECK(m.gmsd == gmsd(pred, ref));
  CHECK(m.nmae == nmae(pred, ref));
  CHECK_THROWS_AS(m.metric("mse"), UsageError);
}

TEST_CASE("normalization stats use the nearest-rank percentile") {
  const Volume v({1, 1, 4}, (Volume::Array(4) << 3.0, 1.0, 4.0, 2.0).finished());
  CHECK(compute_norm_stats({v}, 100.0).hi == 4.0);
  CHECK(compute_norm_stats({v}, 50.0).hi == 2.0);
  CHECK(compute_norm_stats({v}, 10.0).hi == 1.0);
  CHECK(compute_norm_stats({v}, 100.0).lo == 0.0);

  // 100 pooled voxels over several volumes.
  std::vector<Volume> pool;
  Volume::Array vals(10);
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 10; ++i) vals[i] = double(10 * k + i + 1);
    pool.emplace_back(Dims3{1, 2, 5}, vals);
  }
  CHECK(compute_norm_stats(pool, 99.5).hi == 100.0);
  CHECK(compute_norm_stats(pool, 99.0).hi == 99.0);
  CHECK(compute_norm_stats(pool, 0.5).hi == 1.0);

  // Low percentile hitting zero falls back to the pooled maximum.
  const Volume z({1, 1, 4}, (Volume::Array(4) << 0.0, 0.0, 0.0, 3.0).finished());
  CHECK(compute_norm_stats({z}, 25.0).hi == 3.0);

  CHECK_THROWS_AS(compute_norm_stats({}, 50.0), UsageError);
  CHECK_THROWS_AS(compute_norm_stats({v}, 0.0), UsageError);
  CHECK_THROWS_AS(compute_norm_stats({v}, 100.5), UsageError);
  CHECK_THROWS_AS(compute_norm_stats({Volume::zeros({2, 2, 2})}, 50.0), UsageError);
}

TEST_CASE("random phantom layouts respect the configured ranges") {
  const RunConfig cfg = RunConfig::from_config(Config());
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const PhantomSpec spec = random_phantom_spec(cfg, seed);
    CHECK(spec.dims == cfg.dims);
    CHECK(spec.background == cfg.background);
    CHECK(std::int64_t(spec.ellipsoids.size()) >= cfg.ellipsoids_min);
    CHECK(std::int64_t(spec.ellipsoids.size()) <= cfg.ellipsoids_max);
    for (const auto& el : spec.ellipsoids) {
      CHECK(el.uptake >= cfg.uptake_min);
      CHECK(el.uptake <= cfg.uptake_max);
    }
    const PhantomSpec again = random_phantom_spec(cfg, seed);
    REQUIRE(again.ellipsoids.size() == spec.ellipsoids.size());
    for (std::size_t i = 0; i < spec.ellipsoids.size(); ++i) {
      CHECK(again.ellipsoids[i].cd == spec.ellipsoids[i].cd);
      CHECK(again.ellipsoids[i].sw == spec.ellipsoids[i].sw);
      CHECK(again.ellipsoids[i].uptake == spec.ellipsoids[i].uptake);
    }
  }
}

TEST_CASE("training samples are normalized patch pairs with priors") {
  const RunConfig cfg = override_cfg({{"patch.size", "8"}, {"patch.overlap", "4"}});
  std::vector<LoadedCase> cases;
  for (std::uint64_t s = 1; s <= 2; ++s) {
    const Volume clean = generate_phantom(random_phantom_spec(cfg, s));
    const Volume low = simulate_low_dose(clean, 0.25, 40.0, s, NoiseModel::Poisson);
    cases.push_back({"c" + std::to_string(s), clean, low});
  }
  const NormStats norm = compute_norm_stats({cases[0].clean, cases[1].clean}, 99.5);

  const auto samples = build_train_samples(cfg, cases, norm);
  CHECK(samples.size() == 2 * 27);
  for (const auto& s : {samples.front(), samples.back()}) {
    CHECK(s.x0.dims() == Dims3{8, 8, 8});
    CHECK(s.y.dims() == Dims3{8, 8, 8});
    CHECK(s.bands.source_dims == Dims3{8, 8, 8});
    CHECK(s.bands.bands[0].dims() == Dims3{4, 4, 4});
  }
  // First patch of the first case sits at the volume origin.
  const Volume nl = normalize(cases[0].low, norm).volume;
  const Volume p0 = extract_patches(nl, cfg.patch, cfg.overlap).second.front();
  CHECK((samples[0].y.data() - p0.data()).abs().maxCoeff() == 0.0);
  CHECK((samples[0].x0.data() - samples[0].y.data()).abs().maxCoeff() > 0.0);

  const RunConfig whole = override_cfg({});
  std::vector<LoadedCase> big;
  const Volume clean = generate_phantom(random_phantom_spec(whole, 3));
  big.push_back({"c3", clean, clean});
  CHECK(build_train_samples(whole, big, norm).size() == 1);
}

TEST_CASE("phantom dataset generation is reproducible and loadable") {
  const fs::path d1 = fresh_dir("data1");
  const fs::path d2 = fresh_dir("data2");
  const RunConfig cfg = RunConfig::from_config(mini_config());
  cmd_phantom_gen(cfg, d1.string());
  cmd_phantom_gen(cfg, d2.string());

  const DatasetManifest m = load_manifest(d1.string());
  CHECK(m.config_hash == cfg.config_hash);
  CHECK(m.dims == Dims3{8, 8, 8});
  CHECK(m.doses == std::vector<double>{0.25});
  REQUIRE(m.cases.size() == 4);
  CHECK(m.cases[0].id == "train000");
  CHECK(m.cases[0].kind == "train");
  CHECK(m.cases[2].id == "test000");
  CHECK(m.cases[2].kind == "test");
  for (const auto& mc : m.cases) {
    CHECK(fs::exists(d1 / mc.clean_file));
    REQUIRE(mc.low_files.count("0.25") == 1);
    CHECK(fs::exists(d1 / mc.low_files.at("0.25")));
  }

  // Regeneration is byte-identical.
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(d1)) files.push_back(e.path().filename());
  CHECK(files.size() == 1 + 4 * 2);
  for (const auto& f : files) CHECK(read_bytes(d1 / f) == read_bytes(d2 / f));

  const auto train = load_cases(d1.string(), "train", 0.25);
  REQUIRE(train.size() == 2);
  CHECK(train[0].id == "train000");
  CHECK(train[0].clean.dims() == Dims3{8, 8, 8});
  CHECK(train[0].clean.unit() == Unit::Suv);
  CHECK((train[0].clean.data() - train[0].low.data()).abs().maxCoeff() > 0.0);
  CHECK_THROWS_AS(load_cases(d1.string(), "train", 0.05), UsageError);
  CHECK_THROWS_AS(load_cases(d1.string(), "validate", 0.25), UsageError);
  CHECK_THROWS_AS(load_manifest((tmp_root() / "nodir").string()), IoError);

  const fs::path broken = fresh_dir("data_broken");
  write_text(broken / "manifest.json", "{ nope");
  CHECK_THROWS_AS(load_manifest(broken.string()), FormatError);
  write_text(broken / "manifest.json", "{\"cases\": []}");
  CHECK_THROWS_AS(load_manifest(broken.string()), FormatError);
}

TEST_CASE("volume denoising is deterministic and control-transparent at init") {
  const RunConfig cfg = RunConfig::from_config(mini_config());
  nn::UNetConfig ucfg = cfg.unet;
  BackboneModel backbone(ucfg, cfg.schedule(), {0.0, 2.0}, 5);
  init_normal(backbone.store().at("out.w").value, Rng(50), 0.05);

  const Volume clean = generate_phantom(random_phantom_spec(cfg, 9));
  const Volume low = simulate_low_dose(clean, 0.25, 40.0, 9, NoiseModel::Poisson);

  const Volume a = denoise_volume(cfg, backbone, nullptr, low, 7);
  CHECK(a.dims() == low.dims());
  CHECK(a.unit() == low.unit());
  const Volume b = denoise_volume(cfg, backbone, nullptr, low, 7);
  CHECK((a.data() - b.data()).abs().maxCoeff() == 0.0);
  const Volume c = denoise_volume(cfg, backbone, nullptr, low, 8);
  CHECK((a.data() - c.data()).abs().maxCoeff() > 0.0);

  ControlBranch branch(backbone, ControlConfig{cfg.selector, cfg.stack_bands}, 6);
  const Volume d = denoise_volume(cfg, backbone, &branch, low, 7);
  CHECK((a.data() - d.data()).abs().maxCoeff() == 0.0);
}

TEST_CASE("command line: wavelet split and error exit codes") {
  const fs::path dir = fresh_dir("cli_dwt");
  const Volume vol = random_normal_volume({8, 8, 8}, Rng(77));
  const fs::path in = dir / "vol.vxv";
  write_volume(in.string(), vol);

  const std::string stem = (dir / "out").string();
  CHECK(run_cli("dwt --input " + in.string() + " --out-stem " + stem) == 0);
  // The CLI round-trips through the float32 file format; push the reference
  // bands through the same serializer and compare bytes.
  const SubbandSet want = dwt3(read_volume(in.string()));
  for (int b = 0; b < kNumBands; ++b) {
    const fs::path f = dir / ("out." + band_name(b) + ".vxv");
    REQUIRE(fs::exists(f));
    const fs::path reff = dir / ("ref." + band_name(b) + ".vxv");
    write_volume(reff.string(), want.bands[std::size_t(b)]);
    CHECK(read_bytes(f) == read_bytes(reff));
  }

  CHECK(run_cli("dwt --input " + (dir / "missing.vxv").string() + " --out-stem " + stem) == 3);
  const fs::path garbage = dir / "garbage.vxv";
  write_text(garbage, "this is not a volume");
  CHECK(run_cli("dwt --input " + garbage.string() + " --out-stem " + stem) == 4);
  CHECK(run_cli("--set bogus.key=1 dwt --input " + in.string() + " --out-stem " + stem) == 2);
  CHECK(run_cli("--set noequals dwt --input " + in.string() + " --out-stem " + stem) == 2);
  CHECK(run_cli("no-such-command") != 0);
  CHECK(run_cli("dwt") != 0);
}

TEST_CASE("command line: miniature end-to-end run") {
  const fs::path dir = fresh_dir("cli_chain");
  const fs::path data = dir / "data";
  const std::string flags = mini_cli_flags();

  CHECK(run_cli("phantom-gen --out " + data.string() + flags) == 0);
  REQUIRE(fs::exists(data / "manifest.json"));

  const fs::path backbone = dir / "backbone.vxc";
  CHECK(run_cli("train-backbone --data " + data.string() + " --out " + backbone.string() +
                flags) == 0);
  REQUIRE(fs::exists(backbone));
  REQUIRE(fs::exists(dir / "backbone.vxc.loss.json"));
  {
    std::ifstream in(dir / "backbone.vxc.loss.json");
    nlohmann::json j;
    in >> j;
    CHECK(j.at("steps").get<int>() == 5);
    CHECK(j.at("loss").size() == 5);
    CHECK(j.at("config_hash").get<std::string>() ==
          format_hash(RunConfig::from_config(mini_config()).config_hash));
  }

  const fs::path branch = dir / "branch.vxc";
  CHECK(run_cli("train-control --backbone " + backbone.string() + " --data " + data.string() +
                " --out " + branch.string() + flags) == 0);
  REQUIRE(fs::exists(branch));
  CHECK(load_checkpoint(branch.string()).kind == "branch");

  const fs::path preds = dir / "preds";
  fs::create_directories(preds);
  for (const std::string id : {"test000", "test001"}) {
    CHECK(run_cli("denoise --backbone " + backbone.string() + " --branch " + branch.string() +
                  " --input " + (data / (id + ".low_0.25.vxv")).string() + " --output " +
                  (preds / (id + ".vxv")).string() + flags) == 0);
    const Volume den = read_volume((preds / (id + ".vxv")).string());
    CHECK(den.dims() == Dims3{8, 8, 8});
    CHECK(den.unit() == Unit::Suv);
  }

  const fs::path base_json = dir / "baseline.json";
  CHECK(run_cli("eval --data " + data.string() + " --pred-dose 0.25 --label input --out " +
                base_json.string() + flags) == 0);
  const MetricReport base = load_report(base_json.string());
  CHECK(base.label == "input");
  CHECK(base.cases.size() == 2);
  CHECK(base.comparison.empty());
  CHECK(fs::exists(dir / "baseline.txt"));

  const fs::path rep_json = dir / "denoised.json";
  CHECK(run_cli("eval --data " + data.string() + " --pred-dir " + preds.string() +
                " --label denoised --comparator " + base_json.string() + " --out " +
                rep_json.string() + flags) == 0);
  const MetricReport rep = load_report(rep_json.string());
  CHECK(rep.cases.size() == 2);
  CHECK(rep.comparator == "input");
  for (const char* key : kMetricKeys) {
    CHECK(rep.comparison.at(key).p_raw > 0.0);
    CHECK(rep.comparison.at(key).p_raw <= 1.0);
  }
  CHECK(rep.config_hash == base.config_hash);

  CHECK(run_cli("eval --data " + data.string() + " --out " + (dir / "x.json").string() +
                flags) == 2);
  CHECK(run_cli("eval --data " + data.string() + " --pred-dir " + preds.string() +
                " --pred-dose 0.25 --out " + (dir / "x.json").string() + flags) == 2);

  // A fresh denoise of the same case with the same seed reproduces the file.
  const fs::path again = dir / "again.vxv";
  CHECK(run_cli("denoise --backbone " + backbone.string() + " --branch " + branch.string() +
                " --input " + (data / "test000.low_0.25.vxv").string() + " --output " +
                again.string() + flags) == 0);
  CHECK(read_bytes(again) == read_bytes(preds / "test000.vxv"));
}

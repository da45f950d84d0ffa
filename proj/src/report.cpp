#include "wcdiff/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "wcdiff/config.hpp"
#include "wcdiff/error.hpp"
#include "wcdiff/stats.hpp"

namespace wcdiff {
namespace {

using nlohmann::json;

json metric_to_json(double v) {
  if (std::isinf(v) && v > 0.0) return json("inf");
  return json(v);
}

double metric_from_json(const json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw FormatError("unexpected metric string '" + j.get<std::string>() + "' at " + where);
  }
  if (!j.is_number()) throw FormatError("metric is not a number at " + where);
  return j.get<double>();
}

std::string format_metric(double v, int width, int prec) {
  char buf[64];
  if (std::isinf(v)) {
    std::snprintf(buf, sizeof(buf), "%*s", width, v > 0.0 ? "inf" : "-inf");
  } else {
    std::snprintf(buf, sizeof(buf), "%*.*f", width, prec, v);
  }
  return std::string(buf);
}

}  // namespace

double CaseMetrics::metric(const std::string& key) const {
  if (key == "psnr") return psnr;
  if (key == "ssim") return ssim;
  if (key == "gmsd") return gmsd;
  if (key == "nmae") return nmae;
  throw UsageError("unknown metric key '" + key + "'");
}

CaseMetrics evaluate_case(const std::string& id, const Volume& pred, const Volume& ref,
                          const SsimOptions& ssim_opts) {
  CaseMetrics m;
  m.id = id;
  m.psnr = psnr(pred, ref);
  m.ssim = ssim3(pred, ref, ssim_opts);
  m.gmsd = gmsd(pred, ref);
  m.nmae = nmae(pred, ref);
  return m;
}

MetricReport make_report(const std::string& label, std::vector<CaseMetrics> cases,
                         std::uint64_t config_hash) {
  MetricReport r;
  r.label = label;
  r.config_hash = config_hash;
  r.cases = std::move(cases);
  for (const char* key : kMetricKeys) {
    MetricAggregate agg;
    std::vector<double> vals;
    for (const auto& c : r.cases) {
      const double v = c.metric(key);
      if (std::isinf(v)) {
        ++agg.inf_count;
        continue;
      }
      vals.push_back(v);
    }
    agg.n = static_cast<std::int64_t>(vals.size());
    if (!vals.empty()) {
      double sum = 0.0;
      for (const double v : vals) sum += v;
      agg.mean = sum / static_cast<double>(vals.size());
      if (vals.size() > 1) {
        double ss = 0.0;
        for (const double v : vals) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
      }
    }
    r.aggregate[key] = agg;
  }
  return r;
}

void attach_comparison(MetricReport& report, const MetricReport& baseline) {
  if (report.cases.size() != baseline.cases.size()) {
    throw UsageError("comparison requires matching case sets: " +
                     std::to_string(report.cases.size()) + " vs " +
                     std::to_string(baseline.cases.size()) + " cases");
  }
  std::map<std::string, const CaseMetrics*> base_by_id;
  for (const auto& c : baseline.cases) base_by_id[c.id] = &c;

  std::vector<double> p_raws;
  for (const char* key : kMetricKeys) {
    std::vector<double> diffs;
    for (const auto& c : report.cases) {
      const auto it = base_by_id.find(c.id);
      if (it == base_by_id.end()) {
        throw UsageError("comparison case '" + c.id + "' missing from baseline '" +
                         baseline.label + "'");
      }
      const double a = c.metric(key);
      const double b = it->second->metric(key);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      diffs.push_back(a - b);
    }
    p_raws.push_back(diffs.empty() ? 1.0 : wilcoxon_signed_rank(diffs));
  }
  const std::vector<double> p_holm = holm_correct(p_raws);

  report.comparator = baseline.label;
  report.comparison.clear();
  for (std::size_t i = 0; i < kMetricKeys.size(); ++i) {
    MetricComparison cmp;
    cmp.p_raw = p_raws[i];
    cmp.p_holm = p_holm[i];
    cmp.sig_05 = cmp.p_holm < 0.05;
    cmp.sig_01 = cmp.p_holm < 0.01;
    report.comparison[kMetricKeys[i]] = cmp;
  }
}

std::string report_table(const MetricReport& report) {
  std::ostringstream out;
  out << "report: " << report.label << "  (config " << format_hash(report.config_hash) << ")\n";
  if (!report.comparator.empty()) out << "comparator: " << report.comparator << "\n";
  out << "case            psnr      ssim      gmsd      nmae\n";
  for (const auto& c : report.cases) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%-12s", c.id.c_str());
    out << idbuf << format_metric(c.psnr, 10, 3) << format_metric(c.ssim, 10, 4)
        << format_metric(c.gmsd, 10, 4) << format_metric(c.nmae, 10, 4) << "\n";
  }
  out << "mean        ";
  for (const char* key : kMetricKeys) {
    out << format_metric(report.aggregate.at(key).mean, 10, key == std::string("psnr") ? 3 : 4);
  }
  out << "\nstddev      ";
  for (const char* key : kMetricKeys) {
    out << format_metric(report.aggregate.at(key).stddev, 10, key == std::string("psnr") ? 3 : 4);
  }
  out << "\n";
  const auto& ps = report.aggregate.at("psnr");
  if (ps.inf_count > 0) {
    out << "(psnr: " << ps.inf_count << " infinite case(s) excluded from mean/stddev)\n";
  }
  if (!report.comparison.empty()) {
    out << "p_holm      ";
    for (const char* key : kMetricKeys) {
      const auto& cmp = report.comparison.at(key);
      std::string mark = cmp.sig_01 ? "**" : (cmp.sig_05 ? "*" : "");
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%8.4f%-2s", cmp.p_holm, mark.c_str());
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

void save_report(const std::string& path, const MetricReport& report) {
  json j;
  j["label"] = report.label;
  j["comparator"] = report.comparator;
  j["config_hash"] = format_hash(report.config_hash);
  j["cases"] = json::array();
  for (const auto& c : report.cases) {
    json jc;
    jc["id"] = c.id;
    jc["psnr"] = metric_to_json(c.psnr);
    jc["ssim"] = metric_to_json(c.ssim);
    jc["gmsd"] = metric_to_json(c.gmsd);
    jc["nmae"] = metric_to_json(c.nmae);
    j["cases"].push_back(jc);
  }
  j["aggregate"] = json::object();
  for (const auto& [key, agg] : report.aggregate) {
    j["aggregate"][key] = {
        {"mean", agg.mean}, {"stddev", agg.stddev}, {"n", agg.n}, {"inf_count", agg.inf_count}};
  }
  if (!report.comparison.empty()) {
    j["comparison"] = json::object();
    for (const auto& [key, cmp] : report.comparison) {
      j["comparison"][key] = {{"p_raw", cmp.p_raw},
                              {"p_holm", cmp.p_holm},
                              {"sig_05", cmp.sig_05},
                              {"sig_01", cmp.sig_01}};
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create report file " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed to write report file " + path);
}

MetricReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("report file " + path + " is not valid JSON: " + e.what());
  }
  MetricReport r;
  try {
    r.label = j.at("label").get<std::string>();
    r.comparator = j.value("comparator", std::string());
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    for (const auto& jc : j.at("cases")) {
      CaseMetrics c;
      c.id = jc.at("id").get<std::string>();
      c.psnr = metric_from_json(jc.at("psnr"), path);
      c.ssim = metric_from_json(jc.at("ssim"), path);
      c.gmsd = metric_from_json(jc.at("gmsd"), path);
      c.nmae = metric_from_json(jc.at("nmae"), path);
      r.cases.push_back(c);
    }
    for (const char* key : kMetricKeys) {
      const auto& ja = j.at("aggregate").at(key);
      MetricAggregate agg;
      agg.mean = ja.at("mean").get<double>();
      agg.stddev = ja.at("stddev").get<double>();
      agg.n = ja.at("n").get<std::int64_t>();
      agg.inf_count = ja.at("inf_count").get<std::int64_t>();
      r.aggregate[key] = agg;
    }
    if (j.contains("comparison")) {
      for (const char* key : kMetricKeys) {
        const auto& jc = j.at("comparison").at(key);
        MetricComparison cmp;
        cmp.p_raw = jc.at("p_raw").get<double>();
        cmp.p_holm = jc.at("p_holm").get<double>();
        cmp.sig_05 = jc.at("sig_05").get<bool>();
        cmp.sig_01 = jc.at("sig_01").get<bool>();
        r.comparison[key] = cmp;
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("report file " + path + " has unexpected structure: " + e.what());
  }
  return r;
}

}  // namespace wcdiff

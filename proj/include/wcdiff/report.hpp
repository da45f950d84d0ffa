#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wcdiff/metrics.hpp"
#include "wcdiff/volume.hpp"

namespace wcdiff {

inline constexpr std::array<const char*, 4> kMetricKeys = {"psnr", "ssim", "gmsd", "nmae"};

struct CaseMetrics {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double gmsd = 0.0;
  double nmae = 0.0;

  double metric(const std::string& key) const;
};

struct MetricAggregate {
  double mean = 0.0;
  double stddev = 0.0;
  std::int64_t n = 0;
  std::int64_t inf_count = 0;
};

struct MetricComparison {
  double p_raw = 1.0;
  double p_holm = 1.0;
  bool sig_05 = false;
  bool sig_01 = false;
};

struct MetricReport {
  std::string label;
  std::string comparator;
  std::uint64_t config_hash = 0;
  std::vector<CaseMetrics> cases;
  std::map<std::string, MetricAggregate> aggregate;
  std::map<std::string, MetricComparison> comparison;
};

CaseMetrics evaluate_case(const std::string& id, const Volume& pred, const Volume& ref,
                          const SsimOptions& ssim_opts = {});

// Builds aggregates over the given cases. Infinite PSNR values are excluded
// from the mean and standard deviation and counted separately.
MetricReport make_report(const std::string& label, std::vector<CaseMetrics> cases,
                         std::uint64_t config_hash);

// Paired two-sided Wilcoxon signed-rank tests per metric, Holm-corrected
// across the four metrics. Cases are matched by id; pairs with a non-finite
// value on either side are dropped.
void attach_comparison(MetricReport& report, const MetricReport& baseline);

std::string report_table(const MetricReport& report);

void save_report(const std::string& path, const MetricReport& report);
MetricReport load_report(const std::string& path);

}  // namespace wcdiff

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dynaconf/forecast_result.hpp"
#include "dynaconf/series.hpp"

namespace dynaconf {

/// CRPS of an empirical sample forecast against one observation, in the
/// energy form mean|X - y| - 1/2 E|X - X'| over all ordered pairs
/// (evaluated via the sorted identity; the value is exact).
double crps_empirical(std::span<const double> samples, double y);

/// CRPS of the cross-dimension sums: samples is n x P row-major.
double crps_sum(std::span<const double> samples, int n, int P,
                std::span<const double> y);

/// Squared error of the sample mean against the truth.
double mse_point(std::span<const double> samples, double y);

/// Per-run aggregate scores over a set of rolling windows. CRPS scores are
/// reported both raw (plain average of per-point scores) and normalized by
/// the mean absolute target, the convention the reference results use.
struct AggregateScores {
  double crps = 0.0;             // sum(scores)/sum(|y|)
  double crps_sigma = 0.0;       // on cross-dim sums, normalized likewise
  double mse = 0.0;
  double crps_raw = 0.0;         // plain average, no normalization
  double crps_sigma_raw = 0.0;
  std::vector<double> per_window_crps;  // raw per-window means
  int n_windows = 0;
  int n_points = 0;  // (t, i) pairs scored
};

/// Scores each (window, step, dim) against the aligned truth rows.
AggregateScores evaluate_rolling(std::span<const ForecastResult> forecasts,
                                 const Series& truth);

/// Across-seed report for one (model, dataset) cell.
struct MetricReport {
  struct Entry {
    double mean = 0.0;
    double stddev = 0.0;  // 0 for a single seed
    std::vector<double> per_seed;
  };
  Entry crps, crps_sigma, mse, crps_raw, crps_sigma_raw;
  std::vector<AggregateScores> per_seed_scores;
  std::string model_id, dataset_id;
  int n_paths = 0;
  std::vector<std::uint64_t> seeds;
  std::uint64_t config_hash = 0;

  static MetricReport from_runs(std::vector<AggregateScores> runs,
                                std::string model_id, std::string dataset_id,
                                int n_paths, std::vector<std::uint64_t> seeds);
};

void write_report_json(const MetricReport& r, const std::filesystem::path& file);
/// Flat table: method,dataset,metric,mean,std
void write_report_csv(const MetricReport& r, const std::filesystem::path& file);
MetricReport read_report_json(const std::filesystem::path& file);

}  // namespace dynaconf

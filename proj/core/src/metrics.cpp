#include "dynaconf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dynaconf/errors.hpp"
#include "json.hpp"

namespace dynaconf {

double crps_empirical(std::span<const double> samples, double y) {
  const int n = static_cast<int>(samples.size());
  if (n < 2) throw ContractViolation("crps_empirical: need at least two samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  double abs_err = 0.0, pair_term = 0.0;
  for (int i = 0; i < n; ++i) {
    abs_err += std::abs(s[i] - y);
    pair_term += (2.0 * i - n + 1.0) * s[i];
  }
  // pair_term equals sum_{i<j} (s_j - s_i); ordered pairs double it
  return abs_err / n - pair_term / (static_cast<double>(n) * n);
}

double crps_sum(std::span<const double> samples, int n, int P,
                std::span<const double> y) {
  if (n < 2) throw ContractViolation("crps_sum: need at least two samples");
  if (static_cast<int>(samples.size()) != n * P)
    throw ContractViolation("crps_sum: sample buffer does not match n x P");
  std::vector<double> sums(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < P; ++j) sums[i] += samples[static_cast<std::size_t>(i) * P + j];
  double ysum = 0.0;
  for (int j = 0; j < P; ++j) ysum += y[j];
  return crps_empirical(sums, ysum);
}

double mse_point(std::span<const double> samples, double y) {
  if (samples.empty()) throw ContractViolation("mse_point: empty sample set");
  double m = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
  return (m - y) * (m - y);
}

AggregateScores evaluate_rolling(std::span<const ForecastResult> forecasts,
                                 const Series& truth) {
  AggregateScores agg;
  double crps_total = 0.0, abs_y_total = 0.0;
  double crps_sig_total = 0.0, abs_sum_total = 0.0;
  double mse_total = 0.0;
  std::vector<double> col, rowbuf;

  for (const auto& f : forecasts) {
    if (f.t_start < 0 || f.t_start + f.horizon > truth.length)
      throw ContractViolation("evaluate_rolling: forecast window outside the series");
    if (f.dim != truth.dim)
      throw ContractViolation("evaluate_rolling: dimension mismatch");
    double win_crps = 0.0;
    for (int h = 0; h < f.horizon; ++h) {
      int t = f.t_start + h;
      for (int i = 0; i < f.dim; ++i) {
        col.resize(f.n_paths);
        for (int p = 0; p < f.n_paths; ++p) col[p] = f.at(p, h, i);
        double score = crps_empirical(col, truth.at(t, i));
        crps_total += score;
        win_crps += score;
        abs_y_total += std::abs(truth.at(t, i));
        mse_total += mse_point(col, truth.at(t, i));
        ++agg.n_points;
      }
      rowbuf.resize(static_cast<std::size_t>(f.n_paths) * f.dim);
      for (int p = 0; p < f.n_paths; ++p)
        for (int i = 0; i < f.dim; ++i)
          rowbuf[static_cast<std::size_t>(p) * f.dim + i] = f.at(p, h, i);
      double ssum = 0.0;
      for (int i = 0; i < f.dim; ++i) ssum += truth.at(t, i);
      crps_sig_total += crps_sum(rowbuf, f.n_paths, f.dim, truth.row(t));
      abs_sum_total += std::abs(ssum);
    }
    agg.per_window_crps.push_back(win_crps / (f.horizon * f.dim));
    ++agg.n_windows;
  }
  if (agg.n_points == 0) throw ContractViolation("evaluate_rolling: nothing to score");
  int n_t = agg.n_points / truth.dim;
  agg.crps_raw = crps_total / agg.n_points;
  agg.crps_sigma_raw = crps_sig_total / n_t;
  agg.mse = mse_total / agg.n_points;
  agg.crps = abs_y_total > 0 ? crps_total / abs_y_total : agg.crps_raw;
  agg.crps_sigma = abs_sum_total > 0 ? crps_sig_total / abs_sum_total : agg.crps_sigma_raw;
  return agg;
}

namespace {

MetricReport::Entry make_entry(const std::vector<double>& vals) {
  MetricReport::Entry e;
  e.per_seed = vals;
  e.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
  if (vals.size() > 1) {
    double ss = 0.0;
    for (double v : vals) ss += (v - e.mean) * (v - e.mean);
    e.stddev = std::sqrt(ss / vals.size());
  }
  return e;
}

}  // namespace

MetricReport MetricReport::from_runs(std::vector<AggregateScores> runs,
                                     std::string model_id, std::string dataset_id,
                                     int n_paths, std::vector<std::uint64_t> seeds) {
  if (runs.empty()) throw ContractViolation("metric report: no runs");
  MetricReport r;
  auto collect = [&](auto proj) {
    std::vector<double> v;
    for (const auto& run : runs) v.push_back(proj(run));
    return make_entry(v);
  };
  r.crps = collect([](const AggregateScores& a) { return a.crps; });
  r.crps_sigma = collect([](const AggregateScores& a) { return a.crps_sigma; });
  r.mse = collect([](const AggregateScores& a) { return a.mse; });
  r.crps_raw = collect([](const AggregateScores& a) { return a.crps_raw; });
  r.crps_sigma_raw = collect([](const AggregateScores& a) { return a.crps_sigma_raw; });
  r.per_seed_scores = std::move(runs);
  r.model_id = std::move(model_id);
  r.dataset_id = std::move(dataset_id);
  r.n_paths = n_paths;
  r.seeds = std::move(seeds);
  return r;
}

namespace {

nlohmann::json entry_to_json(const MetricReport::Entry& e) {
  return {{"mean", e.mean}, {"std", e.stddev}, {"per_seed", e.per_seed}};
}

MetricReport::Entry entry_from_json(const nlohmann::json& j) {
  MetricReport::Entry e;
  e.mean = j.at("mean").get<double>();
  e.stddev = j.at("std").get<double>();
  e.per_seed = j.at("per_seed").get<std::vector<double>>();
  return e;
}

}  // namespace

void write_report_json(const MetricReport& r, const std::filesystem::path& file) {
  nlohmann::json j;
  j["model"] = r.model_id;
  j["dataset"] = r.dataset_id;
  j["n_paths"] = r.n_paths;
  j["seeds"] = r.seeds;
  j["config_hash"] = r.config_hash;
  j["metrics"] = {{"crps", entry_to_json(r.crps)},
                  {"crps_sigma", entry_to_json(r.crps_sigma)},
                  {"mse", entry_to_json(r.mse)},
                  {"crps_raw", entry_to_json(r.crps_raw)},
                  {"crps_sigma_raw", entry_to_json(r.crps_sigma_raw)}};
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& run : r.per_seed_scores) windows.push_back(run.per_window_crps);
  j["per_window_crps"] = windows;
  std::ofstream out(file);
  if (!out) throw DataError("cannot write report: " + file.string());
  out << j.dump(2) << "\n";
}

MetricReport read_report_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read report: " + file.string());
  nlohmann::json j;
  in >> j;
  MetricReport r;
  r.model_id = j.at("model").get<std::string>();
  r.dataset_id = j.at("dataset").get<std::string>();
  r.n_paths = j.at("n_paths").get<int>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.config_hash = j.at("config_hash").get<std::uint64_t>();
  r.crps = entry_from_json(j.at("metrics").at("crps"));
  r.crps_sigma = entry_from_json(j.at("metrics").at("crps_sigma"));
  r.mse = entry_from_json(j.at("metrics").at("mse"));
  r.crps_raw = entry_from_json(j.at("metrics").at("crps_raw"));
  r.crps_sigma_raw = entry_from_json(j.at("metrics").at("crps_sigma_raw"));
  return r;
}

void write_report_csv(const MetricReport& r, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write report: " + file.string());
  out << "method,dataset,metric,mean,std\n";
  auto row = [&](const char* metric, const MetricReport::Entry& e) {
    out << r.model_id << ',' << r.dataset_id << ',' << metric << ',' << e.mean << ','
        << e.stddev << "\n";
  };
  row("crps", r.crps);
  row("crps_sigma", r.crps_sigma);
  row("mse", r.mse);
  row("crps_raw", r.crps_raw);
  row("crps_sigma_raw", r.crps_sigma_raw);
}

// ---- forecast export (declared in forecast_result.hpp) -----------------------

void write_forecasts_csv(std::span<const ForecastResult> results,
                         const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write forecasts: " + file.string());
  out << "window,path,step,dim,value\n";
  char buf[32];
  for (std::size_t w = 0; w < results.size(); ++w) {
    const auto& f = results[w];
    for (int p = 0; p < f.n_paths; ++p)
      for (int h = 0; h < f.horizon; ++h)
        for (int i = 0; i < f.dim; ++i) {
          std::snprintf(buf, sizeof(buf), "%.17g", f.at(p, h, i));
          out << w << ',' << p << ',' << h << ',' << i << ',' << buf << "\n";
        }
  }
}

void write_forecasts_json(std::span<const ForecastResult> results,
                          const std::filesystem::path& file) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& f : results) {
    nlohmann::json e;
    e["t_start"] = f.t_start;
    e["horizon"] = f.horizon;
    e["dim"] = f.dim;
    e["n_paths"] = f.n_paths;
    e["checkpoint_hash"] = f.checkpoint_hash;
    e["seed"] = f.seed;
    e["weight_reset_warning"] = f.weight_reset_warning;
    e["mean"] = f.mean;
    e["paths"] = f.paths;
    j.push_back(std::move(e));
  }
  std::ofstream out(file);
  if (!out) throw DataError("cannot write forecasts: " + file.string());
  out << j.dump() << "\n";
}

}  // namespace dynaconf

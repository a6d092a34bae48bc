#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dynaconf {

/// Sampled predictive paths for one forecast window.
struct ForecastResult {
  int t_start = 0;  // series index of the first forecast step
  int horizon = 0;  // H
  int dim = 0;      // P
  int n_paths = 0;
  std::vector<double> paths;  // n_paths x H x P, row-major
  std::vector<double> mean;   // H x P per-step predictive means
  std::uint64_t checkpoint_hash = 0;
  std::uint64_t seed = 0;
  bool weight_reset_warning = false;

  static ForecastResult zeros(int t_start, int H, int P, int n_paths) {
    ForecastResult r;
    r.t_start = t_start;
    r.horizon = H;
    r.dim = P;
    r.n_paths = n_paths;
    r.paths.assign(static_cast<std::size_t>(n_paths) * H * P, 0.0);
    r.mean.assign(static_cast<std::size_t>(H) * P, 0.0);
    return r;
  }

  double& at(int path, int h, int i) {
    return paths[(static_cast<std::size_t>(path) * horizon + h) * dim + i];
  }
  double at(int path, int h, int i) const {
    return paths[(static_cast<std::size_t>(path) * horizon + h) * dim + i];
  }

  void compute_means() {
    mean.assign(static_cast<std::size_t>(horizon) * dim, 0.0);
    for (int p = 0; p < n_paths; ++p)
      for (int h = 0; h < horizon; ++h)
        for (int i = 0; i < dim; ++i) mean[h * dim + i] += at(p, h, i);
    for (auto& v : mean) v /= n_paths;
  }
};

/// Columnar CSV (window,path,step,dim,value) or structured JSON export.
void write_forecasts_csv(std::span<const ForecastResult> results,
                         const std::filesystem::path& file);
void write_forecasts_json(std::span<const ForecastResult> results,
                          const std::filesystem::path& file);

}  // namespace dynaconf

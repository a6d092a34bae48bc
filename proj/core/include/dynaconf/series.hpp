#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dynaconf/errors.hpp"

namespace dynaconf {

/// Multivariate time series: targets y (T x P) and optional covariates
/// x (T x Q), both row-major.
struct Series {
  int length = 0;   // T
  int dim = 0;      // P
  int cov_dim = 0;  // Q
  std::vector<double> y;
  std::vector<double> x;

  static Series zeros(int T, int P, int Q = 0) {
    Series s;
    s.length = T;
    s.dim = P;
    s.cov_dim = Q;
    s.y.assign(static_cast<std::size_t>(T) * P, 0.0);
    s.x.assign(static_cast<std::size_t>(T) * Q, 0.0);
    return s;
  }

  double& at(int t, int i) { return y[static_cast<std::size_t>(t) * dim + i]; }
  double at(int t, int i) const { return y[static_cast<std::size_t>(t) * dim + i]; }

  std::span<const double> row(int t) const {
    return {y.data() + static_cast<std::size_t>(t) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> cov_row(int t) const {
    return {x.data() + static_cast<std::size_t>(t) * cov_dim,
            static_cast<std::size_t>(cov_dim)};
  }
};

/// Conditioning window for predicting y_t: the B preceding target rows and
/// the B+1 covariate rows ending at t.
struct Window {
  std::span<const double> y;  // B x P row-major, rows t-B .. t-1
  std::span<const double> x;  // (B+1) x Q row-major, rows t-B .. t
  int window_len = 0;         // B
  int dim = 0;                // P
  int cov_dim = 0;            // Q
};

/// Window ending just before index t; requires t >= B.
Window make_window(const Series& s, int t, int B);

/// train/validation/test boundaries as [0, train_end), [train_end, val_end),
/// [val_end, length).
struct SplitSpec {
  int train_end = 0;
  int val_end = 0;
};

/// 40/20/40 split as in the synthetic benchmark protocol.
SplitSpec default_split(int T);

/// CSV with header `t,dim_0..dim_{P-1}[,x_0..x_{Q-1}]`; strictly increasing
/// integer t, constant column count, no missing values.
Series read_series_csv(const std::filesystem::path& file);
void write_series_csv(const Series& s, const std::filesystem::path& file);

}  // namespace dynaconf

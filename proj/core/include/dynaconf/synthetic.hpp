#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynaconf/forecast_result.hpp"
#include "dynaconf/rng.hpp"
#include "dynaconf/series.hpp"

namespace dynaconf {

enum class ProcessKind { kAr1Flip, kAr1Dynamic, kAr1Sin, kVar1Dynamic };

ProcessKind process_kind_from_string(const std::string& s);
std::string to_string(ProcessKind k);

struct SyntheticSpec {
  ProcessKind kind = ProcessKind::kAr1Flip;
  int length = 2500;
  int regime_len = 0;  // 0 picks the default: 100 for AR, 250 for VAR
  std::uint64_t seed = 1;
  int var_dim = 4;
  double var_coef_range = 0.8;
  int burn_in = 100;

  int dim() const { return kind == ProcessKind::kVar1Dynamic ? var_dim : 1; }
  int effective_regime_len() const {
    if (regime_len > 0) return regime_len;
    return kind == ProcessKind::kVar1Dynamic ? 250 : 100;
  }
};

/// Generated series with the retained ground-truth coefficients: per time
/// step a scalar w_t (AR) or a P x P matrix W_t (VAR), row-major.
struct GeneratedSeries {
  SyntheticSpec spec;
  Series series;
  std::vector<double> coefficients;  // length T * P * P
  SplitSpec split;

  /// Coefficient block for time t.
  std::span<const double> coeff(int t) const {
    int pp = series.dim * series.dim;
    return {coefficients.data() + static_cast<std::size_t>(t) * pp,
            static_cast<std::size_t>(pp)};
  }
};

GeneratedSeries generate(const SyntheticSpec& spec, Rng& rng);

/// Largest eigenvalue modulus of an n x n matrix (characteristic polynomial
/// roots via Durand-Kerner iteration).
double spectral_radius(std::span<const double> m, int n);

/// Ground-truth forecaster: simulates the true process forward from the
/// observed state, reading the realized coefficients (it peeks at w).
ForecastResult oracle_forecast(const GeneratedSeries& g, int t_start, int H,
                               int n_paths, Rng& rng);

/// Rolling windows of oracle forecasts over [t_begin, t_begin + n_windows*H).
std::vector<ForecastResult> oracle_rolling(const GeneratedSeries& g, int t_begin,
                                           int H, int n_windows, int n_paths,
                                           Rng& rng);

}  // namespace dynaconf

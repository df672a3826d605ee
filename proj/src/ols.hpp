#pragma once

#include <string>
#include <vector>

namespace cn::ols {

// Ordinary least squares fit. Coefficient 0 is the intercept; the design
// passed to fit() does not include an intercept column.
struct OLSFit {
  std::vector<double> coefficients;  // [intercept, b1..bp]
  double residual_mse = 0.0;         // 1/n normalization
  double r_squared = 0.0;
  std::size_t n = 0;
  std::size_t p = 0;  // columns excluding intercept
  bool regularized = false;

  std::string to_json() const;
};

// design is row-major n x p. Solves via rank-revealing QR; on rank
// deficiency falls back to ridge (XtX + ridge_eps I) and flags the fit.
OLSFit fit(const std::vector<double>& design, std::size_t n, std::size_t p,
           const std::vector<double>& target, double ridge_eps = 1e-8);

std::vector<double> predict(const OLSFit& f, const std::vector<double>& design,
                            std::size_t n);

// OLS of y on [activations | t]; returns (beta_t, residual mse).
struct RefitResult {
  double ate = 0.0;
  double mse_y = 0.0;
  OLSFit fit;
};
RefitResult ate_from_refit(const std::vector<double>& activations, std::size_t n,
                           std::size_t k, const std::vector<double>& t,
                           const std::vector<double>& y);

}  // namespace cn::ols

#include "ols.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace cn::ols {

OLSFit fit(const std::vector<double>& design, std::size_t n, std::size_t p,
           const std::vector<double>& target, double ridge_eps) {
  if (n < 2) throw RuntimeError("ols: need at least 2 rows, got " + std::to_string(n));
  if (design.size() != n * p || target.size() != n)
    throw RuntimeError("ols: design/target size mismatch");
  for (double v : design)
    if (!std::isfinite(v)) throw RuntimeError("ols: non-finite design entry");
  for (double v : target)
    if (!std::isfinite(v)) throw RuntimeError("ols: non-finite target entry");

  Eigen::MatrixXd X(n, p + 1);
  X.col(0).setOnes();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) X(i, j + 1) = design[i * p + j];
  Eigen::Map<const Eigen::VectorXd> y(target.data(), n);

  OLSFit out;
  out.n = n;
  out.p = p;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  Eigen::VectorXd beta;
  if (qr.rank() < static_cast<Eigen::Index>(p + 1)) {
    Eigen::MatrixXd G = X.transpose() * X;
    G.diagonal().array() += ridge_eps;
    beta = G.ldlt().solve(X.transpose() * y);
    out.regularized = true;
  } else {
    beta = qr.solve(y);
  }

  Eigen::VectorXd resid = y - X * beta;
  out.coefficients.assign(beta.data(), beta.data() + beta.size());
  out.residual_mse = resid.squaredNorm() / static_cast<double>(n);
  const double sst = (y.array() - y.mean()).square().sum();
  out.r_squared = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst : 0.0;
  return out;
}

std::vector<double> predict(const OLSFit& f, const std::vector<double>& design,
                            std::size_t n) {
  const std::size_t p = f.p;
  if (design.size() != n * p) throw RuntimeError("ols predict: design shape mismatch");
  std::vector<double> out(n, f.coefficients[0]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      out[i] += f.coefficients[j + 1] * design[i * p + j];
  return out;
}

RefitResult ate_from_refit(const std::vector<double>& activations, std::size_t n,
                           std::size_t k, const std::vector<double>& t,
                           const std::vector<double>& y) {
  if (n <= k + 2) throw RuntimeError("ate_from_refit: need n > k+2");
  std::vector<double> design(n * (k + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) design[i * (k + 1) + j] = activations[i * k + j];
    design[i * (k + 1) + k] = t[i];
  }
  RefitResult r;
  r.fit = fit(design, n, k + 1, y);
  r.ate = r.fit.coefficients.back();  // t column is last
  r.mse_y = r.fit.residual_mse;
  return r;
}

std::string OLSFit::to_json() const {
  std::ostringstream os;
  os.precision(12);
  os << "{\"coefficients\":[";
  for (std::size_t i = 0; i < coefficients.size(); ++i)
    os << (i ? "," : "") << coefficients[i];
  os << "],\"residual_mse\":" << residual_mse << ",\"r_squared\":" << r_squared
     << ",\"regularized\":" << (regularized ? "true" : "false") << "}";
  return os.str();
}

}  // namespace cn::ols

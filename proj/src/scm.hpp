#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cn::scm {

// Structural model constants. Defaults are the sampling scheme's table;
// every second argument of N(.;.) is a standard deviation.
struct ScmParams {
  double sd_u1 = 0.7071;
  double sd_u2 = 0.7071;
  double sd_z = 1.0;
  double sd_x = 0.05;    // spread of x around u1 - u2
  double t_slope = 1.828;
  double t_offset = -0.5;
  double t_noise_sd = 0.25;
  double y_treat_coef = 1.0;
  double y_z_coef = -1.0;
  double y_u1_coef = -2.0;
  double y_offset = -0.5;
  double y_noise_sd = 0.05;

  void validate() const;  // throws ConfigError on non-positive sd
};

struct Subject {
  double u1, u2, z, x;
  int t;  // {0,1}
  double y;
};

struct Cohort {
  std::vector<Subject> subjects;
  std::uint64_t seed = 0;
  ScmParams params;

  void write_csv(const std::string& path) const;       // header u1,u2,z,x,t,y
  void write_manifest(const std::string& path, std::size_t n) const;
};

double logistic(double v);

// Each subject draws from its own substream (seed, subject index), so
// cohorts are reproducible regardless of sampling order.
Cohort sample_cohort(const ScmParams& params, std::size_t n, std::uint64_t seed);

// Monte Carlo E[y | do(t=1)] - E[y | do(t=0)] with shared noise across arms.
double interventional_ate(const ScmParams& params, std::size_t n, std::uint64_t seed);

// t-coefficient of OLS of y on {t, x + noise, z + noise} over a fresh cohort.
// The default noise variances (0.3) match the measurement-noise level of the
// image channel, reproducing the biased-regression estimand; pass 0 for the
// clean-collider value (~0.22 at defaults).
double conditional_bias_oracle(const ScmParams& params, std::size_t n,
                               std::uint64_t seed, double noise_var_x = 0.3,
                               double noise_var_z = 0.3);

}  // namespace cn::scm

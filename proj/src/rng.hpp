#pragma once

// Counter-based portable RNG. Every draw is a pure function of
// (seed, stream, counter), so per-subject / per-image substreams can be
// sampled in any order (or in parallel) and still reproduce bit-exactly.
// Mixing is splitmix64; uniforms come from the top 53 bits; normals are
// Box-Muller on two uniforms.

#include <cmath>
#include <cstdint>

namespace cn::rng {

constexpr double kPi = 3.14159265358979323846;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// A stream is identified by (seed, stream id); draws are indexed by a counter.
class Stream {
 public:
  Stream(uint64_t seed, uint64_t stream_id)
      : key_(splitmix64(seed ^ splitmix64(stream_id))) {}

  uint64_t next_u64() { return splitmix64(key_ ^ counter_++); }

  // uniform in [0,1)
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // integer uniform in [lo, hi] inclusive
  int64_t next_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // standard normal via Box-Muller; draws two uniforms per normal and
  // discards the sine branch so the draw count per sample is fixed.
  double next_normal() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double next_normal(double mean, double sd) { return mean + sd * next_normal(); }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

// Standard normal CDF.
inline double norm_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

// Inverse standard normal CDF (Acklam's rational approximation, refined by
// one Halley step; |relative error| < 1e-9 over (0,1)).
inline double norm_ppf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement
  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(2.0 * kPi) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

}  // namespace cn::rng

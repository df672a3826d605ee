#include "scm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "errors.hpp"
#include "ols.hpp"
#include "rng.hpp"

namespace cn::scm {

void ScmParams::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0))
      throw ConfigError(std::string("scm: ") + name + " must be > 0");
  };
  pos(sd_u1, "sd_u1");
  pos(sd_u2, "sd_u2");
  pos(sd_z, "sd_z");
  pos(sd_x, "sd_x");
  pos(t_noise_sd, "t_noise_sd");
  pos(y_noise_sd, "y_noise_sd");
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

namespace {

struct Noise {
  double e_u1, e_u2, e_z, e_x, e_t, u_t, e_y;
};

Noise draw_noise(std::uint64_t seed, std::uint64_t idx) {
  rng::Stream s(seed, idx);
  Noise n;
  n.e_u1 = s.next_normal();
  n.e_u2 = s.next_normal();
  n.e_z = s.next_normal();
  n.e_x = s.next_normal();
  n.e_t = s.next_normal();
  n.u_t = s.next_uniform();
  n.e_y = s.next_normal();
  return n;
}

Subject realize(const ScmParams& p, const Noise& nz, int forced_t) {
  Subject s;
  s.u1 = p.sd_u1 * nz.e_u1;
  s.u2 = p.sd_u2 * nz.e_u2;
  s.z = p.sd_z * nz.e_z;
  s.x = s.u1 - s.u2 + p.sd_x * nz.e_x;
  const double prob = logistic(p.t_slope * s.u2 + p.t_offset + p.t_noise_sd * nz.e_t);
  s.t = forced_t >= 0 ? forced_t : (nz.u_t < prob ? 1 : 0);
  s.y = p.y_treat_coef * s.t + p.y_z_coef * s.z + p.y_u1_coef * s.u1 + p.y_offset +
        p.y_noise_sd * nz.e_y;
  return s;
}

}  // namespace

Cohort sample_cohort(const ScmParams& params, std::size_t n, std::uint64_t seed) {
  params.validate();
  if (n < 1) throw ConfigError("scm: cohort size must be >= 1");
  Cohort c;
  c.seed = seed;
  c.params = params;
  c.subjects.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    c.subjects.push_back(realize(params, draw_noise(seed, i), -1));
  return c;
}

double interventional_ate(const ScmParams& params, std::size_t n, std::uint64_t seed) {
  params.validate();
  if (n < 1) throw ConfigError("scm: n must be >= 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Noise nz = draw_noise(seed, i);
    acc += realize(params, nz, 1).y - realize(params, nz, 0).y;
  }
  return acc / static_cast<double>(n);
}

double conditional_bias_oracle(const ScmParams& params, std::size_t n,
                               std::uint64_t seed, double noise_var_x,
                               double noise_var_z) {
  if (n < 1000) throw ConfigError("conditional_bias_oracle: n must be >= 1000");
  const Cohort c = sample_cohort(params, n, seed);
  rng::Stream meas(seed, 0x6d656173ULL);  // "meas"
  const double sx = std::sqrt(noise_var_x), sz = std::sqrt(noise_var_z);
  std::vector<double> design(n * 3), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = c.subjects[i];
    design[i * 3 + 0] = s.t;
    design[i * 3 + 1] = s.x + sx * meas.next_normal();
    design[i * 3 + 2] = s.z + sz * meas.next_normal();
    y[i] = s.y;
  }
  return ols::fit(design, n, 3, y).coefficients[1];
}

void Cohort::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot open " + path);
  f << "u1,u2,z,x,t,y\n";
  char buf[160];
  for (const Subject& s : subjects) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%d,%.9g\n", s.u1, s.u2,
                  s.z, s.x, s.t, s.y);
    f << buf;
  }
}

void Cohort::write_manifest(const std::string& path, std::size_t n) const {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot open " + path);
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "{\n  \"n\": %zu,\n  \"seed\": %llu,\n  \"params\": {\n"
                "    \"sd_u1\": %.9g, \"sd_u2\": %.9g, \"sd_z\": %.9g, \"sd_x\": %.9g,\n"
                "    \"t_slope\": %.9g, \"t_offset\": %.9g, \"t_noise_sd\": %.9g,\n"
                "    \"y_treat_coef\": %.9g, \"y_z_coef\": %.9g, \"y_u1_coef\": %.9g,\n"
                "    \"y_offset\": %.9g, \"y_noise_sd\": %.9g\n  }\n}\n",
                n, static_cast<unsigned long long>(seed), params.sd_u1, params.sd_u2,
                params.sd_z, params.sd_x, params.t_slope, params.t_offset,
                params.t_noise_sd, params.y_treat_coef, params.y_z_coef,
                params.y_u1_coef, params.y_offset, params.y_noise_sd);
  f << buf;
}

}  // namespace cn::scm

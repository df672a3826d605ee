#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "errors.hpp"
#include "rng.hpp"

namespace cn::img {

namespace {

constexpr double kBgMean = -0.5, kBgSd = 0.1;
constexpr double kFgMean = 0.5;
constexpr double kDiamMin = 8.0, kDiamRange = 32.0;
constexpr double kFgSdMin = 0.05, kFgSdRange = 0.45;
constexpr double kClampEps = 1e-4;
constexpr int kJitterMax = 5;

// 3x3 box blur with zero padding outside the frame.
void box_blur3(std::vector<float>& a, int n) {
  std::vector<float> out(a.size(), 0.0f);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      float s = 0.0f;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii >= 0 && ii < n && jj >= 0 && jj < n) s += a[ii * n + jj];
        }
      out[i * n + j] = s / 9.0f;
    }
  }
  a.swap(out);
}

}  // namespace

SynthImage render_nodule(double x, double z, std::uint64_t rng_seed,
                         const RenderOptions& opt) {
  if (!std::isfinite(x) || !std::isfinite(z))
    throw RuntimeError("render_nodule: non-finite factor");
  const int n = kImageSize;
  rng::Stream s(rng_seed, 0);

  double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0;
  if (opt.jitter) {
    cy += static_cast<double>(s.next_int(-kJitterMax, kJitterMax));
    cx += static_cast<double>(s.next_int(-kJitterMax, kJitterMax));
  }
  const double diam = kDiamMin + kDiamRange * rng::norm_cdf(x);
  const double fg_sd = kFgSdMin + kFgSdRange * rng::norm_cdf(z);
  const double r2 = 0.25 * diam * diam;

  SynthImage im;
  im.gen_x = x;
  im.gen_z = z;
  im.pixels.resize(static_cast<std::size_t>(n) * n);

  std::vector<float> alpha(im.pixels.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dy = i - cy, dx = j - cx;
      alpha[i * n + j] = (dy * dy + dx * dx <= r2) ? 1.0f : 0.0f;
    }
  if (opt.blur) {
    box_blur3(alpha, n);
    box_blur3(alpha, n);
  }
  for (std::size_t k = 0; k < im.pixels.size(); ++k) {
    const double bg = s.next_normal(kBgMean, kBgSd);
    const double fg = s.next_normal(kFgMean, fg_sd);
    const double a = alpha[k];
    im.pixels[k] = static_cast<float>((1.0 - a) * bg + a * fg);
  }
  measure_image(im);
  return im;
}

void measure_image(SynthImage& im) {
  const double eps = kClampEps;
  std::size_t area = 0;
  double sum = 0.0, sum2 = 0.0;
  for (float p : im.pixels)
    if (p > 0.0f) {
      ++area;
      sum += p;
      sum2 += static_cast<double>(p) * p;
    }
  auto clamp01 = [eps](double v) { return std::clamp(v, eps, 1.0 - eps); };
  if (area == 0) {
    im.meas_x = rng::norm_ppf(eps);
    im.meas_z = rng::norm_ppf(eps);
    return;
  }
  const double deq = 2.0 * std::sqrt(static_cast<double>(area) / rng::kPi);
  im.meas_x = rng::norm_ppf(clamp01((deq - kDiamMin) / kDiamRange));
  const double mean = sum / static_cast<double>(area);
  const double var = std::max(0.0, sum2 / static_cast<double>(area) - mean * mean);
  im.meas_z = rng::norm_ppf(clamp01((std::sqrt(var) - kFgSdMin) / kFgSdRange));
}

ImagePool build_pool(std::size_t m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("build_pool: m must be >= 1");
  ImagePool pool;
  pool.seed = seed;
  pool.images.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    rng::Stream s(seed, i);
    const double gx = s.next_normal();
    const double gz = s.next_normal();
    SynthImage im = render_nodule(gx, gz, s.next_u64());
    im.id = static_cast<int>(i);
    pool.images.push_back(std::move(im));
  }
  // pool-wide normalization, after measurement
  double sum = 0.0, sum2 = 0.0;
  std::size_t cnt = 0;
  for (const SynthImage& im : pool.images)
    for (float p : im.pixels) {
      sum += p;
      sum2 += static_cast<double>(p) * p;
      ++cnt;
    }
  pool.norm_mean = sum / static_cast<double>(cnt);
  pool.norm_sd = std::sqrt(std::max(1e-12, sum2 / static_cast<double>(cnt) -
                                                pool.norm_mean * pool.norm_mean));
  for (SynthImage& im : pool.images)
    for (float& p : im.pixels)
      p = static_cast<float>((p - pool.norm_mean) / pool.norm_sd);
  return pool;
}

int match_image(const ImagePool& pool, double x, double z,
                const std::unordered_set<int>& exclude) {
  if (pool.images.empty()) throw RuntimeError("match_image: empty pool");
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (const SynthImage& im : pool.images) {
    if (exclude.count(im.id)) continue;
    const double dx = im.meas_x - x, dz = im.meas_z - z;
    const double d = dx * dx + dz * dz;
    if (d < best_d) {  // id order iteration: strict < keeps the lowest id on ties
      best_d = d;
      best = im.id;
    }
  }
  if (best < 0) throw RuntimeError("match_image: all images excluded");
  return best;
}

std::vector<float> crop_and_augment(const SynthImage& im, const CropSpec& spec,
                                    std::uint64_t rng_seed) {
  const int n = kImageSize, c = spec.size;
  if (c > n || c < 1) throw ConfigError("crop: size out of range");
  rng::Stream s(rng_seed, 0);
  int off_r, off_c;
  bool flip_h = false, flip_v = false;
  if (spec.mode == CropSpec::Mode::random) {
    off_r = static_cast<int>(s.next_int(0, n - c));
    off_c = static_cast<int>(s.next_int(0, n - c));
    flip_h = spec.mirror_h && s.next_uniform() < 0.5;
    flip_v = spec.mirror_v && s.next_uniform() < 0.5;
  } else {
    off_r = off_c = (n - c) / 2;
  }
  std::vector<float> out(static_cast<std::size_t>(c) * c);
  for (int i = 0; i < c; ++i) {
    const int src_i = off_r + (flip_v ? c - 1 - i : i);
    for (int j = 0; j < c; ++j) {
      const int src_j = off_c + (flip_h ? c - 1 - j : j);
      out[i * c + j] = im.pixels[src_i * n + src_j];
    }
  }
  return out;
}

void ImagePool::save(const std::string& raw_path, const std::string& sidecar_path) const {
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw RuntimeError("cannot open " + raw_path);
  for (const SynthImage& im : images)
    raw.write(reinterpret_cast<const char*>(im.pixels.data()),
              static_cast<std::streamsize>(im.pixels.size() * sizeof(float)));

  nlohmann::json j;
  j["width"] = kImageSize;
  j["height"] = kImageSize;
  j["norm_mean"] = norm_mean;
  j["norm_sd"] = norm_sd;
  j["seed"] = seed;
  auto& ids = j["ids"] = nlohmann::json::array();
  auto& gx = j["gen_x"] = nlohmann::json::array();
  auto& gz = j["gen_z"] = nlohmann::json::array();
  auto& mx = j["meas_x"] = nlohmann::json::array();
  auto& mz = j["meas_z"] = nlohmann::json::array();
  for (const SynthImage& im : images) {
    ids.push_back(im.id);
    gx.push_back(im.gen_x);
    gz.push_back(im.gen_z);
    mx.push_back(im.meas_x);
    mz.push_back(im.meas_z);
  }
  std::ofstream side(sidecar_path);
  if (!side) throw RuntimeError("cannot open " + sidecar_path);
  side << j.dump(2) << "\n";
}

ImagePool ImagePool::load(const std::string& raw_path, const std::string& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw RuntimeError("cannot open " + sidecar_path);
  nlohmann::json j = nlohmann::json::parse(side);
  ImagePool pool;
  pool.norm_mean = j.at("norm_mean").get<double>();
  pool.norm_sd = j.at("norm_sd").get<double>();
  pool.seed = j.at("seed").get<std::uint64_t>();
  const auto& ids = j.at("ids");
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw RuntimeError("cannot open " + raw_path);
  const std::size_t npx = static_cast<std::size_t>(kImageSize) * kImageSize;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    SynthImage im;
    im.id = ids[i].get<int>();
    im.gen_x = j.at("gen_x")[i].get<double>();
    im.gen_z = j.at("gen_z")[i].get<double>();
    im.meas_x = j.at("meas_x")[i].get<double>();
    im.meas_z = j.at("meas_z")[i].get<double>();
    im.pixels.resize(npx);
    raw.read(reinterpret_cast<char*>(im.pixels.data()),
             static_cast<std::streamsize>(npx * sizeof(float)));
    if (!raw) throw RuntimeError("pool raw file truncated: " + raw_path);
    pool.images.push_back(std::move(im));
  }
  return pool;
}

void write_pgm(const SynthImage& im, const std::string& path) {
  float lo = im.pixels[0], hi = im.pixels[0];
  for (float p : im.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open " + path);
  f << "P5\n" << kImageSize << " " << kImageSize << "\n255\n";
  for (float p : im.pixels)
    f.put(static_cast<char>(static_cast<unsigned char>(255.0f * (p - lo) / span)));
}

}  // namespace cn::img

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"

using namespace cn;

namespace {
double corr(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    sa += (a[i] - ma) * (a[i] - ma);
    sb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(sa * sb);
}
}  // namespace

TEST_CASE("render geometry at the stated mapping") {
  img::RenderOptions plain{false, false};  // no jitter, no blur
  auto im = img::render_nodule(0.0, 0.0, 1, plain);
  // diameter 24 px, sd 0.275: the measured factor round-trips near zero
  CHECK(std::abs(im.meas_x) < 0.1);
  // extreme x saturates below the 40 px bound
  auto big = img::render_nodule(3.0, 0.0, 1, plain);
  std::size_t area = 0;
  for (float p : big.pixels)
    if (p > 0.0f) ++area;
  const double deq = 2.0 * std::sqrt(static_cast<double>(area) / rng::kPi);
  CHECK(deq < 40.0);
  CHECK(deq > 38.0);
}

TEST_CASE("all-background image hits the clamp floor") {
  img::SynthImage im;
  im.pixels.assign(static_cast<std::size_t>(img::kImageSize) * img::kImageSize, -0.5f);
  img::measure_image(im);
  CHECK(im.meas_x == doctest::Approx(rng::norm_ppf(1e-4)));
  CHECK(im.meas_z == doctest::Approx(rng::norm_ppf(1e-4)));
}

TEST_CASE("meas_x is monotone in x") {
  double prev = -10.0;
  for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    double acc = 0.0;
    for (int s = 0; s < 100; ++s) acc += img::render_nodule(x, 0.0, 1000 + s).meas_x;
    acc /= 100.0;
    CHECK(acc > prev);
    prev = acc;
  }
}

TEST_CASE("pool round-trip and factor independence") {
  const auto pool = img::build_pool(1000, 9);
  std::vector<double> gx, gz, mx, mz;
  for (const auto& im : pool.images) {
    gx.push_back(im.gen_x);
    gz.push_back(im.gen_z);
    mx.push_back(im.meas_x);
    mz.push_back(im.meas_z);
  }
  CHECK(corr(gx, mx) > 0.95);
  CHECK(corr(gz, mz) > 0.9);
  CHECK(std::abs(corr(mx, mz)) < 0.1);
}

TEST_CASE("pool normalization and reproducibility") {
  const auto pool = img::build_pool(50, 4);
  double s = 0, s2 = 0;
  std::size_t n = 0;
  for (const auto& im : pool.images)
    for (float p : im.pixels) {
      s += p;
      s2 += static_cast<double>(p) * p;
      ++n;
    }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean) < 1e-5);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-4));

  const auto pool2 = img::build_pool(50, 4);
  CHECK(pool.images[17].pixels == pool2.images[17].pixels);
  CHECK(pool.images[17].meas_x == pool2.images[17].meas_x);
}

TEST_CASE("matching: nearest, tie-break, exclusion") {
  img::ImagePool pool;
  for (int i = 0; i < 3; ++i) {
    img::SynthImage im;
    im.id = i;
    im.meas_x = i - 1.0;  // -1, 0, 1
    im.meas_z = 0.0;
    pool.images.push_back(im);
  }
  CHECK(img::match_image(pool, 0.4, 0.0) == 1);
  // exact tie between ids 1 (at 0) and 2 (at 1) for query 0.5 -> lower id
  CHECK(img::match_image(pool, 0.5, 0.0) == 1);
  CHECK(img::match_image(pool, 0.5, 0.0, {1}) == 2);
  CHECK_THROWS_AS(img::match_image(pool, 0.0, 0.0, {0, 1, 2}), RuntimeError);

  img::ImagePool one;
  one.images.push_back(pool.images[2]);
  CHECK(img::match_image(one, -5.0, -5.0) == 2);
}

TEST_CASE("crop and mirror semantics") {
  img::SynthImage im;
  im.pixels.resize(static_cast<std::size_t>(img::kImageSize) * img::kImageSize);
  for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<float>(i);

  img::CropSpec center;
  center.mode = img::CropSpec::Mode::center;
  const auto c = img::crop_and_augment(im, center, 0);
  REQUIRE(c.size() == 51u * 51u);
  CHECK(c[0] == im.pixels[24 * 100 + 24]);          // rows/cols 24..74
  CHECK(c[50] == im.pixels[24 * 100 + 74]);
  CHECK(c[50 * 51 + 0] == im.pixels[74 * 100 + 24]);

  // determinism + value preservation under random crop/mirror
  img::CropSpec rnd;
  const auto a = img::crop_and_augment(im, rnd, 123);
  const auto b = img::crop_and_augment(im, rnd, 123);
  CHECK(a == b);
  // mirroring preserves the pixel multiset: compare against the same crop
  // with mirrors disabled by probing all four mirror states via seeds
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  bool found = false;
  for (int r = 0; r <= 49 && !found; ++r)
    for (int cc = 0; cc <= 49 && !found; ++cc) {
      std::vector<float> plain(51 * 51);
      for (int i = 0; i < 51; ++i)
        for (int j = 0; j < 51; ++j) plain[i * 51 + j] = im.pixels[(r + i) * 100 + cc + j];
      std::sort(plain.begin(), plain.end());
      found = plain == sorted;
    }
  CHECK(found);
}

TEST_CASE("double mirror is the identity") {
  // mirroring twice = flipping rows/cols twice; verified via direct flip
  std::vector<float> v(51 * 51);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  auto flip_h = [](std::vector<float> in) {
    std::vector<float> out(in.size());
    for (int i = 0; i < 51; ++i)
      for (int j = 0; j < 51; ++j) out[i * 51 + j] = in[i * 51 + (50 - j)];
    return out;
  };
  CHECK(flip_h(flip_h(v)) == v);
}

TEST_CASE("pool save/load round trip") {
  const auto pool = img::build_pool(5, 21);
  pool.save("/tmp/cn_pool.raw", "/tmp/cn_pool.json");
  const auto back = img::ImagePool::load("/tmp/cn_pool.raw", "/tmp/cn_pool.json");
  REQUIRE(back.images.size() == 5);
  CHECK(back.norm_mean == doctest::Approx(pool.norm_mean));
  CHECK(back.images[3].pixels == pool.images[3].pixels);
  CHECK(back.images[3].meas_z == doctest::Approx(pool.images[3].meas_z));
  img::write_pgm(pool.images[0], "/tmp/cn_pool0.pgm");
  std::ifstream f("/tmp/cn_pool0.pgm", std::ios::binary);
  std::string magic(2, '\0');
  f.read(magic.data(), 2);
  CHECK(magic == "P5");
}

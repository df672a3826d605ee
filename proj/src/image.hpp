#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

namespace cn::img {

constexpr int kImageSize = 100;   // 7 cm at 0.7 mm spacing
constexpr int kCropDefault = 51;

// One rendered nodule image: 100x100 single channel, generating factors and
// factors re-measured from the pixels (the noisy views x', z').
struct SynthImage {
  std::vector<float> pixels;  // row-major kImageSize^2
  double gen_x = 0.0, gen_z = 0.0;
  double meas_x = 0.0, meas_z = 0.0;
  int id = 0;
};

struct ImagePool {
  std::vector<SynthImage> images;  // pixels normalized in place
  double norm_mean = 0.0;
  double norm_sd = 1.0;
  std::uint64_t seed = 0;

  void save(const std::string& raw_path, const std::string& sidecar_path) const;
  static ImagePool load(const std::string& raw_path, const std::string& sidecar_path);
};

struct CropSpec {
  int size = kCropDefault;
  enum class Mode { random, center } mode = Mode::random;
  bool mirror_h = true;  // eligible for random mirroring
  bool mirror_v = true;
};

struct RenderOptions {
  bool jitter = true;  // uniform integer center offset in [-5, 5]
  bool blur = true;    // 3x3 box blur of the disk mask, applied twice
};

// Disk of diameter 8 + 32*Phi(x) on a noisy background; foreground texture
// sd is 0.05 + 0.45*Phi(z). The blurred disk mask is used as an alpha map
// so the boundary softens without washing out the interior texture.
SynthImage render_nodule(double x, double z, std::uint64_t rng_seed,
                         const RenderOptions& opt = {});

// Inverts the render mapping from the pixels alone. Mask = pixels > 0;
// meas_x from the equivalent diameter, meas_z from the masked-pixel sd.
// An empty mask yields the clamp floor on both.
void measure_image(SynthImage& im);

// m images with gen factors ~ N(0,1) i.i.d.; pixels normalized in place to
// pool-wide zero mean / unit sd after measuring.
ImagePool build_pool(std::size_t m, std::uint64_t seed);

// Nearest pool image to (x, z) in measured-factor space, squared Euclidean;
// ties go to the lowest id. Throws if every image is excluded.
int match_image(const ImagePool& pool, double x, double z,
                const std::unordered_set<int>& exclude = {});

// Crop (random offset or fixed center) plus optional random mirroring.
std::vector<float> crop_and_augment(const SynthImage& im, const CropSpec& spec,
                                    std::uint64_t rng_seed);

void write_pgm(const SynthImage& im, const std::string& path);

}  // namespace cn::img

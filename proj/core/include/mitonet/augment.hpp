#pragma once

#include <array>
#include <utility>

#include "mitonet/image.hpp"
#include "mitonet/random.hpp"
#include "mitonet/stain.hpp"

namespace mitonet::augment {

struct AugmentConfig {
  double crop_fraction = 0.6;  // window side as a fraction of the shorter side
  int out_size = 224;
  double p_dihedral = 1.0;
  std::pair<double, double> brightness_range{0.8, 1.2};
  std::pair<double, double> contrast_range{0.8, 1.2};
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
  // Optional stain-space jitter applied after normalization; 0 disables it.
  double stain_sigma_scale = 0.0;
  double stain_sigma_shift = 0.0;

  void validate() const;
};

// Stain handling for the transform pipelines.
struct StainPolicy {
  bool normalize = false;
  stain::StainParams params;
};

Patch crop(const Patch& patch, int x0, int y0, int w, int h);

Patch random_crop_fraction(const Patch& patch, double fraction, Rng& rng);

// Rotates quarter_turns * 90 degrees counterclockwise, then applies the
// requested mirror flips (horizontal mirrors columns, vertical mirrors rows).
Patch dihedral(const Patch& patch, int quarter_turns, bool flip_h, bool flip_v);

// v' = clamp(round(c * (b * v - 127.5) + 127.5)); ties round away from the
// pivot so the map stays symmetric about mid-gray.
Patch brightness_contrast(const Patch& patch, double brightness, double contrast);

// Half-pixel-centered bilinear resampling with edge clamping.
Patch resize_bilinear(const Patch& patch, int out_h, int out_w);

// Scales to [0, 1] and standardizes each channel by (v - mean) / std.
ImageTensor to_tensor(const Patch& patch, const std::array<double, 3>& mean,
                      const std::array<double, 3>& std);

// Random part of the training pipeline, starting from an already
// stain-normalized patch.
ImageTensor train_augment(const Patch& patch, const AugmentConfig& cfg, Rng& rng,
                          const stain::StainParams& stain_params = {});

ImageTensor train_transform(const Patch& patch, const AugmentConfig& cfg,
                            const StainPolicy& stain, Rng& rng);

ImageTensor eval_transform(const Patch& patch, const AugmentConfig& cfg,
                           const StainPolicy& stain = {});

}  // namespace mitonet::augment

#include "mitonet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "mitonet/errors.hpp"

namespace mitonet::augment {
namespace {

constexpr double kPivot = 127.5;

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

// Nearest integer to pivot + d; ties go away from the pivot.
double round_about_pivot(double d) {
  if (d == 0.0) return kPivot + 0.5;
  const double mag = std::floor(std::abs(d)) + 0.5;
  return d > 0.0 ? kPivot + mag : kPivot - mag;
}

Patch rotate_ccw(const Patch& p) {
  Patch out(p.height, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      // Source column x lands on destination row (W - 1 - x).
      for (int c = 0; c < 3; ++c) out.at(y, p.width - 1 - x, c) = p.at(x, y, c);
    }
  }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
    throw ConfigError("augment.crop_fraction must lie in (0, 1]");
  }
  if (out_size < 1) throw ConfigError("augment.out_size must be >= 1");
  if (!(p_dihedral >= 0.0 && p_dihedral <= 1.0)) {
    throw ConfigError("augment.p_dihedral must lie in [0, 1]");
  }
  if (!(brightness_range.first > 0.0 && brightness_range.first <= brightness_range.second)) {
    throw ConfigError("augment.brightness_range must satisfy 0 < lo <= hi");
  }
  if (!(contrast_range.first > 0.0 && contrast_range.first <= contrast_range.second)) {
    throw ConfigError("augment.contrast_range must satisfy 0 < lo <= hi");
  }
  for (double s : std) {
    if (!(s > 0.0)) throw ConfigError("augment.std entries must be > 0");
  }
  if (!(stain_sigma_scale >= 0.0 && stain_sigma_scale < 1.0) || !(stain_sigma_shift >= 0.0)) {
    throw ConfigError("augment.stain_sigma_scale must lie in [0, 1), stain_sigma_shift >= 0");
  }
}

Patch crop(const Patch& patch, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > patch.width || y0 + h > patch.height) {
    throw ShapeMismatch("crop window outside the patch");
  }
  Patch out(w, h);
  for (int y = 0; y < h; ++y) {
    const auto* src = patch.data.data() + (static_cast<std::size_t>(y0 + y) * patch.width + x0) * 3;
    std::copy(src, src + static_cast<std::size_t>(w) * 3,
              out.data.begin() + static_cast<std::ptrdiff_t>(y) * w * 3);
  }
  return out;
}

Patch random_crop_fraction(const Patch& patch, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("crop fraction must lie in (0, 1]");
  }
  validate(patch);
  if (fraction == 1.0) return patch;
  const int side = std::max(1, static_cast<int>(std::floor(fraction * std::min(patch.width, patch.height))));
  const auto x0 = static_cast<int>(uniform_int(rng, 0, patch.width - side));
  const auto y0 = static_cast<int>(uniform_int(rng, 0, patch.height - side));
  return crop(patch, x0, y0, side, side);
}

Patch dihedral(const Patch& patch, int quarter_turns, bool flip_h, bool flip_v) {
  Patch out = patch;
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) out = rotate_ccw(out);
  if (flip_h) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width / 2; ++x) {
        for (int c = 0; c < 3; ++c) std::swap(out.at(x, y, c), out.at(out.width - 1 - x, y, c));
      }
    }
  }
  if (flip_v) {
    for (int y = 0; y < out.height / 2; ++y) {
      for (int x = 0; x < out.width; ++x) {
        for (int c = 0; c < 3; ++c) std::swap(out.at(x, y, c), out.at(x, out.height - 1 - y, c));
      }
    }
  }
  return out;
}

Patch brightness_contrast(const Patch& patch, double brightness, double contrast) {
  if (!(brightness > 0.0 && contrast > 0.0)) {
    throw ConfigError("brightness and contrast factors must be > 0");
  }
  Patch out = patch;
  for (auto& v : out.data) {
    const double d = contrast * (brightness * static_cast<double>(v) - kPivot);
    v = clamp_u8(round_about_pivot(d));
  }
  return out;
}

Patch resize_bilinear(const Patch& patch, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeMismatch("resize target must be at least 1x1");
  validate(patch);
  if (out_h == patch.height && out_w == patch.width) return patch;

  const double sy = static_cast<double>(patch.height) / out_h;
  const double sx = static_cast<double>(patch.width) / out_w;
  Patch out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, patch.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, patch.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, patch.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, patch.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * patch.at(x0, y0, c) + wx * patch.at(x1, y0, c);
        const double bottom = (1.0 - wx) * patch.at(x0, y1, c) + wx * patch.at(x1, y1, c);
        out.at(x, y, c) = clamp_u8(std::round((1.0 - wy) * top + wy * bottom));
      }
    }
  }
  return out;
}

ImageTensor to_tensor(const Patch& patch, const std::array<double, 3>& mean,
                      const std::array<double, 3>& std) {
  ImageTensor t{3, patch.height, patch.width, std::vector<double>(patch.data.size())};
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        t.at(c, y, x) = (patch.at(x, y, c) / 255.0 - mean[c]) / std[c];
      }
    }
  }
  return t;
}

ImageTensor train_augment(const Patch& patch, const AugmentConfig& cfg, Rng& rng,
                          const stain::StainParams& stain_params) {
  Patch p = patch;
  if (cfg.stain_sigma_scale > 0.0 || cfg.stain_sigma_shift > 0.0) {
    p = stain::perturb_stains(p, cfg.stain_sigma_scale, cfg.stain_sigma_shift, rng, stain_params);
  }
  p = random_crop_fraction(p, cfg.crop_fraction, rng);

  int turns = 0;
  bool flip_h = false;
  bool flip_v = false;
  if (bernoulli(rng, cfg.p_dihedral)) turns = static_cast<int>(uniform_int(rng, 0, 3));
  if (bernoulli(rng, cfg.p_dihedral)) flip_h = bernoulli(rng, 0.5);
  if (bernoulli(rng, cfg.p_dihedral)) flip_v = bernoulli(rng, 0.5);
  p = dihedral(p, turns, flip_h, flip_v);

  const double b = uniform(rng, cfg.brightness_range.first, cfg.brightness_range.second);
  const double c = uniform(rng, cfg.contrast_range.first, cfg.contrast_range.second);
  if (b != 1.0 || c != 1.0) p = brightness_contrast(p, b, c);

  p = resize_bilinear(p, cfg.out_size, cfg.out_size);
  return to_tensor(p, cfg.mean, cfg.std);
}

ImageTensor train_transform(const Patch& patch, const AugmentConfig& cfg,
                            const StainPolicy& stain, Rng& rng) {
  validate(patch);
  if (stain.normalize) {
    return train_augment(stain::normalize_or_passthrough(patch, stain.params).patch, cfg, rng,
                         stain.params);
  }
  return train_augment(patch, cfg, rng, stain.params);
}

ImageTensor eval_transform(const Patch& patch, const AugmentConfig& cfg, const StainPolicy& stain) {
  validate(patch);
  const Patch p = stain.normalize ? stain::normalize_or_passthrough(patch, stain.params).patch : patch;
  return to_tensor(resize_bilinear(p, cfg.out_size, cfg.out_size), cfg.mean, cfg.std);
}

}  // namespace mitonet::augment

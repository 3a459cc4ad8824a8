#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mitonet {

// 8-bit RGB raster, row-major, interleaved channels.
struct Patch {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Patch() = default;
  Patch(int w, int h);
  Patch(int w, int h, std::vector<std::uint8_t> pixels);

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool empty() const noexcept { return data.empty(); }

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Patch&, const Patch&) = default;
};

// Checks the Patch invariants, throwing ShapeMismatch when violated.
void validate(const Patch& patch);

Patch filled_patch(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Mean absolute per-channel difference as a fraction of full scale (255).
double mean_abs_diff(const Patch& a, const Patch& b);

// Channel-major float tensor produced by the augmentation pipeline.
struct ImageTensor {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

}  // namespace mitonet

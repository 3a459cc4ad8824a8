#include "mitonet/image.hpp"

#include <cstdlib>
#include <string>

#include "mitonet/errors.hpp"

namespace mitonet {

Patch::Patch(int w, int h)
    : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
  validate(*this);
}

Patch::Patch(int w, int h, std::vector<std::uint8_t> pixels)
    : width(w), height(h), data(std::move(pixels)) {
  validate(*this);
}

void validate(const Patch& patch) {
  if (patch.width < 1 || patch.height < 1) {
    throw ShapeMismatch("patch dimensions must be positive, got " + std::to_string(patch.width) +
                        "x" + std::to_string(patch.height));
  }
  if (patch.data.size() != patch.pixel_count() * 3) {
    throw ShapeMismatch("patch data length " + std::to_string(patch.data.size()) +
                        " does not match " + std::to_string(patch.width) + "x" +
                        std::to_string(patch.height) + "x3");
  }
}

Patch filled_patch(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Patch p(w, h);
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    p.data[3 * i] = r;
    p.data[3 * i + 1] = g;
    p.data[3 * i + 2] = b;
  }
  return p;
}

double mean_abs_diff(const Patch& a, const Patch& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeMismatch("mean_abs_diff: patch sizes differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    sum += std::abs(static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]));
  }
  return sum / static_cast<double>(a.data.size()) / 255.0;
}

}  // namespace mitonet

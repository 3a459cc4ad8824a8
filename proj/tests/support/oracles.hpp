#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mitonet/image.hpp"
#include "mitonet/metrics.hpp"
#include "mitonet/random.hpp"

namespace mitonet::testing {

// Scoped unique directory under the system temp dir.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "mitonet-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// O(n^2) Mann-Whitney: 2 points per won pair, 1 per tie, over 2 * P * N.
inline std::optional<double> brute_force_auc(std::span<const metrics::ScoredSample> s) {
  std::int64_t pos = 0;
  std::int64_t neg = 0;
  std::int64_t credit_x2 = 0;
  for (const auto& a : s) {
    if (a.label == 1) ++pos; else ++neg;
    if (a.label != 1) continue;
    for (const auto& b : s) {
      if (b.label == 1) continue;
      if (a.score > b.score) credit_x2 += 2;
      else if (a.score == b.score) credit_x2 += 1;
    }
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return static_cast<double>(credit_x2) /
         (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// Direct transcription of the loss formulas in long double through
// p = 1 / (1 + e^-z), for moderate |z| where that is accurate.
inline long double naive_sigmoid(long double z) { return 1.0L / (1.0L + std::exp(-z)); }

inline long double naive_wbce(int y, long double z, long double w1, long double w0) {
  const long double p = naive_sigmoid(z);
  return -(w1 * y * std::log(p) + w0 * (1 - y) * std::log(1.0L - p));
}

inline long double naive_focal(int y, long double z, long double alpha, long double gamma) {
  const long double p = naive_sigmoid(z);
  return -(alpha * y * std::pow(1.0L - p, gamma) * std::log(p) +
           (1.0L - alpha) * (1 - y) * std::pow(p, gamma) * std::log(1.0L - p));
}

// Central difference of f at x with step h.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Random unit vector with non-negative entries, bounded away from the axes.
inline Eigen::Vector3d random_stain_vector(Rng& rng) {
  Eigen::Vector3d v(uniform(rng, 0.1, 1.0), uniform(rng, 0.1, 1.0), uniform(rng, 0.1, 1.0));
  return v.normalized();
}

// Rotates v about a random axis by `degrees`.
inline Eigen::Vector3d rotate_random_axis(const Eigen::Vector3d& v, double degrees, Rng& rng) {
  Eigen::Vector3d axis(normal(rng, 0, 1), normal(rng, 0, 1), normal(rng, 0, 1));
  axis.normalize();
  return Eigen::AngleAxisd(degrees * M_PI / 180.0, axis) * v;
}

inline double angle_between_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

// Builds an RGB patch from per-pixel stain concentrations through Beer-Lambert:
// I = round(i0 * exp(-(h * H + e * E))), clamped to [0, 255].
inline Patch patch_from_concentrations(const Eigen::Vector3d& h_vec, const Eigen::Vector3d& e_vec,
                                       const std::vector<double>& h,
                                       const std::vector<double>& e, int width, int height,
                                       double i0 = 255.0) {
  Patch p(width, height);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Eigen::Vector3d od = h[i] * h_vec + e[i] * e_vec;
    for (int c = 0; c < 3; ++c) {
      const double v = std::round(i0 * std::exp(-od[c]));
      p.data[3 * i + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return p;
}

// Perturbs a stain vector by up to `degrees` and keeps it physically plausible:
// every channel absorbs at least `min_component` of the unit vector.
inline Eigen::Vector3d nearby_stain_vector(const Eigen::Vector3d& base, double degrees, Rng& rng,
                                           double min_component = 0.2) {
  for (;;) {
    const Eigen::Vector3d v = rotate_random_axis(base, degrees, rng).cwiseAbs().normalized();
    if (v.minCoeff() >= min_component) return v;
  }
}

// Concentration field where each stain dominates a good share of the pixels:
// a third hematoxylin-heavy, a third eosin-heavy, a third mixed. Dominant
// concentrations are drawn from [dominant_lo, 1] * max.
struct ConcentrationField {
  std::vector<double> h;
  std::vector<double> e;
};

// Smallest concentration maximum at which every dominant pixel of stain `v`
// clears the tissue threshold `beta` in all three channels, with 2x headroom.
inline double tissue_max_conc(const Eigen::Vector3d& v, double dominant_lo, double beta = 0.15) {
  return 2.0 * beta / (dominant_lo * v.minCoeff());
}

inline ConcentrationField mixed_concentrations(std::size_t n, double h_max, double e_max,
                                               Rng& rng, double dominant_lo = 0.3) {
  ConcentrationField f;
  f.h.resize(n);
  f.e.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (i % 3) {
      case 0:
        f.h[i] = uniform(rng, dominant_lo, 1.0) * h_max;
        f.e[i] = uniform(rng, 0.0, 0.05) * e_max;
        break;
      case 1:
        f.h[i] = uniform(rng, 0.0, 0.05) * h_max;
        f.e[i] = uniform(rng, dominant_lo, 1.0) * e_max;
        break;
      default:
        f.h[i] = uniform(rng, 0.2, 0.8) * h_max;
        f.e[i] = uniform(rng, 0.2, 0.8) * e_max;
        break;
    }
  }
  return f;
}

}  // namespace mitonet::testing

#pragma once

// Macenko stain handling: optical density conversion, stain basis estimation,
// unmixing, normalization to a reference basis, and stain-space perturbation.

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "mitonet/image.hpp"
#include "mitonet/random.hpp"

namespace mitonet::stain {

struct OdImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major OD triples, all >= 0

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  Eigen::Vector3d pixel(std::size_t i) const {
    return {data[3 * i], data[3 * i + 1], data[3 * i + 2]};
  }
};

// Two unit-norm, non-negative OD absorption vectors: hematoxylin, then eosin.
class StainMatrix {
 public:
  StainMatrix() = default;
  // Normalizes both columns and validates them (non-negative, >= 1 degree
  // apart). Throws DegenerateStains otherwise. Column order is kept as given.
  StainMatrix(const Eigen::Vector3d& hematoxylin, const Eigen::Vector3d& eosin);

  const Eigen::Matrix<double, 3, 2>& matrix() const noexcept { return m_; }
  Eigen::Vector3d hematoxylin() const { return m_.col(0); }
  Eigen::Vector3d eosin() const { return m_.col(1); }

  // Angle in degrees between this matrix's column and another vector.
  double column_angle_deg(int col, const Eigen::Vector3d& v) const;

  static StainMatrix reference();

 private:
  Eigen::Matrix<double, 3, 2> m_ = Eigen::Matrix<double, 3, 2>::Zero();
};

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

// Per-stain concentrations, one column per pixel.
using ConcentrationMap = Eigen::Matrix<double, 2, Eigen::Dynamic>;

struct StainParams {
  double i0 = 255.0;
  double beta = 0.15;
  double alpha_percentile = 1.0;
  double conc_percentile = 99.0;
  StainMatrix target_matrix = StainMatrix::reference();
  std::array<double, 2> target_max_conc{1.9705, 1.0308};

  // Throws ConfigError on invalid values.
  void validate() const;
};

// Minimum number of tissue pixels estimate_stain_matrix requires.
inline constexpr std::size_t kMinTissuePixels = 20;

// Linear-interpolated percentile (p in [0, 100]) of a copy of the values.
double percentile(std::vector<double> values, double p);

OdImage rgb_to_od(const Patch& patch, double i0 = 255.0);
Patch od_to_rgb(const OdImage& od, double i0 = 255.0);

StainMatrix estimate_stain_matrix(const OdImage& od, const StainParams& params);

ConcentrationMap compute_concentrations(const OdImage& od, const StainMatrix& stains);

// Reconstructs OD from a stain basis and concentrations.
OdImage reconstruct_od(const StainMatrix& stains, const ConcentrationMap& conc, int width,
                       int height);

// Throws InsufficientTissue / DegenerateStains when the patch has no usable
// stain signal. Pipeline callers use normalize_or_passthrough instead.
Patch normalize_patch(const Patch& patch, const StainParams& params);

struct NormalizeOutcome {
  Patch patch;
  bool normalized = false;
};

// Pipeline policy: failures return the input unchanged with normalized=false.
NormalizeOutcome normalize_or_passthrough(const Patch& patch, const StainParams& params);

// Randomly rescales and shifts each stain's concentrations and reconstructs
// with the patch's own stain basis. Falls back to returning the input when the
// stain basis cannot be estimated.
Patch perturb_stains(const Patch& patch, double sigma_scale, double sigma_shift, Rng& rng,
                     const StainParams& params = {});

}  // namespace mitonet::stain

#include "mitonet/stain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "mitonet/errors.hpp"

namespace mitonet::stain {
namespace {

constexpr double kMinStainAngleDeg = 1.0;

Eigen::Vector3d nonnegative_unit(Eigen::Vector3d v) {
  if (v.sum() < 0.0) v = -v;
  v = v.cwiseMax(0.0);
  const double n = v.norm();
  if (!(n > 0.0)) throw DegenerateStains("stain vector has no positive component");
  return v / n;
}

}  // namespace

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

StainMatrix::StainMatrix(const Eigen::Vector3d& hematoxylin, const Eigen::Vector3d& eosin) {
  if ((hematoxylin.array() < -1e-12).any() || (eosin.array() < -1e-12).any()) {
    throw DegenerateStains("stain vectors must be non-negative");
  }
  const double nh = hematoxylin.norm();
  const double ne = eosin.norm();
  if (!(nh > 0.0) || !(ne > 0.0)) throw DegenerateStains("stain vector has zero norm");
  m_.col(0) = hematoxylin.cwiseMax(0.0) / nh;
  m_.col(1) = eosin.cwiseMax(0.0) / ne;
  m_.col(0).normalize();
  m_.col(1).normalize();
  if (angle_deg(m_.col(0), m_.col(1)) < kMinStainAngleDeg) {
    throw DegenerateStains("stain vectors are less than 1 degree apart");
  }
}

double StainMatrix::column_angle_deg(int col, const Eigen::Vector3d& v) const {
  return angle_deg(m_.col(col), v);
}

StainMatrix StainMatrix::reference() {
  return StainMatrix({0.5626, 0.7201, 0.4062}, {0.2159, 0.8012, 0.5581});
}

void StainParams::validate() const {
  if (!(i0 > 0.0)) throw ConfigError("stain.i0 must be > 0");
  if (!(beta > 0.0)) throw ConfigError("stain.beta must be > 0");
  if (!(alpha_percentile > 0.0 && alpha_percentile < 50.0)) {
    throw ConfigError("stain.alpha_percentile must lie in (0, 50)");
  }
  if (!(conc_percentile > 0.0 && conc_percentile <= 100.0)) {
    throw ConfigError("stain.conc_percentile must lie in (0, 100]");
  }
  if (!(target_max_conc[0] > 0.0 && target_max_conc[1] > 0.0)) {
    throw ConfigError("stain.target_max_conc entries must be > 0");
  }
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyInput("percentile of an empty set");
  const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  const double v_lo = values[lo];
  if (hi == lo) return v_lo;
  const double v_hi = *std::min_element(values.begin() + lo + 1, values.end());
  return v_lo + (rank - static_cast<double>(lo)) * (v_hi - v_lo);
}

OdImage rgb_to_od(const Patch& patch, double i0) {
  validate(patch);
  OdImage od{patch.width, patch.height, std::vector<double>(patch.data.size())};
  for (std::size_t i = 0; i < patch.data.size(); ++i) {
    const double intensity = std::max<double>(patch.data[i], 1.0);
    od.data[i] = std::max(0.0, -std::log(intensity / i0));
  }
  return od;
}

Patch od_to_rgb(const OdImage& od, double i0) {
  Patch out(od.width, od.height);
  for (std::size_t i = 0; i < od.data.size(); ++i) {
    const double v = std::round(i0 * std::exp(-od.data[i]));
    out.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

StainMatrix estimate_stain_matrix(const OdImage& od, const StainParams& params) {
  const std::size_t n = od.pixel_count();
  std::vector<Eigen::Vector3d> tissue;
  tissue.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector3d p = od.pixel(i);
    if ((p.array() > params.beta).all()) tissue.push_back(p);
  }
  if (tissue.size() < kMinTissuePixels) {
    throw InsufficientTissue("only " + std::to_string(tissue.size()) +
                             " tissue pixels above the OD threshold");
  }

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : tissue) mean += p;
  mean /= static_cast<double>(tissue.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : tissue) {
    const Eigen::Vector3d d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(tissue.size() - 1);

  // Eigenvalues come back in increasing order.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d major = eig.eigenvectors().col(2);
  Eigen::Vector3d minor = eig.eigenvectors().col(1);
  if (major.sum() < 0.0) major = -major;

  std::vector<double> angles(tissue.size());
  for (std::size_t i = 0; i < tissue.size(); ++i) {
    angles[i] = std::atan2(tissue[i].dot(minor), tissue[i].dot(major));
  }
  const double lo = percentile(angles, params.alpha_percentile);
  const double hi = percentile(angles, 100.0 - params.alpha_percentile);

  Eigen::Vector3d a = nonnegative_unit(major * std::cos(lo) + minor * std::sin(lo));
  Eigen::Vector3d b = nonnegative_unit(major * std::cos(hi) + minor * std::sin(hi));
  if (a(0) < b(0)) std::swap(a, b);
  return StainMatrix(a, b);
}

ConcentrationMap compute_concentrations(const OdImage& od, const StainMatrix& stains) {
  const Eigen::Matrix<double, 3, 2>& s = stains.matrix();
  const Eigen::Matrix2d gram = s.transpose() * s;
  if (std::abs(gram.determinant()) < 1e-12) {
    throw DegenerateStains("stain matrix is singular");
  }
  const Eigen::Matrix<double, 2, 3> pinv = gram.inverse() * s.transpose();
  const std::size_t n = od.pixel_count();
  const Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> od_mat(
      od.data.data(), 3, static_cast<Eigen::Index>(n));
  ConcentrationMap conc = pinv * od_mat;
  return conc.cwiseMax(0.0);
}

OdImage reconstruct_od(const StainMatrix& stains, const ConcentrationMap& conc, int width,
                       int height) {
  OdImage od{width, height, std::vector<double>(static_cast<std::size_t>(conc.cols()) * 3)};
  if (static_cast<std::size_t>(conc.cols()) != od.pixel_count()) {
    throw ShapeMismatch("concentration map does not match image size");
  }
  Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>> od_mat(od.data.data(), 3, conc.cols());
  od_mat.noalias() = stains.matrix() * conc;
  od_mat = od_mat.cwiseMax(0.0);
  return od;
}

Patch normalize_patch(const Patch& patch, const StainParams& params) {
  const OdImage od = rgb_to_od(patch, params.i0);
  const StainMatrix source = estimate_stain_matrix(od, params);
  ConcentrationMap conc = compute_concentrations(od, source);
  for (int s = 0; s < 2; ++s) {
    std::vector<double> row(conc.row(s).begin(), conc.row(s).end());
    const double max_conc = percentile(std::move(row), params.conc_percentile);
    if (!(max_conc > 1e-12)) throw DegenerateStains("stain has no measurable concentration");
    conc.row(s) *= params.target_max_conc[s] / max_conc;
  }
  return od_to_rgb(reconstruct_od(params.target_matrix, conc, patch.width, patch.height),
                   params.i0);
}

NormalizeOutcome normalize_or_passthrough(const Patch& patch, const StainParams& params) {
  try {
    return {normalize_patch(patch, params), true};
  } catch (const InsufficientTissue&) {
  } catch (const DegenerateStains&) {
  }
  return {patch, false};
}

Patch perturb_stains(const Patch& patch, double sigma_scale, double sigma_shift, Rng& rng,
                     const StainParams& params) {
  if (!(sigma_scale >= 0.0 && sigma_scale < 1.0) || !(sigma_shift >= 0.0)) {
    throw ConfigError("perturb_stains: need 0 <= sigma_scale < 1 and sigma_shift >= 0");
  }
  const OdImage od = rgb_to_od(patch, params.i0);
  StainMatrix source;
  ConcentrationMap conc;
  try {
    source = estimate_stain_matrix(od, params);
    conc = compute_concentrations(od, source);
  } catch (const InsufficientTissue&) {
    return patch;
  } catch (const DegenerateStains&) {
    return patch;
  }
  for (int s = 0; s < 2; ++s) {
    const double scale = uniform(rng, 1.0 - sigma_scale, 1.0 + sigma_scale);
    const double shift = uniform(rng, -sigma_shift, sigma_shift);
    conc.row(s) = ((conc.row(s).array() * scale) + shift).cwiseMax(0.0).matrix();
  }
  return od_to_rgb(reconstruct_od(source, conc, patch.width, patch.height), params.i0);
}

}  // namespace mitonet::stain

#include "mitonet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

#include "mitonet/errors.hpp"
#include "mitonet/parallel.hpp"
#include "mitonet/png_io.hpp"
#include "mitonet/random.hpp"
#include "mitonet/stain.hpp"

namespace mitonet::data {
namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

// Smooth per-domain variation of a stain basis: rotate both columns about a
// random axis, keeping entries non-negative.
stain::StainMatrix rotated_basis(const stain::StainMatrix& base, double angle_rad, Rng& rng) {
  Eigen::Vector3d axis(normal(rng, 0, 1), normal(rng, 0, 1), normal(rng, 0, 1));
  axis.normalize();
  const Eigen::AngleAxisd rot(angle_rad, axis);
  return stain::StainMatrix((rot * base.hematoxylin()).cwiseMax(0.0),
                            (rot * base.eosin()).cwiseMax(0.0));
}

struct DomainStyle {
  stain::StainMatrix basis;
  double i0 = 255.0;
  double angle_deg = 0.0;
};

struct Disk {
  double cx, cy, r, h;
};

}  // namespace

Manifest parse_manifest(const std::string& text, const std::filesystem::path& root) {
  Manifest m;
  m.root = root;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw ParseError(line_no, std::string("expected header '") + kManifestHeader + "'");
      }
      header_seen = true;
      continue;
    }
    if (trim(line).empty()) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 fields, got " + std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.path = trim(fields[0]);
    if (e.path.empty()) throw ParseError(line_no, "empty path");
    long long label = 0;
    if (!parse_int(trim(fields[1]), label) || (label != 0 && label != 1)) {
      throw ParseError(line_no, "label must be 0 or 1, got '" + trim(fields[1]) + "'");
    }
    long long domain = 0;
    if (!parse_int(trim(fields[2]), domain) || domain < 0 || domain > INT32_MAX) {
      throw ParseError(line_no, "domain must be a non-negative integer, got '" + trim(fields[2]) + "'");
    }
    if (!seen.insert(e.path).second) throw ParseError(line_no, "duplicate path " + e.path);
    e.label = static_cast<int>(label);
    e.domain = static_cast<int>(domain);
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw ParseError(1, "empty manifest");
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.parent_path());
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << kManifestHeader << "\n";
  for (const auto& e : entries) out << e.path << "," << e.label << "," << e.domain << "\n";
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Patch load_patch(const Manifest& manifest, const ManifestEntry& entry) {
  return read_png(manifest.resolve(entry));
}

std::vector<LabeledPatch> load_dataset(const Manifest& manifest, int jobs) {
  std::vector<LabeledPatch> out(manifest.entries.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    out[i] = {load_patch(manifest, e), e.label, e.domain};
  });
  return out;
}

void SynthConfig::validate() const {
  if (n_domains < 1) throw ConfigError("synth: need at least one domain");
  if (n_samples < 2 * n_domains) throw ConfigError("synth: n_samples must be >= 2 * n_domains");
  if (!(pos_fraction > 0.0 && pos_fraction < 1.0)) {
    throw ConfigError("synth: pos_fraction must lie in (0, 1)");
  }
  if (patch_size < 16) throw ConfigError("synth: patch_size must be >= 16");
  if (!(separation > 0.0 && separation <= 1.0)) {
    throw ConfigError("synth: separation must lie in (0, 1]");
  }
}

int synth_positive_count(const SynthConfig& cfg) {
  const auto n = static_cast<int>(std::lround(cfg.n_samples * cfg.pos_fraction));
  return std::clamp(n, 1, cfg.n_samples - 1);
}

std::vector<SynthSample> synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const int size = cfg.patch_size;
  const double scale = size / 64.0;  // geometry is specified for 64-pixel patches

  std::vector<DomainStyle> domains;
  {
    Rng rng = make_rng(cfg.seed, {0xD0});
    const auto base = stain::StainMatrix::reference();
    for (int d = 0; d < cfg.n_domains; ++d) {
      DomainStyle style;
      style.angle_deg = uniform(rng, 0.0, 10.0);
      style.basis = rotated_basis(base, style.angle_deg * std::numbers::pi / 180.0, rng);
      style.i0 = uniform(rng, 230.0, 255.0);
      domains.push_back(style);
    }
  }

  std::vector<int> labels(cfg.n_samples, 0);
  {
    Rng rng = make_rng(cfg.seed, {0x1A});
    std::vector<int> order(cfg.n_samples);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const int n_pos = synth_positive_count(cfg);
    for (int i = 0; i < n_pos; ++i) labels[order[i]] = 1;
  }

  std::vector<SynthSample> out(cfg.n_samples);
  const std::size_t npix = static_cast<std::size_t>(size) * size;
  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng rng = make_rng(cfg.seed, {0x5A, static_cast<std::uint64_t>(i)});
    const int domain = i % cfg.n_domains;
    const int label = labels[i];
    const DomainStyle& style = domains[domain];

    // Stroma: eosin-dominant with low-frequency variation and faint hematoxylin.
    Eigen::Matrix<double, 2, Eigen::Dynamic> conc(2, static_cast<Eigen::Index>(npix));
    const double e_base = uniform(rng, 0.35, 0.5);
    double fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      fx[k] = uniform(rng, 0.5, 2.5) * 2.0 * std::numbers::pi / size;
      fy[k] = uniform(rng, 0.5, 2.5) * 2.0 * std::numbers::pi / size;
      ph[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double wave = 0.0;
        for (int k = 0; k < 3; ++k) wave += std::cos(fx[k] * x + fy[k] * y + ph[k]);
        const std::size_t p = static_cast<std::size_t>(y) * size + x;
        conc(0, p) = std::max(0.0, 0.08 + normal(rng, 0.0, 0.02));
        conc(1, p) = std::max(0.0, e_base + 0.05 * wave + normal(rng, 0.0, 0.03));
      }
    }

    // A few small, pale interphase nuclei.
    std::vector<Disk> nuclei;
    for (int k = 0; k < 4; ++k) {
      nuclei.push_back({uniform(rng, 0.0, size - 1.0), uniform(rng, 0.0, size - 1.0),
                        uniform(rng, 2.0, 3.0) * scale, uniform(rng, 0.45, 0.55)});
    }
    for (const auto& n : nuclei) {
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double d = std::hypot(x - n.cx, y - n.cy);
          const double w = std::clamp(n.r + 0.5 - d, 0.0, 1.0);
          if (w <= 0.0) continue;
          const std::size_t p = static_cast<std::size_t>(y) * size + x;
          conc(0, p) = (1.0 - w) * conc(0, p) + w * n.h;
          conc(1, p) = (1.0 - w) * conc(1, p) + w * 0.15;
        }
      }
    }

    // The mitotic figure: an ellipse of fixed-range area. Atypical figures are
    // more elongated and carry more hematoxylin.
    SynthTruth truth;
    truth.domain_angle_deg = style.angle_deg;
    truth.figure_radius = uniform(rng, 7.5, 8.5) * scale;
    const double base_ratio = uniform(rng, 0.75, 1.0);
    truth.axis_ratio = label == 1 ? base_ratio * (1.0 - 0.45 * cfg.separation) : base_ratio;
    const double base_h = uniform(rng, 0.9, 1.1);
    truth.figure_hematoxylin = label == 1 ? base_h * (1.0 + 0.8 * cfg.separation) : base_h;
    const double major = truth.figure_radius / std::sqrt(truth.axis_ratio);
    const double minor = truth.figure_radius * std::sqrt(truth.axis_ratio);
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    const double cx = size / 2.0 + uniform(rng, -4.0, 4.0) * scale;
    const double cy = size / 2.0 + uniform(rng, -4.0, 4.0) * scale;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double u = (ct * dx + st * dy) / major;
        const double v = (-st * dx + ct * dy) / minor;
        const double rho = std::sqrt(u * u + v * v);
        // Soft edge about one pixel wide.
        const double w = std::clamp((1.0 - rho) * minor + 0.5, 0.0, 1.0);
        if (w <= 0.0) continue;
        const std::size_t p = static_cast<std::size_t>(y) * size + x;
        const double h = truth.figure_hematoxylin * (0.92 + 0.08 * uniform(rng, 0.0, 1.0));
        conc(0, p) = (1.0 - w) * conc(0, p) + w * h;
        conc(1, p) = (1.0 - w) * conc(1, p) + w * 0.1;
      }
    }
    truth.mean_hematoxylin = conc.row(0).mean();

    const stain::OdImage od = stain::reconstruct_od(style.basis, conc, size, size);
    Patch patch(size, size);
    for (std::size_t k = 0; k < od.data.size(); ++k) {
      const double v = style.i0 * std::exp(-od.data[k]) + normal(rng, 0.0, 1.0);
      patch.data[k] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
    out[i] = {{std::move(patch), label, domain}, truth};
  }
  return out;
}

Manifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  const auto samples = synthesize(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "patches", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "patches").string() + ": " + ec.message());

  Manifest m;
  m.root = out_dir;
  const int digits = std::max(5, static_cast<int>(std::to_string(cfg.n_samples).size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::string id = std::to_string(i);
    id.insert(0, digits - id.size(), '0');
    ManifestEntry e{"patches/patch_" + id + ".png", samples[i].sample.label, samples[i].sample.domain};
    write_png(m.resolve(e), samples[i].sample.patch);
    m.entries.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.csv", m.entries);
  return m;
}

}  // namespace mitonet::data

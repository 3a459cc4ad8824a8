#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mitonet/image.hpp"

namespace mitonet::data {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int label = 0;     // 1 = atypical, 0 = normal
  int domain = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& entry) const { return root / entry.path; }
};

inline constexpr const char* kManifestHeader = "path,label,domain";

// Parses `path,label,domain` CSV. Line numbers in ParseError are 1-based and
// count the header.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

Patch load_patch(const Manifest& manifest, const ManifestEntry& entry);

struct LabeledPatch {
  Patch patch;
  int label = 0;
  int domain = 0;
};

std::vector<LabeledPatch> load_dataset(const Manifest& manifest, int jobs = 1);

struct SynthConfig {
  int n_samples = 200;
  double pos_fraction = 0.1;
  int n_domains = 3;
  int patch_size = 64;
  std::uint64_t seed = 0;
  double separation = 1.0;

  void validate() const;
};

// Ground truth kept alongside each generated patch.
struct SynthTruth {
  double axis_ratio = 1.0;       // minor / major axis of the figure
  double figure_radius = 0.0;    // equivalent-area radius in pixels
  double figure_hematoxylin = 0.0;
  double mean_hematoxylin = 0.0;  // mean H concentration over the patch
  double domain_angle_deg = 0.0;
};

struct SynthSample {
  LabeledPatch sample;
  SynthTruth truth;
};

// Number of positives generated for a config: round(n_samples * pos_fraction),
// kept within [1, n_samples - 1].
int synth_positive_count(const SynthConfig& cfg);

std::vector<SynthSample> synthesize(const SynthConfig& cfg);

// Writes PNGs under out_dir/patches and out_dir/manifest.csv.
Manifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mitonet::data

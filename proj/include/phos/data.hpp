#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phos/rng.hpp"
#include "phos/tensor.hpp"

namespace phos {

/// Error for missing or malformed data files and manifests.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense volume. Values are held as float64 in memory; the SVOL disk format
/// stores float32, so save/load round-trips are bit-exact for values that
/// are exactly representable in float32.
struct Volume {
  Shape dims;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

enum class Resection { gtr, str, unknown };

std::string resection_to_string(Resection r);
Resection resection_from_string(const std::string& s);

/// One patient: 4 modalities in Flair, T1, T1ce, T2 order.
struct CaseRecord {
  std::string id;
  std::array<Volume, 4> volumes;
  double age_years = 0.0;
  std::optional<double> survival_days;
  Resection resection = Resection::unknown;
  std::optional<Volume> tumor_mask;  // whole tumor, values 0/1
};

struct ManifestEntry {
  std::string id;
  double age_years = 0.0;
  Resection resection = Resection::unknown;
  std::optional<double> survival_days;
  std::array<std::string, 4> volume_paths;  // relative to manifest directory
  std::optional<std::string> mask_path;
};

struct Manifest {
  std::filesystem::path root;  // directory paths are resolved against
  std::vector<ManifestEntry> entries;
};

struct PhantomConfig {
  std::size_t edge = 48;
  std::size_t n_cases = 200;
  double radius_min = 4.0;
  double radius_max = 10.0;
  double tumor_intensity_offset = 3.0;
  double age_min = 40.0;
  double age_max = 80.0;
  double noise_std = 1.0;
  double c_vol = 8.0;
  double c_age = 10.0;
  double upper_days = 1800.0;
  std::uint64_t seed = 0;
};

/// Per-modality and age z-score statistics, computed on the training split.
struct NormStats {
  std::array<double, 4> mean{};
  std::array<double, 4> stddev{};
  double age_mean = 0.0;
  double age_stddev = 1.0;
};

// SVOL binary volume format:
//   magic "SVOL" (4 bytes), u32 version=1, u32 rank, u32 dims[rank],
//   float32 little-endian row-major payload.
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& volume, const std::filesystem::path& path);

// Manifest: CSV with header id,age,resection,survival_days,flair,t1,t1ce,t2,mask.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Loads all volumes referenced by one manifest entry.
CaseRecord load_case(const Manifest& manifest, const ManifestEntry& entry);

/// Statistics over the given (training) cases; degenerate stddev < 1e-8 is
/// replaced by 1.
NormStats compute_norm_stats(const std::vector<CaseRecord>& cases);

/// Z-scores each modality and the age with the given training statistics.
/// Labels and mask are untouched.
CaseRecord normalize(const CaseRecord& record, const NormStats& stats);

/// Mean pooling over factor^3 blocks. Edge lengths must be divisible.
Volume downsample(const Volume& volume, std::size_t factor);

/// Downsamples the 4 modality volumes; the tumor mask keeps its resolution.
CaseRecord downsample_case(const CaseRecord& record, std::size_t factor);

/// Multiplies all 4 modalities by one factor drawn uniformly from [1, 1.1].
CaseRecord augment_scale(const CaseRecord& record, Rng& rng);

/// Seeded shuffle, floor(val_fraction * n) cases to validation.
std::pair<Manifest, Manifest> split(const Manifest& manifest,
                                    double val_fraction, std::uint64_t seed);

/// Stacks the selected cases into a [B,4,D,D,D] input tensor.
Tensor cases_to_image_tensor(const std::vector<CaseRecord>& cases,
                             std::span<const std::size_t> idx);

/// Ages of the selected cases as a [B] tensor.
Tensor cases_to_age_tensor(const std::vector<CaseRecord>& cases,
                           std::span<const std::size_t> idx);

/// Synthetic cases with a known ellipsoidal tumor and survival rule:
///   survival = clamp(U - c_vol*(blob_volume/total)*U
///                      - c_age*(age - mid(age_range)), 0, U).
/// Per-case draw order: age, resection, 3 semi-axes, 3 center coordinates,
/// then per-modality voxel noise.
std::vector<CaseRecord> synthesize_phantom(const PhantomConfig& config);

}  // namespace phos

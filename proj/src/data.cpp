#include "phos/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "SVOL and checkpoint I/O assume a little-endian host");

namespace phos {

namespace {

constexpr char kSvolMagic[4] = {'S', 'V', 'O', 'L'};
constexpr std::uint32_t kSvolVersion = 1;
// Refuse volumes above 1 GiB of float32 payload.
constexpr std::uint64_t kMaxVoxels = (1ull << 30) / 4;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw DataError("truncated SVOL file while reading " + what);
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::string resection_to_string(Resection r) {
  switch (r) {
    case Resection::gtr:
      return "GTR";
    case Resection::str:
      return "STR";
    default:
      return "unknown";
  }
}

Resection resection_from_string(const std::string& s) {
  if (s == "GTR") return Resection::gtr;
  if (s == "STR") return Resection::str;
  if (s == "unknown" || s.empty()) return Resection::unknown;
  throw DataError("unknown resection status '" + s + "'");
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open volume file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kSvolMagic, 4) != 0) {
    throw DataError("bad magic in " + path.string() + ": expected \"SVOL\"");
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != kSvolVersion) {
    throw DataError("unsupported SVOL version " + std::to_string(version) +
                    " in " + path.string() + ", expected " +
                    std::to_string(kSvolVersion));
  }
  const std::uint32_t rank = read_u32(is, "rank");
  if (rank == 0 || rank > 8) {
    throw DataError("invalid SVOL rank " + std::to_string(rank) + " in " +
                    path.string());
  }
  Volume v;
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32(is, "dims");
    if (d == 0) throw DataError("zero dimension in " + path.string());
    n *= d;
    if (n > kMaxVoxels) {
      throw DataError("SVOL shape overflow in " + path.string());
    }
    v.dims.push_back(d);
  }
  std::vector<float> payload(n);
  if (!is.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(n * sizeof(float)))) {
    throw DataError("truncated SVOL payload in " + path.string() +
                    ": header promises " + std::to_string(n) + " voxels");
  }
  v.values.assign(payload.begin(), payload.end());
  return v;
}

void save_volume(const Volume& volume, const std::filesystem::path& path) {
  if (volume.dims.empty() || shape_size(volume.dims) != volume.values.size()) {
    throw DataError("volume shape does not match value count");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write volume file " + path.string());
  os.write(kSvolMagic, 4);
  write_u32(os, kSvolVersion);
  write_u32(os, static_cast<std::uint32_t>(volume.dims.size()));
  for (std::size_t d : volume.dims) write_u32(os, static_cast<std::uint32_t>(d));
  std::vector<float> payload(volume.values.begin(), volume.values.end());
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!os) throw DataError("failed writing volume file " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    throw DataError("empty manifest " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected =
      "id,age,resection,survival_days,flair,t1,t1ce,t2,mask";
  if (line != expected) {
    throw DataError("bad manifest header in " + path.string() +
                    ": expected '" + expected + "'");
  }
  Manifest m;
  m.root = path.parent_path();
  std::vector<std::string> seen_ids;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 9) {
      throw DataError("manifest row with " + std::to_string(f.size()) +
                      " fields (want 9): " + line);
    }
    ManifestEntry e;
    e.id = f[0];
    if (std::find(seen_ids.begin(), seen_ids.end(), e.id) != seen_ids.end()) {
      throw DataError("duplicate case id '" + e.id + "' in manifest");
    }
    seen_ids.push_back(e.id);
    try {
      e.age_years = std::stod(f[1]);
      e.resection = resection_from_string(f[2]);
      if (!f[3].empty()) e.survival_days = std::stod(f[3]);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("unparseable number in manifest row: " + line);
    }
    for (int i = 0; i < 4; ++i) e.volume_paths[i] = f[4 + i];
    if (!f[8].empty()) e.mask_path = f[8];
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os << "id,age,resection,survival_days,flair,t1,t1ce,t2,mask\n";
  for (const auto& e : manifest.entries) {
    os << e.id << ',' << format_double(e.age_years) << ','
       << resection_to_string(e.resection) << ','
       << (e.survival_days ? format_double(*e.survival_days) : std::string())
       << ',';
    for (int i = 0; i < 4; ++i) os << e.volume_paths[i] << ',';
    os << (e.mask_path ? *e.mask_path : std::string()) << '\n';
  }
  if (!os) throw DataError("failed writing manifest " + path.string());
}

CaseRecord load_case(const Manifest& manifest, const ManifestEntry& entry) {
  CaseRecord r;
  r.id = entry.id;
  r.age_years = entry.age_years;
  r.survival_days = entry.survival_days;
  r.resection = entry.resection;
  for (int i = 0; i < 4; ++i) {
    r.volumes[i] = load_volume(manifest.root / entry.volume_paths[i]);
    if (r.volumes[i].dims != r.volumes[0].dims) {
      throw DataError("case " + r.id + ": modality volumes disagree on shape");
    }
  }
  if (entry.mask_path) {
    r.tumor_mask = load_volume(manifest.root / *entry.mask_path);
    if (r.tumor_mask->dims != r.volumes[0].dims) {
      throw DataError("case " + r.id + ": mask shape does not match volumes");
    }
  }
  return r;
}

NormStats compute_norm_stats(const std::vector<CaseRecord>& cases) {
  if (cases.empty()) throw DataError("compute_norm_stats: no cases");
  NormStats s;
  for (int m = 0; m < 4; ++m) {
    double sum = 0.0, count = 0.0;
    for (const auto& c : cases) {
      for (double v : c.volumes[m].values) sum += v;
      count += static_cast<double>(c.volumes[m].size());
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& c : cases) {
      for (double v : c.volumes[m].values) ss += (v - mean) * (v - mean);
    }
    double sd = std::sqrt(ss / count);
    if (sd < 1e-8) sd = 1.0;
    s.mean[m] = mean;
    s.stddev[m] = sd;
  }
  double asum = 0.0;
  for (const auto& c : cases) asum += c.age_years;
  s.age_mean = asum / static_cast<double>(cases.size());
  double ass = 0.0;
  for (const auto& c : cases) {
    ass += (c.age_years - s.age_mean) * (c.age_years - s.age_mean);
  }
  s.age_stddev = std::sqrt(ass / static_cast<double>(cases.size()));
  if (s.age_stddev < 1e-8) s.age_stddev = 1.0;
  return s;
}

CaseRecord normalize(const CaseRecord& record, const NormStats& stats) {
  CaseRecord out = record;
  for (int m = 0; m < 4; ++m) {
    for (double& v : out.volumes[m].values) {
      v = (v - stats.mean[m]) / stats.stddev[m];
    }
  }
  out.age_years = (record.age_years - stats.age_mean) / stats.age_stddev;
  return out;
}

Volume downsample(const Volume& volume, std::size_t factor) {
  if (factor == 0) throw DataError("downsample: factor must be positive");
  if (factor == 1) return volume;
  if (volume.dims.size() != 3) {
    throw DataError("downsample: expected a rank-3 volume");
  }
  const std::size_t D = volume.dims[0], H = volume.dims[1], W = volume.dims[2];
  if (D % factor || H % factor || W % factor) {
    throw DataError("downsample: dims " + shape_to_string(volume.dims) +
                    " not divisible by factor " + std::to_string(factor));
  }
  Volume out;
  out.dims = {D / factor, H / factor, W / factor};
  out.values.assign(shape_size(out.dims), 0.0);
  const double inv = 1.0 / static_cast<double>(factor * factor * factor);
  for (std::size_t z = 0; z < D / factor; ++z)
    for (std::size_t y = 0; y < H / factor; ++y)
      for (std::size_t x = 0; x < W / factor; ++x) {
        double acc = 0.0;
        for (std::size_t dz = 0; dz < factor; ++dz)
          for (std::size_t dy = 0; dy < factor; ++dy)
            for (std::size_t dx = 0; dx < factor; ++dx) {
              acc += volume.values[((z * factor + dz) * H + y * factor + dy) *
                                       W +
                                   x * factor + dx];
            }
        out.values[(z * (H / factor) + y) * (W / factor) + x] = acc * inv;
      }
  return out;
}

CaseRecord downsample_case(const CaseRecord& record, std::size_t factor) {
  CaseRecord out = record;
  for (int m = 0; m < 4; ++m) out.volumes[m] = downsample(record.volumes[m], factor);
  return out;
}

CaseRecord augment_scale(const CaseRecord& record, Rng& rng) {
  const double factor = rng.uniform(1.0, 1.1);
  CaseRecord out = record;
  for (int m = 0; m < 4; ++m) {
    for (double& v : out.volumes[m].values) v *= factor;
  }
  return out;
}

std::pair<Manifest, Manifest> split(const Manifest& manifest,
                                    double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DataError("split: val_fraction must be in (0,1)");
  }
  const std::size_t n = manifest.entries.size();
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val == n) {
    throw DataError("split: fraction " + std::to_string(val_fraction) +
                    " of " + std::to_string(n) + " cases leaves a split empty");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  Manifest train, val;
  train.root = val.root = manifest.root;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_val ? val : train).entries.push_back(manifest.entries[idx[i]]);
  }
  return {train, val};
}

Tensor cases_to_image_tensor(const std::vector<CaseRecord>& cases,
                             std::span<const std::size_t> idx) {
  if (idx.empty()) throw DataError("cases_to_image_tensor: empty batch");
  const Shape& dims = cases[idx[0]].volumes[0].dims;
  if (dims.size() != 3 || dims[0] != dims[1] || dims[0] != dims[2]) {
    throw DataError("cases_to_image_tensor: expected cubic volumes");
  }
  const std::size_t d = dims[0];
  const std::size_t vox = d * d * d;
  std::vector<double> values;
  values.reserve(idx.size() * 4 * vox);
  for (std::size_t i : idx) {
    const CaseRecord& c = cases[i];
    for (int m = 0; m < 4; ++m) {
      if (c.volumes[m].dims != dims) {
        throw DataError("cases_to_image_tensor: case " + c.id +
                        " has mismatched volume shape");
      }
      values.insert(values.end(), c.volumes[m].values.begin(),
                    c.volumes[m].values.end());
    }
  }
  return Tensor({idx.size(), 4, d, d, d}, std::move(values));
}

Tensor cases_to_age_tensor(const std::vector<CaseRecord>& cases,
                           std::span<const std::size_t> idx) {
  std::vector<double> ages;
  ages.reserve(idx.size());
  for (std::size_t i : idx) ages.push_back(cases[i].age_years);
  return Tensor({idx.size()}, std::move(ages));
}

std::vector<CaseRecord> synthesize_phantom(const PhantomConfig& config) {
  if (config.n_cases < 1) {
    throw DataError("synthesize_phantom: n_cases must be >= 1");
  }
  if (!(config.radius_min >= 0.0 && config.radius_min <= config.radius_max)) {
    throw DataError("synthesize_phantom: invalid radius range");
  }
  if (config.radius_max > static_cast<double>(config.edge - 1) / 2.0) {
    throw DataError("synthesize_phantom: radius_max does not fit inside the "
                    "volume");
  }
  const std::size_t E = config.edge;
  const std::size_t total = E * E * E;
  const double age_mid = 0.5 * (config.age_min + config.age_max);
  Rng rng(config.seed);
  std::vector<CaseRecord> cases;
  cases.reserve(config.n_cases);
  for (std::size_t i = 0; i < config.n_cases; ++i) {
    CaseRecord c;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "case_%04zu", i);
    c.id = idbuf;
    c.age_years = rng.uniform(config.age_min, config.age_max);
    c.resection = rng.index(2) == 0 ? Resection::gtr : Resection::str;
    double axes[3], center[3];
    for (int a = 0; a < 3; ++a) {
      axes[a] = rng.uniform(config.radius_min, config.radius_max);
    }
    for (int a = 0; a < 3; ++a) {
      center[a] = rng.uniform(axes[a], static_cast<double>(E - 1) - axes[a]);
    }
    Volume mask;
    mask.dims = {E, E, E};
    mask.values.assign(total, 0.0);
    std::size_t blob_voxels = 0;
    for (std::size_t z = 0; z < E; ++z)
      for (std::size_t y = 0; y < E; ++y)
        for (std::size_t x = 0; x < E; ++x) {
          const double dz = (static_cast<double>(z) - center[0]) / axes[0];
          const double dy = (static_cast<double>(y) - center[1]) / axes[1];
          const double dx = (static_cast<double>(x) - center[2]) / axes[2];
          if (dz * dz + dy * dy + dx * dx <= 1.0) {
            mask.values[(z * E + y) * E + x] = 1.0;
            ++blob_voxels;
          }
        }
    for (int m = 0; m < 4; ++m) {
      c.volumes[m].dims = {E, E, E};
      c.volumes[m].values.resize(total);
      for (std::size_t v = 0; v < total; ++v) {
        double value = rng.normal(0.0, config.noise_std);
        if (mask.values[v] > 0.0) value += config.tumor_intensity_offset;
        // Round through float32 so SVOL round-trips are exact.
        c.volumes[m].values[v] = static_cast<double>(static_cast<float>(value));
      }
    }
    const double vol_frac =
        static_cast<double>(blob_voxels) / static_cast<double>(total);
    const double survival = config.upper_days -
                            config.c_vol * vol_frac * config.upper_days -
                            config.c_age * (c.age_years - age_mid);
    c.survival_days = std::clamp(survival, 0.0, config.upper_days);
    c.tumor_mask = std::move(mask);
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace phos

#pragma once
// 4-D voxel time-series container, label volumes, and the two TSV tables
// (events, choices), with their binary/text serializations.
//
// Binary volume format (little-endian):
//   "CEADVOL1" | int32 nx,ny,nz,nt | float32 vx,vy,vz (mm) | float32 tr_s
//   | nx*ny*nz mask bytes (0/1) | nx*ny*nz*nt float32, x fastest, t slowest
// Label format:
//   "CEADLAB1" | int32 nx,ny,nz | nx*ny*nz int32 labels, x fastest
//
// Data are held as double in memory (the normalization invariants are tighter
// than float32 resolution) and quantized to float32 exactly on write.

#include "cead/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cead {

struct Dims4 {
  int nx = 0, ny = 0, nz = 0, nt = 0;
  std::int64_t n_voxels() const { return std::int64_t(nx) * ny * nz; }
  std::int64_t n_values() const { return n_voxels() * nt; }
};

class VolumeSeries {
public:
  // validates dims, mask values, finiteness, and that masked-out voxels are all-zero
  static VolumeSeries create(Dims4 dims, std::array<float, 3> voxel_mm, float tr_s,
                             std::vector<std::uint8_t> mask, std::vector<double> data);

  const Dims4& dims() const { return dims_; }
  std::array<float, 3> voxel_mm() const { return voxel_mm_; }
  float tr_s() const { return tr_s_; }

  std::int64_t index(int x, int y, int z, int t) const {
    return x + std::int64_t(dims_.nx) * (y + std::int64_t(dims_.ny) * (z + std::int64_t(dims_.nz) * t));
  }
  std::int64_t voxel_index(int x, int y, int z) const {
    return x + std::int64_t(dims_.nx) * (y + std::int64_t(dims_.ny) * z);
  }

  double at(int x, int y, int z, int t) const { return data_[index(x, y, z, t)]; }
  double& at(int x, int y, int z, int t) { return data_[index(x, y, z, t)]; }
  bool masked_in(std::int64_t voxel) const { return mask_[voxel] != 0; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  std::int64_t n_masked() const;

  // time series of one voxel (x-fastest linear voxel index)
  std::vector<double> series_at(std::int64_t voxel) const;

private:
  VolumeSeries() = default;
  Dims4 dims_;
  std::array<float, 3> voxel_mm_{};
  float tr_s_ = 0;
  std::vector<std::uint8_t> mask_; // nx*ny*nz, 0/1
  std::vector<double> data_;       // nx*ny*nz*nt, x fastest, t slowest
};

VolumeSeries read_volume(const std::filesystem::path& path);
void write_volume(const VolumeSeries& v, const std::filesystem::path& path);

// Per masked-in voxel: subtract the time mean, divide by the sample sd (n-1).
// Zero-variance voxels come out identically zero and are reported.
struct NormalizeReport {
  std::vector<std::int64_t> degenerate_voxels;
};
VolumeSeries normalize_series(const VolumeSeries& v, NormalizeReport* report = nullptr);

// ---------------- label volume ----------------

class LabelVolume {
public:
  LabelVolume() = default; // empty volume; fill via create

  // labels in 0..C with every value 1..C present (0 = background)
  static LabelVolume create(std::array<int, 3> dims, std::vector<std::int32_t> labels);

  std::array<int, 3> dims() const { return dims_; }
  int n_clusters() const { return c_; }
  const std::vector<std::int32_t>& labels() const { return labels_; }
  std::int32_t at(int x, int y, int z) const {
    return labels_[x + std::int64_t(dims_[0]) * (y + std::int64_t(dims_[1]) * z)];
  }

private:
  std::array<int, 3> dims_{};
  int c_ = 0;
  std::vector<std::int32_t> labels_;
};

LabelVolume read_labels(const std::filesystem::path& path);
void write_labels(const LabelVolume& lv, const std::filesystem::path& path);

// true iff every label's voxel set is one 26-connected component
bool labels_connected(const LabelVolume& lv);

// ---------------- event table ----------------

struct Event {
  double onset_s = 0;
  double duration_s = 0;
  int condition_id = 0;
  double amplitude = 1.0;
};

struct EventTable {
  std::vector<Event> rows;
  std::vector<int> condition_ids() const; // distinct, ascending
};

EventTable read_events(const std::filesystem::path& path);
void write_events(const EventTable& t, const std::filesystem::path& path);

// ---------------- choice table ----------------

enum class Condition { single, correlated, uncorrelated };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct ChoiceRow {
  std::string subject_id;
  long trial_index = 0;
  double mean_return_pct = 0;
  double sd_return_pct = 0;
  Condition condition = Condition::single;
  bool chose_risky = false;
  double onset_s = 0;
};

struct ChoiceTable {
  std::vector<ChoiceRow> rows;
  std::vector<std::string> subjects() const;             // distinct, first-seen order
  std::vector<ChoiceRow> for_subject(const std::string& id) const;
  int off_design_rows = 0; // rows outside the 16-cell (mu, sd) design, warned not rejected
};

ChoiceTable read_choices(const std::filesystem::path& path);
void write_choices(const ChoiceTable& t, const std::filesystem::path& path);

} // namespace cead

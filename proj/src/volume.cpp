#include "cead/volume.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

static_assert(std::endian::native == std::endian::little,
              "binary volume I/O assumes a little-endian host");

namespace cead {

namespace {

constexpr char kVolMagic[8] = {'C', 'E', 'A', 'D', 'V', 'O', 'L', '1'};
constexpr char kLabMagic[8] = {'C', 'E', 'A', 'D', 'L', 'A', 'B', '1'};

// guard against address-space overflow before allocating
std::int64_t checked_count(std::int64_t a, std::int64_t b, const char* what) {
  if (a <= 0 || b <= 0 || a > (std::int64_t(1) << 40) / b)
    fail(ErrorKind::DimOverflow, std::string(what) + ": dimension product overflows");
  return a * b;
}

template <typename T>
void read_raw(std::ifstream& in, T* dst, std::size_t count, const char* what) {
  in.read(reinterpret_cast<char*>(dst), std::streamsize(count * sizeof(T)));
  if (std::size_t(in.gcount()) != count * sizeof(T))
    fail(ErrorKind::Truncated, std::string(what) + ": file ends before payload does");
}

template <typename T>
void write_raw(std::ofstream& out, const T* src, std::size_t count) {
  out.write(reinterpret_cast<const char*>(src), std::streamsize(count * sizeof(T)));
}

void expect_eof(std::ifstream& in, const char* what) {
  char c;
  in.read(&c, 1);
  if (!in.eof()) fail(ErrorKind::Truncated, std::string(what) + ": trailing bytes after payload");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const char* what) {
  double v;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorKind::Parse, std::string(what) + ": bad number '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const char* what) {
  long v;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorKind::Parse, std::string(what) + ": bad integer '" + s + "'");
  return v;
}

} // namespace

// ---------------- VolumeSeries ----------------

VolumeSeries VolumeSeries::create(Dims4 dims, std::array<float, 3> voxel_mm, float tr_s,
                                  std::vector<std::uint8_t> mask, std::vector<double> data) {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1 || dims.nt < 1)
    fail(ErrorKind::Validation, "VolumeSeries: all dimensions must be >= 1");
  std::int64_t nvox = checked_count(checked_count(dims.nx, dims.ny, "VolumeSeries"), dims.nz,
                                    "VolumeSeries");
  std::int64_t nval = checked_count(nvox, dims.nt, "VolumeSeries");
  for (float s : voxel_mm)
    if (!(s > 0) || !std::isfinite(s))
      fail(ErrorKind::Validation, "VolumeSeries: voxel size must be positive and finite");
  if (!(tr_s > 0) || !std::isfinite(tr_s))
    fail(ErrorKind::Validation, "VolumeSeries: TR must be positive and finite");
  if (std::int64_t(mask.size()) != nvox)
    fail(ErrorKind::Validation, "VolumeSeries: mask size does not match dims");
  if (std::int64_t(data.size()) != nval)
    fail(ErrorKind::Validation, "VolumeSeries: data size does not match dims");
  for (std::uint8_t m : mask)
    if (m > 1) fail(ErrorKind::Validation, "VolumeSeries: mask bytes must be 0 or 1");
  for (double v : data)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "VolumeSeries: non-finite data value");
  for (std::int64_t vx = 0; vx < nvox; ++vx) {
    if (mask[vx]) continue;
    for (int t = 0; t < dims.nt; ++t)
      if (data[vx + nvox * t] != 0.0)
        fail(ErrorKind::Validation, "VolumeSeries: masked-out voxel carries nonzero data");
  }

  VolumeSeries v;
  v.dims_ = dims;
  v.voxel_mm_ = voxel_mm;
  v.tr_s_ = tr_s;
  v.mask_ = std::move(mask);
  v.data_ = std::move(data);
  return v;
}

std::int64_t VolumeSeries::n_masked() const {
  std::int64_t n = 0;
  for (auto m : mask_) n += m;
  return n;
}

std::vector<double> VolumeSeries::series_at(std::int64_t voxel) const {
  std::vector<double> s(dims_.nt);
  std::int64_t nvox = dims_.n_voxels();
  for (int t = 0; t < dims_.nt; ++t) s[t] = data_[voxel + nvox * t];
  return s;
}

VolumeSeries read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "read_volume: cannot open " + path.string());

  char magic[8];
  read_raw(in, magic, 8, "read_volume");
  if (std::memcmp(magic, kVolMagic, 8) != 0)
    fail(ErrorKind::BadMagic, "read_volume: not a CEADVOL1 file: " + path.string());

  std::int32_t d[4];
  read_raw(in, d, 4, "read_volume");
  if (d[0] < 1 || d[1] < 1 || d[2] < 1 || d[3] < 1)
    fail(ErrorKind::Validation, "read_volume: non-positive dimension in header");
  Dims4 dims{d[0], d[1], d[2], d[3]};
  std::int64_t nvox =
      checked_count(checked_count(dims.nx, dims.ny, "read_volume"), dims.nz, "read_volume");
  std::int64_t nval = checked_count(nvox, dims.nt, "read_volume");

  float vox[3], tr;
  read_raw(in, vox, 3, "read_volume");
  read_raw(in, &tr, 1, "read_volume");

  std::vector<std::uint8_t> mask(nvox);
  read_raw(in, mask.data(), std::size_t(nvox), "read_volume");

  std::vector<float> raw(nval);
  read_raw(in, raw.data(), std::size_t(nval), "read_volume");
  expect_eof(in, "read_volume");

  std::vector<double> data(raw.begin(), raw.end());
  return VolumeSeries::create(dims, {vox[0], vox[1], vox[2]}, tr, std::move(mask),
                              std::move(data));
}

void write_volume(const VolumeSeries& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "write_volume: cannot open " + path.string());

  write_raw(out, kVolMagic, 8);
  std::int32_t d[4] = {v.dims().nx, v.dims().ny, v.dims().nz, v.dims().nt};
  write_raw(out, d, 4);
  float vox[3] = {v.voxel_mm()[0], v.voxel_mm()[1], v.voxel_mm()[2]};
  write_raw(out, vox, 3);
  float tr = v.tr_s();
  write_raw(out, &tr, 1);
  write_raw(out, v.mask().data(), v.mask().size());

  std::vector<float> raw(v.data().size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = float(v.data()[i]);
  write_raw(out, raw.data(), raw.size());
  if (!out) fail(ErrorKind::Io, "write_volume: write failed for " + path.string());
}

VolumeSeries normalize_series(const VolumeSeries& v, NormalizeReport* report) {
  const Dims4& dims = v.dims();
  std::int64_t nvox = dims.n_voxels();
  std::vector<double> out(v.data().size(), 0.0);
  NormalizeReport local;

  std::vector<double> buf(dims.nt);
  for (std::int64_t vx = 0; vx < nvox; ++vx) {
    if (!v.masked_in(vx)) continue;
    for (int t = 0; t < dims.nt; ++t) buf[t] = v.data()[vx + nvox * t];
    double m = mean_of(buf);
    double sd = sample_sd(buf);
    if (sd == 0.0 || dims.nt < 2) {
      local.degenerate_voxels.push_back(vx); // left identically zero
      continue;
    }
    for (int t = 0; t < dims.nt; ++t) out[vx + nvox * t] = (buf[t] - m) / sd;
  }
  if (report) *report = std::move(local);
  return VolumeSeries::create(dims, v.voxel_mm(), v.tr_s(), v.mask(), std::move(out));
}

// ---------------- LabelVolume ----------------

LabelVolume LabelVolume::create(std::array<int, 3> dims, std::vector<std::int32_t> labels) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    fail(ErrorKind::Validation, "LabelVolume: all dimensions must be >= 1");
  std::int64_t nvox =
      checked_count(checked_count(dims[0], dims[1], "LabelVolume"), dims[2], "LabelVolume");
  if (std::int64_t(labels.size()) != nvox)
    fail(ErrorKind::Validation, "LabelVolume: label count does not match dims");

  std::int32_t cmax = 0;
  for (auto l : labels) {
    if (l < 0) fail(ErrorKind::Validation, "LabelVolume: negative label");
    cmax = std::max(cmax, l);
  }
  std::vector<char> seen(std::size_t(cmax) + 1, 0);
  for (auto l : labels) seen[std::size_t(l)] = 1;
  for (std::int32_t c = 1; c <= cmax; ++c)
    if (!seen[std::size_t(c)])
      fail(ErrorKind::Validation,
           "LabelVolume: label range not contiguous (missing " + std::to_string(c) + ")");

  LabelVolume lv;
  lv.dims_ = dims;
  lv.c_ = cmax;
  lv.labels_ = std::move(labels);
  return lv;
}

LabelVolume read_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "read_labels: cannot open " + path.string());

  char magic[8];
  read_raw(in, magic, 8, "read_labels");
  if (std::memcmp(magic, kLabMagic, 8) != 0)
    fail(ErrorKind::BadMagic, "read_labels: not a CEADLAB1 file: " + path.string());

  std::int32_t d[3];
  read_raw(in, d, 3, "read_labels");
  if (d[0] < 1 || d[1] < 1 || d[2] < 1)
    fail(ErrorKind::Validation, "read_labels: non-positive dimension in header");
  std::int64_t nvox = checked_count(checked_count(d[0], d[1], "read_labels"), d[2], "read_labels");

  std::vector<std::int32_t> labels(nvox);
  read_raw(in, labels.data(), std::size_t(nvox), "read_labels");
  expect_eof(in, "read_labels");
  return LabelVolume::create({d[0], d[1], d[2]}, std::move(labels));
}

void write_labels(const LabelVolume& lv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "write_labels: cannot open " + path.string());
  write_raw(out, kLabMagic, 8);
  std::int32_t d[3] = {lv.dims()[0], lv.dims()[1], lv.dims()[2]};
  write_raw(out, d, 3);
  write_raw(out, lv.labels().data(), lv.labels().size());
  if (!out) fail(ErrorKind::Io, "write_labels: write failed for " + path.string());
}

bool labels_connected(const LabelVolume& lv) {
  auto [nx, ny, nz] = lv.dims();
  std::int64_t nvox = std::int64_t(nx) * ny * nz;
  const auto& lab = lv.labels();

  std::vector<char> visited(nvox, 0);
  std::vector<char> label_seen(std::size_t(lv.n_clusters()) + 1, 0);
  std::vector<std::int64_t> stack;

  auto idx = [&](int x, int y, int z) { return x + std::int64_t(nx) * (y + std::int64_t(ny) * z); };

  for (std::int64_t s = 0; s < nvox; ++s) {
    std::int32_t l = lab[s];
    if (l == 0 || visited[s]) continue;
    if (label_seen[l]) return false; // second component with this label
    label_seen[l] = 1;

    stack.assign(1, s);
    visited[s] = 1;
    while (!stack.empty()) {
      std::int64_t cur = stack.back();
      stack.pop_back();
      int x = int(cur % nx), y = int((cur / nx) % ny), z = int(cur / (std::int64_t(nx) * ny));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy && !dz) continue;
            int xx = x + dx, yy = y + dy, zz = z + dz;
            if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
            std::int64_t q = idx(xx, yy, zz);
            if (!visited[q] && lab[q] == l) {
              visited[q] = 1;
              stack.push_back(q);
            }
          }
    }
  }
  return true;
}

// ---------------- EventTable ----------------

namespace {
const char* kEventHeader = "onset_s\tduration_s\tcondition_id\tamplitude";
const char* kChoiceHeader =
    "subject_id\ttrial_index\tmean_return_pct\tsd_return_pct\tcondition\tchose_risky\tonset_s";
} // namespace

std::vector<int> EventTable::condition_ids() const {
  std::set<int> s;
  for (const auto& e : rows) s.insert(e.condition_id);
  return {s.begin(), s.end()};
}

EventTable read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "read_events: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kEventHeader)
    fail(ErrorKind::Parse, "read_events: bad header in " + path.string());

  EventTable t;
  double prev_onset = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 4) fail(ErrorKind::Parse, "read_events: expected 4 columns");
    Event e;
    e.onset_s = parse_double(f[0], "read_events onset_s");
    e.duration_s = parse_double(f[1], "read_events duration_s");
    e.condition_id = int(parse_long(f[2], "read_events condition_id"));
    e.amplitude = parse_double(f[3], "read_events amplitude");
    if (e.onset_s < 0 || !std::isfinite(e.onset_s))
      fail(ErrorKind::Validation, "read_events: onset must be finite and >= 0");
    if (e.onset_s < prev_onset)
      fail(ErrorKind::Validation, "read_events: onsets must be non-decreasing");
    if (e.duration_s < 0 || !std::isfinite(e.duration_s))
      fail(ErrorKind::Validation, "read_events: duration must be finite and >= 0");
    if (!std::isfinite(e.amplitude))
      fail(ErrorKind::NonFinite, "read_events: non-finite amplitude");
    prev_onset = e.onset_s;
    t.rows.push_back(e);
  }
  return t;
}

void write_events(const EventTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "write_events: cannot open " + path.string());
  out << kEventHeader << '\n';
  for (const auto& e : t.rows)
    out << fmt_double(e.onset_s) << '\t' << fmt_double(e.duration_s) << '\t' << e.condition_id
        << '\t' << fmt_double(e.amplitude) << '\n';
  if (!out) fail(ErrorKind::Io, "write_events: write failed");
}

// ---------------- ChoiceTable ----------------

std::string to_string(Condition c) {
  switch (c) {
    case Condition::single: return "single";
    case Condition::correlated: return "correlated";
    case Condition::uncorrelated: return "uncorrelated";
  }
  return "?";
}

Condition condition_from_string(const std::string& s) {
  if (s == "single") return Condition::single;
  if (s == "correlated") return Condition::correlated;
  if (s == "uncorrelated") return Condition::uncorrelated;
  fail(ErrorKind::Parse, "unknown condition '" + s + "'");
}

std::vector<std::string> ChoiceTable::subjects() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.subject_id) == out.end()) out.push_back(r.subject_id);
  return out;
}

std::vector<ChoiceRow> ChoiceTable::for_subject(const std::string& id) const {
  std::vector<ChoiceRow> out;
  for (const auto& r : rows)
    if (r.subject_id == id) out.push_back(r);
  return out;
}

namespace {
bool on_design_grid(double mu, double sd) {
  auto is_one_of = [](double v, std::initializer_list<double> xs) {
    for (double x : xs)
      if (v == x) return true;
    return false;
  };
  return is_one_of(mu, {5.0, 7.0, 9.0, 11.0}) && is_one_of(sd, {2.0, 4.0, 6.0, 8.0});
}
} // namespace

ChoiceTable read_choices(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "read_choices: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kChoiceHeader)
    fail(ErrorKind::Parse, "read_choices: bad header in " + path.string());

  ChoiceTable t;
  std::set<std::pair<std::string, long>> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 7) fail(ErrorKind::Parse, "read_choices: expected 7 columns");
    ChoiceRow r;
    r.subject_id = f[0];
    if (r.subject_id.empty()) fail(ErrorKind::Validation, "read_choices: empty subject id");
    r.trial_index = parse_long(f[1], "read_choices trial_index");
    if (r.trial_index < 0) fail(ErrorKind::Validation, "read_choices: negative trial index");
    r.mean_return_pct = parse_double(f[2], "read_choices mean_return_pct");
    r.sd_return_pct = parse_double(f[3], "read_choices sd_return_pct");
    if (!std::isfinite(r.mean_return_pct) || !std::isfinite(r.sd_return_pct))
      fail(ErrorKind::NonFinite, "read_choices: non-finite return moments");
    if (r.sd_return_pct < 0) fail(ErrorKind::Validation, "read_choices: negative sd");
    r.condition = condition_from_string(f[4]);
    if (f[5] == "0")
      r.chose_risky = false;
    else if (f[5] == "1")
      r.chose_risky = true;
    else
      fail(ErrorKind::Parse, "read_choices: chose_risky must be 0 or 1");
    r.onset_s = parse_double(f[6], "read_choices onset_s");
    if (r.onset_s < 0 || !std::isfinite(r.onset_s))
      fail(ErrorKind::Validation, "read_choices: onset must be finite and >= 0");
    if (!seen.insert({r.subject_id, r.trial_index}).second)
      fail(ErrorKind::Validation, "read_choices: duplicate (subject, trial) pair");
    if (!on_design_grid(r.mean_return_pct, r.sd_return_pct)) ++t.off_design_rows;
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_choices(const ChoiceTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "write_choices: cannot open " + path.string());
  out << kChoiceHeader << '\n';
  for (const auto& r : t.rows)
    out << r.subject_id << '\t' << r.trial_index << '\t' << fmt_double(r.mean_return_pct) << '\t'
        << fmt_double(r.sd_return_pct) << '\t' << to_string(r.condition) << '\t'
        << (r.chose_risky ? 1 : 0) << '\t' << fmt_double(r.onset_s) << '\n';
  if (!out) fail(ErrorKind::Io, "write_choices: write failed");
}

} // namespace cead

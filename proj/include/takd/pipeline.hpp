// SPDX-License-Identifier: Apache-2.0
//
// Preprocessing of paired treadmill GRF / insole pressure recordings into
// normalized, windowed, leave-one-subject-out datasets.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "takd/tensor.hpp"

namespace takd::gait {

inline constexpr std::size_t kRows = 16;
inline constexpr std::size_t kCols = 8;
inline constexpr std::size_t kPixels = kRows * kCols;
inline constexpr std::size_t kFeet = 2;
inline constexpr double kInsoleRate = 200.0;
inline constexpr double kPlateRate = 2000.0;

// ---------------------------------------------------------------------------
// Walking speeds

enum class Speed { SW, RW, BW, FW };

inline constexpr std::array<Speed, 4> kAllSpeeds{Speed::SW, Speed::RW, Speed::BW, Speed::FW};

inline std::string_view speed_name(Speed s) {
  switch (s) {
    case Speed::SW: return "SW";
    case Speed::RW: return "RW";
    case Speed::BW: return "BW";
    case Speed::FW: return "FW";
  }
  return "?";
}

inline double speed_mps(Speed s) {
  switch (s) {
    case Speed::SW: return 0.88;
    case Speed::RW: return 1.0;
    case Speed::BW: return 1.25;
    case Speed::FW: return 1.5;
  }
  return 0.0;
}

inline Speed parse_speed(std::string_view name) {
  for (auto s : kAllSpeeds)
    if (speed_name(s) == name) return s;
  throw ConfigError("unknown walking speed '" + std::string(name) + "' (expected SW, RW, BW or FW)");
}

// ---------------------------------------------------------------------------
// Fraction matrix

/// Coverage of a sensing cell by the insole outline.
enum class Cell : int { full = 0, large_partial = 1, small_partial = 2, absent = 3 };

using BoundaryMask = std::array<Cell, kPixels>;

struct FractionMatrix {
  std::array<float, kPixels> values{};

  float at(std::size_t row, std::size_t col) const { return values[row * kCols + col]; }

  /// Every entry is one of {0, 0.33, 0.67, 1} and at least one equals 1.
  void check() const {
    bool any_full = false;
    for (float v : values) {
      if (v != 0.0f && v != 0.33f && v != 0.67f && v != 1.0f)
        throw ConfigError("fraction matrix entry " + std::to_string(v) + " not in {0, 0.33, 0.67, 1}");
      any_full = any_full || v == 1.0f;
    }
    if (!any_full) throw ConfigError("fraction matrix has no fully covered cell");
  }
};

inline FractionMatrix build_fraction_matrix(const BoundaryMask& mask) {
  FractionMatrix m;
  for (std::size_t i = 0; i < kPixels; ++i) {
    switch (mask[i]) {
      case Cell::full: m.values[i] = 1.0f; break;
      case Cell::large_partial: m.values[i] = 0.67f; break;
      case Cell::small_partial: m.values[i] = 0.33f; break;
      case Cell::absent: m.values[i] = 0.0f; break;
      default:
        throw ConfigError("unknown boundary category " + std::to_string(static_cast<int>(mask[i])) +
                          " at cell " + std::to_string(i));
    }
  }
  return m;
}

/// Parses 16 rows of 8 characters: 'F' full, 'L' large partial, 'S' small partial, '.' absent.
inline BoundaryMask parse_boundary_mask(const std::vector<std::string>& rows) {
  if (rows.size() != kRows) throw ConfigError("boundary mask needs 16 rows");
  BoundaryMask mask{};
  for (std::size_t r = 0; r < kRows; ++r) {
    if (rows[r].size() != kCols) throw ConfigError("boundary mask row " + std::to_string(r) + " needs 8 cells");
    for (std::size_t c = 0; c < kCols; ++c) {
      Cell cell;
      switch (rows[r][c]) {
        case 'F': cell = Cell::full; break;
        case 'L': cell = Cell::large_partial; break;
        case 'S': cell = Cell::small_partial; break;
        case '.': cell = Cell::absent; break;
        default:
          throw ConfigError(std::string("unknown boundary category '") + rows[r][c] + "'");
      }
      mask[r * kCols + c] = cell;
    }
  }
  return mask;
}

/// Outline of a right-shoe insole; row 0 is the toe, row 15 the heel.
inline BoundaryMask default_boundary_mask() {
  return parse_boundary_mask({
      "..SLLS..",  //
      ".SLFFLS.",  //
      "SLFFFFL.",  //
      "SFFFFFL.",  //
      "LFFFFFFS",  //
      "LFFFFFFS",  //
      "SFFFFFL.",  //
      ".LFFFFL.",  //
      ".LFFFFS.",  //
      ".SFFFFS.",  //
      ".SFFFL..",  //
      ".LFFFL..",  //
      ".LFFFL..",  //
      ".LFFFL..",  //
      ".SFFLS..",  //
      "..SLS...",  //
  });
}

/// out[..., i, j] = in[..., i, j] * M[i, j] for any tensor whose trailing dims are (16, 8).
inline Tensor<float> apply_spatial_filter(const Tensor<float>& insole, const FractionMatrix& m) {
  if (insole.rank() < 2 || insole.dim(insole.rank() - 2) != kRows || insole.dim(insole.rank() - 1) != kCols)
    throw ShapeError("apply_spatial_filter expects trailing dims (16, 8), got " + to_string(insole.shape()));
  Tensor<float> out(insole.shape());
  const std::size_t frames = insole.numel() / kPixels;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t p = 0; p < kPixels; ++p) out[f * kPixels + p] = insole[f * kPixels + p] * m.values[p];
  return out;
}

// ---------------------------------------------------------------------------
// Zero-lag Butterworth low-pass

/// One direct-form-II-transposed second-order section (a0 == 1).
struct Biquad {
  double b0, b1, b2, a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// Digital Butterworth low-pass as cascaded sections (bilinear transform, prewarped).
inline std::vector<Biquad> butterworth_lowpass(int order, double fs, double fc) {
  if (order < 1) throw ConfigError("filter order must be positive");
  if (!(fc > 0.0) || fc >= fs / 2.0)
    throw ConfigError("cut-off " + std::to_string(fc) + " Hz must lie below Nyquist " + std::to_string(fs / 2.0));
  const double k = std::tan(std::numbers::pi * fc / fs);
  std::vector<Biquad> sos;
  for (int i = 0; i < order / 2; ++i) {
    const double q_inv = 2.0 * std::sin((2.0 * i + 1.0) * std::numbers::pi / (2.0 * order));
    const double norm = 1.0 / (1.0 + k * q_inv + k * k);
    const double b0 = k * k * norm;
    sos.push_back({b0, 2.0 * b0, b0, 2.0 * (k * k - 1.0) * norm, (1.0 - k * q_inv + k * k) * norm});
  }
  if (order % 2 == 1) {
    const double b0 = k / (1.0 + k);
    sos.push_back({b0, b0, 0.0, (k - 1.0) / (k + 1.0), 0.0});
  }
  return sos;
}

namespace detail {

/// Runs the cascade with each section starting at its steady state for input `x[0]`.
inline void sos_filter_steady(const std::vector<Biquad>& sos, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x[0];
  for (const auto& s : sos) {
    const double out_level = level * s.dc_gain();
    double z2 = s.b2 * level - s.a2 * out_level;
    double z1 = s.b1 * level - s.a1 * out_level + z2;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
    level = out_level;
  }
}

}  // namespace detail

/// Forward-backward Butterworth low-pass with odd reflection of 3·(order+1) samples per end.
inline std::vector<double> zero_lag_lowpass(std::span<const double> series, double fs, double fc = 10.0,
                                            int order = 2) {
  const auto sos = butterworth_lowpass(order, fs, fc);
  const std::size_t pad = 3 * static_cast<std::size_t>(order + 1);
  if (series.size() <= pad)
    throw ConfigError("series of length " + std::to_string(series.size()) + " too short for padding " +
                      std::to_string(pad));
  const std::size_t n = series.size();
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    ext[pad - 1 - i] = 2.0 * series[0] - series[i + 1];
    ext[pad + n + i] = 2.0 * series[n - 1] - series[n - 2 - i];
  }
  std::copy(series.begin(), series.end(), ext.begin() + static_cast<long>(pad));
  detail::sos_filter_steady(sos, ext);
  std::reverse(ext.begin(), ext.end());
  detail::sos_filter_steady(sos, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<long>(pad), ext.begin() + static_cast<long>(pad + n)};
}

/// Low-pass at 10 Hz then keep every 10th sample: (2, T_raw) at 2 kHz -> (2, T_raw/10) at 200 Hz.
inline Tensor<float> resample_grf(const Tensor<float>& raw, double fc = 10.0) {
  if (raw.rank() != 2 || raw.dim(0) == 0) throw ShapeError("resample_grf expects (channels, samples)");
  constexpr std::size_t factor = 10;
  const std::size_t usable = raw.dim(1) / factor * factor;
  if (usable == 0) throw ShapeError("resample_grf: fewer than 10 samples");
  const std::size_t out_len = usable / factor;
  Tensor<float> out(Shape{raw.dim(0), out_len});
  for (std::size_t c = 0; c < raw.dim(0); ++c) {
    std::vector<double> ch(usable);
    for (std::size_t i = 0; i < usable; ++i) ch[i] = raw[c * raw.dim(1) + i];
    const auto filtered = zero_lag_lowpass(ch, kPlateRate, fc, 2);
    for (std::size_t i = 0; i < out_len; ++i) out[c * out_len + i] = static_cast<float>(filtered[i * factor]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

struct MinMax {
  double min = 0.0;
  double max = 1.0;

  double range() const { return std::abs(max - min); }
  double apply(double v) const { return (v - min) / range(); }
  double invert(double v) const { return v * range() + min; }
};

struct NormalizationRecord {
  MinMax grf;     // in fractions of bodyweight
  MinMax insole;  // in raw pressure units
};

/// Running min/max over one variable; degenerate ranges are rejected at finish().
class MinMaxAccumulator {
 public:
  void add(std::span<const float> values) {
    for (float v : values) {
      lo_ = std::min(lo_, static_cast<double>(v));
      hi_ = std::max(hi_, static_cast<double>(v));
    }
  }
  MinMax finish(const char* what) const {
    if (!(hi_ > lo_)) throw NumericError(std::string("degenerate range for ") + what + ": max == min");
    return {lo_, hi_};
  }

 private:
  double lo_ = std::numeric_limits<double>::infinity();
  double hi_ = -std::numeric_limits<double>::infinity();
};

inline Tensor<float> divide_by_bodyweight(const Tensor<float>& grf_newton, double bodyweight) {
  if (!(bodyweight > 0.0)) throw ConfigError("bodyweight must be positive");
  Tensor<float> out(grf_newton.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<float>(grf_newton[i] / bodyweight);
  return out;
}

inline void apply_minmax(Tensor<float>& t, const MinMax& mm) {
  for (auto& v : t.data()) v = static_cast<float>(mm.apply(v));
}

inline void invert_minmax(Tensor<float>& t, const MinMax& mm) {
  for (auto& v : t.data()) v = static_cast<float>(mm.invert(v));
}

// ---------------------------------------------------------------------------
// Trials, windows and datasets

/// Raw paired recording of one subject at one speed.
struct TrialRecording {
  int subject = 0;
  Speed speed = Speed::SW;
  double bodyweight = 0.0;     // N
  Tensor<float> grf;           // (2, T_raw) N at 2 kHz
  Tensor<float> insole;        // (2, T, 16, 8) raw pressure at 200 Hz
};

/// Aligned 200 Hz streams after filtering, before min-max normalization.
struct TrialStreams {
  int subject = 0;
  Speed speed = Speed::SW;
  double bodyweight = 0.0;
  Tensor<float> grf;     // (2, T) fraction of bodyweight
  Tensor<float> insole;  // (2, T, 16, 8) spatially filtered pressure
};

inline TrialStreams prepare_trial(const TrialRecording& rec, const FractionMatrix& fraction) {
  fraction.check();
  if (!(rec.bodyweight > 0.0)) throw ConfigError("bodyweight must be positive");
  if (rec.grf.rank() != 2 || rec.grf.dim(0) != kFeet) throw ShapeError("trial GRF must be (2, T_raw)");
  if (rec.insole.rank() != 4 || rec.insole.dim(0) != kFeet || rec.insole.dim(2) != kRows ||
      rec.insole.dim(3) != kCols)
    throw ShapeError("trial insole must be (2, T, 16, 8)");
  auto grf = divide_by_bodyweight(resample_grf(rec.grf), rec.bodyweight);
  auto insole = apply_spatial_filter(rec.insole, fraction);
  const std::size_t t = std::min(grf.dim(1), insole.dim(1));
  TrialStreams s{rec.subject, rec.speed, rec.bodyweight, Tensor<float>(Shape{kFeet, t}),
                 Tensor<float>(Shape{kFeet, t, kRows, kCols})};
  for (std::size_t c = 0; c < kFeet; ++c) {
    std::copy_n(grf.ptr() + c * grf.dim(1), t, s.grf.ptr() + c * t);
    std::copy_n(insole.ptr() + c * insole.dim(1) * kPixels, t * kPixels, s.insole.ptr() + c * t * kPixels);
  }
  return s;
}

/// Windows of one (subject, speed) trial: insole (N, 2, W, 16, 8), grf (N, 2, W).
struct TrialWindows {
  int subject = 0;
  Speed speed = Speed::SW;
  Tensor<float> insole;
  Tensor<float> grf;

  std::size_t count() const { return grf.empty() ? 0 : grf.dim(0); }
};

/// Non-overlapping windows tiling the prefix of the streams; the tail shorter than W is dropped.
inline TrialWindows make_windows(const TrialStreams& s, std::size_t window) {
  if (window == 0) throw ConfigError("window length must be positive");
  const std::size_t t = s.grf.dim(1);
  if (t < window)
    throw ConfigError("stream of length " + std::to_string(t) + " shorter than window " + std::to_string(window));
  const std::size_t n = t / window;
  TrialWindows w{s.subject, s.speed, Tensor<float>(Shape{n, kFeet, window, kRows, kCols}),
                 Tensor<float>(Shape{n, kFeet, window})};
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < kFeet; ++c) {
      std::copy_n(s.grf.ptr() + c * t + k * window, window, w.grf.ptr() + (k * kFeet + c) * window);
      std::copy_n(s.insole.ptr() + (c * t + k * window) * kPixels, window * kPixels,
                  w.insole.ptr() + (k * kFeet + c) * window * kPixels);
    }
  return w;
}

struct GaitDataset {
  std::size_t window = 0;
  std::vector<TrialWindows> trials;
  NormalizationRecord normalization;
  std::map<int, double> bodyweights;
  nlohmann::json generator;  // echo of generator parameters, may be null

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& t : trials) n += t.count();
    return n;
  }

  std::vector<int> subjects() const {
    std::set<int> s;
    for (const auto& t : trials) s.insert(t.subject);
    return {s.begin(), s.end()};
  }

  std::vector<Speed> speeds() const {
    std::vector<Speed> out;
    for (auto sp : kAllSpeeds)
      for (const auto& t : trials)
        if (t.speed == sp) {
          out.push_back(sp);
          break;
        }
    return out;
  }

  std::size_t count(int subject, Speed speed) const {
    std::size_t n = 0;
    for (const auto& t : trials)
      if (t.subject == subject && t.speed == speed) n += t.count();
    return n;
  }
};

/// Fits bodyweight-normalized GRF and insole min/max over all streams.
inline NormalizationRecord fit_normalization(const std::vector<TrialStreams>& streams) {
  MinMaxAccumulator g, p;
  for (const auto& s : streams) {
    g.add(s.grf.data());
    p.add(s.insole.data());
  }
  return {g.finish("GRF"), p.finish("insole")};
}

/// Normalizes every stream with `norm` and cuts windows of length `window`.
inline GaitDataset build_dataset(std::vector<TrialStreams> streams, std::size_t window,
                                 const NormalizationRecord& norm) {
  GaitDataset ds;
  ds.window = window;
  ds.normalization = norm;
  for (auto& s : streams) {
    apply_minmax(s.grf, norm.grf);
    apply_minmax(s.insole, norm.insole);
    ds.bodyweights[s.subject] = s.bodyweight;
    ds.trials.push_back(make_windows(s, window));
  }
  return ds;
}

/// Maps already-normalized values from constants `from` onto constants `to`.
inline void remap_minmax(Tensor<float>& t, const MinMax& from, const MinMax& to) {
  for (auto& v : t.data()) v = static_cast<float>(to.apply(from.invert(v)));
}

struct LosoSplit {
  GaitDataset train;
  GaitDataset test;
};

/// Leave-one-subject-out split. With `refit`, min-max constants are recomputed on
/// the training portion and applied to both sides (test values may leave [0, 1]).
inline LosoSplit loso_split(const GaitDataset& ds, int held_out, bool refit = false) {
  const auto subjects = ds.subjects();
  if (subjects.size() < 2) throw ConfigError("leave-one-subject-out needs at least two subjects");
  if (std::find(subjects.begin(), subjects.end(), held_out) == subjects.end())
    throw ConfigError("unknown subject " + std::to_string(held_out));
  LosoSplit split;
  for (auto* part : {&split.train, &split.test}) {
    part->window = ds.window;
    part->normalization = ds.normalization;
    part->generator = ds.generator;
  }
  for (const auto& t : ds.trials) {
    auto& part = t.subject == held_out ? split.test : split.train;
    part.trials.push_back(t);
    part.bodyweights[t.subject] = ds.bodyweights.count(t.subject) ? ds.bodyweights.at(t.subject) : 0.0;
  }
  if (refit) {
    MinMaxAccumulator g, p;
    for (const auto& t : split.train.trials) {
      g.add(t.grf.data());
      p.add(t.insole.data());
    }
    const MinMax g_fit = g.finish("GRF"), p_fit = p.finish("insole");
    // fitted on normalized values; express the new constants in raw units
    const NormalizationRecord refitted{{ds.normalization.grf.invert(g_fit.min), ds.normalization.grf.invert(g_fit.max)},
                                       {ds.normalization.insole.invert(p_fit.min),
                                        ds.normalization.insole.invert(p_fit.max)}};
    for (auto* part : {&split.train, &split.test}) {
      for (auto& t : part->trials) {
        TrialWindows copy{t.subject, t.speed, t.insole.clone(), t.grf.clone()};
        remap_minmax(copy.grf, ds.normalization.grf, refitted.grf);
        remap_minmax(copy.insole, ds.normalization.insole, refitted.insole);
        t = std::move(copy);
      }
      part->normalization = refitted;
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Dataset directory format

inline std::string trial_stem(int subject, Speed speed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sbj%02d_%s", subject, std::string(speed_name(speed)).c_str());
  return buf;
}

namespace detail {

inline void write_f32(const std::filesystem::path& path, const Tensor<float>& t) {
  static_assert(std::endian::native == std::endian::little, "payload writer assumes a little-endian host");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!os) throw IoError("write failed for " + path.string());
}

inline Tensor<float> read_f32(const std::filesystem::path& path, Shape shape) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("missing payload " + path.string());
  const std::size_t expected = numel_of(shape) * sizeof(float);
  if (bytes != expected)
    throw IoError("payload size mismatch for " + path.string() + ": " + std::to_string(bytes) +
                  " bytes on disk, manifest implies " + std::to_string(expected) + " for dims " + to_string(shape));
  Tensor<float> t(std::move(shape));
  std::ifstream is(path, std::ios::binary);
  if (!is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(expected)))
    throw IoError("short read from " + path.string());
  return t;
}

}  // namespace detail

inline constexpr int kManifestVersion = 1;

inline void save_dataset(const GaitDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["version"] = kManifestVersion;
  m["window"] = ds.window;
  m["subjects"] = ds.subjects();
  std::vector<std::string> speeds;
  for (auto s : ds.speeds()) speeds.emplace_back(speed_name(s));
  m["speeds"] = speeds;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& t : ds.trials) {
    counts[trial_stem(t.subject, t.speed)] = t.count();
    detail::write_f32(dir / (trial_stem(t.subject, t.speed) + ".insole.f32"), t.insole);
    detail::write_f32(dir / (trial_stem(t.subject, t.speed) + ".grf.f32"), t.grf);
  }
  m["counts"] = counts;
  m["normalization"] = {{"grf_min", ds.normalization.grf.min},
                        {"grf_max", ds.normalization.grf.max},
                        {"insole_min", ds.normalization.insole.min},
                        {"insole_max", ds.normalization.insole.max}};
  nlohmann::json bw = nlohmann::json::object();
  for (const auto& [s, w] : ds.bodyweights) bw[std::to_string(s)] = w;
  m["bodyweights"] = bw;
  if (!ds.generator.is_null()) m["generator"] = ds.generator;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir.string());
  os << m.dump(2) << '\n';
}

inline GaitDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("no manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    is >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  GaitDataset ds;
  try {
    if (m.at("version").get<int>() != kManifestVersion) throw IoError("unsupported manifest version");
    ds.window = m.at("window").get<std::size_t>();
    if (ds.window == 0) throw IoError("manifest window must be positive");
    const auto& norm = m.at("normalization");
    ds.normalization.grf = {norm.at("grf_min").get<double>(), norm.at("grf_max").get<double>()};
    ds.normalization.insole = {norm.at("insole_min").get<double>(), norm.at("insole_max").get<double>()};
    for (const auto& [k, v] : m.at("bodyweights").items()) ds.bodyweights[std::stoi(k)] = v.get<double>();
    if (m.contains("generator")) ds.generator = m["generator"];
    const auto subjects = m.at("subjects").get<std::vector<int>>();
    const auto speeds = m.at("speeds").get<std::vector<std::string>>();
    const auto& counts = m.at("counts");
    for (int s : subjects)
      for (const auto& sp_name : speeds) {
        const Speed sp = parse_speed(sp_name);
        const auto stem = trial_stem(s, sp);
        if (!counts.contains(stem)) continue;
        const auto n = counts.at(stem).get<std::size_t>();
        if (n == 0) continue;
        TrialWindows t{s, sp,
                       detail::read_f32(dir / (stem + ".insole.f32"), Shape{n, kFeet, ds.window, kRows, kCols}),
                       detail::read_f32(dir / (stem + ".grf.f32"), Shape{n, kFeet, ds.window})};
        ds.trials.push_back(std::move(t));
      }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return ds;
}

}  // namespace takd::gait

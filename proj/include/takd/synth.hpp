// SPDX-License-Identifier: Apache-2.0
//
// Synthetic paired treadmill-GRF / insole-pressure recordings.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "takd/pipeline.hpp"
#include "takd/seed.hpp"

namespace takd::synth {

using gait::kCols;
using gait::kPixels;
using gait::kRows;
using gait::Speed;

inline constexpr double kStanceFraction = 0.6;
inline constexpr double kTaperEdge = 0.12;
inline constexpr double kBumpWidth = 0.18;
inline constexpr double kSensorMax = 206.8;

struct SubjectProfile {
  int subject = 1;
  double bodyweight = 700.0;      // N
  double cadence_rw = 110.0;      // steps/min at 1.0 m/s
  double heel_amplitude = 1.07;   // first bump, fraction of bodyweight
  double push_amplitude = 1.02;   // second bump
  double asymmetry = 1.0;         // left/right load ratio
  double noise_sigma = 1.0;       // insole noise, pressure units
  double drift_rate = 3.0;        // pressure units per second of stance
  double plate_noise = 2.0;       // force-plate noise, N
  double gain = 3.5;              // pressure units per N
  std::uint64_t seed = 0;

  /// Steps per minute; grows gently with walking speed.
  double cadence(Speed s) const { return cadence_rw * std::pow(gait::speed_mps(s), 0.3); }
  /// Stride (two steps) duration in seconds.
  double cycle_seconds(Speed s) const { return 120.0 / cadence(s); }

  void validate() const {
    if (!(bodyweight > 0)) throw ConfigError("profile bodyweight must be positive");
    if (!(noise_sigma >= 0) || !(plate_noise >= 0)) throw ConfigError("noise sigma must be non-negative");
    if (asymmetry < 0.8 || asymmetry > 1.2) throw ConfigError("asymmetry must lie in [0.8, 1.2]");
    if (!(cadence_rw > 0) || !(gain > 0)) throw ConfigError("cadence and gain must be positive");
  }
};

namespace detail {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return mix_seed(a, b); }

inline std::uint64_t trial_seed(std::uint64_t seed, int subject, Speed speed) {
  return mix(mix(seed, static_cast<std::uint64_t>(subject)), 0x5eed0000u + static_cast<std::uint64_t>(speed));
}

inline double smoothstep(double u) { return u <= 0 ? 0 : u >= 1 ? 1 : u * u * (3 - 2 * u); }

}  // namespace detail

/// Per-subject profile drawn deterministically from (seed, subject).
inline SubjectProfile make_profile(int subject, std::uint64_t seed) {
  std::mt19937_64 rng(detail::mix(seed, 0xabcd0000u + static_cast<std::uint64_t>(subject)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SubjectProfile p;
  p.subject = subject;
  p.seed = seed;
  p.bodyweight = 550.0 + 350.0 * u(rng);
  p.cadence_rw = 110.0 * (0.95 + 0.1 * u(rng));
  p.heel_amplitude = 1.07 * (0.97 + 0.06 * u(rng));
  p.push_amplitude = 1.02 * (0.97 + 0.06 * u(rng));
  p.asymmetry = 0.94 + 0.12 * u(rng);
  p.noise_sigma = 0.5 + 1.0 * u(rng);
  p.drift_rate = 1.0 + 4.0 * u(rng);
  return p;
}

/// Vertical force of one foot over stance progress s in [0, 1], fraction of bodyweight.
inline double stance_curve(double s, double heel, double push) {
  if (s <= 0 || s >= 1) return 0.0;
  const double taper = detail::smoothstep(std::min(s, 1 - s) / kTaperEdge);
  const double w = 2 * kBumpWidth * kBumpWidth;
  return taper * (heel * std::exp(-(s - 0.25) * (s - 0.25) / w) + push * std::exp(-(s - 0.75) * (s - 0.75) / w));
}

/// Stance progress of a foot at gait phase `phase` (cycles, any real), or -1 in swing.
inline double stance_progress(double phase) {
  const double f = phase - std::floor(phase);
  return f < kStanceFraction ? f / kStanceFraction : -1.0;
}

/// Fraction-of-bodyweight force for (left, right) at time t seconds.
inline std::array<double, 2> grf_at(const SubjectProfile& p, Speed speed, double phase0, double t) {
  const double phase = phase0 + t / p.cycle_seconds(speed);
  const double la = std::sqrt(p.asymmetry);
  const double sl = stance_progress(phase), sr = stance_progress(phase + 0.5);
  return {sl < 0 ? 0.0 : la * stance_curve(sl, p.heel_amplitude, p.push_amplitude),
          sr < 0 ? 0.0 : stance_curve(sr, p.heel_amplitude, p.push_amplitude) / la};
}

namespace detail {

inline Tensor<float> sample_grf(const SubjectProfile& p, Speed speed, std::size_t n, double fs, double phase0,
                                double t0 = 0.0) {
  Tensor<float> out(Shape{2, n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = grf_at(p, speed, phase0, t0 + static_cast<double>(i) / fs);
    out[i] = static_cast<float>(f[0]);
    out[n + i] = static_cast<float>(f[1]);
  }
  return out;
}

}  // namespace detail

/// Noise-free (2, T) GRF in fractions of bodyweight, sampled at `fs`.
inline Tensor<float> synth_grf_trial(const SubjectProfile& p, Speed speed, double duration_s, double fs = 200.0,
                                     double phase0 = 0.0) {
  p.validate();
  if (!(duration_s > 0)) throw ConfigError("duration must be positive");
  if (duration_s < 2 * p.cycle_seconds(speed))
    throw ConfigError("duration must cover at least two gait cycles");
  return detail::sample_grf(p, speed, static_cast<std::size_t>(std::llround(duration_s * fs)), fs, phase0);
}

/// Stance progress per sample recovered from where the force is positive. Runs clipped
/// by the trial boundary are timed with the median length of the complete runs.
inline std::vector<double> progress_from_force(std::span<const float> force) {
  const std::size_t n = force.size();
  std::vector<double> s(n, -1.0);
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [begin, end)
  for (std::size_t i = 0; i < n;) {
    if (force[i] <= 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && force[j] > 0) ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  std::vector<std::size_t> full;
  for (auto [b, e] : runs)
    if (b > 0 && e < n) full.push_back(e - b);
  std::size_t typical = 0;
  if (!full.empty()) {
    std::nth_element(full.begin(), full.begin() + static_cast<long>(full.size() / 2), full.end());
    typical = full[full.size() / 2];
  }
  for (auto [b, e] : runs) {
    const std::size_t len = std::max(e - b, typical) + 1;  // +1: endpoints are zero-force samples
    for (std::size_t i = b; i < e; ++i) {
      if (b == 0 && e < n)
        s[i] = 1.0 - static_cast<double>(e - i) / static_cast<double>(len);
      else
        s[i] = static_cast<double>(i - b + 1) / static_cast<double>(len);
    }
  }
  return s;
}

/// Row/column of the centre of pressure at stance progress s; heel (row 13.5) to toe (row 1.5).
inline std::array<double, 2> centre_of_pressure(double s) {
  return {13.5 - 12.0 * s, 3.5 - 0.4 * std::sin(std::numbers::pi * s)};
}

struct RenderOptions {
  gait::BoundaryMask mask = gait::default_boundary_mask();
  double sigma_row = 2.5;
  double sigma_col = 2.0;
};

/// Renders (2, T, 16, 8) pressure frames from (2, T) force in fractions of bodyweight.
inline Tensor<float> render_insole_video(const Tensor<float>& grf, const SubjectProfile& p, std::mt19937_64& rng,
                                         double fs = 200.0, const RenderOptions& opt = {}) {
  if (grf.rank() != 2 || grf.dim(0) != 2) throw ShapeError("render_insole_video expects (2, T) force");
  p.validate();
  const std::size_t t = grf.dim(1);
  const auto fraction = gait::build_fraction_matrix(opt.mask);
  Tensor<float> video(Shape{2, t, kRows, kCols});
  std::normal_distribution<double> noise(0.0, 1.0);
  std::array<double, kPixels> w{};
  for (std::size_t foot = 0; foot < 2; ++foot) {
    const auto force = grf.data().subspan(foot * t, t);
    const auto progress = progress_from_force(force);
    double since_strike = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      float* frame = video.ptr() + (foot * t + i) * kPixels;
      const double newton = static_cast<double>(force[i]) * p.bodyweight;
      if (progress[i] >= 0 && newton > 0) {
        since_strike = (i > 0 && progress[i - 1] >= 0) ? since_strike + 1.0 / fs : 0.0;
        const auto cop = centre_of_pressure(progress[i]);
        double total = 0;
        for (std::size_t r = 0; r < kRows; ++r)
          for (std::size_t c = 0; c < kCols; ++c) {
            const double dr = (static_cast<double>(r) - cop[0]) / opt.sigma_row;
            const double dc = (static_cast<double>(c) - cop[1]) / opt.sigma_col;
            const double v = fraction.values[r * kCols + c] * std::exp(-0.5 * (dr * dr + dc * dc));
            w[r * kCols + c] = v;
            total += v;
          }
        for (std::size_t k = 0; k < kPixels; ++k)
          frame[k] = static_cast<float>(p.gain * newton * w[k] / total +
                                        p.drift_rate * since_strike * fraction.values[k]);
      } else {
        since_strike = 0.0;
      }
      if (p.noise_sigma > 0)
        for (std::size_t k = 0; k < kPixels; ++k) frame[k] += static_cast<float>(p.noise_sigma * noise(rng));
      for (std::size_t k = 0; k < kPixels; ++k) frame[k] = std::clamp(frame[k], 0.0f, static_cast<float>(kSensorMax));
    }
  }
  return video;
}

/// Raw 2 kHz force-plate signal in N and the paired 200 Hz insole video for one trial.
inline gait::TrialRecording synth_trial(const SubjectProfile& p, Speed speed, std::size_t frames,
                                        std::uint64_t seed, const RenderOptions& opt = {}) {
  std::mt19937_64 rng(detail::trial_seed(seed, p.subject, speed));
  const double phase0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  // render one extra cycle on each side so every stance run inside the trial is complete
  const auto margin = static_cast<std::size_t>(std::ceil(p.cycle_seconds(speed) * gait::kInsoleRate));
  const std::size_t padded = frames + 2 * margin;
  auto clean = detail::sample_grf(p, speed, padded, gait::kInsoleRate, phase0,
                                  -static_cast<double>(margin) / gait::kInsoleRate);
  auto video = render_insole_video(clean, p, rng, gait::kInsoleRate, opt);
  gait::TrialRecording rec;
  rec.subject = p.subject;
  rec.speed = speed;
  rec.bodyweight = p.bodyweight;
  rec.insole = Tensor<float>(Shape{2, frames, kRows, kCols});
  for (std::size_t c = 0; c < 2; ++c)
    std::copy_n(video.ptr() + (c * padded + margin) * kPixels, frames * kPixels,
                rec.insole.ptr() + c * frames * kPixels);
  const std::size_t raw_n = frames * 10;
  rec.grf = Tensor<float>(Shape{2, raw_n});
  std::normal_distribution<double> plate(0.0, 1.0);
  for (std::size_t i = 0; i < raw_n; ++i) {
    const auto f = grf_at(p, speed, phase0, static_cast<double>(i) / gait::kPlateRate);
    for (std::size_t c = 0; c < 2; ++c)
      rec.grf[c * raw_n + i] = static_cast<float>(f[c] * p.bodyweight + p.plate_noise * plate(rng));
  }
  return rec;
}

struct GenerateOptions {
  int n_subjects = 6;
  std::vector<Speed> speeds{Speed::SW, Speed::BW};
  std::size_t windows_per_trial = 8;
  std::size_t window = 100;
  std::uint64_t seed = 1;
  bool reference_layout = false;  // drop the four trials missing from the reference collection
  RenderOptions render;
};

/// (subject, speed) trials that would be generated, in generation order.
inline std::vector<std::pair<int, Speed>> plan_layout(const GenerateOptions& o) {
  std::vector<std::pair<int, Speed>> out;
  for (int s = 1; s <= o.n_subjects; ++s)
    for (auto sp : o.speeds) {
      if (o.reference_layout && ((sp == Speed::RW && (s == 1 || s == 2)) || (sp == Speed::BW && s == 1) ||
                              (sp == Speed::FW && s == 4)))
        continue;
      out.emplace_back(s, sp);
    }
  return out;
}

/// Frames rendered per trial: the windows plus a half-window tail that windowing drops.
inline std::size_t frames_per_trial(const GenerateOptions& o) { return o.windows_per_trial * o.window + o.window / 2; }

inline nlohmann::json describe(const GenerateOptions& o) {
  std::vector<std::string> speeds;
  for (auto s : o.speeds) speeds.emplace_back(gait::speed_name(s));
  return {{"n_subjects", o.n_subjects},       {"speeds", speeds},
          {"windows_per_trial", o.windows_per_trial}, {"window", o.window},
          {"seed", o.seed},                   {"reference_layout", o.reference_layout},
          {"stance_fraction", kStanceFraction}, {"bump_width", kBumpWidth},
          {"sensor_max", kSensorMax}};
}

/// Synthesizes every trial and routes it through the preprocessing pipeline.
inline gait::GaitDataset generate_dataset(const GenerateOptions& o) {
  if (o.n_subjects < 2) throw ConfigError("need at least two subjects");
  if (o.window != 100 && o.window != 200) throw ConfigError("window must be 100 or 200");
  if (o.windows_per_trial == 0) throw ConfigError("windows per trial must be positive");
  if (o.speeds.empty()) throw ConfigError("no walking speeds selected");
  const auto fraction = gait::build_fraction_matrix(o.render.mask);
  fraction.check();
  const std::size_t frames = frames_per_trial(o);
  std::vector<gait::TrialStreams> streams;
  for (auto [subject, speed] : plan_layout(o)) {
    const auto profile = make_profile(subject, o.seed);
    streams.push_back(gait::prepare_trial(synth_trial(profile, speed, frames, o.seed, o.render), fraction));
  }
  const auto norm = gait::fit_normalization(streams);
  auto ds = gait::build_dataset(std::move(streams), o.window, norm);
  ds.generator = describe(o);
  return ds;
}

}  // namespace takd::synth

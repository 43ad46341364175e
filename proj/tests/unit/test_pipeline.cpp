// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "common/oracles.hpp"
#include "takd/pipeline.hpp"

using namespace takd;
using namespace takd::gait;
namespace fs = std::filesystem;

namespace {

std::vector<double> sinusoid(double f, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / fs);
  return x;
}

double peak_abs(const std::vector<double>& x, std::size_t from, std::size_t to) {
  double m = 0;
  for (std::size_t i = from; i < to; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

BoundaryMask uniform_mask(Cell c) {
  BoundaryMask m;
  m.fill(c);
  return m;
}

TrialStreams ramp_streams(int subject, Speed speed, std::size_t t, double bw, double offset) {
  TrialStreams s{subject, speed, bw, Tensor<float>(Shape{2, t}), Tensor<float>(Shape{2, t, kRows, kCols})};
  for (std::size_t i = 0; i < s.grf.numel(); ++i) s.grf[i] = static_cast<float>(offset + 0.001 * (i % 977));
  for (std::size_t i = 0; i < s.insole.numel(); ++i) s.insole[i] = static_cast<float>(i % 251);
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("takd_pipeline_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(FractionMatrix, CategoriesMapToValues) {
  auto full = build_fraction_matrix(uniform_mask(Cell::full));
  for (float v : full.values) EXPECT_EQ(v, 1.0f);
  auto mask = uniform_mask(Cell::full);
  mask[3 * kCols + 2] = Cell::small_partial;
  mask[5] = Cell::large_partial;
  auto m = build_fraction_matrix(mask);
  EXPECT_EQ(m.at(3, 2), 0.33f);
  EXPECT_EQ(m.at(0, 5), 0.67f);
  EXPECT_EQ(m.at(0, 0), 1.0f);
  EXPECT_NO_THROW(m.check());
}

TEST(FractionMatrix, AllAbsentIsZeroAndRejectedDownstream) {
  auto m = build_fraction_matrix(uniform_mask(Cell::absent));
  for (float v : m.values) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(m.check(), ConfigError);
  TrialRecording rec{1, Speed::SW, 700.0, Tensor<float>(Shape{2, 2000}, 1.0f),
                     Tensor<float>(Shape{2, 200, 16, 8}, 1.0f)};
  EXPECT_THROW(prepare_trial(rec, m), ConfigError);
}

TEST(FractionMatrix, UnknownCategoryRejected) {
  auto mask = uniform_mask(Cell::full);
  mask[7] = static_cast<Cell>(9);
  EXPECT_THROW(build_fraction_matrix(mask), ConfigError);
  std::vector<std::string> rows(16, "FFFFFFFF");
  rows[2][1] = 'X';
  EXPECT_THROW(parse_boundary_mask(rows), ConfigError);
}

TEST(FractionMatrix, DefaultOutlineIsValid) {
  auto m = build_fraction_matrix(default_boundary_mask());
  EXPECT_NO_THROW(m.check());
  EXPECT_EQ(m.at(0, 0), 0.0f);
  EXPECT_EQ(m.at(8, 3), 1.0f);
}

TEST(SpatialFilter, OnesZerosAndCheckerboard) {
  std::mt19937_64 rng(21);
  auto x = oracle::random_tensor<float>({2, 5, 16, 8}, rng, 0, 200);
  auto ones = apply_spatial_filter(x, build_fraction_matrix(uniform_mask(Cell::full)));
  EXPECT_EQ(std::memcmp(ones.ptr(), x.ptr(), x.numel() * 4), 0);
  auto zeros = apply_spatial_filter(x, build_fraction_matrix(uniform_mask(Cell::absent)));
  for (float v : zeros.data()) EXPECT_EQ(v, 0.0f);

  BoundaryMask checker;
  for (std::size_t i = 0; i < kRows; ++i)
    for (std::size_t j = 0; j < kCols; ++j) checker[i * kCols + j] = (i + j) % 2 ? Cell::small_partial : Cell::full;
  auto m = build_fraction_matrix(checker);
  auto y = apply_spatial_filter(x, m);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t i = 0; i < kRows; ++i)
        for (std::size_t j = 0; j < kCols; ++j) {
          const std::size_t k = ((c * 5 + t) * kRows + i) * kCols + j;
          EXPECT_EQ(y[k], x[k] * ((i + j) % 2 ? 0.33f : 1.0f));
        }
  EXPECT_THROW(apply_spatial_filter(Tensor<float>(Shape{2, 5, 8, 16}), m), ShapeError);
}

TEST(Butterworth, SecondOrderCoefficientsMatchReference) {
  // scipy.signal.butter(2, 10, fs=200, output="sos")
  auto sos = butterworth_lowpass(2, 200.0, 10.0);
  ASSERT_EQ(sos.size(), 1u);
  EXPECT_NEAR(sos[0].b0, 0.020083365564211232, 1e-15);
  EXPECT_NEAR(sos[0].b1, 0.040166731128422464, 1e-15);
  EXPECT_NEAR(sos[0].a1, -1.5610180758007182, 1e-14);
  EXPECT_NEAR(sos[0].a2, 0.6413515380575631, 1e-14);
  EXPECT_NEAR(sos[0].dc_gain(), 1.0, 1e-14);
}

TEST(ZeroLagLowpass, MatchesReferenceFiltfilt) {
  std::vector<double> x(40);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(i);
    x[i] = std::sin(0.3 * d) + std::fmod(0.05 * d * d, 1.7);
  }
  // scipy.signal.sosfiltfilt(butter(2, 10, fs=200, output="sos"), x)
  auto y = zero_lag_lowpass(x, 200.0, 10.0, 2);
  EXPECT_NEAR(y[0], 0.026927624233750346, 1e-12);
  EXPECT_NEAR(y[1], 0.3304967745660965, 1e-12);
  EXPECT_NEAR(y[7], 1.3285614720045351, 1e-12);
  EXPECT_NEAR(y[20], 0.93845957887826981, 1e-12);
  EXPECT_NEAR(y[39], 0.43768195458371256, 1e-12);
  // odd order: sosfiltfilt(butter(3, 25, fs=200, output="sos"), x, padlen=12)
  auto y3 = zero_lag_lowpass(x, 200.0, 25.0, 3);
  EXPECT_NEAR(y3[0], -0.00093696421941660835, 1e-12);
  EXPECT_NEAR(y3[5], 1.72531063039095, 1e-12);
  EXPECT_NEAR(y3[39], 0.48812032298672731, 1e-12);
}

TEST(ZeroLagLowpass, DcPassesHighToneRemoved) {
  std::vector<double> dc(500, 3.25);
  for (double v : zero_lag_lowpass(dc, 200.0)) EXPECT_NEAR(v, 3.25, 1e-6);
  // steady-state amplitude; the first and last 50 samples carry the padding transient
  auto hi = zero_lag_lowpass(sinusoid(90, 200, 2000), 200.0);
  EXPECT_LT(peak_abs(hi, 50, hi.size() - 50), 1e-3);
  EXPECT_NEAR(peak_abs(hi, 0, hi.size()), 0.30786898863467954, 1e-9);
  auto cut = zero_lag_lowpass(sinusoid(10, 200, 4000), 200.0);
  EXPECT_NEAR(peak_abs(cut, 1000, 3000), 0.5, 0.05);
}

TEST(ZeroLagLowpass, ZeroPhaseAtPassband) {
  const auto x = sinusoid(1, 200, 4000);
  const auto y = zero_lag_lowpass(x, 200.0);
  int best_lag = 999;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double acc = 0;
    for (int i = 500; i < 3500; ++i) acc += x[i] * y[i + lag];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 0);
}

TEST(ZeroLagLowpass, Errors) {
  EXPECT_THROW(zero_lag_lowpass(std::vector<double>(9, 1.0), 200.0), ConfigError);
  EXPECT_NO_THROW(zero_lag_lowpass(std::vector<double>(10, 1.0), 200.0));
  EXPECT_THROW(zero_lag_lowpass(std::vector<double>(100, 1.0), 200.0, 100.0), ConfigError);
  EXPECT_THROW(zero_lag_lowpass(std::vector<double>(100, 1.0), 200.0, 150.0), ConfigError);
}

TEST(ResampleGrf, LengthConstantAndSinusoid) {
  Tensor<float> c(Shape{2, 2000}, 412.5f);
  auto r = resample_grf(c);
  EXPECT_EQ(r.shape(), (Shape{2, 200}));
  for (float v : r.data()) EXPECT_NEAR(v, 412.5f, 1e-3);
  EXPECT_EQ(resample_grf(Tensor<float>(Shape{2, 2009}, 1.0f)).dim(1), 200u);

  Tensor<float> s(Shape{2, 20000});
  for (std::size_t i = 0; i < 20000; ++i) {
    s[i] = static_cast<float>(std::sin(2 * std::numbers::pi * 5 * i / 2000.0));
    s[20000 + i] = -s[i];
  }
  auto d = resample_grf(s);
  // |H(5 Hz)|² twice at fc 10 Hz: 1/(1 + (1/2)^4)
  const double gain = 1.0 / (1.0 + std::pow(0.5, 4));
  for (std::size_t j = 100; j < 1900; ++j) {
    const double expect = gain * std::sin(2 * std::numbers::pi * 5 * j / 200.0);
    EXPECT_NEAR(d[j], expect, 2e-3);
    EXPECT_NEAR(d[2000 + j], -expect, 2e-3);
  }
  EXPECT_THROW(resample_grf(Tensor<float>(Shape{2, 9})), ShapeError);
}

TEST(Normalize, BodyweightAndMinMax) {
  Tensor<float> g(Shape{2, 4}, std::vector<float>{0, 700, 350, 700, 0, 0, 700, 175});
  auto frac = divide_by_bodyweight(g, 700.0);
  MinMaxAccumulator acc;
  acc.add(frac.data());
  const auto mm = acc.finish("GRF");
  auto n = frac.clone();
  apply_minmax(n, mm);
  EXPECT_EQ(n[1], 1.0f);
  EXPECT_EQ(n[0], 0.0f);
  auto back = n.clone();
  invert_minmax(back, mm);
  for (std::size_t i = 0; i < back.numel(); ++i) EXPECT_NEAR(back[i], frac[i], 1e-6);
  EXPECT_THROW(divide_by_bodyweight(g, 0.0), ConfigError);
  MinMaxAccumulator flat;
  flat.add(std::vector<float>{2, 2, 2});
  EXPECT_THROW(flat.finish("flat"), NumericError);
}

TEST(Normalize, SameShapeDifferentBodyweightsGiveSameCurve) {
  Tensor<float> heavy(Shape{2, 50}), light(Shape{2, 50});
  for (std::size_t i = 0; i < 100; ++i) {
    const double pct = 0.5 + 0.5 * std::sin(0.2 * static_cast<double>(i));
    heavy[i] = static_cast<float>(pct * 900.0);
    light[i] = static_cast<float>(pct * 550.0);
  }
  auto a = divide_by_bodyweight(heavy, 900.0), b = divide_by_bodyweight(light, 550.0);
  MinMaxAccumulator acc;
  acc.add(a.data());
  acc.add(b.data());
  const auto mm = acc.finish("GRF");
  apply_minmax(a, mm);
  apply_minmax(b, mm);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(Normalize, IdempotentOnNormalizedData) {
  std::mt19937_64 rng(22);
  auto x = oracle::random_tensor<float>({64}, rng, -3, 9);
  MinMaxAccumulator acc;
  acc.add(x.data());
  const auto mm = acc.finish("x");
  apply_minmax(x, mm);
  MinMaxAccumulator again;
  again.add(x.data());
  const auto mm2 = again.finish("x");
  EXPECT_NEAR(mm2.min, 0.0, 1e-7);
  EXPECT_NEAR(mm2.max, 1.0, 1e-7);
  auto twice = x.clone();
  apply_minmax(twice, mm2);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(twice[i], x[i], 1e-6);
}

TEST(Windows, CountsAndTiling) {
  EXPECT_EQ(make_windows(ramp_streams(1, Speed::SW, 600, 700, 0), 200).count(), 3u);
  EXPECT_EQ(make_windows(ramp_streams(1, Speed::SW, 55900, 700, 0), 100).count(), 559u);
  for (std::size_t t : {100u, 101u, 250u, 399u, 400u, 1013u})
    for (std::size_t w : {100u, 200u}) {
      if (t < w) {
        EXPECT_THROW(make_windows(ramp_streams(1, Speed::SW, t, 700, 0), w), ConfigError);
        continue;
      }
      auto s = ramp_streams(1, Speed::SW, t, 700, 0);
      auto win = make_windows(s, w);
      ASSERT_EQ(win.count(), t / w);
      for (std::size_t k = 0; k < win.count(); ++k)
        for (std::size_t c = 0; c < 2; ++c) {
          EXPECT_EQ(win.grf[(k * 2 + c) * w], s.grf[c * t + k * w]);
          EXPECT_EQ(win.grf[(k * 2 + c) * w + w - 1], s.grf[c * t + k * w + w - 1]);
          EXPECT_EQ(win.insole[((k * 2 + c) * w + 3) * kPixels + 17], s.insole[(c * t + k * w + 3) * kPixels + 17]);
        }
    }
}

namespace {

GaitDataset small_dataset(int n_subjects, std::size_t t, std::size_t w) {
  std::vector<TrialStreams> streams;
  for (int s = 1; s <= n_subjects; ++s)
    for (auto sp : {Speed::SW, Speed::BW})
      streams.push_back(ramp_streams(s, sp, t + 37 * static_cast<std::size_t>(s), 600 + 10 * s, 0.1 * s));
  const auto norm = fit_normalization(streams);
  return build_dataset(std::move(streams), w, norm);
}

}  // namespace

TEST(Loso, PartitionAndCounts) {
  auto ds = small_dataset(8, 1000, 100);
  EXPECT_EQ(ds.subjects().size(), 8u);
  for (int held = 1; held <= 8; ++held) {
    auto split = loso_split(ds, held);
    EXPECT_EQ(split.train.subjects().size(), 7u);
    EXPECT_EQ(split.test.subjects(), std::vector<int>{held});
    EXPECT_EQ(split.train.size() + split.test.size(), ds.size());
    for (auto sp : {Speed::SW, Speed::BW})
      for (int s = 1; s <= 8; ++s) {
        const auto expected = ds.count(s, sp);
        EXPECT_EQ(s == held ? split.test.count(s, sp) : split.train.count(s, sp), expected);
        EXPECT_EQ(s == held ? split.train.count(s, sp) : split.test.count(s, sp), 0u);
      }
  }
  EXPECT_THROW(loso_split(ds, 42), ConfigError);
  auto one = small_dataset(1, 1000, 100);
  EXPECT_THROW(loso_split(one, 1), ConfigError);
}

TEST(Loso, RefitUsesTrainingPortionOnly) {
  auto ds = small_dataset(3, 800, 100);
  auto split = loso_split(ds, 3, true);
  float lo = 1e9f, hi = -1e9f;
  for (const auto& t : split.train.trials)
    for (float v : t.grf.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  EXPECT_NEAR(lo, 0.0f, 1e-5);
  EXPECT_NEAR(hi, 1.0f, 1e-5);
  // the raw value of any test sample survives both normalizations
  const auto& before = loso_split(ds, 3).test.trials[0].grf;
  const auto& after = split.test.trials[0].grf;
  for (std::size_t i = 0; i < 50; ++i)
    EXPECT_NEAR(ds.normalization.grf.invert(before[i]), split.test.normalization.grf.invert(after[i]), 1e-5);
}

TEST(DatasetIo, RoundTripIsBitIdentical) {
  auto ds = small_dataset(2, 500, 100);
  ds.generator = {{"seed", 5}};
  const auto dir = temp_dir("rt");
  save_dataset(ds, dir);
  auto back = load_dataset(dir);
  EXPECT_EQ(back.window, 100u);
  ASSERT_EQ(back.trials.size(), ds.trials.size());
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    EXPECT_EQ(back.trials[i].subject, ds.trials[i].subject);
    EXPECT_EQ(back.trials[i].speed, ds.trials[i].speed);
    ASSERT_EQ(back.trials[i].insole.shape(), ds.trials[i].insole.shape());
    EXPECT_EQ(std::memcmp(back.trials[i].insole.ptr(), ds.trials[i].insole.ptr(), ds.trials[i].insole.numel() * 4), 0);
    EXPECT_EQ(std::memcmp(back.trials[i].grf.ptr(), ds.trials[i].grf.ptr(), ds.trials[i].grf.numel() * 4), 0);
  }
  EXPECT_EQ(back.normalization.grf.max, ds.normalization.grf.max);
  EXPECT_EQ(back.bodyweights, ds.bodyweights);
  EXPECT_EQ(back.generator["seed"], 5);
}

TEST(DatasetIo, TruncatedPayloadAndBadWindowRejected) {
  auto ds = small_dataset(2, 500, 100);
  const auto dir = temp_dir("trunc");
  save_dataset(ds, dir);
  const auto payload = dir / (trial_stem(1, Speed::SW) + ".grf.f32");
  fs::resize_file(payload, fs::file_size(payload) - 4);
  EXPECT_THROW(load_dataset(dir), IoError);

  const auto dir2 = temp_dir("window");
  save_dataset(ds, dir2);
  nlohmann::json m;
  {
    std::ifstream is(dir2 / "manifest.json");
    is >> m;
  }
  m["window"] = 200;
  {
    std::ofstream os(dir2 / "manifest.json");
    os << m.dump();
  }
  EXPECT_THROW(load_dataset(dir2), IoError);
  {
    std::ofstream os(dir2 / "manifest.json");
    os << "{ not json";
  }
  EXPECT_THROW(load_dataset(dir2), IoError);
}

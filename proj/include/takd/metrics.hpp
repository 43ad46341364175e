// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "takd/error.hpp"
#include "takd/pipeline.hpp"
#include "takd/tensor.hpp"

namespace takd::metrics {

struct Regression {
  double rmse = 0;
  double mae = 0;
  std::optional<double> r;  // missing when either side is constant
};

inline Regression regression_metrics(std::span<const float> pred, std::span<const float> truth) {
  if (pred.size() != truth.size()) throw ShapeError("prediction and truth differ in size");
  if (pred.empty()) throw ConfigError("regression metrics on empty input");
  const double n = static_cast<double>(pred.size());
  double se = 0, ae = 0, mp = 0, mt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - truth[i];
    se += e * e;
    ae += std::abs(e);
    mp += pred[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  double cov = 0, vp = 0, vt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp, dt = truth[i] - mt;
    cov += dp * dt;
    vp += dp * dp;
    vt += dt * dt;
  }
  Regression out{std::sqrt(se / n), ae / n, std::nullopt};
  if (vp > 0 && vt > 0) out.r = std::clamp(cov / std::sqrt(vp * vt), -1.0, 1.0);
  return out;
}

inline Regression regression_metrics(const Tensor<float>& pred, const Tensor<float>& truth) {
  if (pred.shape() != truth.shape())
    throw ShapeError("prediction " + to_string(pred.shape()) + " vs truth " + to_string(truth.shape()));
  return regression_metrics(std::span<const float>(pred.data()), std::span<const float>(truth.data()));
}

/// Equal-width bins over the predicted value; values outside [0, 1] land in the edge bins.
inline double ece_regression(std::span<const float> pred, std::span<const float> truth, std::size_t bins = 15) {
  if (pred.size() != truth.size()) throw ShapeError("prediction and truth differ in size");
  if (pred.empty()) throw ConfigError("ECE on empty input");
  if (bins == 0) throw ConfigError("ECE needs at least one bin");
  std::vector<double> sp(bins, 0), st(bins, 0);
  std::vector<std::size_t> cnt(bins, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const auto b = p <= 0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(p * static_cast<double>(bins)));
    sp[b] += p;
    st[b] += truth[i];
    ++cnt[b];
  }
  double ece = 0;
  for (std::size_t b = 0; b < bins; ++b)
    if (cnt[b] > 0) ece += std::abs(sp[b] - st[b]) / static_cast<double>(pred.size());
  return ece;
}

/// Per-foot ECE on (N, 2, T) tensors.
inline std::array<double, 2> ece_per_foot(const Tensor<float>& pred, const Tensor<float>& truth,
                                          std::size_t bins = 15) {
  if (pred.shape() != truth.shape() || pred.rank() != 3 || pred.dim(1) != 2)
    throw ShapeError("ECE expects matching (N, 2, T) tensors, got " + to_string(pred.shape()) + " and " +
                     to_string(truth.shape()));
  const std::size_t n = pred.dim(0), t = pred.dim(2);
  std::array<double, 2> out{};
  std::vector<float> p(n * t), g(n * t);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(pred.ptr() + (i * 2 + c) * t, t, p.data() + i * t);
      std::copy_n(truth.ptr() + (i * 2 + c) * t, t, g.data() + i * t);
    }
    out[c] = ece_regression(p, g, bins);
  }
  return out;
}

struct Welch {
  double t = 0;
  double p = 1;
  double df = 0;
};

inline Welch welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw NumericError("Welch t-test needs at least two values per sample");
  auto moments = [](std::span<const double> x) {
    double m = 0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return std::pair{m, s / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double qa = va / static_cast<double>(a.size()), qb = vb / static_cast<double>(b.size());
  if (qa + qb <= 0) throw NumericError("Welch t-test: both samples have zero variance");
  Welch w;
  w.t = (ma - mb) / std::sqrt(qa + qb);
  w.df = (qa + qb) * (qa + qb) /
         (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(w.df);
  w.p = std::min(1.0, 2 * boost::math::cdf(boost::math::complement(dist, std::abs(w.t))));
  return w;
}

/// Inverts min-max normalization and expresses GRF in percent of bodyweight.
inline Tensor<float> to_bodyweight_percent(const Tensor<float>& normalized, const gait::MinMax& grf) {
  auto out = normalized.clone();
  for (auto& v : out.data()) v = static_cast<float>(100.0 * grf.invert(v));
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct Row {
  std::string method, teacher, preset;
  int strategy = 1;
  int subject = 0;
  std::string speed;
  std::uint64_t seed = 0;
  double rmse = 0, mae = 0;
  std::optional<double> r;
  double ece_l = 0, ece_r = 0, ece_avg = 0;
};

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> ordered{"method", "teacher", "preset", "strategy", "subject",
                                                "speed",  "seed",    "rmse",   "mae",      "r",
                                                "ece_l",  "ece_r",   "ece_avg"};
  return ordered;
}

struct RunLabels {
  std::string method, teacher, preset;
  int strategy = 1;
  std::uint64_t seed = 0;
};

/// One row per (subject, speed) group of `preds` (N, 2, T).
inline std::vector<Row> evaluate(const Tensor<float>& pred, const Tensor<float>& truth,
                                 const std::vector<int>& subject, const std::vector<gait::Speed>& speed,
                                 const RunLabels& labels, std::size_t bins = 15) {
  if (pred.shape() != truth.shape() || pred.rank() != 3)
    throw ShapeError("evaluate expects matching (N, 2, T) tensors");
  const std::size_t n = pred.dim(0), per = pred.numel() / std::max<std::size_t>(n, 1);
  if (subject.size() != n || speed.size() != n) throw ShapeError("labels do not match prediction count");
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[{subject[i], static_cast<int>(speed[i])}].push_back(i);
  std::vector<Row> rows;
  for (const auto& [key, idx] : groups) {
    Tensor<float> p(Shape{idx.size(), pred.dim(1), pred.dim(2)}), g(p.shape());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy_n(pred.ptr() + idx[k] * per, per, p.ptr() + k * per);
      std::copy_n(truth.ptr() + idx[k] * per, per, g.ptr() + k * per);
    }
    const auto reg = regression_metrics(p, g);
    const auto ece = ece_per_foot(p, g, bins);
    Row r{labels.method, labels.teacher, labels.preset, labels.strategy, key.first,
          std::string(gait::speed_name(static_cast<gait::Speed>(key.second))), labels.seed, reg.rmse, reg.mae,
          reg.r, ece[0], ece[1], 0.5 * (ece[0] + ece[1])};
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void check_label(const std::string& s) {
  if (s.find_first_of(",\n\"") != std::string::npos) throw ConfigError("label not CSV-safe: " + s);
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad " + what + " value '" + s + "'");
  }
}

}  // namespace detail

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<Row>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    for (const auto* s : {&r.method, &r.teacher, &r.preset, &r.speed}) detail::check_label(*s);
    os << r.method << ',' << r.teacher << ',' << r.preset << ',' << r.strategy << ',' << r.subject << ','
       << r.speed << ',' << r.seed << ',' << detail::num(r.rmse) << ',' << detail::num(r.mae) << ','
       << (r.r ? detail::num(*r.r) : "") << ',' << detail::num(r.ece_l) << ',' << detail::num(r.ece_r) << ','
       << detail::num(r.ece_avg) << '\n';
  }
  if (!os) throw IoError("short write to " + path.string());
}

inline std::vector<Row> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + " is empty");
  const auto& cols = csv_columns();
  if (detail::split_csv(line) != cols) throw IoError(path.string() + ": unexpected header '" + line + "'");
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto c = detail::split_csv(line);
    if (c.size() != cols.size()) throw IoError(path.string() + ": wrong field count in '" + line + "'");
    Row r;
    r.method = c[0];
    r.teacher = c[1];
    r.preset = c[2];
    r.strategy = static_cast<int>(detail::parse_double(c[3], "strategy"));
    r.subject = static_cast<int>(detail::parse_double(c[4], "subject"));
    r.speed = c[5];
    r.seed = std::stoull(c[6]);
    r.rmse = detail::parse_double(c[7], "rmse");
    r.mae = detail::parse_double(c[8], "mae");
    if (!c[9].empty()) r.r = detail::parse_double(c[9], "r");
    r.ece_l = detail::parse_double(c[10], "ece_l");
    r.ece_r = detail::parse_double(c[11], "ece_r");
    r.ece_avg = detail::parse_double(c[12], "ece_avg");
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Curve file for one window: pred/truth (2, T), time in seconds at the insole rate.
inline void write_curve_csv(const std::filesystem::path& path, const float* pred, const float* truth,
                            std::size_t t) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "time,gt_left,gt_right,pred_left,pred_right\n";
  for (std::size_t i = 0; i < t; ++i)
    os << detail::num(static_cast<double>(i) / gait::kInsoleRate) << ',' << detail::num(truth[i]) << ','
       << detail::num(truth[t + i]) << ',' << detail::num(pred[i]) << ',' << detail::num(pred[t + i]) << '\n';
  if (!os) throw IoError("short write to " + path.string());
}

struct Stat {
  double mean = 0, std = 0;
  std::size_t n = 0;
};

inline Stat mean_std(std::span<const double> x) {
  Stat s{0, 0, x.size()};
  if (x.empty()) return s;
  for (double v : x) s.mean += v;
  s.mean /= static_cast<double>(x.size());
  if (x.size() > 1) {
    for (double v : x) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(x.size() - 1));
  }
  return s;
}

/// Mean and sample std over seeds for every (method, teacher, preset, strategy, subject, speed).
struct Aggregate {
  std::string method, teacher, preset;
  int strategy = 1;
  int subject = 0;
  std::string speed;
  Stat rmse, mae, r, ece_avg;
};

inline std::vector<Aggregate> aggregate(const std::vector<Row>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, int, int, std::string>;
  std::map<Key, std::array<std::vector<double>, 4>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{r.method, r.teacher, r.preset, r.strategy, r.subject, r.speed}];
    a[0].push_back(r.rmse);
    a[1].push_back(r.mae);
    if (r.r) a[2].push_back(*r.r);
    a[3].push_back(r.ece_avg);
  }
  std::vector<Aggregate> out;
  for (const auto& [k, a] : acc)
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k), std::get<5>(k),
                   mean_std(a[0]), mean_std(a[1]), mean_std(a[2]), mean_std(a[3])});
  return out;
}

/// Per-fold RMSE samples for Welch tests: one value per (subject, seed), averaged over speeds.
inline std::map<std::string, std::vector<double>> fold_rmse(const std::vector<Row>& rows) {
  std::map<std::string, std::map<std::pair<int, std::uint64_t>, std::vector<double>>> by;
  for (const auto& r : rows) by[r.method + "/" + r.teacher + "/" + r.preset][{r.subject, r.seed}].push_back(r.rmse);
  std::map<std::string, std::vector<double>> out;
  for (const auto& [m, folds] : by)
    for (const auto& [k, v] : folds) out[m].push_back(mean_std(v).mean);
  return out;
}

}  // namespace takd::metrics

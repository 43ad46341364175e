// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: ground-truth MSE, similarity / temporal / channel map
// losses, the composite distillation objective, KD/AT baselines and the
// autoencoder-family losses used to train teachers.
#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "takd/models.hpp"
#include "takd/ops.hpp"

namespace takd {

enum class MapKind { bs, tp, ch };
enum class Group { mid, intermediate };

inline std::string map_kind_name(MapKind k) { return k == MapKind::bs ? "bs" : k == MapKind::tp ? "tp" : "ch"; }

struct TapEntry {
  std::string teacher_tap;
  std::string student_tap;
  std::vector<MapKind> kinds;
  Group group = Group::intermediate;

  bool has(MapKind k) const { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); }
};

struct TapPlan {
  std::string name;
  std::vector<TapEntry> entries;

  void validate() const {
    for (const auto& e : entries) {
      if (e.kinds.empty()) throw ConfigError("tap plan entry " + e.student_tap + " has no map kinds");
      const bool mid = e.student_tap == "Mid";
      if (mid != (e.group == Group::mid))
        throw ConfigError("tap plan entry " + e.student_tap + ": only Mid belongs to the mid group");
    }
  }
  std::vector<std::string> taps() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.student_tap);
    return out;
  }
  nlohmann::json to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& e : entries) {
      std::vector<std::string> k;
      for (auto m : e.kinds) k.push_back(map_kind_name(m));
      arr.push_back({{"teacher", e.teacher_tap},
                     {"student", e.student_tap},
                     {"maps", k},
                     {"group", e.group == Group::mid ? "mid" : "intermediate"}});
    }
    return {{"name", name}, {"entries", arr}};
  }
};

inline std::string canonical_name(std::string s) {
  for (auto& c : s) c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Presets: takd, takd-dagger, takd-ddagger, sp-mid, bs-ch.
inline TapPlan tap_plan_preset(const std::string& name) {
  using K = MapKind;
  auto entry = [](const std::string& tap, std::vector<K> kinds) {
    return TapEntry{tap, tap, std::move(kinds), tap == "Mid" ? Group::mid : Group::intermediate};
  };
  const auto n = canonical_name(name);
  TapPlan p;
  p.name = n;
  if (n == "takd")
    p.entries = {entry("Mid", {K::bs, K::tp})};
  else if (n == "takd-dagger")
    p.entries = {entry("E2", {K::bs, K::tp}), entry("Mid", {K::bs, K::tp}), entry("D1", {K::bs, K::tp})};
  else if (n == "takd-ddagger")
    p.entries = {entry("E1", {K::bs}), entry("E2", {K::bs, K::tp}), entry("Mid", {K::bs, K::tp}),
                 entry("D1", {K::bs, K::tp}), entry("D2", {K::bs})};
  else if (n == "sp-mid")
    p.entries = {entry("Mid", {K::bs})};
  else if (n == "bs-ch")
    p.entries = {entry("E1", {K::bs}), entry("E2", {K::bs, K::ch}), entry("Mid", {K::bs, K::tp}),
                 entry("D1", {K::bs, K::ch}), entry("D2", {K::bs})};
  else
    throw ConfigError("unknown tap plan preset '" + name + "'");
  p.validate();
  return p;
}

struct LossWeights {
  double lambda1 = 0.01;  // mid group
  double lambda2 = 0.1;   // intermediate group
  double kappa = 0.1;     // temporal / channel terms
  double contrastive = 0.1;
  double alpha = 1.0;     // KD / AT baseline weight
  double tau = 4.0;       // kept for config compatibility; regression KD has no temperature

  void validate() const {
    for (double v : {lambda1, lambda2, kappa, contrastive, alpha, tau})
      if (!(v >= 0)) throw ConfigError("loss weights must be non-negative");
  }
};

// ---------------------------------------------------------------------------
// Maps

template <typename T>
Tensor<T> loss_gt(const Tensor<T>& decoded, const Tensor<T>& target) {
  if (decoded.shape() != target.shape())
    throw ShapeError("loss_gt: prediction " + to_string(decoded.shape()) + " vs target " + to_string(target.shape()));
  return mse(decoded, target);
}

namespace detail {

/// Rows indexed by `axis`, everything else flattened into columns.
template <typename T>
Tensor<T> rows_along(const Tensor<T>& f, std::size_t axis) {
  std::vector<std::size_t> order{axis};
  for (std::size_t i = 0; i < f.rank(); ++i)
    if (i != axis) order.push_back(i);
  auto p = axis == 0 ? f : permute(f, order);
  return flatten(p, 1);
}

}  // namespace detail

/// b×b map of per-sample flattened features.
template <typename T>
Tensor<T> similarity_map(const Tensor<T>& f) {
  if (f.rank() < 2 || f.dim(0) < 2) throw ShapeError("similarity_map needs a batch of at least 2");
  return gram(flatten(f, 1));
}

/// t×t map; features laid out (b, c, t, ...).
template <typename T>
Tensor<T> temporal_map(const Tensor<T>& f) {
  if (f.rank() < 3 || f.dim(2) < 2) throw ShapeError("temporal_map needs at least 2 time steps");
  return gram(detail::rows_along(f, 2));
}

/// c×c map.
template <typename T>
Tensor<T> channel_map(const Tensor<T>& f) {
  if (f.rank() < 2 || f.dim(1) < 2) throw ShapeError("channel_map needs at least 2 channels");
  return gram(detail::rows_along(f, 1));
}

template <typename T>
Tensor<T> make_map(MapKind k, const Tensor<T>& f) {
  switch (k) {
    case MapKind::bs: return similarity_map(f);
    case MapKind::tp: return temporal_map(f);
    case MapKind::ch: return channel_map(f);
  }
  return {};
}

namespace detail {

template <typename T>
const Tensor<T>& tap_value(const TapMap<T>& taps, const std::string& name, const char* who) {
  auto it = taps.find(name);
  if (it == taps.end()) throw ConfigError(std::string(who) + " tap '" + name + "' was not captured");
  return it->second.value;
}

template <typename T>
T frobenius_value(const Tensor<T>& m) {
  T acc{0};
  for (T v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace detail

/// Average over plan entries carrying `kind` of the normalized-map distance.
/// bs entries are divided by b², tp/ch entries by the teacher map side squared.
/// Teacher maps are constants; an all-zero map skips its entry with a warning.
template <typename T>
Tensor<T> map_loss(MapKind kind, const TapMap<T>& teacher, const TapMap<T>& student,
                   const std::vector<TapEntry>& entries) {
  Tensor<T> acc = Tensor<T>::scalar(T{0});
  std::size_t used = 0;
  for (const auto& e : entries) {
    if (!e.has(kind)) continue;
    const auto ft = detail::tap_value(teacher, e.teacher_tap, "teacher").detach();
    const auto& fs = detail::tap_value(student, e.student_tap, "student");
    if (ft.dim(0) != fs.dim(0)) throw ShapeError("teacher and student taps must come from the same mini-batch");
    const auto mt = make_map(kind, ft);
    auto ms = make_map(kind, fs);
    const std::size_t side = mt.dim(0);
    if (ms.dim(0) != side) ms = bilinear_resize_map(ms, side);
    const T nt = detail::frobenius_value(mt);
    if (nt == T{0} || detail::frobenius_value(ms) == T{0}) {
      log::warn(map_kind_name(kind) + " map of tap " + e.student_tap + " is all zero; entry skipped");
      continue;
    }
    const auto gt = div(mt, frobenius_norm(mt));
    const auto gs = div(ms, frobenius_norm(ms));
    const auto d = sum(square(sub(gt, gs)));
    acc = add(acc, scale(d, T{1} / static_cast<T>(side * side)));
    ++used;
  }
  if (used == 0) return acc;
  return scale(acc, T{1} / static_cast<T>(used));
}

template <typename T>
Tensor<T> loss_bs(const TapMap<T>& teacher, const TapMap<T>& student, const std::vector<TapEntry>& entries) {
  return map_loss(MapKind::bs, teacher, student, entries);
}

template <typename T>
Tensor<T> loss_tp(const TapMap<T>& teacher, const TapMap<T>& student, const std::vector<TapEntry>& entries) {
  return map_loss(MapKind::tp, teacher, student, entries);
}

template <typename T>
Tensor<T> loss_ch(const TapMap<T>& teacher, const TapMap<T>& student, const std::vector<TapEntry>& entries) {
  return map_loss(MapKind::ch, teacher, student, entries);
}

// ---------------------------------------------------------------------------
// Composite objective

template <typename T>
struct LossTerms {
  Tensor<T> total;
  double gt = 0, bs_mid = 0, tp_mid = 0, ch_mid = 0, bs_int = 0, tp_int = 0, ch_int = 0;

  static std::vector<std::string> columns() {
    return {"L_gt", "L_bs_mid", "L_tp_mid", "L_ch_mid", "L_bs_int", "L_tp_int", "L_ch_int", "total"};
  }
  std::vector<double> values() const { return {gt, bs_mid, tp_mid, ch_mid, bs_int, tp_int, ch_int, total.item()}; }
};

/// L_gt + λ₁(bs_mid + κ(tp_mid + ch_mid)) + λ₂(bs_int + κ(tp_int + ch_int)).
/// Groups (and κ terms) with zero weight are not evaluated at all.
template <typename T>
LossTerms<T> takd_objective(const Tensor<T>& decoded, const Tensor<T>& target, const TapMap<T>& teacher,
                            const TapMap<T>& student, const TapPlan& plan, const LossWeights& w) {
  w.validate();
  LossTerms<T> r;
  r.total = loss_gt(decoded, target);
  r.gt = static_cast<double>(r.total.item());
  for (auto group : {Group::mid, Group::intermediate}) {
    const double lambda = group == Group::mid ? w.lambda1 : w.lambda2;
    if (lambda == 0) continue;
    std::vector<TapEntry> entries;
    for (const auto& e : plan.entries)
      if (e.group == group) entries.push_back(e);
    if (entries.empty()) continue;
    double* slots[3] = {group == Group::mid ? &r.bs_mid : &r.bs_int, group == Group::mid ? &r.tp_mid : &r.tp_int,
                        group == Group::mid ? &r.ch_mid : &r.ch_int};
    auto g = loss_bs(teacher, student, entries);
    *slots[0] = static_cast<double>(g.item());
    if (w.kappa != 0) {
      bool any = false;
      Tensor<T> temporal = Tensor<T>::scalar(T{0});
      for (auto [k, slot] : {std::pair{MapKind::tp, slots[1]}, std::pair{MapKind::ch, slots[2]}}) {
        if (std::none_of(entries.begin(), entries.end(), [&](const TapEntry& e) { return e.has(k); })) continue;
        auto term = map_loss(k, teacher, student, entries);
        *slot = static_cast<double>(term.item());
        temporal = any ? add(temporal, term) : term;
        any = true;
      }
      if (any) g = axpby(T{1}, g, static_cast<T>(w.kappa), temporal);
    }
    r.total = axpby(T{1}, r.total, static_cast<T>(lambda), g);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Baselines

namespace detail {

/// Linear resize of every non-batch axis of `x` to `like`'s extents.
template <typename T>
Tensor<T> resize_like(const Tensor<T>& x, const Shape& like) {
  if (x.rank() != like.size() || x.dim(0) != like[0])
    throw ShapeError("cannot resize " + to_string(x.shape()) + " onto " + to_string(like));
  Tensor<T> y = x;
  for (std::size_t a = 1; a < like.size(); ++a)
    if (y.dim(a) != like[a]) y = resize_axis(y, a, like[a]);
  return y;
}

}  // namespace detail

/// MSE between teacher and student Mid, the student resized to the teacher's shape.
template <typename T>
Tensor<T> kd_mid_loss(const TapMap<T>& teacher, const TapMap<T>& student) {
  const auto t = detail::tap_value(teacher, "Mid", "teacher").detach();
  const auto& s = detail::tap_value(student, "Mid", "student");
  return mse(detail::resize_like(s, t.shape()), t);
}

/// Channel-collapsed Σ_c f² with shape (b, spatial...).
template <typename T>
Tensor<T> attention_map(const Tensor<T>& f) {
  if (f.rank() < 3) throw ShapeError("attention_map expects (b, c, ...) features");
  return sum_axis(square(f), 1);
}

/// MSE between per-sample L2-normalized attention maps.
template <typename T>
Tensor<T> at_loss_from_maps(const Tensor<T>& teacher_map, const Tensor<T>& student_map) {
  const auto s = detail::resize_like(student_map, teacher_map.shape());
  return mse(normalize_rows(flatten(s, 1)), normalize_rows(flatten(teacher_map.detach(), 1)));
}

template <typename T>
Tensor<T> at_loss(const TapMap<T>& teacher, const TapMap<T>& student) {
  return at_loss_from_maps(attention_map(detail::tap_value(teacher, "Mid", "teacher").detach()),
                           attention_map(detail::tap_value(student, "Mid", "student")));
}

// ---------------------------------------------------------------------------
// Autoencoder family

/// KL(N(μ, σ²) ‖ N(0, 1)) summed over latent dims, averaged over the batch.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
  if (mu.shape() != logvar.shape()) throw ShapeError("kl_divergence: μ and log σ² shapes differ");
  auto per = add_scalar(sub(add(square(mu), exp(logvar)), logvar), T{-1});
  return scale(sum(per), T{0.5} / static_cast<T>(mu.dim(0)));
}

template <typename T>
Tensor<T> vae_loss(const Tensor<T>& recon, const Tensor<T>& target, const Tensor<T>& mu, const Tensor<T>& logvar) {
  return add(loss_gt(recon, target), kl_divergence(mu, logvar));
}

/// Discriminator loss on logits. Standard form:
///   −mean log χ(z_prior) − mean log(1 − χ(h_z)).
/// `literal` drops the prior term and keeps only the encoding term.
template <typename T>
Tensor<T> wae_disc_loss(const Tensor<T>& logit_encoded, const Tensor<T>& logit_prior, bool literal = false) {
  auto fake = mean(softplus(logit_encoded));  // −log(1 − σ(l))
  if (literal) return fake;
  return add(fake, mean(softplus(scale(logit_prior, T{-1}))));  // −log σ(l)
}

/// Reconstruction MSE plus adv·(−mean log χ(h_z)).
template <typename T>
Tensor<T> wae_gen_loss(const Tensor<T>& recon, const Tensor<T>& target, const Tensor<T>& logit_encoded, T adv) {
  return axpby(T{1}, loss_gt(recon, target), adv, mean(softplus(scale(logit_encoded, T{-1}))));
}

/// mean over the batch of 1 − cos(flatten(a), flatten(b)); zero vectors count as cos 0.
template <typename T>
Tensor<T> contrastive_cosine(const Tensor<T>& a, const Tensor<T>& b) {
  auto fa = flatten(a, 1), fb = flatten(b, 1);
  if (fa.shape() != fb.shape())
    throw ShapeError("contrastive_cosine: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const std::size_t n = fa.dim(0), m = fa.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    bool za = true, zb = true;
    for (std::size_t c = 0; c < m; ++c) {
      za = za && fa[r * m + c] == T{0};
      zb = zb && fb[r * m + c] == T{0};
    }
    if (za || zb) log::warn("contrastive_cosine: zero-norm latent, cosine taken as 0");
  }
  auto cos = sum_axis(mul(normalize_rows(fa), normalize_rows(fb)), 1);
  return add_scalar(scale(mean(cos), T{-1}), T{1});
}

}  // namespace takd

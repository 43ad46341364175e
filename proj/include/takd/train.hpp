// SPDX-License-Identifier: Apache-2.0
//
// Teacher training (AE / WAE / VAE, strategies 1-3), student distillation and
// the shared mini-batch loop with best-by-validation selection.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "takd/adam.hpp"
#include "takd/checkpoint.hpp"
#include "takd/losses.hpp"
#include "takd/models.hpp"
#include "takd/pipeline.hpp"
#include "takd/seed.hpp"

namespace takd::train {

using gait::GaitDataset;

enum class TeacherObjective { AE, WAE, VAE };

inline std::string objective_name(TeacherObjective o) {
  return o == TeacherObjective::AE ? "ae" : o == TeacherObjective::WAE ? "wae" : "vae";
}

inline TeacherObjective parse_objective(const std::string& s) {
  const auto n = canonical_name(s);
  if (n == "ae") return TeacherObjective::AE;
  if (n == "wae") return TeacherObjective::WAE;
  if (n == "vae") return TeacherObjective::VAE;
  throw ConfigError("unknown teacher objective '" + s + "' (expected ae, wae or vae)");
}

inline const std::vector<std::string>& distill_methods() {
  static const std::vector<std::string> m{"scratch", "takd",  "takd-dagger", "takd-ddagger",
                                          "sp-mid",  "bs-ch", "kd",          "at"};
  return m;
}

inline double default_lr(EncoderKind k) { return k == EncoderKind::R2P1D ? 0.001 : 0.01; }
// Batch 16 on synthetic windows diverges in the first epoch at the full-scale rates.
inline double desk_lr(EncoderKind k) { return 0.1 * default_lr(k); }

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 128;
  double lr = 0.01;
  std::uint64_t seed = 1;
  LossWeights weights;
  std::size_t window = 100;
  int strategy = 1;
  TeacherObjective objective = TeacherObjective::AE;
  double adv_weight = 1.0;  // WAE generator adversarial weight
  double disc_lr = 1e-3;
  bool wae_literal = false;
  double kl_weight = 1.0;
  std::string method = "takd";
  bool select_best = true;

  static TrainConfig desk(EncoderKind k = EncoderKind::C3D) {
    TrainConfig c;
    c.epochs = 60;
    c.batch = 16;
    c.lr = desk_lr(k);
    return c;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch < 2) throw ConfigError("batch size must be at least 2 (similarity maps need b >= 2)");
    if (!(lr > 0) || !(disc_lr > 0)) throw ConfigError("learning rates must be positive");
    if (strategy < 1 || strategy > 3) throw ConfigError("strategy must be 1, 2 or 3");
    if (window != 100 && window != 200) throw ConfigError("window must be 100 or 200");
    if (!(adv_weight >= 0) || !(kl_weight >= 0)) throw ConfigError("adversarial / KL weights must be non-negative");
    if (std::find(distill_methods().begin(), distill_methods().end(), canonical_name(method)) ==
        distill_methods().end())
      throw ConfigError("unknown distillation method '" + method + "'");
    weights.validate();
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"batch", batch},
            {"lr", lr},
            {"seed", seed},
            {"window", window},
            {"strategy", strategy},
            {"objective", objective_name(objective)},
            {"adv_weight", adv_weight},
            {"disc_lr", disc_lr},
            {"wae_literal", wae_literal},
            {"kl_weight", kl_weight},
            {"method", canonical_name(method)},
            {"select_best", select_best},
            {"lambda1", weights.lambda1},
            {"lambda2", weights.lambda2},
            {"kappa", weights.kappa},
            {"contrastive", weights.contrastive},
            {"alpha", weights.alpha},
            {"tau", weights.tau}};
  }
};

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RunRecord {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // per epoch, mean over steps
  std::vector<double> val_loss;    // per epoch, empty without a validation set
  double initial_loss = 0;         // mean training objective before the first step
  double final_loss = 0;           // same evaluation after training (selected weights)
  std::size_t best_epoch = 0;      // 1-based
  double wall_seconds = 0;
  std::vector<std::string> term_names;
  std::vector<std::vector<double>> step_terms;
  std::vector<std::string> notes;
  nlohmann::json stages = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"config", config},         {"seed", seed},       {"train_loss", train_loss},
            {"val_loss", val_loss},     {"initial_loss", initial_loss}, {"final_loss", final_loss},
            {"best_epoch", best_epoch}, {"wall_seconds", wall_seconds}, {"notes", notes},
            {"stages", stages}};
  }

  /// run.json, losses.csv (per epoch) and loss_terms.csv (per step).
  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "run.json") << to_json().dump(2) << '\n';
    std::ofstream l(dir / "losses.csv");
    l << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e)
      l << e + 1 << ',' << fmt(train_loss[e]) << ',' << (e < val_loss.size() ? fmt(val_loss[e]) : "") << '\n';
    std::ofstream t(dir / "loss_terms.csv");
    t << "step";
    for (const auto& n : term_names) t << ',' << n;
    t << '\n';
    for (std::size_t s = 0; s < step_terms.size(); ++s) {
      t << s + 1;
      for (double v : step_terms[s]) t << ',' << fmt(v);
      t << '\n';
    }
    if (!l || !t) throw IoError("failed writing run record to " + dir.string());
  }
};

// ---------------------------------------------------------------------------
// Batching

struct WindowRef {
  std::size_t trial = 0;
  std::size_t index = 0;
};

struct Batch {
  Tensor<float> insole;  // (b, 2, W, 16, 8)
  Tensor<float> grf;     // (b, 2, W)
  std::vector<WindowRef> refs;
};

inline std::vector<WindowRef> window_refs(const GaitDataset& ds) {
  std::vector<WindowRef> out;
  for (std::size_t t = 0; t < ds.trials.size(); ++t)
    for (std::size_t i = 0; i < ds.trials[t].count(); ++i) out.push_back({t, i});
  return out;
}

inline Batch gather(const GaitDataset& ds, const std::vector<WindowRef>& refs) {
  if (refs.empty()) throw ShapeError("empty batch");
  const std::size_t w = ds.window;
  const std::size_t video = 2 * w * gait::kPixels, force = 2 * w;
  Batch b{Tensor<float>(Shape{refs.size(), 2, w, gait::kRows, gait::kCols}), Tensor<float>(Shape{refs.size(), 2, w}),
          refs};
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto& tr = ds.trials[refs[k].trial];
    std::copy_n(tr.insole.ptr() + refs[k].index * video, video, b.insole.ptr() + k * video);
    std::copy_n(tr.grf.ptr() + refs[k].index * force, force, b.grf.ptr() + k * force);
  }
  return b;
}

/// Shuffled mini-batches; a trailing batch of one window joins the previous batch.
inline std::vector<std::vector<WindowRef>> epoch_batches(std::vector<WindowRef> refs, std::size_t batch,
                                                         std::mt19937_64& rng) {
  std::shuffle(refs.begin(), refs.end(), rng);
  std::vector<std::vector<WindowRef>> out;
  for (std::size_t i = 0; i < refs.size(); i += batch)
    out.emplace_back(refs.begin() + static_cast<long>(i),
                     refs.begin() + static_cast<long>(std::min(refs.size(), i + batch)));
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

/// Fixed-order batches for evaluation.
inline std::vector<std::vector<WindowRef>> ordered_batches(const GaitDataset& ds, std::size_t batch) {
  const auto refs = window_refs(ds);
  std::vector<std::vector<WindowRef>> out;
  for (std::size_t i = 0; i < refs.size(); i += batch)
    out.emplace_back(refs.begin() + static_cast<long>(i),
                     refs.begin() + static_cast<long>(std::min(refs.size(), i + batch)));
  return out;
}

/// Windows of the listed subjects only.
inline GaitDataset select_subjects(const GaitDataset& ds, const std::vector<int>& subjects) {
  GaitDataset out;
  out.window = ds.window;
  out.normalization = ds.normalization;
  out.generator = ds.generator;
  for (const auto& t : ds.trials)
    if (std::find(subjects.begin(), subjects.end(), t.subject) != subjects.end()) {
      out.trials.push_back(t);
      if (ds.bodyweights.count(t.subject)) out.bodyweights[t.subject] = ds.bodyweights.at(t.subject);
    }
  return out;
}

/// Splits a training set into (train, validation) with the last subject held for validation.
inline std::pair<GaitDataset, GaitDataset> validation_split(const GaitDataset& train) {
  auto subjects = train.subjects();
  if (subjects.size() < 2) return {train, GaitDataset{}};
  const int val = subjects.back();
  subjects.pop_back();
  return {select_subjects(train, subjects), select_subjects(train, {val})};
}

// ---------------------------------------------------------------------------
// Generic loop

struct StepResult {
  Tensor<float> loss;
  std::vector<double> terms;
};

struct FitSpec {
  std::vector<Tensor<float>> params;
  std::vector<Tensor<float>> also_zero;  // receive gradients but are not updated here
  std::vector<std::string> term_names;
  double lr = 0.01;
  std::function<StepResult(const Batch&)> loss;
  std::function<void(const Batch&)> before_step;  // e.g. the WAE discriminator update
  std::function<double()> validate;                // lower is better
  std::function<void()> snapshot;
  std::function<void()> restore;
};

namespace detail {

inline double mean_objective(const FitSpec& f, const GaitDataset& ds, std::size_t batch) {
  NoGradScope<float> off;
  double acc = 0;
  std::size_t n = 0;
  for (const auto& refs : ordered_batches(ds, batch)) {
    if (refs.size() < 2) continue;
    acc += static_cast<double>(f.loss(gather(ds, refs)).loss.item()) * static_cast<double>(refs.size());
    n += refs.size();
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace detail

inline RunRecord fit(FitSpec& f, const GaitDataset& train, const TrainConfig& cfg, std::uint64_t batch_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  if (train.size() < 2) throw ConfigError("training set needs at least 2 windows");
  RunRecord rec;
  rec.config = cfg.to_json();
  rec.seed = cfg.seed;
  rec.term_names = f.term_names;
  rec.term_names.push_back("total");
  rec.initial_loss = detail::mean_objective(f, train, cfg.batch);

  Adam<float> opt(f.params, static_cast<float>(f.lr));
  std::mt19937_64 rng(batch_seed);
  const auto refs = window_refs(train);
  double best = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double acc = 0;
    std::size_t seen = 0;
    for (const auto& ids : epoch_batches(refs, cfg.batch, rng)) {
      const auto batch = gather(train, ids);
      if (f.before_step) f.before_step(batch);
      GradTape<float> tape;
      StepResult r;
      {
        TapeScope<float> scope(tape);
        r = f.loss(batch);
      }
      ++step;
      const double total = static_cast<double>(r.loss.item());
      if (!std::isfinite(total)) {
        std::string terms;
        for (std::size_t i = 0; i < r.terms.size() && i < f.term_names.size(); ++i)
          terms += " " + f.term_names[i] + "=" + fmt(r.terms[i]);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ":" + terms);
      }
      tape.backward(r.loss);
      opt.step();
      opt.zero_grad();
      for (auto& t : f.also_zero) t.zero_grad();
      r.terms.push_back(total);
      rec.step_terms.push_back(std::move(r.terms));
      acc += total * static_cast<double>(ids.size());
      seen += ids.size();
    }
    rec.train_loss.push_back(acc / static_cast<double>(seen));
    double score = rec.train_loss.back();
    if (f.validate) {
      NoGradScope<float> off;
      score = f.validate();
      rec.val_loss.push_back(score);
    }
    if (score < best) {
      best = score;
      rec.best_epoch = epoch;
      if (cfg.select_best && f.snapshot) f.snapshot();
    }
  }
  if (!cfg.select_best || rec.best_epoch == 0)
    rec.best_epoch = cfg.epochs;
  else if (f.restore && rec.best_epoch != cfg.epochs)
    f.restore();
  rec.final_loss = detail::mean_objective(f, train, cfg.batch);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

template <typename T>
void copy_values(std::vector<Tensor<T>>& dst, const std::vector<Tensor<T>>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) std::copy(src[i].data().begin(), src[i].data().end(), dst[i].ptr());
}

template <typename T>
std::vector<Tensor<T>> clone_values(const std::vector<Tensor<T>>& src) {
  std::vector<Tensor<T>> out;
  for (const auto& t : src) out.push_back(t.clone());
  return out;
}

// ---------------------------------------------------------------------------
// Teachers

/// A trained spatiotemporal model; VAE teachers decode from μ at inference.
struct Teacher {
  Model<float> net;
  TeacherObjective objective = TeacherObjective::AE;
  std::optional<VaeHeads<float>> vae;

  Tensor<float> latent(const Tensor<float>& mid) const { return vae ? (*vae)(mid).first : mid; }

  Tensor<float> predict(const Tensor<float>& x) const { return net.decode(latent(net.encode(x)), x.dim(2)); }

  ForwardResult<float> forward_with_taps(const Tensor<float>& x, const std::vector<std::string>& names) const {
    std::set<std::string> wanted;
    for (const auto& n : names) {
      if (std::find(registered_taps().begin(), registered_taps().end(), n) == registered_taps().end())
        throw ConfigError("unknown tap '" + n + "'");
      wanted.insert(n);
    }
    ForwardResult<float> r;
    auto mid = net.encode(x, &r.taps, &wanted);
    r.output = net.decode(latent(mid), x.dim(2), &r.taps, &wanted);
    return r;
  }

  Checkpoint to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const {
    meta["objective"] = objective_name(objective);
    auto c = net.to_checkpoint(meta);
    if (vae)
      for (const auto& l : vae->layers()) {
        c.tensors.push_back({l.spec.name + ".weight", l.weight});
        c.tensors.push_back({l.spec.name + ".bias", l.bias});
      }
    return c;
  }

  static Teacher from_checkpoint(const Checkpoint& c) {
    Teacher t;
    t.net = Model<float>::from_checkpoint(c);
    const auto arch = nlohmann::json::parse(c.architecture);
    t.objective = parse_objective(arch.value("meta", nlohmann::json::object()).value("objective", "ae"));
    if (t.objective == TeacherObjective::VAE) {
      const auto mid = encoder_shapes(t.net.config(), t.net.config().window).back();
      t.vae.emplace(mid[0], 0);
      for (auto& l : t.vae->layers())
        for (auto [suffix, dst] : {std::pair{".weight", &l.weight}, std::pair{".bias", &l.bias}}) {
          const auto* src = c.find(l.spec.name + suffix);
          if (src == nullptr || src->shape() != dst->shape())
            throw IoError("checkpoint lacks a valid " + l.spec.name + suffix);
          *dst = src->clone();
        }
    }
    return t;
  }
};

struct TeacherRun {
  Teacher teacher;
  RunRecord record;
};

namespace detail {

/// Mean L_gt of `predict` over a dataset.
template <typename F>
double dataset_mse(const GaitDataset& ds, std::size_t batch, F predict) {
  NoGradScope<float> off;
  double acc = 0;
  std::size_t n = 0;
  for (const auto& refs : ordered_batches(ds, batch)) {
    auto b = gather(ds, refs);
    acc += static_cast<double>(loss_gt(predict(b.insole), b.grf).item()) * static_cast<double>(refs.size());
    n += refs.size();
  }
  return acc / static_cast<double>(n);
}

/// Contrastive partner for strategies 2 and 3.
struct Partner {
  Model<float>* grf = nullptr;
  bool joint = false;  // S3: the GRF encoder trains too and its Mid is decoded as well
};

inline Tensor<float> standard_normal_like(const Tensor<float>& like, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> z(like.shape());
  for (auto& v : z.data()) v = n(rng);
  return z;
}

inline TeacherRun fit_teacher(EncoderKind kind, const GaitDataset& train, const GaitDataset& val,
                              const TrainConfig& cfg, Partner partner = {}) {
  TeacherRun run;
  auto& t = run.teacher;
  t.objective = cfg.objective;
  t.net = Model<float>(teacher_config(kind, cfg.window), derive_seed(cfg.seed, "teacher.init"));
  const auto mid_shape = encoder_shapes(t.net.config(), cfg.window).back();
  std::size_t mid_len = 1;
  for (auto d : mid_shape) mid_len *= d;

  FitSpec f;
  f.lr = cfg.lr;
  f.params = t.net.parameters();
  f.term_names = {"L_gt"};

  auto rng_noise = std::make_shared<std::mt19937_64>(derive_seed(cfg.seed, "vae.noise"));
  auto rng_prior = std::make_shared<std::mt19937_64>(derive_seed(cfg.seed, "wae.prior"));
  std::shared_ptr<Discriminator<float>> disc;
  std::shared_ptr<Adam<float>> disc_opt;
  auto saturated = std::make_shared<std::size_t>(0);

  if (cfg.objective == TeacherObjective::VAE) {
    t.vae.emplace(mid_shape[0], derive_seed(cfg.seed, "vae.init"));
    for (auto& p : t.vae->parameters()) f.params.push_back(p);
    f.term_names.push_back("KL");
  }
  if (cfg.objective == TeacherObjective::WAE) {
    disc = std::make_shared<Discriminator<float>>(DiscriminatorConfig{mid_len, {64, 32, 16, 8}},
                                                  derive_seed(cfg.seed, "wae.disc"));
    disc_opt = std::make_shared<Adam<float>>(disc->parameters(), static_cast<float>(cfg.disc_lr));
    f.also_zero = disc->parameters();
    f.term_names.push_back("L_adv");
    f.before_step = [&t, disc, disc_opt, rng_prior, saturated, &cfg](const Batch& b) {
      Tensor<float> mid;
      {
        NoGradScope<float> off;
        mid = t.net.encode(b.insole);
      }
      const auto prior = standard_normal_like(mid, *rng_prior);
      GradTape<float> tape;
      Tensor<float> loss, lf;
      {
        TapeScope<float> scope(tape);
        lf = disc->logits(mid);
        loss = wae_disc_loss(lf, disc->logits(prior), cfg.wae_literal);
      }
      tape.backward(loss);
      disc_opt->step();
      disc_opt->zero_grad();
      double p = 0;
      for (float v : lf.data()) p += 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
      p /= static_cast<double>(lf.numel());
      if (p < 1e-3 || p > 1 - 1e-3) {
        if ((*saturated)++ == 0) log::info("WAE discriminator saturated (mean chi(h_z) = " + fmt(p) + ")");
      }
    };
  }
  if (partner.grf != nullptr) {
    f.term_names.push_back("L_contrastive");
    if (partner.joint) {
      f.term_names.push_back("L_gt_grf");
      for (auto& p : partner.grf->encoder_parameters()) f.params.push_back(p);
    }
  }

  f.loss = [&t, &cfg, partner, disc, rng_noise](const Batch& b) {
    StepResult r;
    auto mid = t.net.encode(b.insole);
    auto z = mid;
    Tensor<float> kl;
    if (t.vae) {
      auto [mu, logvar] = (*t.vae)(mid);
      auto eps = standard_normal_like(mu, *rng_noise);
      z = add(mu, mul(exp(scale(logvar, 0.5f)), eps));
      kl = kl_divergence(mu, logvar);
      mid = mu;
    }
    const auto recon = t.net.decode(z, b.grf.dim(2));
    r.loss = loss_gt(recon, b.grf);
    r.terms.push_back(r.loss.item());
    if (t.vae) {
      r.loss = axpby(1.0f, r.loss, static_cast<float>(cfg.kl_weight), kl);
      r.terms.push_back(kl.item());
    }
    if (disc) {
      double adv = 0;
      if (cfg.adv_weight != 0) {
        auto term = mean(softplus(scale(disc->logits(mid), -1.0f)));
        adv = term.item();
        r.loss = axpby(1.0f, r.loss, static_cast<float>(cfg.adv_weight), term);
      }
      r.terms.push_back(adv);
    }
    if (partner.grf != nullptr) {
      Tensor<float> z1;
      if (partner.joint) {
        z1 = partner.grf->encode(b.grf);
      } else {
        NoGradScope<float> off;
        z1 = partner.grf->encode(b.grf);
      }
      auto c = contrastive_cosine(Model<float>::decoder_input(mid), z1);
      double c_val = c.item();
      if (cfg.weights.contrastive != 0) r.loss = axpby(1.0f, r.loss, static_cast<float>(cfg.weights.contrastive), c);
      r.terms.push_back(c_val);
      if (partner.joint) {
        auto g = loss_gt(t.net.decode(z1, b.grf.dim(2)), b.grf);
        r.terms.push_back(g.item());
        r.loss = add(r.loss, g);
      }
    }
    return r;
  };

  if (val.size() > 0)
    f.validate = [&t, &val, &cfg] { return dataset_mse(val, cfg.batch, [&](auto& x) { return t.predict(x); }); };
  auto best = std::make_shared<std::vector<Tensor<float>>>();
  f.snapshot = [&f, best] { *best = clone_values(f.params); };
  f.restore = [&f, best] { copy_values(f.params, *best); };

  run.record = fit(f, train, cfg, derive_seed(cfg.seed, "teacher.batches"));
  run.record.config["kind"] = kind_name(kind);
  if (disc) run.record.stages["discriminator_saturated_steps"] = *saturated;
  return run;
}

}  // namespace detail

/// Strategy 1 with the configured objective (AE, WAE or VAE).
inline TeacherRun train_teacher(EncoderKind kind, const GaitDataset& train, const GaitDataset& val,
                                const TrainConfig& cfg) {
  cfg.validate();
  if (train.window != cfg.window) throw ConfigError("dataset windows do not match the configured W");
  return detail::fit_teacher(kind, train, val, cfg);
}

struct StrategyRun {
  TeacherRun main;
  std::optional<Model<float>> grf;  // GRF-1D autoencoder (S2, S3)
  std::optional<RunRecord> grf_record;
};

/// S1: plain teacher. S2: (i) GRF-1D autoencoder, (ii) frozen 1D encoder guides the 3D
/// teacher through the contrastive term. S3: both encoders trained jointly.
inline StrategyRun run_strategy(int strategy, EncoderKind kind, const GaitDataset& train, const GaitDataset& val,
                                const TrainConfig& cfg) {
  cfg.validate();
  if (train.window != cfg.window) throw ConfigError("dataset windows do not match the configured W");
  StrategyRun out;
  if (strategy == 1) {
    out.main = detail::fit_teacher(kind, train, val, cfg);
    return out;
  }
  if (strategy != 2 && strategy != 3) throw ConfigError("strategy must be 1, 2 or 3");
  out.grf.emplace(grf_autoencoder_config(teacher_config(kind, cfg.window)), derive_seed(cfg.seed, "grf.init"));
  auto& g = *out.grf;
  if (strategy == 2) {
    FitSpec f;
    f.lr = cfg.lr;
    f.params = g.parameters();
    f.term_names = {"L_rec"};
    f.loss = [&g](const Batch& b) {
      StepResult r;
      r.loss = loss_gt(g.forward(b.grf), b.grf);
      r.terms.push_back(r.loss.item());
      return r;
    };
    if (val.size() > 0)
      f.validate = [&g, &val, &cfg] {
        NoGradScope<float> off;
        double acc = 0;
        std::size_t n = 0;
        for (const auto& refs : ordered_batches(val, cfg.batch)) {
          auto b = gather(val, refs);
          acc += static_cast<double>(loss_gt(g.forward(b.grf), b.grf).item()) * static_cast<double>(refs.size());
          n += refs.size();
        }
        return acc / static_cast<double>(n);
      };
    auto best = std::make_shared<std::vector<Tensor<float>>>();
    f.snapshot = [&f, best] { *best = clone_values(f.params); };
    f.restore = [&f, best] { copy_values(f.params, *best); };
    out.grf_record = fit(f, train, cfg, derive_seed(cfg.seed, "grf.batches"));
    // step (ii): the 1D encoder is frozen; the decoder trained with it is not reused
    for (auto& p : g.encoder_parameters()) p.set_requires_grad(false);
    out.main = detail::fit_teacher(kind, train, val, cfg, {&g, false});
    for (auto& p : g.encoder_parameters()) p.set_requires_grad(true);
    out.main.record.notes.push_back("strategy 2: 1D encoder frozen in step (ii); 3D model decoder freshly initialized");
    out.main.record.stages["grf_autoencoder"] = out.grf_record->to_json();
  } else {
    out.main = detail::fit_teacher(kind, train, val, cfg, {&g, true});
    out.main.record.notes.push_back("strategy 3: 3D and 1D encoders trained jointly through the shared decoder");
  }
  out.main.record.config["strategy"] = strategy;
  return out;
}

// ---------------------------------------------------------------------------
// Students

struct StudentRun {
  Model<float> student;
  RunRecord record;
};

/// Trains the student with `cfg.method`; `teacher` may be null only for "scratch".
/// The teacher is only read (forward passes without gradient).
inline StudentRun distill_student(const Teacher* teacher, const GaitDataset& train, const GaitDataset& val,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (train.window != cfg.window) throw ConfigError("dataset windows do not match the configured W");
  const auto method = canonical_name(cfg.method);
  const bool scratch = method == "scratch";
  if (!scratch && teacher == nullptr) throw ConfigError("method '" + method + "' needs a teacher");
  const bool baseline = method == "kd" || method == "at";
  const TapPlan plan = scratch || baseline ? TapPlan{} : tap_plan_preset(method);

  StudentRun run;
  run.student = build_student<float>(cfg.window, derive_seed(cfg.seed, "student.init"));
  auto& s = run.student;
  FitSpec f;
  f.lr = cfg.lr;
  f.params = s.parameters();
  if (scratch)
    f.term_names = {"L_gt"};
  else if (baseline)
    f.term_names = {"L_gt", "L_" + method};
  else
    f.term_names = {"L_gt", "L_bs_mid", "L_tp_mid", "L_ch_mid", "L_bs_int", "L_tp_int", "L_ch_int"};

  std::vector<std::string> taps = baseline ? std::vector<std::string>{"Mid"} : plan.taps();
  std::vector<std::string> teacher_taps;
  for (const auto& e : plan.entries) teacher_taps.push_back(e.teacher_tap);
  if (baseline) teacher_taps = {"Mid"};

  f.loss = [&, teacher](const Batch& b) {
    StepResult r;
    if (scratch) {
      r.loss = loss_gt(s.forward(b.insole), b.grf);
      r.terms.push_back(r.loss.item());
      return r;
    }
    TapMap<float> tt;
    {
      NoGradScope<float> off;
      tt = teacher->forward_with_taps(b.insole, teacher_taps).taps;
    }
    auto out = s.forward_with_taps(b.insole, taps);
    if (baseline) {
      auto gt = loss_gt(out.output, b.grf);
      auto extra = method == "kd" ? kd_mid_loss(tt, out.taps) : at_loss(tt, out.taps);
      r.terms = {gt.item(), extra.item()};
      r.loss = axpby(1.0f, gt, static_cast<float>(cfg.weights.alpha), extra);
      return r;
    }
    auto terms = takd_objective(out.output, b.grf, tt, out.taps, plan, cfg.weights);
    r.loss = terms.total;
    r.terms = {terms.gt, terms.bs_mid, terms.tp_mid, terms.ch_mid, terms.bs_int, terms.tp_int, terms.ch_int};
    return r;
  };
  if (val.size() > 0)
    f.validate = [&] { return detail::dataset_mse(val, cfg.batch, [&](auto& x) { return s.forward(x); }); };
  auto best = std::make_shared<std::vector<Tensor<float>>>();
  f.snapshot = [&f, best] { *best = clone_values(f.params); };
  f.restore = [&f, best] { copy_values(f.params, *best); };
  run.record = fit(f, train, cfg, derive_seed(cfg.seed, "student.batches"));
  if (!scratch && !baseline) run.record.config["tap_plan"] = plan.to_json();
  return run;
}

// ---------------------------------------------------------------------------
// Inference

struct Predictions {
  Tensor<float> pred;    // (N, 2, W)
  Tensor<float> target;  // (N, 2, W)
  std::vector<int> subject;
  std::vector<gait::Speed> speed;
};

template <typename F>
Predictions predict_dataset(const GaitDataset& ds, std::size_t batch, F&& model) {
  NoGradScope<float> off;
  const std::size_t n = ds.size(), w = ds.window;
  if (n == 0) throw ConfigError("cannot predict on an empty dataset");
  Predictions p{Tensor<float>(Shape{n, 2, w}), Tensor<float>(Shape{n, 2, w}), {}, {}};
  std::size_t k = 0;
  for (const auto& refs : ordered_batches(ds, batch)) {
    auto b = gather(ds, refs);
    auto y = model(b.insole);
    std::copy(y.data().begin(), y.data().end(), p.pred.ptr() + k * 2 * w);
    std::copy(b.grf.data().begin(), b.grf.data().end(), p.target.ptr() + k * 2 * w);
    for (const auto& r : refs) {
      p.subject.push_back(ds.trials[r.trial].subject);
      p.speed.push_back(ds.trials[r.trial].speed);
    }
    k += refs.size();
  }
  return p;
}

}  // namespace takd::train

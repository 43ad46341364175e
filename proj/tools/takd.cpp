// SPDX-License-Identifier: Apache-2.0
//
// takd: generate synthetic gait data, train teachers, distill students,
// evaluate and compare runs.
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime error, 3 acceptance check failed.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "acceptance/criteria.hpp"
#include "takd/checkpoint.hpp"
#include "takd/cli.hpp"
#include "takd/metrics.hpp"
#include "takd/synth.hpp"
#include "takd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace takd;

namespace {

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<long long> seed;
  bool quiet = false;
  std::vector<std::string> argv;
};

// Flags that are shorthands for config keys; applied after the file and --set.
using Shorthands = std::vector<std::pair<std::string, std::optional<std::string>>>;

cli::Settings resolve(const Common& c, const Shorthands& flags) {
  cli::Settings s;
  if (!c.config.empty()) s.load_file(c.config);
  for (const auto& kv : c.overrides) s.apply_override(kv);
  if (c.seed) s.set("run.seed", std::to_string(*c.seed));
  for (const auto& [key, v] : flags)
    if (v) s.set(key, *v);
  return s;
}

fs::path prepare_out(const Common& c, const cli::Settings& s, const std::string& fallback) {
  const fs::path out = c.out.empty() ? fs::path(fallback) : fs::path(c.out);
  fs::create_directories(out);
  std::ofstream(out / "config.txt") << s.dump();
  if (!c.quiet) std::cout << "# resolved configuration\n" << s.dump() << std::flush;
  return out;
}

json provenance(const std::string& command, const Common& c, const cli::Settings& s) {
  return {{"command", command}, {"argv", c.argv}, {"settings", s.to_json()}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("cannot write " + path.string());
}

void say(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cout << msg << '\n';
}

gait::GaitDataset load_data(const std::string& dir, const cli::Settings& s) {
  if (dir.empty()) throw ConfigError("--data is required");
  auto ds = gait::load_dataset(dir);
  const auto w = static_cast<std::size_t>(s.get_int("data.window", 1, 100000));
  if (ds.window != w)
    throw ConfigError("dataset windows are W=" + std::to_string(ds.window) + " but data.window = " + std::to_string(w));
  return ds;
}

// Training subjects of the LOSO fold (all subjects without a holdout).
gait::GaitDataset training_part(const gait::GaitDataset& ds, int holdout, bool refit) {
  return holdout < 0 ? ds : gait::loso_split(ds, holdout, refit).train;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, const Shorthands& flags, bool dry_run) {
  const auto s = resolve(c, flags);
  const auto o = cli::generate_options(s);
  const auto out = prepare_out(c, s, "data");
  std::map<std::string, std::size_t> per_speed;
  std::size_t total = 0;
  if (dry_run) {
    // planned counts only; nothing is rendered
    json counts = json::object();
    const std::size_t n = synth::frames_per_trial(o) / o.window;
    for (auto [subject, speed] : synth::plan_layout(o)) {
      counts[gait::trial_stem(subject, speed)] = n;
      per_speed[std::string(gait::speed_name(speed))] += n;
      total += n;
    }
    write_json(out / "plan.json", {{"window", o.window}, {"counts", counts}, {"generator", synth::describe(o)}});
  } else {
    const auto ds = synth::generate_dataset(o);
    gait::save_dataset(ds, out);
    for (const auto& t : ds.trials) {
      per_speed[std::string(gait::speed_name(t.speed))] += t.count();
      total += t.count();
    }
  }
  auto p = provenance("gen-data", c, s);
  p["dry_run"] = dry_run;
  p["windows_per_speed"] = per_speed;
  p["windows"] = total;
  write_json(out / "run.json", p);
  for (const auto& [sp, n] : per_speed) say(c, sp + " windows: " + std::to_string(n));
  say(c, "total windows: " + std::to_string(total) + (dry_run ? " (planned)" : "") + " -> " + out.string());
  return 0;
}

int cmd_train_teacher(const Common& c, const Shorthands& flags, const std::string& data) {
  const auto s = resolve(c, flags);
  const auto kind = parse_kind(s.get("model.encoder"));
  if (kind != EncoderKind::C3D && kind != EncoderKind::I3D && kind != EncoderKind::R2P1D)
    throw ConfigError("teacher encoder must be c3d, i3d or r2p1d");
  const auto cfg = cli::train_config(s, kind);
  const auto ds = load_data(data, s);
  const int holdout = cli::holdout_subject(s, ds);
  const bool refit = s.get_bool("data.refit");
  const auto out = prepare_out(c, s, "teacher");
  auto [tr, val] = train::validation_split(training_part(ds, holdout, refit));
  auto run = train::run_strategy(cfg.strategy, kind, tr, val, cfg);
  const json meta{{"role", "teacher"},          {"encoder", kind_name(kind)},  {"strategy", cfg.strategy},
                  {"holdout", holdout},         {"refit", refit},              {"seed", cfg.seed},
                  {"preset", s.get("run.preset")}, {"method", "teacher-" + train::objective_name(cfg.objective)}};
  save_checkpoint(out / "teacher.ckpt", run.main.teacher.to_checkpoint(meta));
  if (run.grf) save_checkpoint(out / "grf.ckpt", run.grf->to_checkpoint({{"role", "grf-autoencoder"}}));
  run.main.record.save(out);
  auto j = run.main.record.to_json();
  j["provenance"] = provenance("train-teacher", c, s);
  write_json(out / "run.json", j);
  const auto& r = run.main.record;
  say(c, kind_name(kind) + " teacher (" + train::objective_name(cfg.objective) + ", strategy " +
             std::to_string(cfg.strategy) + "): loss " + train::fmt(r.initial_loss) + " -> " +
             train::fmt(r.final_loss) + ", best epoch " + std::to_string(r.best_epoch) + " -> " +
             (out / "teacher.ckpt").string());
  return 0;
}

int cmd_distill(const Common& c, const Shorthands& flags, const std::string& data, const std::string& teacher_path) {
  auto s = resolve(c, flags);
  const auto method = cli::distill_method(s.get("distill.preset"));
  std::optional<train::Teacher> teacher;
  json tmeta = json::object();
  if (!teacher_path.empty()) {
    const auto ck = load_checkpoint(teacher_path);
    teacher = train::Teacher::from_checkpoint(ck);
    tmeta = json::parse(ck.architecture).value("meta", json::object());
    if (tmeta.contains("holdout")) {
      const auto th = tmeta["holdout"].get<int>();
      const std::string want = th < 0 ? "none" : std::to_string(th);
      if (!s.was_set("run.holdout"))
        s.set("run.holdout", want);
      else if (canonical_name(s.get("run.holdout")) != want &&
               !(canonical_name(s.get("run.holdout")) == "last" && th >= 0))
        throw ConfigError("run.holdout = " + s.get("run.holdout") + " differs from the teacher's held-out subject " +
                          want);
    }
  } else if (method != "scratch") {
    throw ConfigError("--teacher is required for preset '" + method + "'");
  }
  const auto cfg = cli::train_config(s, EncoderKind::C3D);
  const auto ds = load_data(data, s);
  const int holdout = cli::holdout_subject(s, ds);
  if (tmeta.contains("holdout") && tmeta["holdout"].get<int>() != holdout)
    throw ConfigError("student holdout " + std::to_string(holdout) + " differs from the teacher's " +
                      tmeta["holdout"].dump());
  const bool refit = s.get_bool("data.refit");
  const auto out = prepare_out(c, s, "student");
  auto [tr, val] = train::validation_split(training_part(ds, holdout, refit));
  auto run = train::distill_student(teacher ? &*teacher : nullptr, tr, val, cfg);
  const json meta{{"role", "student"},
                  {"method", method},
                  {"teacher", tmeta.value("encoder", "-")},
                  {"strategy", tmeta.value("strategy", 1)},
                  {"holdout", holdout},
                  {"refit", refit},
                  {"seed", cfg.seed},
                  {"preset", s.get("run.preset")}};
  save_checkpoint(out / "student.ckpt", run.student.to_checkpoint(meta));
  run.record.save(out);
  auto j = run.record.to_json();
  j["provenance"] = provenance("distill", c, s);
  if (!teacher_path.empty()) j["teacher_checkpoint"] = fs::absolute(teacher_path).string();
  write_json(out / "run.json", j);
  if (run.record.config.contains("tap_plan"))
    for (const auto& e : run.record.config["tap_plan"]["entries"])
      say(c, "tap " + e["teacher"].get<std::string>() + " -> " + e["student"].get<std::string>() + " " +
                 e["maps"].dump());
  say(c, "student (" + method + "): loss " + train::fmt(run.record.initial_loss) + " -> " +
             train::fmt(run.record.final_loss) + " -> " + (out / "student.ckpt").string());
  return 0;
}

struct ModelEval {
  std::vector<metrics::Row> rows;
  std::vector<std::pair<std::string, std::vector<float>>> curves;  // id, pred(2T) ++ truth(2T)
};

ModelEval evaluate_model(const fs::path& path, const gait::GaitDataset& ds, bool loso, const cli::Settings& s) {
  const auto ck = load_checkpoint(path);
  const auto meta = json::parse(ck.architecture).value("meta", json::object());
  const auto teacher = train::Teacher::from_checkpoint(ck);
  if (teacher.net.config().window != ds.window) throw ConfigError(path.string() + ": model window differs from data");
  gait::GaitDataset part = ds;
  if (loso) {
    const int h = meta.value("holdout", -1);
    if (h < 0) throw ConfigError(path.string() + " was trained without a held-out subject; drop --loso");
    part = gait::loso_split(ds, h, meta.value("refit", false)).test;
  }
  auto p = train::predict_dataset(part, 16, [&](const Tensor<float>& x) { return teacher.predict(x); });
  const auto units = canonical_name(s.get("eval.units"));
  if (units != "normalized" && units != "bodyweight") throw ConfigError("eval.units must be normalized or bodyweight");
  const metrics::RunLabels labels{meta.value("method", "model"),
                                  meta.value("teacher", meta.value("encoder", "-")),
                                  meta.value("preset", "-"), meta.value("strategy", 1),
                                  meta.value("seed", std::uint64_t{0})};
  const auto bins = static_cast<std::size_t>(s.get_int("eval.bins", 1, 100000));
  ModelEval out;
  out.rows = metrics::evaluate(p.pred, p.target, p.subject, p.speed, labels, bins);
  if (units == "bodyweight") {
    // ECE bins live on the normalized [0, 1] scale; only the error metrics change units
    p.pred = metrics::to_bodyweight_percent(p.pred, part.normalization.grf);
    p.target = metrics::to_bodyweight_percent(p.target, part.normalization.grf);
    const auto bw = metrics::evaluate(p.pred, p.target, p.subject, p.speed, labels, bins);
    for (std::size_t i = 0; i < bw.size(); ++i) {
      out.rows[i].rmse = bw[i].rmse;
      out.rows[i].mae = bw[i].mae;
      out.rows[i].r = bw[i].r;
    }
  }
  const auto per_group = static_cast<std::size_t>(s.get_int("eval.curves", 0, 100000));
  const std::size_t w = part.window;
  std::map<std::pair<int, int>, std::size_t> seen;
  for (std::size_t i = 0; i < p.subject.size(); ++i) {
    auto& k = seen[{p.subject[i], static_cast<int>(p.speed[i])}];
    if (k >= per_group) continue;
    char id[160];
    std::snprintf(id, sizeof id, "%s_%s_seed%llu_s%02d_%s_w%zu", labels.method.c_str(), labels.teacher.c_str(),
                  static_cast<unsigned long long>(labels.seed), p.subject[i],
                  std::string(gait::speed_name(p.speed[i])).c_str(), k);
    std::vector<float> buf(p.pred.ptr() + i * 2 * w, p.pred.ptr() + (i + 1) * 2 * w);
    buf.insert(buf.end(), p.target.ptr() + i * 2 * w, p.target.ptr() + (i + 1) * 2 * w);
    out.curves.emplace_back(id, std::move(buf));
    ++k;
  }
  return out;
}

int cmd_eval(const Common& c, const Shorthands& flags, const std::string& data, const std::vector<std::string>& models,
             bool loso, bool check, const std::vector<int>& only) {
  const auto s = resolve(c, flags);
  if (check) {
    log::quiet() = true;
    acceptance::Options opt;
    opt.cli = fs::read_symlink("/proc/self/exe");
    opt.work = (c.out.empty() ? fs::temp_directory_path() / "takd_check" : fs::path(c.out)) / "acceptance";
    fs::create_directories(opt.work);
    const int failed = acceptance::run(opt, only, std::cout);
    if (failed > 0) throw CheckFailed(std::to_string(failed) + " acceptance criteria failed");
    std::cout << "all selected criteria passed\n";
    return 0;
  }
  if (models.empty()) throw ConfigError("eval needs --model (or --check)");
  const auto ds = load_data(data, s);
  const auto out = prepare_out(c, s, "eval");
  const unsigned threads = std::min<unsigned>(cli::worker_threads(std::getenv("TAKD_THREADS")),
                                              static_cast<unsigned>(models.size()));
  std::vector<ModelEval> results(models.size());
  std::vector<std::exception_ptr> errors(models.size());
  {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next++) < models.size();) try {
          results[i] = evaluate_model(models[i], ds, loso, s);
        } catch (...) {
          errors[i] = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<metrics::Row> rows;
  fs::create_directories(out / "curves");
  for (const auto& r : results) {
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    for (const auto& [id, buf] : r.curves) {
      const std::size_t t = buf.size() / 4;
      metrics::write_curve_csv(out / "curves" / (id + ".csv"), buf.data(), buf.data() + 2 * t, t);
    }
  }
  metrics::write_metrics_csv(out / "metrics.csv", rows);
  auto p = provenance("eval", c, s);
  p["models"] = models;
  p["loso"] = loso;
  p["rows"] = rows.size();
  write_json(out / "run.json", p);
  for (const auto& r : rows)
    say(c, r.method + " subject " + std::to_string(r.subject) + " " + r.speed + ": rmse " +
               metrics::detail::num(r.rmse) + " r " + (r.r ? metrics::detail::num(*r.r) : "n/a"));
  say(c, std::to_string(rows.size()) + " rows -> " + (out / "metrics.csv").string());
  return 0;
}

int cmd_compare(const Common& c, const Shorthands& flags, const std::string& runs) {
  const auto s = resolve(c, flags);
  if (runs.empty() || !fs::is_directory(runs)) throw ConfigError("--runs must be a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(runs))
    if (e.is_regular_file() && e.path().filename() == "metrics.csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no metrics.csv under " + runs);
  std::vector<metrics::Row> rows;
  for (const auto& f : files) {
    auto r = metrics::read_metrics_csv(f);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto out = prepare_out(c, s, runs);
  const auto agg = metrics::aggregate(rows);
  {
    std::ofstream os(out / "compare.csv");
    os << "method,teacher,preset,strategy,subject,speed,n,rmse_mean,rmse_std,mae_mean,mae_std,r_mean,r_std,"
          "ece_mean,ece_std\n";
    for (const auto& a : agg)
      os << a.method << ',' << a.teacher << ',' << a.preset << ',' << a.strategy << ',' << a.subject << ','
         << a.speed << ',' << a.rmse.n << ',' << train::fmt(a.rmse.mean) << ',' << train::fmt(a.rmse.std) << ','
         << train::fmt(a.mae.mean) << ',' << train::fmt(a.mae.std) << ',' << train::fmt(a.r.mean) << ','
         << train::fmt(a.r.std) << ',' << train::fmt(a.ece_avg.mean) << ',' << train::fmt(a.ece_avg.std) << '\n';
  }
  // table in units of 1e-2
  std::printf("%-14s %-6s %-6s %2s %4s %-3s %3s  %14s %14s %14s %14s\n", "method", "teacher", "preset", "S", "sbj",
              "spd", "n", "RMSE(e-2)", "MAE(e-2)", "r(e-2)", "ECE(e-2)");
  for (const auto& a : agg)
    std::printf("%-14s %-6s %-6s %2d %4d %-3s %3zu  %6.3f ± %5.3f %6.3f ± %5.3f %6.2f ± %5.2f %6.3f ± %5.3f\n",
                a.method.c_str(), a.teacher.c_str(), a.preset.c_str(), a.strategy, a.subject, a.speed.c_str(),
                a.rmse.n, 100 * a.rmse.mean, 100 * a.rmse.std, 100 * a.mae.mean, 100 * a.mae.std, 100 * a.r.mean,
                100 * a.r.std, 100 * a.ece_avg.mean, 100 * a.ece_avg.std);
  const auto folds = metrics::fold_rmse(rows);
  std::ofstream tt(out / "ttest.csv");
  tt << "a,b,n_a,n_b,t,p,df\n";
  std::printf("\nWelch t-tests on per-fold RMSE\n");
  for (auto i = folds.begin(); i != folds.end(); ++i)
    for (auto j = std::next(i); j != folds.end(); ++j) {
      if (i->second.size() < 2 || j->second.size() < 2) continue;
      try {
        const auto w = metrics::welch_ttest(i->second, j->second);
        tt << i->first << ',' << j->first << ',' << i->second.size() << ',' << j->second.size() << ','
           << train::fmt(w.t) << ',' << train::fmt(w.p) << ',' << train::fmt(w.df) << '\n';
        std::printf("  %-28s vs %-28s t = %8.4f  p = %.4g\n", i->first.c_str(), j->first.c_str(), w.t, w.p);
      } catch (const NumericError& e) {
        std::printf("  %-28s vs %-28s skipped: %s\n", i->first.c_str(), j->first.c_str(), e.what());
      }
    }
  auto p = provenance("compare", c, s);
  json inputs = json::array();
  for (const auto& f : files) inputs.push_back(f.string());
  p["inputs"] = inputs;
  write_json(out / "run.json", p);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Common common;
  for (int i = 0; i < argc; ++i) common.argv.emplace_back(argv[i]);

  CLI::App app{"Time-aware knowledge distillation for ground reaction force estimation from insole pressure video"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", common.config, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", common.overrides, "override a config key (key=value), repeatable");
  app.add_option("--seed", common.seed, "run.seed");
  app.add_option("--out", common.out, "output directory");
  app.add_flag("--quiet", common.quiet, "no progress output");

  std::optional<std::string> subjects, window, wpt, speeds, encoder, objective, strategy, preset, holdout, epochs;
  bool dry_run = false, reference = false, loso = false, check = false;
  std::string data, teacher, runs;
  std::vector<std::string> models;
  std::vector<int> only;

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  gen->add_option("--subjects", subjects, "data.subjects");
  gen->add_option("--window", window, "data.window");
  gen->add_option("--windows-per-trial", wpt, "data.windows_per_trial");
  gen->add_option("--speeds", speeds, "data.speeds");
  gen->add_flag("--reference-layout", reference, "data.reference_layout = true");
  gen->add_flag("--dry-run", dry_run, "write planned window counts only");

  auto* tt = app.add_subcommand("train-teacher", "train a teacher on the training subjects of a LOSO fold");
  tt->add_option("--data", data, "dataset directory")->required();
  tt->add_option("--encoder", encoder, "model.encoder: c3d, i3d or r2p1d");
  tt->add_option("--objective", objective, "train.objective: ae, wae or vae");
  tt->add_option("--strategy", strategy, "train.strategy: 1, 2 or 3");
  tt->add_option("--holdout", holdout, "run.holdout");
  tt->add_option("--epochs", epochs, "train.epochs");

  auto* ds = app.add_subcommand("distill", "train a student, with or without a teacher");
  ds->add_option("--data", data, "dataset directory")->required();
  ds->add_option("--teacher", teacher, "teacher checkpoint (not needed for scratch)");
  ds->add_option("--preset", preset, "distill.preset");
  ds->add_option("--holdout", holdout, "run.holdout");
  ds->add_option("--epochs", epochs, "train.epochs");

  auto* ev = app.add_subcommand("eval", "metrics.csv and curves for checkpoints, or the acceptance check");
  ev->add_option("--data", data, "dataset directory");
  ev->add_option("--model", models, "checkpoint, repeatable");
  ev->add_flag("--loso", loso, "evaluate on each model's held-out subject only");
  ev->add_flag("--check", check, "run the acceptance criteria; exit 3 on failure");
  ev->add_option("--criteria", only, "criterion ids for --check (default all)");

  auto* cmp = app.add_subcommand("compare", "aggregate metrics.csv files and run Welch t-tests");
  cmp->add_option("--runs", runs, "directory searched for metrics.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  log::quiet() = common.quiet;

  try {
    if (*gen) {
      Shorthands f{{"data.subjects", subjects}, {"data.window", window}, {"data.windows_per_trial", wpt},
                   {"data.speeds", speeds}};
      if (reference) f.push_back({"data.reference_layout", "true"});
      return cmd_gen_data(common, f, dry_run);
    }
    if (*tt)
      return cmd_train_teacher(common,
                               {{"model.encoder", encoder}, {"train.objective", objective},
                                {"train.strategy", strategy}, {"run.holdout", holdout}, {"train.epochs", epochs}},
                               data);
    if (*ds)
      return cmd_distill(common, {{"distill.preset", preset}, {"run.holdout", holdout}, {"train.epochs", epochs}},
                         data, teacher);
    if (*ev) return cmd_eval(common, {}, data, models, loso, check, only);
    if (*cmp) return cmd_compare(common, {}, runs);
  } catch (const CheckFailed& e) {
    std::cerr << "takd: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "takd: configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "takd: error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

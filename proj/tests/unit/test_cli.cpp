// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "takd/cli.hpp"
#include "takd/metrics.hpp"

namespace fs = std::filesystem;
using namespace takd;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / "takd_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Runs the driver with stdout/stderr captured in `log`; returns the exit status.
int takd_run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + TAKD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return out;
}

}  // namespace

TEST(Settings, DefaultsCoverSchema) {
  cli::Settings s;
  for (const auto& k : cli::schema()) {
    EXPECT_EQ(s.get(k.name), k.fallback);
    EXPECT_FALSE(s.was_set(k.name));
  }
  EXPECT_TRUE(s.is_auto("train.epochs"));
}

TEST(Settings, FileSectionsAndComments) {
  const auto d = scratch_dir("settings_file");
  write_text(d / "a.cfg",
             "# header\n"
             "run.seed = 9   # trailing\n"
             "[data]\n"
             "subjects=4\n"
             "  speeds = SW, RW \n"
             "\n"
             "[train]\n"
             "loss.kappa = 0.5\n");
  cli::Settings s;
  s.load_file(d / "a.cfg");
  EXPECT_EQ(s.get("run.seed"), "9");
  EXPECT_EQ(s.get("data.subjects"), "4");
  EXPECT_EQ(s.get("data.speeds"), "SW, RW");
  EXPECT_EQ(s.get("loss.kappa"), "0.5");  // dotted keys ignore the section
  EXPECT_TRUE(s.was_set("data.subjects"));
  const auto sp = cli::parse_speed_list(s.get("data.speeds"));
  ASSERT_EQ(sp.size(), 2u);
  EXPECT_EQ(sp[1], gait::Speed::RW);
}

TEST(Settings, ErrorsNameFileAndLine) {
  const auto d = scratch_dir("settings_err");
  write_text(d / "bad.cfg", "run.seed = 1\n[data]\nsubject = 3\n");
  cli::Settings s;
  try {
    s.load_file(d / "bad.cfg");
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("data.subject"), std::string::npos) << e.what();
  }
  write_text(d / "noeq.cfg", "run.seed 1\n");
  EXPECT_THROW(s.load_file(d / "noeq.cfg"), ConfigError);
  EXPECT_THROW(s.load_file(d / "missing.cfg"), ConfigError);
  EXPECT_THROW(s.apply_override("run.seed"), ConfigError);
  EXPECT_THROW(s.apply_override("nope=1"), ConfigError);
}

TEST(Settings, OverridesWinOverFile) {
  const auto d = scratch_dir("settings_prec");
  write_text(d / "a.cfg", "train.epochs = 7\ntrain.lr = 0.5\n");
  cli::Settings s;
  s.load_file(d / "a.cfg");
  s.apply_override("train.epochs = 3");
  const auto c = cli::train_config(s, EncoderKind::C3D);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_DOUBLE_EQ(c.lr, 0.5);
  EXPECT_EQ(c.batch, train::TrainConfig::desk().batch);
}

TEST(Settings, PresetsAndBadValues) {
  cli::Settings s;
  EXPECT_DOUBLE_EQ(cli::train_config(s, EncoderKind::R2P1D).lr, train::desk_lr(EncoderKind::R2P1D));
  s.set("run.preset", "full");
  const auto p = cli::train_config(s, EncoderKind::C3D);
  EXPECT_DOUBLE_EQ(p.lr, train::default_lr(EncoderKind::C3D));
  EXPECT_EQ(p.epochs, train::TrainConfig{}.epochs);

  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{{"run.preset", "huge"},
                                                                             {"train.epochs", "ten"},
                                                                             {"train.epochs", "0"},
                                                                             {"train.strategy", "4"},
                                                                             {"loss.kappa", "1e"},
                                                                             {"train.select_best", "maybe"},
                                                                             {"distill.preset", "nope"}}) {
    cli::Settings b;
    b.set(k, v);
    EXPECT_THROW(cli::train_config(b, EncoderKind::C3D), ConfigError) << k << " = " << v;
  }
  cli::Settings sp;
  sp.set("data.speeds", "SW,SW");
  EXPECT_THROW(cli::generate_options(sp), ConfigError);
  sp.set("data.speeds", "XW");
  EXPECT_THROW(cli::generate_options(sp), std::exception);
}

TEST(Settings, DumpIsSchemaOrdered) {
  cli::Settings s;
  s.set("eval.bins", "10");
  std::istringstream is(s.dump());
  std::string line;
  std::size_t i = 0;
  while (std::getline(is, line)) {
    ASSERT_LT(i, cli::schema().size());
    const auto& k = cli::schema()[i++];
    EXPECT_EQ(line, k.name + " = " + (k.name == "eval.bins" ? "10" : k.fallback));
  }
  EXPECT_EQ(i, cli::schema().size());
  EXPECT_EQ(s.to_json()["eval.bins"], "10");
}

TEST(Settings, ThreadsAndHoldout) {
  EXPECT_EQ(cli::worker_threads(nullptr), 1u);
  EXPECT_EQ(cli::worker_threads("4"), 4u);
  EXPECT_THROW(cli::worker_threads("0"), ConfigError);
  EXPECT_THROW(cli::worker_threads("2x"), ConfigError);

  synth::GenerateOptions o;
  o.n_subjects = 3;
  o.windows_per_trial = 1;
  const auto ds = synth::generate_dataset(o);
  cli::Settings s;
  EXPECT_EQ(cli::holdout_subject(s, ds), 3);
  s.set("run.holdout", "none");
  EXPECT_EQ(cli::holdout_subject(s, ds), -1);
  s.set("run.holdout", "2");
  EXPECT_EQ(cli::holdout_subject(s, ds), 2);
  s.set("run.holdout", "7");
  EXPECT_THROW(cli::holdout_subject(s, ds), ConfigError);
}

TEST(Driver, ExitCodes) {
  const auto d = scratch_dir("exit");
  EXPECT_EQ(takd_run("--help", d / "log"), 0);
  EXPECT_EQ(takd_run("", d / "log"), 1);
  EXPECT_EQ(takd_run("frobnicate", d / "log"), 1);
  EXPECT_EQ(takd_run("--set nope=1 gen-data --out " + (d / "x").string(), d / "log"), 1);
  EXPECT_NE(read_text(d / "log").find("nope"), std::string::npos);
  EXPECT_EQ(takd_run("train-teacher --data " + (d / "absent").string(), d / "log"), 2);
  EXPECT_EQ(takd_run("distill --preset takd --data " + (d / "absent").string(), d / "log"), 1);
}

TEST(Driver, DryRunMatchesReferenceLayoutAndRealCounts) {
  const auto d = scratch_dir("dry");
  ASSERT_EQ(takd_run("gen-data --subjects 8 --window 200 --windows-per-trial 279 --speeds SW --dry-run --out " +
                         (d / "plan").string(),
                     d / "log"),
            0)
      << read_text(d / "log");
  EXPECT_NE(read_text(d / "log").find("SW windows: 2232"), std::string::npos);
  EXPECT_FALSE(fs::exists(d / "plan" / "manifest.json"));

  const std::string small = "--seed 2 --quiet gen-data --subjects 3 --windows-per-trial 3 --speeds SW,BW,FW ";
  ASSERT_EQ(takd_run(small + "--dry-run --out " + (d / "p").string(), d / "log"), 0);
  ASSERT_EQ(takd_run(small + "--out " + (d / "real").string(), d / "log"), 0) << read_text(d / "log");
  const auto plan = json::parse(read_text(d / "p" / "plan.json"));
  const auto manifest = json::parse(read_text(d / "real" / "manifest.json"));
  EXPECT_EQ(plan["counts"], manifest["counts"]);
  EXPECT_EQ(plan["counts"].size(), 9u);
  // resolved configuration is recorded next to the output
  EXPECT_NE(read_text(d / "real" / "config.txt").find("data.speeds = SW,BW,FW"), std::string::npos);
}

TEST(Driver, SmallEndToEndFlow) {
  const auto d = scratch_dir("flow");
  const auto data = (d / "data").string();
  const std::string common = "--seed 4 --quiet --set train.epochs=2 ";
  ASSERT_EQ(takd_run("--seed 4 --quiet gen-data --subjects 3 --windows-per-trial 2 --out " + data, d / "log"), 0)
      << read_text(d / "log");
  const auto before = snapshot(data);

  ASSERT_EQ(takd_run(common + "train-teacher --data " + data + " --out " + (d / "t").string(), d / "log"), 0)
      << read_text(d / "log");
  const auto tck = (d / "t" / "teacher.ckpt").string();
  ASSERT_TRUE(fs::exists(tck));
  const auto teacher_bytes = read_text(tck);

  ASSERT_EQ(takd_run(common + "distill --data " + data + " --teacher " + tck + " --preset takd-dagger --out " +
                         (d / "s").string(),
                     d / "log"),
            0)
      << read_text(d / "log");
  const auto run = json::parse(read_text(d / "s" / "run.json"));
  ASSERT_TRUE(run["config"].contains("tap_plan"));
  EXPECT_EQ(run["config"]["tap_plan"]["entries"].size(), 3u);
  EXPECT_EQ(run["provenance"]["command"], "distill");

  // the teacher was trained with subject 3 held out; asking for another is refused
  EXPECT_EQ(takd_run(common + "distill --data " + data + " --teacher " + tck + " --holdout 1 --out " +
                         (d / "s2").string(),
                     d / "log"),
            1);

  ASSERT_EQ(takd_run(common + "eval --data " + data + " --model " + (d / "s" / "student.ckpt").string() +
                         " --model " + tck + " --loso --out " + (d / "e").string(),
                     d / "log"),
            0)
      << read_text(d / "log");
  const auto rows = metrics::read_metrics_csv(d / "e" / "metrics.csv");
  ASSERT_EQ(rows.size(), 4u);  // two models x two speeds of subject 3
  EXPECT_EQ(rows[0].method, "takd-dagger");
  EXPECT_EQ(rows[2].method, "teacher-ae");
  for (const auto& r : rows) {
    EXPECT_EQ(r.subject, 3);
    EXPECT_TRUE(std::isfinite(r.rmse));
  }
  EXPECT_FALSE(fs::is_empty(d / "e" / "curves"));

  ASSERT_EQ(takd_run("--quiet compare --runs " + (d / "e").string() + " --out " + (d / "c").string(), d / "log"), 0)
      << read_text(d / "log");
  EXPECT_TRUE(fs::exists(d / "c" / "compare.csv"));
  EXPECT_TRUE(fs::exists(d / "c" / "ttest.csv"));

  EXPECT_EQ(snapshot(data), before);
  EXPECT_EQ(read_text(tck), teacher_bytes);
}

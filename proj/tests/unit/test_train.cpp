// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "takd/synth.hpp"
#include "takd/train.hpp"

using namespace takd;
using namespace takd::train;

namespace {

GaitDataset tiny(std::size_t subjects, std::size_t wpt, std::uint64_t seed = 3) {
  synth::GenerateOptions o;
  o.n_subjects = subjects;
  o.windows_per_trial = wpt;
  o.window = 100;
  o.seed = seed;
  return synth::generate_dataset(o);
}

TrainConfig quick(std::size_t epochs, std::size_t batch = 8) {
  auto c = TrainConfig::desk();
  c.epochs = epochs;
  c.batch = batch;
  return c;
}

bool same_values(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].shape() != b[i].shape() || std::memcmp(a[i].ptr(), b[i].ptr(), a[i].numel() * sizeof(float)) != 0)
      return false;
  return true;
}

}  // namespace

TEST(Batching, PartitionAndTailMerge) {
  auto ds = tiny(2, 5);  // 20 windows
  std::mt19937_64 rng(1);
  auto bs = epoch_batches(window_refs(ds), 6, rng);
  ASSERT_EQ(bs.size(), 4u);  // 6, 6, 6, 2
  std::size_t total = 0;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& b : bs) {
    EXPECT_GE(b.size(), 2u);
    total += b.size();
    for (auto r : b) seen.insert({r.trial, r.index});
  }
  EXPECT_EQ(total, 20u);
  EXPECT_EQ(seen.size(), 20u);
  auto ones = epoch_batches(window_refs(ds), 19, rng);
  ASSERT_EQ(ones.size(), 1u);
  EXPECT_EQ(ones[0].size(), 20u);
  auto b = gather(ds, bs[0]);
  EXPECT_EQ(b.insole.shape(), (Shape{6, 2, 100, 16, 8}));
  EXPECT_EQ(b.grf.shape(), (Shape{6, 2, 100}));
}

TEST(Batching, ValidationSplitUsesLastSubject) {
  auto ds = tiny(3, 2);
  auto [tr, val] = validation_split(ds);
  EXPECT_EQ(tr.subjects(), (std::vector<int>{1, 2}));
  EXPECT_EQ(val.subjects(), (std::vector<int>{3}));
}

TEST(Config, Validation) {
  auto c = quick(1);
  EXPECT_NO_THROW(c.validate());
  c.batch = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick(0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick(1);
  c.method = "dist";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(default_lr(EncoderKind::R2P1D), 0.001);
  EXPECT_EQ(default_lr(EncoderKind::I3D), 0.01);
  EXPECT_DOUBLE_EQ(TrainConfig::desk(EncoderKind::R2P1D).lr, 1e-4);
  EXPECT_DOUBLE_EQ(TrainConfig::desk().lr, 1e-3);
  EXPECT_EQ(TrainConfig{}.epochs, 200u);
  EXPECT_EQ(TrainConfig{}.batch, 128u);
}

TEST(Teacher, TinySetHalvesTheLoss) {
  // 2 subjects, 40 windows, 20 epochs
  auto ds = tiny(2, 10);
  ASSERT_EQ(ds.size(), 40u);
  auto r = train_teacher(EncoderKind::C3D, ds, {}, quick(20, 16));
  EXPECT_EQ(r.record.train_loss.size(), 20u);
  EXPECT_LT(r.record.final_loss, 0.5 * r.record.initial_loss)
      << r.record.initial_loss << " -> " << r.record.final_loss;
}

TEST(Teacher, OverfitsOneBatch) {
  auto ds = tiny(2, 1);  // 4 windows = one batch
  auto c = quick(200, 4);
  c.lr = 1e-3;
  c.select_best = false;
  auto r = train_teacher(EncoderKind::C3D, ds, {}, c);
  EXPECT_LT(r.record.final_loss, 1e-3);
}

TEST(Teacher, DeterministicUnderSeed) {
  auto ds = tiny(2, 2);
  auto c = quick(2, 4);
  auto a = train_teacher(EncoderKind::C3D, ds, {}, c);
  auto b = train_teacher(EncoderKind::C3D, ds, {}, c);
  EXPECT_EQ(a.record.train_loss, b.record.train_loss);
  EXPECT_TRUE(same_values(a.teacher.net.parameters(), b.teacher.net.parameters()));
  c.seed = 2;
  auto d = train_teacher(EncoderKind::C3D, ds, {}, c);
  EXPECT_NE(a.record.train_loss, d.record.train_loss);
}

TEST(Teacher, BestByValidationIsRestored) {
  auto ds = tiny(3, 2);
  auto [tr, val] = validation_split(ds);
  auto r = train_teacher(EncoderKind::C3D, tr, val, quick(4, 4));
  ASSERT_EQ(r.record.val_loss.size(), 4u);
  const auto best = std::min_element(r.record.val_loss.begin(), r.record.val_loss.end());
  EXPECT_EQ(r.record.best_epoch, static_cast<std::size_t>(best - r.record.val_loss.begin()) + 1);
  const double now = train::detail::dataset_mse(val, 4, [&](auto& x) { return r.teacher.predict(x); });
  EXPECT_NEAR(now, *best, 1e-6);
}

TEST(Wae, ZeroAdversarialWeightMatchesPlainTeacher) {
  auto ds = tiny(2, 2);
  auto c = quick(2, 4);
  auto ae = train_teacher(EncoderKind::C3D, ds, {}, c);
  c.objective = TeacherObjective::WAE;
  c.adv_weight = 0;
  auto wae = train_teacher(EncoderKind::C3D, ds, {}, c);
  EXPECT_EQ(ae.record.train_loss, wae.record.train_loss);
  EXPECT_TRUE(same_values(ae.teacher.net.parameters(), wae.teacher.net.parameters()));
}

TEST(Wae, ReconstructionDropsAndDiscriminatorInRange) {
  auto ds = tiny(2, 10);
  auto c = quick(20, 16);
  c.objective = TeacherObjective::WAE;
  c.adv_weight = 0.01;
  log::quiet() = true;
  auto r = train_teacher(EncoderKind::C3D, ds, {}, c);
  log::quiet() = false;
  // column 0 is L_gt per step; compare the first and last epoch means (3 steps each)
  const auto& st = r.record.step_terms;
  ASSERT_GE(st.size(), 6u);
  const double first = (st[0][0] + st[1][0] + st[2][0]) / 3;
  const double last = (st[st.size() - 1][0] + st[st.size() - 2][0] + st[st.size() - 3][0]) / 3;
  EXPECT_LT(last, 0.5 * first);
  for (const auto& s : st) {
    // L_adv = −mean log χ(h_z) is finite and positive, so χ(h_z) ∈ (0, 1)
    EXPECT_TRUE(std::isfinite(s[1]));
    EXPECT_GT(s[1], 0.0);
  }
}

TEST(Vae, TrainsAndRoundTripsThroughCheckpoint) {
  auto ds = tiny(2, 2);
  auto c = quick(2, 4);
  c.objective = TeacherObjective::VAE;
  c.kl_weight = 1e-4;
  auto r = train_teacher(EncoderKind::C3D, ds, {}, c);
  ASSERT_TRUE(r.teacher.vae.has_value());
  auto dir = std::filesystem::temp_directory_path() / "takd_train_vae";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "t.ckpt", r.teacher.to_checkpoint());
  auto back = Teacher::from_checkpoint(load_checkpoint(dir / "t.ckpt"));
  EXPECT_EQ(back.objective, TeacherObjective::VAE);
  auto b = gather(ds, ordered_batches(ds, 4)[0]);
  auto y0 = r.teacher.predict(b.insole), y1 = back.predict(b.insole);
  EXPECT_EQ(std::memcmp(y0.ptr(), y1.ptr(), y0.numel() * sizeof(float)), 0);
  std::filesystem::remove_all(dir);
}

TEST(Fit, NonFiniteLossAborts) {
  auto ds = tiny(2, 1);
  Tensor<float> p(Shape{1}, 1.0f);
  p.set_requires_grad();
  FitSpec f;
  f.params = {p};
  f.term_names = {"x"};
  f.loss = [&](const Batch&) {
    StepResult r;
    r.loss = scale(sum(p), std::numeric_limits<float>::quiet_NaN());
    r.terms = {0.0};
    return r;
  };
  try {
    fit(f, ds, quick(1, 4), 1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(Fit, RunRecordFiles) {
  auto ds = tiny(2, 1);
  auto c = quick(2, 4);
  c.method = "scratch";
  auto r = distill_student(nullptr, ds, {}, c);
  auto dir = std::filesystem::temp_directory_path() / "takd_train_record";
  r.record.save(dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "run.json"));
  std::ifstream l(dir / "losses.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(l, line)) ++lines;
  EXPECT_EQ(lines, 3u);
  auto j = nlohmann::json::parse(std::ifstream(dir / "run.json"));
  EXPECT_EQ(j["config"]["method"], "scratch");
  EXPECT_EQ(j["train_loss"].size(), 2u);
  std::filesystem::remove_all(dir);
}

class Distill : public ::testing::Test {
 protected:
  void SetUp() override {
    ds = tiny(2, 4);
    teacher.net = build_teacher<float>(EncoderKind::C3D, 100, 5);
  }
  GaitDataset ds;
  Teacher teacher;
};

TEST_F(Distill, ZeroLambdasReproduceScratch) {
  auto c = quick(2, 8);
  c.method = "scratch";
  auto scratch = distill_student(nullptr, ds, {}, c);
  c.method = "takd-ddagger";
  c.weights.lambda1 = c.weights.lambda2 = 0;
  auto zero = distill_student(&teacher, ds, {}, c);
  EXPECT_EQ(scratch.record.train_loss, zero.record.train_loss);
  EXPECT_TRUE(same_values(scratch.student.parameters(), zero.student.parameters()));
}

TEST_F(Distill, SpMidEqualsTakdWithoutKappa) {
  auto c = quick(2, 8);
  c.method = "sp-mid";
  auto sp = distill_student(&teacher, ds, {}, c);
  c.method = "takd";
  c.weights.kappa = 0;
  auto tk = distill_student(&teacher, ds, {}, c);
  EXPECT_EQ(sp.record.train_loss, tk.record.train_loss);
  EXPECT_TRUE(same_values(sp.student.parameters(), tk.student.parameters()));
}

TEST_F(Distill, TeacherUntouchedAndEveryMethodRuns) {
  const auto before = clone_values(teacher.net.parameters());
  for (const auto& m : distill_methods()) {
    auto c = quick(1, 8);
    c.method = m;
    auto r = distill_student(m == "scratch" ? nullptr : &teacher, ds, {}, c);
    EXPECT_TRUE(std::isfinite(r.record.final_loss)) << m;
    EXPECT_EQ(r.record.step_terms.size(), 2u) << m;
  }
  EXPECT_TRUE(same_values(before, teacher.net.parameters()));
  auto c = quick(1, 8);
  c.method = "takd";
  EXPECT_THROW(distill_student(nullptr, ds, {}, c), ConfigError);
}

TEST(Strategy, TwoFreezesTheGrfEncoderAndThreeRuns) {
  auto ds = tiny(2, 2);
  auto c = quick(2, 4);
  auto s2 = run_strategy(2, EncoderKind::C3D, ds, {}, c);
  ASSERT_TRUE(s2.grf.has_value());
  ASSERT_TRUE(s2.grf_record.has_value());
  // the contrastive term is logged and the frozen encoder equals the step-(i) result
  EXPECT_EQ(s2.main.record.term_names[1], "L_contrastive");
  auto again = run_strategy(2, EncoderKind::C3D, ds, {}, c);
  EXPECT_TRUE(same_values(s2.grf->encoder_parameters(), again.grf->encoder_parameters()));
  EXPECT_FALSE(s2.main.record.notes.empty());
  auto s3 = run_strategy(3, EncoderKind::C3D, ds, {}, c);
  EXPECT_EQ(s3.main.record.term_names.size(), 4u);  // L_gt, L_contrastive, L_gt_grf, total
}

TEST(Strategy, FrozenEncoderUnchangedInStepTwo) {
  // train step (i) by hand, then step (ii) through the same entry point and compare
  auto ds = tiny(2, 2);
  auto c = quick(2, 4);
  Model<float> g(grf_autoencoder_config(teacher_config(EncoderKind::C3D)), 9);
  const auto before = clone_values(g.encoder_parameters());
  for (auto& p : g.encoder_parameters()) p.set_requires_grad(false);
  auto r = train::detail::fit_teacher(EncoderKind::C3D, ds, {}, c, {&g, false});
  EXPECT_TRUE(same_values(before, g.encoder_parameters()));
  EXPECT_GT(r.record.step_terms[0][1], 0.0);
}

TEST(Strategy, GrfAutoencoderFitsCleanBatch) {
  // step (i) alone on a clean synthetic GRF batch
  auto p = synth::make_profile(1, 4);
  p.plate_noise = 0;
  auto g = synth::synth_grf_trial(p, gait::Speed::BW, 2.2, 200.0);
  Tensor<float> batch(Shape{2, 2, 100});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t t = 0; t < 100; ++t) batch[(b * 2 + f) * 100 + t] = g[f * g.dim(1) + b * 100 + t] / 1.3f;
  Model<float> ae(grf_autoencoder_config(teacher_config(EncoderKind::C3D)), 2);
  Adam<float> opt(ae.parameters(), 1e-3f);
  double last = 1;
  for (int it = 0; it < 400 && last >= 1e-3; ++it) {
    GradTape<float> tape;
    Tensor<float> l;
    {
      TapeScope<float> s(tape);
      l = loss_gt(ae.forward(batch), batch);
    }
    tape.backward(l);
    opt.step();
    opt.zero_grad();
    last = l.item();
  }
  EXPECT_LT(last, 1e-3);
}

TEST(Inference, PredictDatasetKeepsOrderAndLabels) {
  auto ds = tiny(2, 2);
  auto s = build_student<float>(100, 1);
  auto p = predict_dataset(ds, 3, [&](const Tensor<float>& x) { return s.forward(x); });
  EXPECT_EQ(p.pred.shape(), (Shape{8, 2, 100}));
  EXPECT_EQ(p.subject, (std::vector<int>{1, 1, 1, 1, 2, 2, 2, 2}));
  EXPECT_EQ(std::memcmp(p.target.ptr(), ds.trials[0].grf.ptr(), 2 * 2 * 100 * sizeof(float)), 0);
}

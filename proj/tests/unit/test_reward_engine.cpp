#include <gtest/gtest.h>

#include <chartrl/detail/rng.hpp>
#include <chartrl/reward_engine.hpp>

#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace {

using namespace chartrl;
using chartrl::testing::fixture;
using chartrl::testing::slurp;
using chartrl::testing::TempDir;

const std::string kImport = "import matplotlib.pyplot as plt\n";

CorpusRecord record(const std::string& id, const std::string& body) { return CorpusRecord{id, kImport + body, {}, {}}; }

class DownRenderer : public Renderer {
 public:
  RenderStatus render(const PlotScript&) override { throw RendererUnavailable("connection refused"); }
};

class FixedRenderer : public Renderer {
 public:
  explicit FixedRenderer(RenderStatus s) : status_(std::move(s)) {}
  RenderStatus render(const PlotScript&) override {
    ++calls;
    return status_;
  }
  int calls = 0;

 private:
  RenderStatus status_;
};

TEST(TotalReward, WorkedExamples) {
  const auto sched = StageSchedule::two_stage();
  EXPECT_EQ(total_reward(0.8, 0.6, 1, sched.find("stage2").weights), 1.2);
  EXPECT_NEAR(total_reward(0.86, 0.0, 1, sched.find("stage1").weights), 1.36, 1e-12);
  EXPECT_EQ(total_reward(0, 0, 0, sched.find("stage1").weights), 0.0);
  EXPECT_EQ(total_reward(0, 0, 0, sched.find("stage2").weights), 0.0);
}

TEST(TotalReward, DefaultScheduleShape) {
  const auto sched = StageSchedule::two_stage();
  ASSERT_EQ(sched.stages.size(), 2u);
  EXPECT_EQ(sched.stages[0].name, "stage1");
  EXPECT_EQ(sched.stages[0].sample_budget, 22000);
  EXPECT_EQ(sched.stages[1].sample_budget, 11000);
  EXPECT_EQ(sched.stages[0].weights.w_vis, 0.0);
  EXPECT_EQ(sched.stages[1].weights.w_vis, 0.5);
  EXPECT_NO_THROW(sched.validate());
  EXPECT_THROW(sched.find("stage3"), ValidationError);
}

TEST(TotalReward, LinearInEachComponentAndBounded) {
  PortableRng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const RewardWeights w{rng.uniform() * 2, rng.uniform() * 2, rng.uniform() * 2};
    const double t = rng.uniform(), v = rng.uniform();
    const int e = rng.uniform() < 0.5 ? 0 : 1;
    const double base = total_reward(t, v, e, w);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, w.sum() + 1e-12);
    const double d = rng.uniform() * 0.5;
    EXPECT_NEAR(total_reward(t + d, v, e, w) - base, w.w_text_total * d, 1e-12);
    EXPECT_NEAR(total_reward(t, v + d, e, w) - base, w.w_vis * d, 1e-12);
    EXPECT_NEAR(total_reward(t, v, 1, w) - total_reward(t, v, 0, w), w.w_exec, 1e-12);
  }
}

TEST(Schedule, Validation) {
  StageSchedule s;
  EXPECT_THROW(s.validate(), ValidationError);
  s.stages = {{"a", {0, 0, 0}, 1}};
  EXPECT_THROW(s.validate(), ValidationError);
  s.stages = {{"a", {-1, 1, 0}, 1}};
  EXPECT_THROW(s.validate(), ValidationError);
  s.stages = {{"a", {1, 0, 0}, 1}, {"a", {1, 0, 0}, 1}};
  EXPECT_THROW(s.validate(), ValidationError);
  s.stages = {{"a", {1, 0, 0}, -1}};
  EXPECT_THROW(s.validate(), ValidationError);
}

class ScoreSample : public ::testing::Test {
 protected:
  StubRenderer stub;
  ScriptedJudge inner{std::array<int, 6>{6, 6, 6, 6, 6, 6}};
  CountingJudge judge{inner};
  StageSchedule sched = StageSchedule::two_stage();
  ScoringDeps deps() {
    ScoringDeps d;
    d.renderer = &stub;
    d.judge = &judge;
    return d;
  }
  CorpusRecord ref = record("r", "plt.plot([1, 2, 3], [4, 5, 6])\nplt.title('T')\n");
};

TEST_F(ScoreSample, Stage1IdentityIsOnePointFiveWithoutJudge) {
  auto d = deps();
  const auto b = score_sample(ref, ref.script(ScriptOrigin::candidate), "stage1", sched, d);
  EXPECT_EQ(b.textual.accuracy, 1.0);
  EXPECT_EQ(b.exec, 1);
  EXPECT_FALSE(b.visual.has_value());
  EXPECT_EQ(*b.total, 1.5);
  EXPECT_EQ(judge.calls(), 0);
  EXPECT_EQ(b.stage, "stage1");
}

TEST_F(ScoreSample, Stage2NonRenderingCandidate) {
  FixedRenderer broken(RenderStatus::failure(RenderOutcome::runtime_error, "boom"));
  auto d = deps();
  d.renderer = &broken;
  const auto cand = PlotScript{kImport + "plt.plot([1, 2, 3], [4, 5, 7])\n", ScriptOrigin::candidate};
  const auto b = score_sample(ref, cand, "stage2", sched, d);
  EXPECT_EQ(*b.visual, 0.0);
  EXPECT_EQ(*b.exec, 0);
  EXPECT_NEAR(*b.total, 0.5 * b.textual.accuracy, 1e-12);
  EXPECT_GT(b.textual.accuracy, 0.0);
  EXPECT_EQ(judge.calls(), 0);
  EXPECT_EQ(broken.calls, 1);
}

TEST_F(ScoreSample, Stage2RenderedCandidateIsJudged) {
  auto d = deps();
  const auto b = score_sample(ref, ref.script(ScriptOrigin::candidate), "stage2", sched, d);
  EXPECT_DOUBLE_EQ(*b.visual, 0.6);
  EXPECT_EQ(b.judge_calls, 1);
  EXPECT_NEAR(*b.total, 0.5 * 1.0 + 0.5 * 0.6 + 0.5, 1e-12);
  EXPECT_NEAR(*b.total, total_reward(b.textual.accuracy, *b.visual, *b.exec, sched.find("stage2").weights), 1e-12);
}

TEST_F(ScoreSample, UnparseableCandidate) {
  auto d = deps();
  const auto b = score_sample(ref, PlotScript{kImport + "plt.plot([1, 2\n", ScriptOrigin::candidate}, "stage1", sched, d);
  EXPECT_FALSE(b.parsed);
  EXPECT_EQ(b.textual.accuracy, 0.0);
  EXPECT_EQ(b.exec, 0);
  EXPECT_EQ(*b.total, 0.0);
  EXPECT_FALSE(b.diagnostics.empty());
}

TEST_F(ScoreSample, ConfigurationErrors) {
  ScoringDeps none;
  EXPECT_THROW(score_sample(ref, ref.script(), "stage1", sched, none), ValidationError);
  auto d = deps();
  d.judge = nullptr;
  EXPECT_THROW(score_sample(ref, ref.script(), "stage2", sched, d), ValidationError);
  EXPECT_THROW(score_sample(ref, ref.script(), "nosuch", sched, d), ValidationError);
  const auto bad_ref = record("bad", "plt.plot([1\n");
  EXPECT_THROW(score_sample(bad_ref, ref.script(), "stage1", sched, d), ValidationError);

  StageSchedule textual_only{{{"t", {1, 0, 0}, 1}}};
  EXPECT_EQ(*score_sample(ref, ref.script(), "t", textual_only, none).total, 1.0);
}

TEST_F(ScoreSample, InfrastructureFailureLeavesTheSampleUnscored) {
  DownRenderer down;
  auto d = deps();
  d.renderer = &down;
  const auto b = score_sample(ref, ref.script(), "stage1", sched, d);
  EXPECT_TRUE(b.unscored);
  EXPECT_FALSE(b.total.has_value());

  ScriptedJudge silent;
  auto d2 = deps();
  d2.judge = &silent;
  d2.judge_config.max_retries = 0;
  const auto b2 = score_sample(ref, ref.script(), "stage2", sched, d2);
  EXPECT_TRUE(b2.unscored);
  EXPECT_FALSE(b2.total.has_value());
}

TEST_F(ScoreSample, ReferenceImageFromDiskWhenPresent) {
  TempDir dir;
  const ImageBytes png = encode_png(Raster(4, 4, 0));
  std::ofstream(dir.path() / "ref.png", std::ios::binary).write(reinterpret_cast<const char*>(png.data()),
                                                                  static_cast<std::streamsize>(png.size()));
  ScriptedJudge recorder;
  CountingJudge counted(recorder);
  auto d = deps();
  d.judge = &counted;
  d.image_root = dir.path();
  auto with_image = ref;
  with_image.image_path = "ref.png";
  const auto st = stub.render(ref.script());
  recorder.script(*st.image, {9, 9, 9, 9, 9, 9});
  const auto b = score_sample(with_image, ref.script(), "stage2", sched, d);
  EXPECT_DOUBLE_EQ(*b.visual, 0.9);
}

TEST(Histogram, Bins) {
  EXPECT_EQ(histogram_bin(0.0, 1.5), 0);
  EXPECT_EQ(histogram_bin(1.5, 1.5), BatchReport::kBins - 1);
  EXPECT_EQ(histogram_bin(0.08, 1.5), 1);
  EXPECT_EQ(histogram_bin(0.07, 1.5), 0);
  EXPECT_EQ(histogram_bin(-1.0, 1.5), 0);
  EXPECT_EQ(histogram_bin(0.3, 0.0), 0);
}

class EvaluateCorpus : public ::testing::Test {
 protected:
  std::vector<CorpusRecord> refs = read_corpus(fixture("batch_refs.jsonl"));
  std::vector<CorpusRecord> cands = read_corpus(fixture("batch_cands.jsonl"));
  StubRenderer stub;
  ScriptedJudge judge{std::array<int, 6>{7, 7, 7, 7, 7, 7}};
  StageSchedule sched = StageSchedule::two_stage();
  ScoringDeps deps() {
    ScoringDeps d;
    d.renderer = &stub;
    d.judge = &judge;
    return d;
  }
};

TEST_F(EvaluateCorpus, ExecRateAndHistogram) {
  auto d = deps();
  const BatchReport r = evaluate_corpus(refs, cands, "stage1", sched, d, 2);
  EXPECT_EQ(r.n, 10u);
  EXPECT_DOUBLE_EQ(r.exec_rate, 0.7);
  EXPECT_EQ(r.scored, 10u);
  std::size_t binned = 0;
  for (auto c : r.histogram) binned += c;
  EXPECT_EQ(binned, r.scored);
  EXPECT_EQ(r.histogram_max, 1.5);
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_LT(r.rows[i - 1].id, r.rows[i].id);
  EXPECT_DOUBLE_EQ(r.means.at("exec"), 0.7);
}

TEST_F(EvaluateCorpus, IdentityHasUnitAccuracy) {
  auto d = deps();
  const BatchReport r = evaluate_corpus(refs, refs, "stage2", sched, d);
  EXPECT_DOUBLE_EQ(r.means.at("accuracy"), 1.0);
  EXPECT_DOUBLE_EQ(r.exec_rate, 1.0);
}

TEST_F(EvaluateCorpus, RejectsEmptyAndMisalignedCorpora) {
  auto d = deps();
  EXPECT_THROW(evaluate_corpus({}, {}, "stage1", sched, d), ValidationError);
  auto short_cands = cands;
  short_cands.erase(short_cands.begin() + 3);
  short_cands.push_back(record("zz", "plt.plot([1])\n"));
  try {
    evaluate_corpus(refs, short_cands, "stage1", sched, d);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("s03"), std::string::npos);
    EXPECT_NE(msg.find("zz"), std::string::npos);
  }
}

TEST_F(EvaluateCorpus, ReportFilesAreByteIdentical) {
  TempDir a, b;
  auto d1 = deps();
  write_report(evaluate_corpus(refs, cands, "stage2", sched, d1, 1), a.path());
  auto shuffled = cands;
  std::reverse(shuffled.begin(), shuffled.end());
  auto d2 = deps();
  write_report(evaluate_corpus(refs, shuffled, "stage2", sched, d2, 3), b.path());
  EXPECT_EQ(slurp(a.path() / "report.jsonl"), slurp(b.path() / "report.jsonl"));
  EXPECT_EQ(slurp(a.path() / "summary.json"), slurp(b.path() / "summary.json"));

  const auto summary = nlohmann::json::parse(slurp(a.path() / "summary.json"));
  EXPECT_EQ(summary["schema"], "reward-report/1");
  EXPECT_EQ(summary["histogram"]["counts"].size(), 20u);
  std::istringstream lines(slurp(a.path() / "report.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto row = nlohmann::json::parse(line);
    EXPECT_EQ(row["schema"], "reward-report/1");
    ++n;
  }
  EXPECT_EQ(n, 10);
}

}  // namespace

#include <gtest/gtest.h>

#include <chartrl/config.hpp>
#include <chartrl/corpus.hpp>

#include <map>
#include <set>
#include <sstream>

#include "test_support.hpp"

namespace {

using namespace chartrl;
using chartrl::testing::fixture;
using chartrl::testing::load_json;
using chartrl::testing::TempDir;

const std::string kImport = "import matplotlib.pyplot as plt\n";

CorpusRecord record(const std::string& id, const std::string& body) { return CorpusRecord{id, kImport + body, {}, {}}; }

std::vector<std::string> ids(const std::vector<CorpusRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.id);
  return out;
}

std::map<std::string, double> fixture_scores() {
  std::map<std::string, double> scores;
  const auto j = load_json(fixture("filter_judge_scores.json"));
  for (const auto& [id, v] : j.items()) scores[id] = v.get<double>();
  return scores;
}

AppConfig fixture_config() {
  AppConfig cfg;
  load_config_file(cfg, fixture("filter_config.toml"));
  return cfg;
}

TEST(CodeFilter, SpecExamples) {
  const auto nested = record("n", "data = {\"a\": {\"b\": 1}}\nplt.plot([1, 2])\n");
  const auto flat = record("f", "x = [1, 2, 3]\ny = [4, 5, 6]\nplt.plot(x, y)\n");
  const auto broken = record("p", "plt.plot([1, 2\n");
  const auto r = filter_code_content({nested, flat, broken});
  EXPECT_EQ(ids(r.kept), (std::vector<std::string>{"f"}));
  std::map<std::string, FilterDecision> by;
  for (const auto& d : r.decisions) by[d.record_id] = d;
  EXPECT_EQ(by["n"].reason, "data_format");
  EXPECT_EQ(by["n"].stage, FilterStage::data_format);
  EXPECT_FALSE(by["n"].keep);
  EXPECT_EQ(by["p"].reason, "parse");
  EXPECT_EQ(by["f"].stage, FilterStage::chart_type);
  EXPECT_TRUE(by["f"].keep);
  EXPECT_EQ(r.kept[0].meta.chart_types, (std::vector<std::string>{"line"}));
  EXPECT_EQ(r.kept[0].meta.data_format, "flat_ok");
}

TEST(CodeFilter, CapKeepsTheFirstInStableOrder) {
  std::vector<CorpusRecord> corpus;
  for (int i = 0; i < 100; ++i) {
    corpus.push_back(record("l" + std::to_string(1000 + i), "plt.plot([1, 2], [" + std::to_string(i) + ", 3])\n"));
  }
  DiversityCaps caps;
  caps.uniform = 50;
  const auto r = filter_code_content(corpus, caps, 3);
  ASSERT_EQ(r.kept.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(r.kept[i].id, corpus[i].id);
  std::size_t capped = 0;
  for (const auto& d : r.decisions) capped += d.reason == "type_cap" ? 1 : 0;
  EXPECT_EQ(capped, 50u);
}

TEST(CodeFilter, CapPrecedenceAndDefault) {
  DiversityCaps caps;
  EXPECT_FALSE(caps.cap_for("line", 3).has_value());
  caps.target_size = 10;
  EXPECT_EQ(caps.cap_for("line", 3), 4u);
  caps.uniform = 7;
  EXPECT_EQ(caps.cap_for("line", 3), 7u);
  caps.per_type["line"] = 2;
  EXPECT_EQ(caps.cap_for("line", 3), 2u);
  EXPECT_EQ(caps.cap_for("bar", 3), 7u);
}

TEST(CodeFilter, CompositeRecordsCountAgainstEveryType) {
  DiversityCaps caps;
  caps.per_type["bar"] = 1;
  const auto r = filter_code_content({record("a", "plt.bar(['x'], [1])\nplt.plot([1], [2])\n"),
                                      record("b", "plt.plot([1, 2], [3, 4])\n"),
                                      record("c", "plt.bar(['y'], [2])\n"), record("d", "x = [1, 2]\n")},
                                     caps);
  EXPECT_EQ(ids(r.kept), (std::vector<std::string>{"a", "b"}));
  std::map<std::string, std::string> reason;
  for (const auto& d : r.decisions) reason[d.record_id] = d.reason;
  EXPECT_EQ(reason["c"], "type_cap");
  EXPECT_EQ(reason["d"], "no_chart_type");
}

TEST(CodeFilter, InputMetaIsNeverTrusted) {
  auto r = record("a", "plt.bar(['x'], [1])\n");
  r.meta.chart_types = {"pie"};
  r.meta.data_format = "nested";
  r.meta.source = "crawl";
  const auto out = filter_code_content({r});
  ASSERT_EQ(out.kept.size(), 1u);
  EXPECT_EQ(out.kept[0].meta.chart_types, (std::vector<std::string>{"bar"}));
  EXPECT_EQ(out.kept[0].meta.source, "crawl");
}

class Fixture200 : public ::testing::Test {
 protected:
  std::vector<CorpusRecord> corpus = read_corpus(fixture("filter_corpus.jsonl"));
  AppConfig cfg = fixture_config();
  ScriptedQualityJudge judge{fixture_scores()};
  StubRenderer stub;
};

TEST_F(Fixture200, PartitionAndCountConservation) {
  const auto code = filter_code_content(corpus, cfg.caps, 2);
  const auto vis = filter_visual_quality(code.kept, stub, judge, cfg.quality_threshold, {}, {}, 2);
  ASSERT_FALSE(vis.halted);

  std::map<std::string, std::map<FilterStage, int>> per_stage;
  for (const auto& d : code.decisions) ++per_stage[d.record_id][d.stage];
  for (const auto& d : vis.decisions) ++per_stage[d.record_id][d.stage];
  EXPECT_EQ(per_stage.size(), corpus.size());
  for (const auto& [id, stages] : per_stage) {
    for (const auto& [s, n] : stages) EXPECT_EQ(n, 1) << id << " " << to_string(s);
  }

  std::size_t dropped = 0;
  std::set<std::string> seen;
  for (const auto* log : {&code.decisions, &vis.decisions}) {
    for (const auto& d : *log) {
      if (!d.keep) {
        ++dropped;
        EXPECT_TRUE(seen.insert(d.record_id).second) << d.record_id << " dropped twice";
      }
    }
  }
  EXPECT_EQ(dropped + vis.kept.size(), corpus.size());

  EXPECT_LT(code.kept.size(), corpus.size());
  EXPECT_LE(vis.kept.size(), code.kept.size());
}

TEST_F(Fixture200, KeptRecordsAreFlatUnderAnIndependentReclassification) {
  const auto code = filter_code_content(corpus, cfg.caps);
  for (const auto& r : code.kept) EXPECT_EQ(classify_data_format(r.script()), DataFormat::flat_ok) << r.id;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : code.kept) {
    for (const auto& t : std::set<std::string>(r.meta.chart_types.begin(), r.meta.chart_types.end())) ++counts[t];
  }
  EXPECT_LE(counts["pie"], 5u);
}

TEST_F(Fixture200, IdempotentOnItsOwnOutput) {
  const auto code = filter_code_content(corpus, cfg.caps);
  const auto vis = filter_visual_quality(code.kept, stub, judge, cfg.quality_threshold);
  const auto code2 = filter_code_content(vis.kept, cfg.caps);
  const auto vis2 = filter_visual_quality(code2.kept, stub, judge, cfg.quality_threshold);
  EXPECT_EQ(ids(vis2.kept), ids(vis.kept));
  for (const auto& d : code2.decisions) EXPECT_TRUE(d.keep) << d.record_id;
  for (const auto& d : vis2.decisions) EXPECT_TRUE(d.keep) << d.record_id;
}

TEST_F(Fixture200, DeterministicAcrossWorkerCounts) {
  const auto a = filter_code_content(corpus, cfg.caps, 1);
  const auto b = filter_code_content(corpus, cfg.caps, 4);
  EXPECT_EQ(a.decisions, b.decisions);
  const auto va = filter_visual_quality(a.kept, stub, judge, 0.7, {}, {}, 1);
  const auto vb = filter_visual_quality(a.kept, stub, judge, 0.7, {}, {}, 4);
  EXPECT_EQ(va.decisions, vb.decisions);
}

class FixedQuality : public QualityJudge {
 public:
  explicit FixedQuality(double q) : q_(q) {}
  double quality(const ImageBytes&, const std::string&) override {
    ++calls;
    return q_;
  }
  int calls = 0;

 private:
  double q_;
};

TEST(VisualFilter, ThresholdAndRenderFailure) {
  StubRenderer stub;
  const auto good = record("g", "plt.plot([1, 2], [3, 4])\n");
  const auto blank = record("b", "x = [1, 2]\n");
  FixedQuality high(0.9), low(0.5), edge(0.7);
  EXPECT_EQ(filter_visual_quality({good}, stub, high).kept.size(), 1u);
  const auto dropped = filter_visual_quality({good}, stub, low);
  EXPECT_TRUE(dropped.kept.empty());
  EXPECT_EQ(dropped.decisions[0].reason, "quality");
  EXPECT_EQ(filter_visual_quality({good}, stub, edge).kept.size(), 1u);

  const auto failed = filter_visual_quality({blank}, stub, high);
  EXPECT_EQ(failed.decisions[0].reason, "render");
  EXPECT_FALSE(failed.decisions[0].keep);
  EXPECT_EQ(high.calls, 1);

  EXPECT_THROW(filter_visual_quality({good}, stub, high, 1.5), ValidationError);
}

TEST(VisualFilter, ImageOnDiskSkipsTheRenderer) {
  TempDir dir;
  const ImageBytes png = encode_png(Raster(2, 2));
  std::ofstream(dir.path() / "a.png", std::ios::binary)
      .write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  auto r = record("a", "x = [1]\n");  // would fail to render
  r.image_path = "a.png";
  StubRenderer stub;
  FixedQuality q(0.8);
  const auto out = filter_visual_quality({r}, stub, q, 0.7, {}, dir.path());
  EXPECT_EQ(out.kept.size(), 1u);
}

TEST_F(Fixture200, HaltThenResumeMatchesAnUninterruptedRun) {
  const auto code = filter_code_content(corpus, cfg.caps);
  const auto full = filter_visual_quality(code.kept, stub, judge, cfg.quality_threshold);

  auto partial_scores = fixture_scores();
  const std::string victim = code.kept[code.kept.size() / 2].id;
  partial_scores.erase(victim);
  ScriptedQualityJudge flaky(partial_scores);
  const auto halted = filter_visual_quality(code.kept, stub, flaky, cfg.quality_threshold, {}, {}, 3);
  ASSERT_TRUE(halted.halted);
  EXPECT_NE(halted.halt_reason.find(victim), std::string::npos);
  EXPECT_EQ(halted.decisions.size(), code.kept.size() / 2);
  for (std::size_t i = 0; i < halted.decisions.size(); ++i) EXPECT_EQ(halted.decisions[i], full.decisions[i]);

  TempDir dir;
  write_decision_log(dir.path() / "log.partial", halted.decisions);
  const auto prior = read_decision_log(dir.path() / "log.partial");
  EXPECT_EQ(prior, halted.decisions);

  ScriptedQualityJudge healthy(fixture_scores());
  const auto resumed = filter_visual_quality(code.kept, stub, healthy, cfg.quality_threshold, prior);
  EXPECT_FALSE(resumed.halted);
  EXPECT_EQ(resumed.decisions, full.decisions);
  EXPECT_EQ(ids(resumed.kept), ids(full.kept));
  int judged_after_halt = 0;
  for (std::size_t i = prior.size(); i < full.decisions.size(); ++i) {
    judged_after_halt += full.decisions[i].reason == "render" ? 0 : 1;
  }
  EXPECT_EQ(healthy.calls(), judged_after_halt);
}

TEST(Split, BudgetsAndDisjointness) {
  std::vector<CorpusRecord> kept;
  for (int i = 0; i < 33; ++i) kept.push_back(record("r" + std::to_string(i), "plt.plot([1])\n"));
  const auto s = split_corpus(kept, 22, 11, 5);
  EXPECT_EQ(s.rl_stage1.size(), 22u);
  EXPECT_EQ(s.rl_stage2.size(), 11u);
  EXPECT_TRUE(s.sft.empty());
  std::set<std::string> all;
  for (const auto* part : {&s.rl_stage1, &s.rl_stage2, &s.sft}) {
    for (const auto& r : *part) EXPECT_TRUE(all.insert(r.id).second);
  }
  EXPECT_EQ(all.size(), 33u);
  EXPECT_EQ(s.manifest["seed"], 5);
  EXPECT_EQ(s.manifest["rl_stage1"], 22);

  const auto again = split_corpus(kept, 22, 11, 5);
  EXPECT_EQ(ids(again.rl_stage1), ids(s.rl_stage1));
  EXPECT_EQ(ids(again.rl_stage2), ids(s.rl_stage2));
  EXPECT_NE(ids(split_corpus(kept, 22, 11, 6).rl_stage1), ids(s.rl_stage1));

  EXPECT_THROW(split_corpus(kept, 30, 10, 5), ValidationError);
  EXPECT_EQ(split_corpus(kept, 10, 5, 1).sft.size(), 18u);
}

TEST(Split, BudgetsFromFraction) {
  EXPECT_EQ(budgets_from_fraction(33, 1.0), (std::pair<std::size_t, std::size_t>{22, 11}));
  EXPECT_EQ(budgets_from_fraction(100, 0.3), (std::pair<std::size_t, std::size_t>{20, 10}));
  EXPECT_EQ(budgets_from_fraction(10, 0.0), (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_THROW(budgets_from_fraction(10, 1.5), ValidationError);
}

TEST(CorpusIo, RoundTripAndErrors) {
  auto a = record("a", "plt.plot([1])\n");
  a.image_path = "img/a.png";
  a.meta.source = "s";
  std::ostringstream out;
  write_corpus(out, {a, record("b", "plt.bar(['x'], [1])\n")});
  std::istringstream in(out.str());
  const auto back = parse_corpus(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].code, a.code);
  EXPECT_EQ(back[0].image_path, a.image_path);
  EXPECT_EQ(back[0].meta.source, "s");
  EXPECT_FALSE(back[1].image_path.has_value());

  auto parse_text = [](const std::string& t) {
    std::istringstream s(t);
    return parse_corpus(s);
  };
  EXPECT_THROW(parse_text("{\"id\":\"a\",\"code\":\"x\"}\n{\"id\":\"a\",\"code\":\"y\"}\n"), ValidationError);
  EXPECT_THROW(parse_text("{\"code\":\"x\"}\n"), ValidationError);
  EXPECT_THROW(parse_text("{\"id\":\"a\"}\n"), ValidationError);
  EXPECT_THROW(parse_text("not json\n"), ValidationError);
  EXPECT_EQ(parse_text("\n  \n").size(), 0u);
  EXPECT_THROW(read_corpus("/nonexistent/corpus.jsonl"), ValidationError);
}

TEST(DecisionLog, RoundTrip) {
  TempDir dir;
  const std::vector<FilterDecision> log = {{"a", FilterStage::data_format, false, "data_format", "nested"},
                                           {"b", FilterStage::chart_type, true, "ok", ""},
                                           {"b", FilterStage::visual_quality, true, "ok", "0.9000"}};
  write_decision_log(dir.path() / "d.jsonl", log);
  EXPECT_EQ(read_decision_log(dir.path() / "d.jsonl"), log);
  EXPECT_THROW(filter_stage_from_string("other"), ValidationError);
}

}  // namespace

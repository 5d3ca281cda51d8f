#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "ff2/eval.hpp"
#include "ff2/rng.hpp"
#include "support/oracles.hpp"

using ff2::EvalReport;
using ff2::Label;
using ff2::Rng;

namespace {

std::vector<Label> random_labels(Rng& rng, std::size_t n) {
  std::vector<Label> out(n);
  for (Label& l : out) l = static_cast<Label>(rng.below(4));
  return out;
}

}  // namespace

TEST_CASE("score: perfect predictions give all ones", "[eval]") {
  Rng rng(1);
  const std::vector<Label> gold = random_labels(rng, 100);
  EvalReport report = ff2::score(gold, gold);
  for (const ff2::ClassMetrics& m : report.per_class) {
    if (m.support() == 0) continue;
    REQUIRE(m.precision == 1.0);
    REQUIRE(m.recall == 1.0);
    REQUIRE(m.f1 == 1.0);
  }
  REQUIRE(report.overall.precision == 1.0);
  REQUIRE(report.overall.recall == 1.0);
  REQUIRE(report.overall.f1 == 1.0);
}

TEST_CASE("score: TP=2 FP=1 FN=1 gives P=R=F1=2/3", "[eval]") {
  // comma: two correct, one spurious, one missed
  const std::vector<Label> gold = {Label::kComma, Label::kComma, Label::kComma,
                                   Label::kO, Label::kO};
  const std::vector<Label> pred = {Label::kComma, Label::kComma, Label::kO,
                                   Label::kComma, Label::kO};
  EvalReport report = ff2::score(pred, gold);
  const ff2::ClassMetrics& m = report.per_class[0];
  REQUIRE(m.tp == 2);
  REQUIRE(m.fp == 1);
  REQUIRE(m.fn == 1);
  REQUIRE_THAT(m.precision, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE_THAT(m.recall, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE_THAT(m.f1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
}

TEST_CASE("score: every cell matches a naive recount on random data", "[eval]") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Label> gold = random_labels(rng, 200);
    const std::vector<Label> pred = random_labels(rng, 200);
    EvalReport report = ff2::score(pred, gold);
    const oracles::NaiveCounts naive = oracles::naive_recount(pred, gold);
    long long tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < 3; ++c) {
      REQUIRE(report.per_class[static_cast<std::size_t>(c)].tp == naive.tp[c]);
      REQUIRE(report.per_class[static_cast<std::size_t>(c)].fp == naive.fp[c]);
      REQUIRE(report.per_class[static_cast<std::size_t>(c)].fn == naive.fn[c]);
      tp += naive.tp[c];
      fp += naive.fp[c];
      fn += naive.fn[c];
    }
    REQUIRE(report.overall.tp == tp);
    REQUIRE(report.overall.fp == fp);
    REQUIRE(report.overall.fn == fn);
    // micro identity: overall P is pooled TP / (TP + FP)
    if (tp + fp > 0) {
      REQUIRE_THAT(report.overall.precision,
                   Catch::Matchers::WithinAbs(
                       static_cast<double>(tp) / static_cast<double>(tp + fp), 1e-15));
    }
    if (tp + fn > 0) {
      REQUIRE_THAT(report.overall.recall,
                   Catch::Matchers::WithinAbs(
                       static_cast<double>(tp) / static_cast<double>(tp + fn), 1e-15));
    }
  }
}

TEST_CASE("score: swapping pred and gold swaps P and R, F1 unchanged", "[eval]") {
  Rng rng(3);
  const std::vector<Label> gold = random_labels(rng, 300);
  const std::vector<Label> pred = random_labels(rng, 300);
  EvalReport fwd = ff2::score(pred, gold);
  EvalReport rev = ff2::score(gold, pred);
  for (std::size_t c = 0; c < 3; ++c) {
    REQUIRE(fwd.per_class[c].precision == rev.per_class[c].recall);
    REQUIRE(fwd.per_class[c].recall == rev.per_class[c].precision);
    REQUIRE_THAT(fwd.per_class[c].f1,
                 Catch::Matchers::WithinAbs(rev.per_class[c].f1, 1e-15));
  }
  REQUIRE(fwd.overall.precision == rev.overall.recall);
  REQUIRE(fwd.overall.recall == rev.overall.precision);
}

TEST_CASE("score: correctly-predicted O tokens change nothing", "[eval]") {
  Rng rng(4);
  std::vector<Label> gold = random_labels(rng, 150);
  std::vector<Label> pred = random_labels(rng, 150);
  EvalReport before = ff2::score(pred, gold);
  for (int i = 0; i < 500; ++i) {
    gold.push_back(Label::kO);
    pred.push_back(Label::kO);
  }
  EvalReport after = ff2::score(pred, gold);
  for (std::size_t c = 0; c < 3; ++c) {
    REQUIRE(before.per_class[c].precision == after.per_class[c].precision);
    REQUIRE(before.per_class[c].recall == after.per_class[c].recall);
    REQUIRE(before.per_class[c].f1 == after.per_class[c].f1);
  }
  REQUIRE(before.overall.f1 == after.overall.f1);
}

TEST_CASE("score: length mismatch is a data error", "[eval]") {
  REQUIRE_THROWS_AS(ff2::score({Label::kO}, {Label::kO, Label::kO}),
                    ff2::DataError);
}

TEST_CASE("report_table: layout, perfect scores, zero-support footnote", "[eval]") {
  SECTION("all-perfect report renders 100.0 everywhere") {
    const std::vector<Label> gold = {Label::kComma, Label::kPeriod,
                                     Label::kQuestion, Label::kO};
    const std::string table = ff2::report_table(ff2::score(gold, gold));
    std::size_t count = 0, at = 0;
    while ((at = table.find("100.0", at)) != std::string::npos) {
      ++count;
      at += 5;
    }
    REQUIRE(count == 12);
  }
  SECTION("column order follows the benchmark layout") {
    const std::string table =
        ff2::report_table(ff2::score({Label::kO}, {Label::kO}));
    const std::size_t comma = table.find("Comma");
    const std::size_t period = table.find("Period");
    const std::size_t question = table.find("Question");
    const std::size_t overall = table.find("Overall");
    REQUIRE(comma != std::string::npos);
    REQUIRE(comma < period);
    REQUIRE(period < question);
    REQUIRE(question < overall);
  }
  SECTION("zero-support class reports 0.0 with a support footnote") {
    const std::vector<Label> gold = {Label::kComma, Label::kO};
    const std::vector<Label> pred = {Label::kComma, Label::kO};
    EvalReport report = ff2::score(pred, gold);
    REQUIRE(report.per_class[2].support() == 0);
    REQUIRE(report.per_class[2].f1 == 0.0);
    const std::string table = ff2::report_table(report);
    REQUIRE(table.find("QUESTION has support 0") != std::string::npos);
  }
}

TEST_CASE("report_json: carries micro and macro aggregates plus counts", "[eval]") {
  Rng rng(5);
  const std::vector<Label> gold = random_labels(rng, 100);
  const std::vector<Label> pred = random_labels(rng, 100);
  EvalReport report = ff2::score(pred, gold);
  nlohmann::json j = ff2::report_json(report);
  REQUIRE(j.contains("overall_micro"));
  REQUIRE(j.contains("overall_macro"));
  REQUIRE(j["per_class"]["comma"]["tp"] == report.per_class[0].tp);
  REQUIRE(j["overall_micro"]["f1"] == report.overall.f1);
  REQUIRE(j["token_count"] == 100);
}

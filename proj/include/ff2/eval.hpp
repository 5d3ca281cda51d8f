#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "ff2/data.hpp"
#include "ff2/errors.hpp"

namespace ff2 {

// The three punctuation classes scored in reports; O participates only as a
// source/target of errors and is excluded from every aggregate.
constexpr std::array<Label, 3> kScoredClasses = {Label::kComma, Label::kPeriod,
                                                 Label::kQuestion};

struct ClassMetrics {
  long long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;

  long long support() const { return tp + fn; }

  void finalize() {
    precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1 = (precision + recall) > 0.0
             ? 2.0 * precision * recall / (precision + recall)
             : 0.0;
  }
};

struct EvalReport {
  std::array<ClassMetrics, 3> per_class;  // comma, period, question
  ClassMetrics overall;                   // micro average, O excluded
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  long long token_count = 0;
};

inline EvalReport score(const std::vector<Label>& pred,
                        const std::vector<Label>& gold) {
  if (pred.size() != gold.size()) {
    throw DataError("score: predicted " + std::to_string(pred.size()) +
                    " labels vs " + std::to_string(gold.size()) + " gold");
  }
  EvalReport report;
  report.token_count = static_cast<long long>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t c = 0; c < kScoredClasses.size(); ++c) {
      const Label cls = kScoredClasses[c];
      if (pred[i] == cls && gold[i] == cls) ++report.per_class[c].tp;
      if (pred[i] == cls && gold[i] != cls) ++report.per_class[c].fp;
      if (pred[i] != cls && gold[i] == cls) ++report.per_class[c].fn;
    }
  }
  for (ClassMetrics& m : report.per_class) {
    m.finalize();
    report.overall.tp += m.tp;
    report.overall.fp += m.fp;
    report.overall.fn += m.fn;
    report.macro_precision += m.precision / 3.0;
    report.macro_recall += m.recall / 3.0;
    report.macro_f1 += m.f1 / 3.0;
  }
  report.overall.finalize();
  return report;
}

// Fixed-width text table in the benchmark's reporting layout: columns
// Comma, Period, Question, Overall; rows P / R / F1 as percentages with one
// decimal place. Zero-support classes get a footnote.
inline std::string report_table(const EvalReport& report) {
  const char* class_names[4] = {"Comma", "Period", "Question", "Overall"};
  double p[4] = {report.per_class[0].precision, report.per_class[1].precision,
                 report.per_class[2].precision, report.overall.precision};
  double r[4] = {report.per_class[0].recall, report.per_class[1].recall,
                 report.per_class[2].recall, report.overall.recall};
  double f[4] = {report.per_class[0].f1, report.per_class[1].f1,
                 report.per_class[2].f1, report.overall.f1};

  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-4s", "");
  out += line;
  for (const char* name : class_names) {
    std::snprintf(line, sizeof(line), "%10s", name);
    out += line;
  }
  out += '\n';
  const char* row_names[3] = {"P", "R", "F1"};
  const double* rows[3] = {p, r, f};
  for (int rowi = 0; rowi < 3; ++rowi) {
    std::snprintf(line, sizeof(line), "%-4s", row_names[rowi]);
    out += line;
    for (int c = 0; c < 4; ++c) {
      std::snprintf(line, sizeof(line), "%10.1f", 100.0 * rows[rowi][c]);
      out += line;
    }
    out += '\n';
  }
  for (std::size_t c = 0; c < kScoredClasses.size(); ++c) {
    if (report.per_class[c].support() == 0) {
      out += "note: ";
      out += label_name(kScoredClasses[c]);
      out += " has support 0; its metrics are reported as 0.0\n";
    }
  }
  return out;
}

inline nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j;
  const char* keys[3] = {"comma", "period", "question"};
  for (std::size_t c = 0; c < 3; ++c) {
    const ClassMetrics& m = report.per_class[c];
    j["per_class"][keys[c]] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
        {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn},
        {"support", m.support()},
    };
  }
  j["overall_micro"] = {
      {"precision", report.overall.precision},
      {"recall", report.overall.recall},
      {"f1", report.overall.f1},
      {"tp", report.overall.tp},
      {"fp", report.overall.fp},
      {"fn", report.overall.fn},
  };
  j["overall_macro"] = {
      {"precision", report.macro_precision},
      {"recall", report.macro_recall},
      {"f1", report.macro_f1},
  };
  j["token_count"] = report.token_count;
  return j;
}

}  // namespace ff2

// Seeded synthetic corpora for tests and scaled experiments.
#pragma once

#include <string>
#include <vector>

#include "ff2/data.hpp"
#include "ff2/rng.hpp"

namespace synthetic {

// Unigram task: three trigger words always carry a mark, fillers never do.
// Learnable from token identity alone, so tiny models can drive the training
// loss toward zero; used for overfit and determinism experiments.
inline ff2::LabeledDocument trigger_sentence(ff2::Rng& rng) {
  ff2::LabeledDocument doc;
  const int len = 6 + static_cast<int>(rng.below(7));  // 6..12 tokens
  for (int i = 0; i < len; ++i) {
    const double roll = rng.uniform();
    if (roll < 0.10) {
      doc.tokens.push_back("ka");
      doc.labels.push_back(ff2::Label::kComma);
    } else if (roll < 0.20) {
      doc.tokens.push_back("po");
      doc.labels.push_back(ff2::Label::kPeriod);
    } else if (roll < 0.28) {
      doc.tokens.push_back("qu");
      doc.labels.push_back(ff2::Label::kQuestion);
    } else {
      doc.tokens.push_back("f" + std::to_string(rng.below(20)));
      doc.labels.push_back(ff2::Label::kO);
    }
  }
  return doc;
}

inline std::vector<ff2::LabeledDocument> trigger_corpus(int sentences,
                                                        std::uint64_t seed) {
  ff2::Rng rng(seed);
  std::vector<ff2::LabeledDocument> docs;
  docs.reserve(static_cast<std::size_t>(sentences));
  for (int i = 0; i < sentences; ++i) {
    ff2::LabeledDocument doc = trigger_sentence(rng);
    doc.source = "trigger" + std::to_string(i);
    docs.push_back(std::move(doc));
  }
  return docs;
}

// Context task: trigger words keep their unigram marks, while the label of a
// content word is a fixed function of both neighbors' word groups and its
// own identity. Solving the content part requires routing neighbor identity
// through attention, which makes held-out accuracy sensitive to model
// capacity; used for the scaled comparison between the full model and its
// reduced variants.
inline ff2::Label trigram_rule(int prev_idx, int cur_idx, int next_idx) {
  const int v = (7 * (prev_idx % 3) + 5 * cur_idx + 11 * (next_idx % 3)) % 13;
  if (v == 0) return ff2::Label::kComma;
  if (v == 1) return ff2::Label::kPeriod;
  if (v == 2) return ff2::Label::kQuestion;
  return ff2::Label::kO;
}

inline std::vector<ff2::LabeledDocument> trigram_corpus(int sentences,
                                                        std::uint64_t seed) {
  ff2::Rng rng(seed);
  std::vector<ff2::LabeledDocument> docs;
  docs.reserve(static_cast<std::size_t>(sentences));
  for (int s = 0; s < sentences; ++s) {
    ff2::LabeledDocument doc;
    doc.source = "ctx" + std::to_string(s);
    const int len = 8 + static_cast<int>(rng.below(5));  // 8..12 tokens
    // token identities: 30..32 are the triggers, 33/34 virtual boundaries
    std::vector<int> ids(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      const double roll = rng.uniform();
      if (roll < 0.05) {
        ids[static_cast<std::size_t>(i)] = 30;
      } else if (roll < 0.10) {
        ids[static_cast<std::size_t>(i)] = 31;
      } else if (roll < 0.14) {
        ids[static_cast<std::size_t>(i)] = 32;
      } else {
        ids[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(30));
      }
    }
    for (int i = 0; i < len; ++i) {
      const int cur = ids[static_cast<std::size_t>(i)];
      if (cur == 30) {
        doc.tokens.push_back("ka");
        doc.labels.push_back(ff2::Label::kComma);
      } else if (cur == 31) {
        doc.tokens.push_back("po");
        doc.labels.push_back(ff2::Label::kPeriod);
      } else if (cur == 32) {
        doc.tokens.push_back("qu");
        doc.labels.push_back(ff2::Label::kQuestion);
      } else {
        const int prev = i > 0 ? ids[static_cast<std::size_t>(i - 1)] : 33;
        const int next = i + 1 < len ? ids[static_cast<std::size_t>(i + 1)] : 34;
        doc.tokens.push_back("w" + std::to_string(cur));
        doc.labels.push_back(trigram_rule(prev, cur, next));
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

// Plain normalized word soup with random target labels; for data-pipeline
// round-trip properties.
inline ff2::LabeledDocument random_labeled_doc(ff2::Rng& rng, int max_tokens) {
  ff2::LabeledDocument doc;
  const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_tokens)));
  for (int i = 0; i < len; ++i) {
    std::string tok;
    const int tok_len = 1 + static_cast<int>(rng.below(8));
    for (int k = 0; k < tok_len; ++k) {
      tok.push_back(static_cast<char>('a' + rng.below(26)));
    }
    doc.tokens.push_back(tok);
    const std::uint64_t roll = rng.below(10);
    if (roll == 0) {
      doc.labels.push_back(ff2::Label::kComma);
    } else if (roll == 1) {
      doc.labels.push_back(ff2::Label::kPeriod);
    } else if (roll == 2) {
      doc.labels.push_back(ff2::Label::kQuestion);
    } else {
      doc.labels.push_back(ff2::Label::kO);
    }
  }
  return doc;
}

}  // namespace synthetic

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ff2/errors.hpp"

namespace ff2 {

// Label order is fixed: [O, COMMA, PERIOD, QUESTION].
enum class Label : std::uint8_t { kO = 0, kComma = 1, kPeriod = 2, kQuestion = 3 };

constexpr int kNumLabels = 4;

inline const char* label_name(Label label) {
  switch (label) {
    case Label::kO: return "O";
    case Label::kComma: return "COMMA";
    case Label::kPeriod: return "PERIOD";
    case Label::kQuestion: return "QUESTION";
  }
  return "?";
}

inline Label label_from_string(const std::string& s) {
  if (s == "O") return Label::kO;
  if (s == "COMMA") return Label::kComma;
  if (s == "PERIOD") return Label::kPeriod;
  if (s == "QUESTION") return Label::kQuestion;
  throw DataError("unknown label '" + s +
                  "' (expected O, COMMA, PERIOD or QUESTION)");
}

// Character applied after a predicted label when rendering text.
inline const char* label_mark(Label label) {
  switch (label) {
    case Label::kComma: return ",";
    case Label::kPeriod: return ".";
    case Label::kQuestion: return "?";
    default: return "";
  }
}

// Text normalization table. Target marks assign the label to the preceding
// token; '!' folds into PERIOD and ';' into COMMA (common preprocessing for
// this benchmark family). Every other ASCII punctuation character except the
// apostrophe is dropped. Override by constructing different rules.
struct NormalizationRules {
  std::vector<std::pair<char, Label>> marks = {
      {',', Label::kComma},    {'.', Label::kPeriod}, {'?', Label::kQuestion},
      {'!', Label::kPeriod},   {';', Label::kComma},
  };

  std::optional<Label> mark_label(char c) const {
    for (const auto& [mark, label] : marks) {
      if (mark == c) return label;
    }
    return std::nullopt;
  }
};

struct LabeledDocument {
  std::vector<std::string> tokens;
  std::vector<Label> labels;
  std::string source;
};

// Word-level labeling: each word receives the label of the punctuation mark
// immediately following it (O if none). Marks and ignorable punctuation are
// removed from the token stream; ASCII letters are lowercased; non-ASCII
// UTF-8 bytes pass through as word characters.
inline LabeledDocument label_text(std::string_view text,
                                  const NormalizationRules& rules = {}) {
  LabeledDocument doc;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      doc.tokens.push_back(current);
      doc.labels.push_back(Label::kO);
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
      continue;
    }
    if (c < 0x80) {
      if (auto label = rules.mark_label(static_cast<char>(c))) {
        flush();
        // first mark after a token wins; marks with no preceding token drop
        if (!doc.labels.empty() && doc.labels.back() == Label::kO) {
          doc.labels.back() = *label;
        }
        continue;
      }
      if (std::ispunct(c) && c != '\'') continue;  // ignorable
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      current.push_back(static_cast<char>(c));
    }
  }
  flush();
  return doc;
}

// Inverse of label_text for already-normalized tokens.
inline std::string render_text(const std::vector<std::string>& tokens,
                               const std::vector<Label>& labels) {
  if (tokens.size() != labels.size()) {
    throw DataError("render_text: tokens/labels length mismatch");
  }
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
    out += label_mark(labels[i]);
  }
  return out;
}

// Word-level vocabulary with reserved ids PAD=0 and UNK=1. Ids are assigned
// in first-appearance order over the corpus to tokens whose total count
// meets min_count, which makes the mapping deterministic for a given corpus
// and threshold.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() { index_reserved(); }

  static Vocabulary build(const std::vector<LabeledDocument>& docs,
                          int min_count = 1) {
    if (min_count < 1) throw ConfigError("vocabulary: min_count must be >= 1");
    std::unordered_map<std::string, long long> counts;
    for (const LabeledDocument& doc : docs) {
      for (const std::string& tok : doc.tokens) ++counts[tok];
    }
    Vocabulary vocab;
    for (const LabeledDocument& doc : docs) {
      for (const std::string& tok : doc.tokens) {
        if (counts[tok] >= min_count && !vocab.token_to_id_.count(tok)) {
          vocab.token_to_id_.emplace(tok, static_cast<int>(vocab.id_to_token_.size()));
          vocab.id_to_token_.push_back(tok);
        }
      }
    }
    return vocab;
  }

  static Vocabulary from_tokens(const std::vector<std::string>& ordered) {
    if (ordered.size() < 2 || ordered[0] != "<pad>" || ordered[1] != "<unk>") {
      throw FormatError("vocabulary list must start with <pad>, <unk>");
    }
    Vocabulary vocab;
    vocab.id_to_token_ = ordered;
    vocab.token_to_id_.clear();
    vocab.index_reserved();
    for (std::size_t i = 2; i < ordered.size(); ++i) {
      if (!vocab.token_to_id_.emplace(ordered[i], static_cast<int>(i)).second) {
        throw FormatError("vocabulary contains duplicate token '" + ordered[i] + "'");
      }
    }
    return vocab;
  }

  int encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) {
      throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  void index_reserved() {
    token_to_id_["<pad>"] = kPad;
    token_to_id_["<unk>"] = kUnk;
  }

  std::vector<std::string> id_to_token_ = {"<pad>", "<unk>"};
  std::unordered_map<std::string, int> token_to_id_;
};

// One training/inference window. mask[i] is 1 for real tokens, 0 for
// padding; labels are meaningful exactly at mask==1 positions.
struct LabeledSequence {
  std::vector<int> token_ids;
  std::vector<Label> labels;
  std::vector<std::uint8_t> mask;
  std::string file;
  int start = 0;
};

// Overlapping windows covering every token at least once: starts at
// 0, stride, 2*stride, ... and stops with the first window that reaches the
// end of the document.
inline std::vector<LabeledSequence> window(const std::vector<int>& token_ids,
                                           const std::vector<Label>& labels,
                                           int max_len, int stride,
                                           const std::string& file = "") {
  if (token_ids.size() != labels.size()) {
    throw DataError("window: tokens/labels length mismatch");
  }
  if (max_len < 1) throw ConfigError("window: max_len must be >= 1");
  if (stride < 1 || stride > max_len) {
    throw ConfigError("window: stride must lie in [1, max_len], got " +
                      std::to_string(stride));
  }
  std::vector<LabeledSequence> out;
  const int n = static_cast<int>(token_ids.size());
  if (n == 0) return out;
  for (int start = 0;; start += stride) {
    const int end = std::min(start + max_len, n);
    LabeledSequence seq;
    seq.token_ids.assign(token_ids.begin() + start, token_ids.begin() + end);
    seq.labels.assign(labels.begin() + start, labels.begin() + end);
    seq.mask.assign(static_cast<std::size_t>(end - start), 1);
    seq.file = file;
    seq.start = start;
    out.push_back(std::move(seq));
    if (end >= n) break;
  }
  return out;
}

struct WindowPrediction {
  int start = 0;
  std::vector<Label> labels;
};

// Merges per-window predictions back into a document-length sequence. For a
// token covered by several windows the prediction from the window where the
// token sits farthest from a window edge wins; ties go to the earlier
// window.
inline std::vector<Label> stitch_predictions(
    std::vector<WindowPrediction> preds, int total_len) {
  std::sort(preds.begin(), preds.end(),
            [](const WindowPrediction& a, const WindowPrediction& b) {
              return a.start < b.start;
            });
  std::vector<Label> out(static_cast<std::size_t>(total_len), Label::kO);
  std::vector<int> best(static_cast<std::size_t>(total_len), -1);
  for (const WindowPrediction& pred : preds) {
    const int len = static_cast<int>(pred.labels.size());
    for (int i = 0; i < len; ++i) {
      const int t = pred.start + i;
      if (t < 0 || t >= total_len) {
        throw DataError("stitch: window position " + std::to_string(t) +
                        " outside document of length " +
                        std::to_string(total_len));
      }
      const int edge_distance = std::min(i, len - 1 - i);
      if (edge_distance > best[static_cast<std::size_t>(t)]) {
        best[static_cast<std::size_t>(t)] = edge_distance;
        out[static_cast<std::size_t>(t)] = pred.labels[static_cast<std::size_t>(i)];
      }
    }
  }
  for (int t = 0; t < total_len; ++t) {
    if (best[static_cast<std::size_t>(t)] < 0) {
      throw DataError("stitch: no window covers token " + std::to_string(t));
    }
  }
  return out;
}

struct CorpusStats {
  long long token_count = 0;
  std::array<long long, kNumLabels> counts{};
  std::array<double, kNumLabels> fractions{};

  void finalize() {
    token_count = 0;
    for (long long c : counts) token_count += c;
    for (int i = 0; i < kNumLabels; ++i) {
      fractions[static_cast<std::size_t>(i)] =
          token_count > 0
              ? static_cast<double>(counts[static_cast<std::size_t>(i)]) /
                    static_cast<double>(token_count)
              : 0.0;
    }
  }
};

inline CorpusStats corpus_stats(const std::vector<LabeledDocument>& docs) {
  CorpusStats stats;
  for (const LabeledDocument& doc : docs) {
    for (Label l : doc.labels) ++stats.counts[static_cast<std::size_t>(l)];
  }
  stats.finalize();
  return stats;
}

inline CorpusStats corpus_stats(const std::vector<LabeledSequence>& seqs) {
  CorpusStats stats;
  for (const LabeledSequence& seq : seqs) {
    for (std::size_t i = 0; i < seq.labels.size(); ++i) {
      if (seq.mask[i]) ++stats.counts[static_cast<std::size_t>(seq.labels[i])];
    }
  }
  stats.finalize();
  return stats;
}

// ---------------------------------------------------------------------------
// File input
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline LabeledDocument load_txt_document(const std::string& path,
                                         const NormalizationRules& rules = {}) {
  LabeledDocument doc = label_text(read_file(path), rules);
  doc.source = path;
  return doc;
}

// Two-column TSV: token<TAB>label, one token per line; blank lines skipped.
inline LabeledDocument load_tsv_document(const std::string& path) {
  std::istringstream in(read_file(path));
  LabeledDocument doc;
  doc.source = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected token<TAB>label");
    }
    doc.tokens.push_back(line.substr(0, tab));
    doc.labels.push_back(label_from_string(line.substr(tab + 1)));
  }
  return doc;
}

inline void save_tsv(const LabeledDocument& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    out << doc.tokens[i] << '\t' << label_name(doc.labels[i]) << '\n';
  }
}

// Loads a corpus path: a single .txt/.tsv file, or a directory whose regular
// files are read in lexicographic name order (one document per file).
inline std::vector<LabeledDocument> load_corpus(
    const std::string& path, const NormalizationRules& rules = {}) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw DataError("corpus path does not exist: " + path);
  }
  std::vector<LabeledDocument> docs;
  for (const std::string& file : files) {
    if (file.size() >= 4 && file.substr(file.size() - 4) == ".tsv") {
      docs.push_back(load_tsv_document(file));
    } else {
      docs.push_back(load_txt_document(file, rules));
    }
  }
  return docs;
}

// Vocabulary-encodes and windows a document set.
inline std::vector<LabeledSequence> encode_documents(
    const std::vector<LabeledDocument>& docs, const Vocabulary& vocab,
    int max_len, int stride) {
  std::vector<LabeledSequence> out;
  for (const LabeledDocument& doc : docs) {
    std::vector<int> ids(doc.tokens.size());
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      ids[i] = vocab.encode(doc.tokens[i]);
    }
    std::vector<LabeledSequence> windows =
        window(ids, doc.labels, max_len, stride, doc.source);
    for (LabeledSequence& seq : windows) out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace ff2

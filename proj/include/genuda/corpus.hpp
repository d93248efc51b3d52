#pragma once

// Labeled-source / unlabeled-target domain corpora.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genuda/kv_config.hpp"

namespace genuda {

struct LabelSpace {
  std::vector<std::string> class_names;
  std::vector<std::string> verbalizations;

  // Validates K >= 2 and uniqueness; throws ErrorCode::kConfig.
  static LabelSpace make(std::vector<std::string> class_names, std::vector<std::string> verbalizations);
  static LabelSpace binary_sentiment();  // {negative, positive} -> {Negative, Positive}
  static LabelSpace nli();               // {entailment, neutral, contradiction}

  int size() const { return static_cast<int>(class_names.size()); }
  // Accepts a decimal index, a class name or a verbalization (case-insensitive).
  std::optional<int> parse_label(const std::string& token) const;

  bool operator==(const LabelSpace&) const = default;
};

struct Example {
  std::string text;
  std::optional<int> label;

  bool operator==(const Example&) const = default;
};

enum class CorpusFormat { kTsv, kJsonl };

CorpusFormat parse_corpus_format(const std::string& name);

class Corpus {
 public:
  Corpus() = default;
  Corpus(LabelSpace labels, std::vector<Example> examples);

  const LabelSpace& label_space() const { return labels_; }
  const std::vector<Example>& examples() const { return examples_; }
  const Example& operator[](size_t i) const { return examples_[i]; }
  size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  bool fully_labeled() const;
  Corpus unlabeled() const;
  std::vector<std::string> texts() const;
  // Number of examples per class (unlabeled examples are not counted).
  std::vector<size_t> class_counts() const;

  bool operator==(const Corpus&) const = default;

 private:
  LabelSpace labels_;
  std::vector<Example> examples_;
};

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const LabelSpace& labels,
                   bool keep_labels = true);
Corpus parse_corpus(const std::string& contents, CorpusFormat format, const LabelSpace& labels,
                    bool keep_labels = true, const std::string& origin = "<string>");
std::string serialize_corpus(const Corpus& corpus, CorpusFormat format);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

// Class-balanced sample of k examples: floor(k/K) per class, the remainder going to the
// lowest class indices; a class short of its quota hands the deficit to the next classes.
Corpus kshot_subsample(const Corpus& corpus, size_t k, uint64_t seed);

// --- evaluation gate -------------------------------------------------------------------

// Capability token required to read target-domain labels. Only the evaluation module and
// the explicitly flagged Src+Tgt upper-bound baseline can construct one.
class EvaluationGate {
 private:
  EvaluationGate() = default;
  friend struct EvaluationAccess;  // evaluation module
  friend struct UpperBoundAccess;  // Src+Tgt baseline
  friend struct StorageAccess;     // pair persistence
};

// Target corpus: texts are public, labels sit behind the gate.
class GatedCorpus {
 public:
  GatedCorpus() = default;
  explicit GatedCorpus(Corpus corpus) : corpus_(std::move(corpus)) {}

  size_t size() const { return corpus_.size(); }
  const std::string& text(size_t i) const { return corpus_[i].text; }
  std::vector<std::string> texts() const { return corpus_.texts(); }
  Corpus unlabeled() const { return corpus_.unlabeled(); }
  const LabelSpace& label_space() const { return corpus_.label_space(); }

  const Corpus& labeled(const EvaluationGate&) const;

 private:
  Corpus corpus_;
};

// Counting probe over every gated label access (tests assert on it).
size_t gated_label_accesses();
void reset_gated_label_accesses();

struct SplitSpec {
  size_t train = 0;
  size_t val = 0;
  size_t test = 0;
  uint64_t seed = 0;
};

struct Splits {
  Corpus train, val, test;
};

Splits split_corpus(const Corpus& corpus, const SplitSpec& spec);

struct DomainPair {
  std::string name;  // "SRC→TGT"
  LabelSpace label_space;
  Corpus source_train, source_val, source_test;
  GatedCorpus target_train, target_val, target_test;

  const Corpus& source_split(const std::string& split) const;
  const GatedCorpus& target_split(const std::string& split) const;
};

// Directory layout: pair.cfg + {source,target}.{train,val,test}.{tsv,jsonl}.
void save_pair(const DomainPair& pair, const std::filesystem::path& dir, CorpusFormat format = CorpusFormat::kTsv);
DomainPair load_pair(const std::filesystem::path& dir);

// --- synthetic dual-domain sentiment corpus ----------------------------------------------

struct SynthSpec {
  std::string source_name = "src";
  std::string target_name = "tgt";
  size_t shared_background = 40;   // background words used by both domains
  size_t domain_background = 40;   // background words private to each domain
  size_t sentiment_words = 10;     // label-correlated words per class per domain
  double overlap = 0.3;            // fraction of each domain's sentiment words shared with the other
  double shared_weight = 1.0;      // sampling weight of a shared sentiment word relative to a private one
  size_t min_len = 6;
  size_t max_len = 10;
  size_t min_sentiment = 3;        // label-correlated words per sentence
  size_t max_sentiment = 5;
  double purity = 1.0;             // chance a mention is drawn from the sentence's own class
  double positive_prior = 0.5;
  size_t train = 1000;
  size_t val = 100;
  size_t test = 500;
  uint64_t seed = 7;

  static SynthSpec from_config(const KvConfig& cfg);
  KvConfig to_config() const;
};

struct SynthVocabulary {
  std::vector<std::vector<std::string>> source_sentiment;  // per class
  std::vector<std::vector<std::string>> target_sentiment;  // per class
  std::vector<std::string> source_background;
  std::vector<std::string> target_background;
};

struct SynthResult {
  DomainPair pair;
  SynthVocabulary vocabulary;
};

SynthResult synth_generate(const SynthSpec& spec, uint64_t seed);

}  // namespace genuda

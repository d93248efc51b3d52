#pragma once

// Word-class PMI statistics and masking strategies.

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "genuda/corpus.hpp"
#include "genuda/rng.hpp"

namespace genuda {

// PMI(word, class) = log p(word, class) / (p(word) p(class)), counted per token over a
// labeled corpus; p(class) is the share of word tokens that sit in class-c sentences.
// Pairs never observed together are absent rather than -inf.
struct PmiTable {
  int num_classes = 0;
  size_t total_tokens = 0;
  std::vector<size_t> class_counts;
  std::map<std::string, size_t> word_counts;
  std::map<std::pair<std::string, int>, size_t> pair_counts;
  std::map<std::pair<std::string, int>, double> pmi;

  // Max over observed classes; throws if the word is absent.
  double score(const std::string& word) const;
};

PmiTable compute_pmi(const Corpus& source_labeled);

struct WordSets {
  std::set<std::string> informative;
  std::set<std::string> uninformative;
  double k_percent = 15.0;
  size_t min_freq = 10;
  // Surviving words sorted by score descending (ties lexicographic).
  std::vector<std::pair<std::string, double>> ranked;
};

WordSets select_word_sets(const PmiTable& table, double k_percent = 15.0, size_t min_freq = 10);

// ceil(fraction * n) robust to binary rounding of the fraction (0.15 * 20 is 3, not 4).
size_t ceil_fraction(double fraction, size_t n);

struct MaskPlan {
  std::vector<size_t> positions;  // sorted, unique
};

struct MaskStrategy {
  enum class Kind { kRandom, kInformative, kUninformative };
  Kind kind = Kind::kRandom;
  double rate = 0.15;
  std::shared_ptr<const WordSets> word_sets;

  static MaskStrategy random(double rate);
  static MaskStrategy informative(std::shared_ptr<const WordSets> sets);
  static MaskStrategy uninformative(std::shared_ptr<const WordSets> sets);
};

inline constexpr double kSelectiveMaskBudget = 0.15;

std::vector<std::string> split_whitespace(const std::string& text);

// True when any normalized token of the surface word belongs to `set`.
bool word_in_set(const std::string& surface_word, const std::set<std::string>& set);

MaskPlan plan_masks(const std::vector<std::string>& words, const MaskStrategy& strategy, Rng& rng);

enum class InferenceMaskMode { kInformative, kUninformative };

InferenceMaskMode parse_inference_mask_mode(const std::string& name);

std::vector<std::string> mask_at_inference(const std::vector<std::string>& words, const WordSets& sets,
                                           InferenceMaskMode mode);

std::string csv_field(const std::string& field);

// CSV: word,class,pmi,count sorted by word score descending, then word, then class.
std::string pmi_csv(const PmiTable& table, const LabelSpace& labels);

}  // namespace genuda

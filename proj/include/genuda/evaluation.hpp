#pragma once

// Rank classification, accuracy reports, masked inference, embedding export and
// two-sample significance tests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genuda/corpus.hpp"
#include "genuda/masking.hpp"
#include "genuda/model.hpp"
#include "genuda/templating.hpp"
#include "genuda/tokenizer.hpp"

namespace genuda {

// A trained model together with what it needs to read text.
struct Classifier {
  const Model& model;
  const Vocab& vocab;
  const PromptTemplate& prompt;
};

// Length-normalized log-likelihood of every verbalization given the classification input.
std::vector<double> class_scores(const Classifier& clf, const std::string& x);
std::vector<std::vector<double>> class_scores_batch(const Classifier& clf, const std::vector<std::string>& xs);

// Argmax of the scores, ties to the lowest class index.
int argmax_lowest(const std::vector<double>& scores);
int rank_classify(const Classifier& clf, const std::string& x);
std::vector<int> rank_classify_batch(const Classifier& clf, const std::vector<std::string>& xs);

enum class Domain { kSource, kTarget };
Domain parse_domain(const std::string& name);
const char* domain_name(Domain domain);

struct EvalReport {
  std::string domain;
  std::string split;
  double accuracy = 0.0;
  size_t n = 0;
  uint64_t seed = 0;
  std::string config_hash;
  std::string masked_inference;  // empty when inputs were not masked
  std::vector<int> predictions;

  std::string to_json(bool with_predictions = true) const;
  static EvalReport from_json(const std::string& text);
};

EvalReport evaluate(const Classifier& clf, const DomainPair& pair, Domain domain, const std::string& split);

EvalReport masked_inference_eval(const Classifier& clf, const DomainPair& pair, Domain domain,
                                 const std::string& split, const WordSets& sets, InferenceMaskMode mode);

// Masks the set members of every whitespace word and rejoins the sentence.
std::string mask_text_at_inference(const std::string& text, const WordSets& sets, InferenceMaskMode mode);

// CSV rows `domain,label,e0..e{d-1}`: the final-layer pooled embedding of every example of
// `split`, source rows first.
std::string embeddings_csv(const Classifier& clf, const DomainPair& pair, const std::string& split);
void export_embeddings(const Classifier& clf, const DomainPair& pair, const std::string& split,
                       const std::filesystem::path& path);

struct MannWhitneyResult {
  double u = 0.0;  // U of the first sample
  double p = 1.0;  // two-sided
  bool exact = false;
};

// Exact permutation distribution for n, m <= 8, tie-corrected normal approximation with
// continuity correction otherwise.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;  // both samples have zero variance
};

// Welch's unequal-variance t-test.
TTestResult students_t(const std::vector<double>& a, const std::vector<double>& b);

double mean_of(const std::vector<double>& xs);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev_of(const std::vector<double>& xs);

}  // namespace genuda

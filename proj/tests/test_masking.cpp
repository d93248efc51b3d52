#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "genuda/masking.hpp"
#include "oracles.hpp"

using namespace genuda;

namespace {

Corpus labeled(const std::vector<std::pair<std::string, int>>& rows, const LabelSpace& labels) {
  std::vector<Example> ex;
  for (const auto& [t, y] : rows) ex.push_back({t, y});
  return Corpus(labels, ex);
}

void check_against_oracle(const std::vector<std::pair<std::string, int>>& rows, const LabelSpace& labels) {
  std::map<std::pair<std::string, int>, long> joint;
  const auto expected = oracle::pmi(rows, &joint);
  const PmiTable t = compute_pmi(labeled(rows, labels));
  REQUIRE(t.pmi.size() == expected.size());
  for (const auto& [key, value] : expected) {
    REQUIRE(t.pmi.count(key));
    CHECK(t.pair_counts.at(key) == static_cast<size_t>(joint.at(key)));
    CHECK(std::abs(t.pmi.at(key) - value) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("PMI of a six-sentence hand corpus") {
  const std::vector<std::pair<std::string, int>> rows = {
      {"great movie", 1}, {"great fun great", 1}, {"dull movie", 0},
      {"dull plot.", 0},  {"fun plot", 1},        {"movie night", 0},
  };
  check_against_oracle(rows, LabelSpace::binary_sentiment());
  const PmiTable t = compute_pmi(labeled(rows, LabelSpace::binary_sentiment()));
  // 14 tokens, 7 per class. "great" only in class 1: log(1 / p(c=1)).
  CHECK(t.total_tokens == 14);
  CHECK(t.class_counts == std::vector<size_t>{7, 7});
  CHECK(std::abs(t.pmi.at({"great", 1}) - std::log(2.0)) < 1e-15);
  CHECK(t.pmi.count({"great", 0}) == 0);
  // "movie": 1 of 3 in class 1 -> log((1/14) / ((3/14)(7/14))).
  CHECK(std::abs(t.pmi.at({"movie", 1}) - std::log(2.0 / 3.0)) < 1e-15);
  CHECK(t.score("great") == t.pmi.at({"great", 1}));
  CHECK(fixture::error_of([&] { t.score("absent"); }) == ErrorCode::kDomain);
}

TEST_CASE("PMI matches the counting oracle on random toy corpora") {
  std::mt19937_64 rng(42);
  const auto labels = LabelSpace::nli();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<std::string, int>> rows;
    const int n_sent = 1 + static_cast<int>(rng() % 60);
    for (int s = 0; s < n_sent; ++s) {
      std::string text;
      const int len = 1 + static_cast<int>(rng() % 15);
      for (int i = 0; i < len; ++i) {
        text += "W" + std::to_string(rng() % 25);
        if (rng() % 7 == 0) text += "!";
        text += " ";
      }
      rows.emplace_back(text, static_cast<int>(rng() % 3));
    }
    check_against_oracle(rows, labels);
  }
}

TEST_CASE("PMI is zero at the class prior and obeys total probability") {
  const std::vector<std::pair<std::string, int>> rows = {{"x a", 0}, {"x b", 1}, {"a b a", 0}, {"b b", 1}};
  const PmiTable t = compute_pmi(labeled(rows, LabelSpace::binary_sentiment()));
  // Class token shares are 5/9 and 4/9; "x" appears once per class -> not at prior.
  // Sum_c p(c) exp(PMI(w,c)) = 1 for words seen with every class.
  for (const auto& [word, count] : t.word_counts) {
    if (!t.pmi.count({word, 0}) || !t.pmi.count({word, 1})) continue;
    double s = 0;
    for (int c = 0; c < 2; ++c) {
      s += static_cast<double>(t.class_counts[c]) / static_cast<double>(t.total_tokens) * std::exp(t.pmi.at({word, c}));
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const std::vector<std::pair<std::string, int>> balanced = {{"u p", 0}, {"u q", 1}};
  const PmiTable b = compute_pmi(labeled(balanced, LabelSpace::binary_sentiment()));
  CHECK(std::abs(b.pmi.at({"u", 0})) < 1e-15);
  CHECK(std::abs(b.pmi.at({"u", 1})) < 1e-15);
  CHECK(fixture::error_of([] { compute_pmi(Corpus(LabelSpace::binary_sentiment(), {})); }) == ErrorCode::kDomain);
}

TEST_CASE("word sets: ceiling rule, frequency filter, disjointness") {
  std::vector<std::pair<std::string, int>> rows;
  // Ten words, each seen 10 times, with increasing class-1 skew.
  for (int w = 0; w < 10; ++w) {
    for (int i = 0; i < 10; ++i) rows.emplace_back("w" + std::to_string(w), i < w ? 1 : 0);
  }
  rows.emplace_back("rare", 1);
  const PmiTable t = compute_pmi(labeled(rows, LabelSpace::binary_sentiment()));
  const WordSets s = select_word_sets(t, 15, 10);
  CHECK(s.ranked.size() == 10);
  CHECK(s.informative.size() == 2);
  CHECK(s.uninformative.size() == 2);
  for (const auto& w : s.informative) CHECK(s.uninformative.count(w) == 0);
  CHECK(s.informative.count("rare") == 0);
  CHECK(s.uninformative.count("rare") == 0);
  for (size_t i = 1; i < s.ranked.size(); ++i) CHECK(s.ranked[i - 1].second >= s.ranked[i].second);
  CHECK(ceil_fraction(0.15, 20) == 3);
  CHECK(ceil_fraction(0.15, 10) == 2);
  CHECK(fixture::error_of([&] { select_word_sets(t, 15, 1000); }) == ErrorCode::kDomain);
}

TEST_CASE("planted sentiment words land in the informative set") {
  SynthSpec spec;
  const auto r = synth_generate(spec, 7);
  const WordSets s = select_word_sets(compute_pmi(r.pair.source_train), 15, 10);
  size_t planted = 0;
  for (const auto& cls : r.vocabulary.source_sentiment) planted += cls.size();
  // The top 15% is smaller than the planted vocabulary here, so every informative word
  // must be planted.
  REQUIRE(s.informative.size() <= planted);
  std::set<std::string> all;
  for (const auto& cls : r.vocabulary.source_sentiment) all.insert(cls.begin(), cls.end());
  for (const auto& w : s.informative) CHECK(all.count(w) == 1);
  for (const auto& w : s.uninformative) CHECK(all.count(w) == 0);
}

TEST_CASE("random masking rate matches its Bernoulli mean") {
  Rng rng(3);
  const std::vector<std::string> words(100, "w");
  size_t masked = 0, total = 0;
  while (total < 100000) {
    const MaskPlan p = plan_masks(words, MaskStrategy::random(0.15), rng);
    CHECK(!p.positions.empty());
    CHECK(p.positions.size() < words.size());
    masked += p.positions.size();
    total += words.size();
  }
  // Long sentences, so resampling empty plans does not bias the mean.
  CHECK(std::abs(static_cast<double>(masked) / static_cast<double>(total) - 0.15) <= 0.01);

  const std::vector<std::string> long_words(50, "w");
  size_t m90 = 0;
  for (int i = 0; i < 200; ++i) m90 += plan_masks(long_words, MaskStrategy::random(0.9), rng).positions.size();
  CHECK(std::abs(static_cast<double>(m90) / (200.0 * 50.0) - 0.9) < 0.02);
  CHECK(fixture::error_of([] { MaskStrategy::random(1.0); }) == ErrorCode::kConfig);
  CHECK(fixture::error_of([&] { plan_masks({"one"}, MaskStrategy::random(0.5), rng); }) == ErrorCode::kDomain);
}

TEST_CASE("selective masking: members, cap and fallback") {
  auto sets = std::make_shared<WordSets>();
  sets->informative = {"great", "awful", "superb"};
  sets->uninformative = {"the"};
  Rng rng(9);
  const std::vector<std::string> words = {"the", "film", "was", "great!", "really"};
  const MaskPlan p = plan_masks(words, MaskStrategy::informative(sets), rng);
  CHECK(p.positions == std::vector<size_t>{3});
  CHECK(plan_masks(words, MaskStrategy::uninformative(sets), rng).positions == std::vector<size_t>{0});

  // Twenty words, six informative: the cap keeps ceil(0.15 * 20) = 3.
  std::vector<std::string> many;
  for (int i = 0; i < 20; ++i) many.push_back(i % 3 == 0 && i < 18 ? "great" : "x");
  for (int trial = 0; trial < 20; ++trial) {
    const MaskPlan q = plan_masks(many, MaskStrategy::informative(sets), rng);
    CHECK(q.positions.size() == 3);
    for (size_t pos : q.positions) CHECK(many[pos] == "great");
  }

  // No member present: random 15% fallback, still a proper plan.
  const std::vector<std::string> none = {"a", "b", "c", "d"};
  const MaskPlan f = plan_masks(none, MaskStrategy::informative(sets), rng);
  CHECK(!f.positions.empty());
  CHECK(f.positions.size() < none.size());
}

TEST_CASE("inference masking blanks exactly the chosen set") {
  WordSets sets;
  sets.informative = {"great", "awful"};
  sets.uninformative = {"the"};
  const std::vector<std::string> plain = {"a", "film"};
  CHECK(mask_at_inference(plain, sets, InferenceMaskMode::kInformative) == plain);
  CHECK(mask_at_inference({"great", "awful!"}, sets, InferenceMaskMode::kInformative) ==
        std::vector<std::string>{"_", "_"});
  CHECK(mask_at_inference({"The", "great"}, sets, InferenceMaskMode::kUninformative) ==
        std::vector<std::string>{"_", "great"});
}

TEST_CASE("PMI csv is sorted by score") {
  const std::vector<std::pair<std::string, int>> rows = {{"good good", 1}, {"bad", 0}, {"meh", 0}, {"meh", 1}};
  const PmiTable t = compute_pmi(labeled(rows, LabelSpace::binary_sentiment()));
  const std::string csv = pmi_csv(t, LabelSpace::binary_sentiment());
  CHECK(csv.rfind("word,class,pmi,count\n", 0) == 0);
  // "bad" (log 5/2) outranks "good" (log 5/3), which outranks "meh" (log 5/4).
  CHECK(csv.find("bad,negative") < csv.find("good,positive"));
  CHECK(csv.find("good,positive") < csv.find("meh,"));
  CHECK(csv_field("a,b") == "\"a,b\"");
}

#include "genuda/masking.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "genuda/error.hpp"
#include "genuda/tokenizer.hpp"

namespace genuda {

double PmiTable::score(const std::string& word) const {
  double best = -INFINITY;
  bool found = false;
  for (int c = 0; c < num_classes; ++c) {
    auto it = pmi.find({word, c});
    if (it != pmi.end()) {
      best = std::max(best, it->second);
      found = true;
    }
  }
  if (!found) fail(ErrorCode::kDomain, "word `" + word + "` not in PMI table");
  return best;
}

PmiTable compute_pmi(const Corpus& source_labeled) {
  if (source_labeled.empty()) fail(ErrorCode::kDomain, "compute_pmi: empty corpus");
  if (!source_labeled.fully_labeled()) fail(ErrorCode::kDomain, "compute_pmi: corpus must be labeled");
  PmiTable t;
  t.num_classes = source_labeled.label_space().size();
  t.class_counts.assign(static_cast<size_t>(t.num_classes), 0);
  for (const auto& ex : source_labeled.examples()) {
    for (const auto& w : normalize_words(ex.text)) {
      ++t.word_counts[w];
      ++t.pair_counts[{w, *ex.label}];
      ++t.class_counts[static_cast<size_t>(*ex.label)];
      ++t.total_tokens;
    }
  }
  if (t.total_tokens == 0) fail(ErrorCode::kDomain, "compute_pmi: corpus has no tokens");
  const double n = static_cast<double>(t.total_tokens);
  for (const auto& [key, count] : t.pair_counts) {
    const double joint = static_cast<double>(count) / n;
    const double pw = static_cast<double>(t.word_counts.at(key.first)) / n;
    const double pc = static_cast<double>(t.class_counts[static_cast<size_t>(key.second)]) / n;
    t.pmi[key] = std::log(joint / (pw * pc));
  }
  return t;
}

size_t ceil_fraction(double fraction, size_t n) {
  return static_cast<size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

WordSets select_word_sets(const PmiTable& table, double k_percent, size_t min_freq) {
  if (table.word_counts.empty()) fail(ErrorCode::kDomain, "select_word_sets: empty PMI table");
  if (k_percent <= 0.0 || k_percent > 100.0) fail(ErrorCode::kConfig, "select_word_sets: k_percent in (0, 100]");
  WordSets ws;
  ws.k_percent = k_percent;
  ws.min_freq = min_freq;
  for (const auto& [word, count] : table.word_counts) {
    if (count >= min_freq) ws.ranked.emplace_back(word, table.score(word));
  }
  if (ws.ranked.empty()) fail(ErrorCode::kDomain, "select_word_sets: every word filtered by min_freq");
  std::stable_sort(ws.ranked.begin(), ws.ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const size_t n = ws.ranked.size();
  const size_t take = std::min(n, ceil_fraction(k_percent / 100.0, n));
  for (size_t i = 0; i < take; ++i) ws.informative.insert(ws.ranked[i].first);
  for (size_t i = 0; i < take; ++i) {
    const auto& w = ws.ranked[n - 1 - i].first;
    if (!ws.informative.count(w)) ws.uninformative.insert(w);
  }
  return ws;
}

MaskStrategy MaskStrategy::random(double rate) {
  if (!(rate > 0.0 && rate < 1.0)) fail(ErrorCode::kConfig, "mask rate must lie in (0,1)");
  MaskStrategy s;
  s.kind = Kind::kRandom;
  s.rate = rate;
  return s;
}

MaskStrategy MaskStrategy::informative(std::shared_ptr<const WordSets> sets) {
  MaskStrategy s;
  s.kind = Kind::kInformative;
  s.word_sets = std::move(sets);
  return s;
}

MaskStrategy MaskStrategy::uninformative(std::shared_ptr<const WordSets> sets) {
  MaskStrategy s;
  s.kind = Kind::kUninformative;
  s.word_sets = std::move(sets);
  return s;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool word_in_set(const std::string& surface_word, const std::set<std::string>& set) {
  for (const auto& tok : normalize_words(surface_word)) {
    if (set.count(tok)) return true;
  }
  return false;
}

namespace {

MaskPlan random_plan(size_t n, double rate, Rng& rng) {
  std::bernoulli_distribution coin(rate);
  MaskPlan plan;
  do {
    plan.positions.clear();
    for (size_t i = 0; i < n; ++i) {
      if (coin(rng)) plan.positions.push_back(i);
    }
  } while (plan.positions.empty() || plan.positions.size() == n);
  return plan;
}

}  // namespace

MaskPlan plan_masks(const std::vector<std::string>& words, const MaskStrategy& strategy, Rng& rng) {
  const size_t n = words.size();
  if (n < 2) fail(ErrorCode::kDomain, "plan_masks needs at least 2 words");
  if (strategy.kind == MaskStrategy::Kind::kRandom) return random_plan(n, strategy.rate, rng);

  if (!strategy.word_sets) fail(ErrorCode::kConfig, "selective masking without word sets");
  const auto& set = strategy.kind == MaskStrategy::Kind::kInformative ? strategy.word_sets->informative
                                                                      : strategy.word_sets->uninformative;
  std::vector<size_t> members;
  for (size_t i = 0; i < n; ++i) {
    if (word_in_set(words[i], set)) members.push_back(i);
  }
  if (members.empty()) return random_plan(n, kSelectiveMaskBudget, rng);
  const size_t cap = ceil_fraction(kSelectiveMaskBudget, n);
  if (members.size() > cap) {
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(cap);
    std::sort(members.begin(), members.end());
  }
  return MaskPlan{members};
}

InferenceMaskMode parse_inference_mask_mode(const std::string& name) {
  if (name == "informative") return InferenceMaskMode::kInformative;
  if (name == "uninformative") return InferenceMaskMode::kUninformative;
  fail(ErrorCode::kConfig, "masked inference mode must be informative or uninformative, got `" + name + "`");
}

std::vector<std::string> mask_at_inference(const std::vector<std::string>& words, const WordSets& sets,
                                           InferenceMaskMode mode) {
  const auto& set = mode == InferenceMaskMode::kInformative ? sets.informative : sets.uninformative;
  std::vector<std::string> out = words;
  for (auto& w : out) {
    if (word_in_set(w, set)) w = std::string(kBlankMarker);
  }
  return out;
}

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string pmi_csv(const PmiTable& table, const LabelSpace& labels) {
  struct Row {
    std::string word;
    int cls;
    double pmi;
    size_t count;
    double score;
  };
  std::vector<Row> rows;
  for (const auto& [key, value] : table.pmi) {
    rows.push_back({key.first, key.second, value, table.pair_counts.at(key), table.score(key.first)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.word != b.word) return a.word < b.word;
    return a.cls < b.cls;
  });
  std::ostringstream out;
  out.precision(17);
  out << "word,class,pmi,count\n";
  for (const auto& r : rows) {
    out << csv_field(r.word) << "," << labels.class_names[static_cast<size_t>(r.cls)] << "," << r.pmi << "," << r.count << "\n";
  }
  return out.str();
}

}  // namespace genuda

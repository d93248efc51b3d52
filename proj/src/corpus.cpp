#include "genuda/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>
#include <set>
#include <sstream>

#include "genuda/error.hpp"
#include "genuda/rng.hpp"
#include "json.hpp"

namespace genuda {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::atomic<size_t> g_gate_accesses{0};

}  // namespace

LabelSpace LabelSpace::make(std::vector<std::string> class_names, std::vector<std::string> verbalizations) {
  if (class_names.size() < 2) fail(ErrorCode::kConfig, "label space needs at least 2 classes");
  if (verbalizations.size() != class_names.size()) {
    fail(ErrorCode::kConfig, "label space: one verbalization per class required");
  }
  std::set<std::string> names, verbs;
  for (size_t i = 0; i < class_names.size(); ++i) {
    if (trim(class_names[i]).empty()) fail(ErrorCode::kConfig, "label space: empty class name");
    if (trim(verbalizations[i]).empty()) fail(ErrorCode::kConfig, "label space: empty verbalization");
    if (!names.insert(lower(class_names[i])).second) {
      fail(ErrorCode::kConfig, "label space: duplicate class `" + class_names[i] + "`");
    }
    if (!verbs.insert(lower(trim(verbalizations[i]))).second) {
      fail(ErrorCode::kConfig, "label space: duplicate verbalization `" + verbalizations[i] + "`");
    }
  }
  return LabelSpace{std::move(class_names), std::move(verbalizations)};
}

LabelSpace LabelSpace::binary_sentiment() { return make({"negative", "positive"}, {"Negative", "Positive"}); }

LabelSpace LabelSpace::nli() {
  return make({"entailment", "neutral", "contradiction"}, {"Entailment", "Neutral", "Contradiction"});
}

std::optional<int> LabelSpace::parse_label(const std::string& token) const {
  std::string t = trim(token);
  if (t.empty()) return std::nullopt;
  int idx = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), idx);
  if (ec == std::errc() && ptr == t.data() + t.size()) {
    if (idx >= 0 && idx < size()) return idx;
    return std::nullopt;
  }
  std::string l = lower(t);
  for (int c = 0; c < size(); ++c) {
    if (lower(class_names[c]) == l || lower(verbalizations[c]) == l) return c;
  }
  return std::nullopt;
}

CorpusFormat parse_corpus_format(const std::string& name) {
  std::string n = lower(name);
  if (n == "tsv") return CorpusFormat::kTsv;
  if (n == "jsonl") return CorpusFormat::kJsonl;
  fail(ErrorCode::kConfig, "unknown corpus format `" + name + "` (expected tsv or jsonl)");
}

Corpus::Corpus(LabelSpace labels, std::vector<Example> examples)
    : labels_(std::move(labels)), examples_(std::move(examples)) {
  for (const auto& ex : examples_) {
    if (trim(ex.text).empty()) fail(ErrorCode::kParse, "corpus example with empty text");
    if (ex.label && (*ex.label < 0 || *ex.label >= labels_.size())) {
      fail(ErrorCode::kLabel, "label " + std::to_string(*ex.label) + " outside label space");
    }
  }
}

bool Corpus::fully_labeled() const {
  return std::all_of(examples_.begin(), examples_.end(), [](const Example& e) { return e.label.has_value(); });
}

Corpus Corpus::unlabeled() const {
  Corpus out = *this;
  for (auto& ex : out.examples_) ex.label.reset();
  return out;
}

std::vector<std::string> Corpus::texts() const {
  std::vector<std::string> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.text);
  return out;
}

std::vector<size_t> Corpus::class_counts() const {
  std::vector<size_t> counts(labels_.size(), 0);
  for (const auto& ex : examples_) {
    if (ex.label) ++counts[*ex.label];
  }
  return counts;
}

Corpus parse_corpus(const std::string& contents, CorpusFormat format, const LabelSpace& labels, bool keep_labels,
                    const std::string& origin) {
  std::vector<Example> out;
  std::istringstream in(contents);
  std::string line;
  size_t lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    Example ex;
    std::optional<std::string> label_token;
    if (format == CorpusFormat::kTsv) {
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) {
        ex.text = line;
      } else {
        ex.text = line.substr(0, tab);
        label_token = line.substr(tab + 1);
      }
    } else {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kParse, where() + "malformed JSON record (" + e.what() + ")");
      }
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
        fail(ErrorCode::kParse, where() + "record needs a string `text` field");
      }
      ex.text = j["text"].get<std::string>();
      if (j.contains("label") && !j["label"].is_null()) {
        if (j["label"].is_string()) {
          label_token = j["label"].get<std::string>();
        } else if (j["label"].is_number_integer()) {
          label_token = std::to_string(j["label"].get<long long>());
        } else {
          fail(ErrorCode::kParse, where() + "`label` must be a string");
        }
      }
    }
    if (trim(ex.text).empty()) fail(ErrorCode::kParse, where() + "empty text");
    if (label_token) {
      auto label = labels.parse_label(*label_token);
      if (!label) fail(ErrorCode::kLabel, where() + "unknown label `" + trim(*label_token) + "`");
      if (keep_labels) ex.label = *label;
    }
    out.push_back(std::move(ex));
  }
  return Corpus(labels, std::move(out));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const LabelSpace& labels,
                   bool keep_labels) {
  return parse_corpus(read_file(path), format, labels, keep_labels, path.string());
}

std::string serialize_corpus(const Corpus& corpus, CorpusFormat format) {
  std::string out;
  for (const auto& ex : corpus.examples()) {
    if (format == CorpusFormat::kTsv) {
      out += ex.text;
      if (ex.label) out += "\t" + std::to_string(*ex.label);
    } else {
      nlohmann::ordered_json j;
      j["text"] = ex.text;
      if (ex.label) j["label"] = std::to_string(*ex.label);
      out += j.dump();
    }
    out += "\n";
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  write_file_atomic(path, serialize_corpus(corpus, format));
}

Corpus kshot_subsample(const Corpus& corpus, size_t k, uint64_t seed) {
  const size_t num_classes = static_cast<size_t>(corpus.label_space().size());
  if (!corpus.fully_labeled()) fail(ErrorCode::kDomain, "kshot_subsample needs a labeled corpus");
  if (k < num_classes) {
    fail(ErrorCode::kDomain, "k=" + std::to_string(k) + " cannot be balanced over " +
                                 std::to_string(num_classes) + " classes");
  }
  if (k > corpus.size()) fail(ErrorCode::kDomain, "k exceeds corpus size");

  std::vector<std::vector<size_t>> by_class(num_classes);
  for (size_t i = 0; i < corpus.size(); ++i) by_class[*corpus[i].label].push_back(i);

  std::vector<size_t> quota(num_classes, k / num_classes);
  for (size_t c = 0; c < k % num_classes; ++c) ++quota[c];
  // Hand any shortfall on to the following classes, lowest index first.
  size_t deficit = 0;
  for (size_t c = 0; c < num_classes; ++c) {
    if (quota[c] > by_class[c].size()) {
      deficit += quota[c] - by_class[c].size();
      quota[c] = by_class[c].size();
    }
  }
  for (size_t c = 0; c < num_classes && deficit > 0; ++c) {
    size_t room = by_class[c].size() - quota[c];
    size_t take = std::min(room, deficit);
    quota[c] += take;
    deficit -= take;
  }

  std::vector<size_t> chosen;
  for (size_t c = 0; c < num_classes; ++c) {
    Rng rng = make_rng(seed, "kshot.class", {c});
    auto idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  Rng order = make_rng(seed, "kshot.order");
  std::shuffle(chosen.begin(), chosen.end(), order);

  std::vector<Example> out;
  out.reserve(chosen.size());
  for (size_t i : chosen) out.push_back(corpus[i]);
  return Corpus(corpus.label_space(), std::move(out));
}

const Corpus& GatedCorpus::labeled(const EvaluationGate&) const {
  g_gate_accesses.fetch_add(1, std::memory_order_relaxed);
  return corpus_;
}

size_t gated_label_accesses() { return g_gate_accesses.load(); }
void reset_gated_label_accesses() { g_gate_accesses.store(0); }

Splits split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  if (spec.train + spec.val + spec.test > corpus.size()) {
    fail(ErrorCode::kConfig, "split counts exceed corpus size " + std::to_string(corpus.size()));
  }
  std::vector<size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(spec.seed, "split");
  std::shuffle(idx.begin(), idx.end(), rng);
  auto take = [&](size_t begin, size_t count) {
    std::vector<Example> ex;
    for (size_t i = begin; i < begin + count; ++i) ex.push_back(corpus[idx[i]]);
    return Corpus(corpus.label_space(), std::move(ex));
  };
  return Splits{take(0, spec.train), take(spec.train, spec.val), take(spec.train + spec.val, spec.test)};
}

const Corpus& DomainPair::source_split(const std::string& split) const {
  if (split == "train") return source_train;
  if (split == "val") return source_val;
  if (split == "test") return source_test;
  fail(ErrorCode::kConfig, "unknown split `" + split + "`");
}

const GatedCorpus& DomainPair::target_split(const std::string& split) const {
  if (split == "train") return target_train;
  if (split == "val") return target_val;
  if (split == "test") return target_test;
  fail(ErrorCode::kConfig, "unknown split `" + split + "`");
}

struct StorageAccess {
  static EvaluationGate gate() { return EvaluationGate{}; }
};

void save_pair(const DomainPair& pair, const std::filesystem::path& dir, CorpusFormat format) {
  KvConfig cfg;
  cfg.set("name", pair.name);
  cfg.set("format", format == CorpusFormat::kTsv ? "tsv" : "jsonl");
  std::string names, verbs;
  for (int c = 0; c < pair.label_space.size(); ++c) {
    names += (c ? "," : "") + pair.label_space.class_names[c];
    verbs += (c ? "," : "") + pair.label_space.verbalizations[c];
  }
  cfg.set("classes", names);
  cfg.set("verbalizations", verbs);
  write_file_atomic(dir / "pair.cfg", cfg.serialize());
  const std::string ext = format == CorpusFormat::kTsv ? ".tsv" : ".jsonl";
  save_corpus(pair.source_train, dir / ("source.train" + ext), format);
  save_corpus(pair.source_val, dir / ("source.val" + ext), format);
  save_corpus(pair.source_test, dir / ("source.test" + ext), format);
  const EvaluationGate gate = StorageAccess::gate();
  save_corpus(pair.target_train.labeled(gate), dir / ("target.train" + ext), format);
  save_corpus(pair.target_val.labeled(gate), dir / ("target.val" + ext), format);
  save_corpus(pair.target_test.labeled(gate), dir / ("target.test" + ext), format);
}

DomainPair load_pair(const std::filesystem::path& dir) {
  KvConfig cfg = KvConfig::load(dir / "pair.cfg");
  cfg.require_known({"name", "format", "classes", "verbalizations"});
  auto names = split(cfg.get_string("classes"), ',');
  auto verbs = split(cfg.get_string("verbalizations"), ',');
  for (auto& n : names) n = trim(n);
  for (auto& v : verbs) v = trim(v);
  DomainPair pair;
  pair.name = cfg.get_string("name", dir.filename().string());
  pair.label_space = LabelSpace::make(names, verbs);
  const CorpusFormat format = parse_corpus_format(cfg.get_string("format", "tsv"));
  const std::string ext = format == CorpusFormat::kTsv ? ".tsv" : ".jsonl";
  auto load_opt = [&](const std::string& stem, bool required) {
    auto path = dir / (stem + ext);
    if (!std::filesystem::exists(path)) {
      if (required) fail(ErrorCode::kIo, "missing corpus file `" + path.string() + "`");
      return Corpus(pair.label_space, {});
    }
    return load_corpus(path, format, pair.label_space);
  };
  pair.source_train = load_opt("source.train", true);
  pair.source_val = load_opt("source.val", false);
  pair.source_test = load_opt("source.test", true);
  if (!pair.source_train.fully_labeled()) fail(ErrorCode::kLabel, "source.train must be fully labeled");
  pair.target_train = GatedCorpus(load_opt("target.train", true));
  pair.target_val = GatedCorpus(load_opt("target.val", false));
  pair.target_test = GatedCorpus(load_opt("target.test", true));
  return pair;
}

// --- synthetic generator ----------------------------------------------------------------

SynthSpec SynthSpec::from_config(const KvConfig& cfg) {
  cfg.require_known({"source_name", "target_name", "shared_background", "domain_background", "sentiment_words",
                     "overlap", "shared_weight", "min_len", "max_len", "min_sentiment", "max_sentiment",
                     "purity", "positive_prior", "train", "val", "test", "seed"});
  SynthSpec s;
  s.source_name = cfg.get_string("source_name", s.source_name);
  s.target_name = cfg.get_string("target_name", s.target_name);
  s.shared_background = static_cast<size_t>(cfg.get_int("shared_background", static_cast<int64_t>(s.shared_background)));
  s.domain_background = static_cast<size_t>(cfg.get_int("domain_background", static_cast<int64_t>(s.domain_background)));
  s.sentiment_words = static_cast<size_t>(cfg.get_int("sentiment_words", static_cast<int64_t>(s.sentiment_words)));
  s.overlap = cfg.get_double("overlap", s.overlap);
  s.shared_weight = cfg.get_double("shared_weight", s.shared_weight);
  s.min_len = static_cast<size_t>(cfg.get_int("min_len", static_cast<int64_t>(s.min_len)));
  s.max_len = static_cast<size_t>(cfg.get_int("max_len", static_cast<int64_t>(s.max_len)));
  s.min_sentiment = static_cast<size_t>(cfg.get_int("min_sentiment", static_cast<int64_t>(s.min_sentiment)));
  s.max_sentiment = static_cast<size_t>(cfg.get_int("max_sentiment", static_cast<int64_t>(s.max_sentiment)));
  s.purity = cfg.get_double("purity", s.purity);
  s.positive_prior = cfg.get_double("positive_prior", s.positive_prior);
  s.train = static_cast<size_t>(cfg.get_int("train", static_cast<int64_t>(s.train)));
  s.val = static_cast<size_t>(cfg.get_int("val", static_cast<int64_t>(s.val)));
  s.test = static_cast<size_t>(cfg.get_int("test", static_cast<int64_t>(s.test)));
  s.seed = cfg.get_u64("seed", s.seed);
  return s;
}

KvConfig SynthSpec::to_config() const {
  KvConfig c;
  c.set("source_name", source_name);
  c.set("target_name", target_name);
  c.set("shared_background", std::to_string(shared_background));
  c.set("domain_background", std::to_string(domain_background));
  c.set("sentiment_words", std::to_string(sentiment_words));
  std::ostringstream o, w, p, g;
  o << overlap;
  w << shared_weight;
  p << positive_prior;
  g << purity;
  c.set("overlap", o.str());
  c.set("shared_weight", w.str());
  c.set("min_len", std::to_string(min_len));
  c.set("max_len", std::to_string(max_len));
  c.set("min_sentiment", std::to_string(min_sentiment));
  c.set("max_sentiment", std::to_string(max_sentiment));
  c.set("purity", g.str());
  c.set("positive_prior", p.str());
  c.set("train", std::to_string(train));
  c.set("val", std::to_string(val));
  c.set("test", std::to_string(test));
  c.set("seed", std::to_string(seed));
  return c;
}

namespace {

void validate(const SynthSpec& s) {
  if (s.sentiment_words == 0) fail(ErrorCode::kConfig, "synth: sentiment_words must be >= 1");
  if (s.shared_background + s.domain_background == 0) fail(ErrorCode::kConfig, "synth: empty background vocabulary");
  if (s.overlap < 0.0 || s.overlap > 1.0) fail(ErrorCode::kConfig, "synth: overlap must lie in [0,1]");
  if (s.shared_weight <= 0.0) fail(ErrorCode::kConfig, "synth: shared_weight must be > 0");
  if (s.min_len < 2 || s.max_len < s.min_len) fail(ErrorCode::kConfig, "synth: need 2 <= min_len <= max_len");
  if (s.min_sentiment < 1 || s.max_sentiment < s.min_sentiment || s.max_sentiment > s.min_len) {
    fail(ErrorCode::kConfig, "synth: need 1 <= min_sentiment <= max_sentiment <= min_len");
  }
  if (s.purity <= 0.5 || s.purity > 1.0) fail(ErrorCode::kConfig, "synth: purity must lie in (0.5,1]");
  if (s.positive_prior <= 0.0 || s.positive_prior >= 1.0) fail(ErrorCode::kConfig, "synth: positive_prior in (0,1)");
  if (s.source_name.empty() || s.target_name.empty() || s.source_name == s.target_name) {
    fail(ErrorCode::kConfig, "synth: domain names must be distinct and non-empty");
  }
  if (s.train == 0 || s.test == 0) fail(ErrorCode::kConfig, "synth: train and test sizes must be >= 1");
}

std::vector<std::string> word_list(const std::string& stem, size_t n) {
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

struct DomainVocab {
  std::vector<std::string> background;
  std::vector<std::vector<std::string>> sentiment;    // per class, shared first
  std::vector<std::vector<double>> sentiment_weight;  // per class
};

Corpus generate_domain(const SynthSpec& s, const DomainVocab& v, const LabelSpace& labels, size_t n, Rng& rng) {
  std::uniform_int_distribution<size_t> len_dist(s.min_len, s.max_len);
  std::uniform_int_distribution<size_t> sent_dist(s.min_sentiment, s.max_sentiment);
  std::uniform_int_distribution<size_t> bg_dist(0, v.background.size() - 1);
  std::bernoulli_distribution positive(s.positive_prior);
  std::bernoulli_distribution pure(s.purity);
  std::vector<std::discrete_distribution<size_t>> word_dist;
  for (const auto& w : v.sentiment_weight) word_dist.emplace_back(w.begin(), w.end());

  std::vector<Example> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const int label = positive(rng) ? 1 : 0;
    const size_t len = len_dist(rng);
    const size_t n_sent = sent_dist(rng);
    std::vector<std::string> words;
    for (size_t j = 0; j < n_sent; ++j) {
      const int c = pure(rng) ? label : 1 - label;
      words.push_back(v.sentiment[c][word_dist[c](rng)]);
    }
    while (words.size() < len) words.push_back(v.background[bg_dist(rng)]);
    std::shuffle(words.begin(), words.end(), rng);
    std::string text;
    for (size_t j = 0; j < words.size(); ++j) text += (j ? " " : "") + words[j];
    out.push_back(Example{text, label});
  }
  return Corpus(labels, std::move(out));
}

}  // namespace

SynthResult synth_generate(const SynthSpec& spec, uint64_t seed) {
  validate(spec);
  const LabelSpace labels = LabelSpace::binary_sentiment();
  const char* polarity[2] = {"neg", "pos"};
  const size_t shared = static_cast<size_t>(std::llround(spec.overlap * static_cast<double>(spec.sentiment_words)));
  const size_t priv = spec.sentiment_words - shared;

  auto shared_bg = word_list("bg", spec.shared_background);
  auto make_vocab = [&](const std::string& domain) {
    DomainVocab v;
    v.background = shared_bg;
    auto own = word_list(domain + "bg", spec.domain_background);
    v.background.insert(v.background.end(), own.begin(), own.end());
    for (int c = 0; c < 2; ++c) {
      auto words = word_list(polarity[c], shared);
      auto own_sent = word_list(domain + polarity[c], priv);
      std::vector<double> weight(shared, spec.shared_weight);
      weight.insert(weight.end(), priv, 1.0);
      words.insert(words.end(), own_sent.begin(), own_sent.end());
      v.sentiment.push_back(std::move(words));
      v.sentiment_weight.push_back(std::move(weight));
    }
    return v;
  };
  const DomainVocab src = make_vocab(spec.source_name);
  const DomainVocab tgt = make_vocab(spec.target_name);

  Rng src_rng = make_rng(seed, "synth.source");
  Rng tgt_rng = make_rng(seed, "synth.target");
  const size_t total = spec.train + spec.val + spec.test;
  Corpus src_all = generate_domain(spec, src, labels, total, src_rng);
  Corpus tgt_all = generate_domain(spec, tgt, labels, total, tgt_rng);
  // Generated examples are i.i.d., so contiguous slices are valid splits.
  auto slice = [&](const Corpus& c, size_t b, size_t n) {
    return Corpus(labels, std::vector<Example>(c.examples().begin() + static_cast<std::ptrdiff_t>(b),
                                               c.examples().begin() + static_cast<std::ptrdiff_t>(b + n)));
  };

  SynthResult r;
  r.pair.name = spec.source_name + "→" + spec.target_name;
  r.pair.label_space = labels;
  r.pair.source_train = slice(src_all, 0, spec.train);
  r.pair.source_val = slice(src_all, spec.train, spec.val);
  r.pair.source_test = slice(src_all, spec.train + spec.val, spec.test);
  r.pair.target_train = GatedCorpus(slice(tgt_all, 0, spec.train));
  r.pair.target_val = GatedCorpus(slice(tgt_all, spec.train, spec.val));
  r.pair.target_test = GatedCorpus(slice(tgt_all, spec.train + spec.val, spec.test));
  r.vocabulary.source_sentiment = src.sentiment;
  r.vocabulary.target_sentiment = tgt.sentiment;
  r.vocabulary.source_background = src.background;
  r.vocabulary.target_background = tgt.background;
  return r;
}

}  // namespace genuda

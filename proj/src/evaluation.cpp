#include "genuda/evaluation.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "genuda/error.hpp"
#include "json.hpp"

namespace genuda {

// The evaluation module's key to target labels.
struct EvaluationAccess {
  static const Corpus& labeled(const GatedCorpus& corpus) {
    static const EvaluationGate gate;
    return corpus.labeled(gate);
  }
};

namespace {

constexpr size_t kChunk = 32;

TokenSeq encode_input(const Classifier& clf, const std::string& x) {
  return encode_template(cls_input(x, clf.prompt), clf.vocab, static_cast<size_t>(clf.model.config.max_seq_len));
}

}  // namespace

std::vector<std::vector<double>> class_scores_batch(const Classifier& clf, const std::vector<std::string>& xs) {
  const size_t k = clf.prompt.verbalizer.size();
  std::vector<TokenSeq> verbal;
  for (const auto& v : clf.prompt.verbalizer) {
    verbal.push_back(encode_template(v, clf.vocab, static_cast<size_t>(clf.model.config.max_seq_len)));
    if (verbal.back().empty()) fail(ErrorCode::kTemplate, "verbalization `" + v + "` encodes to nothing");
  }
  std::vector<std::vector<double>> out;
  out.reserve(xs.size());
  for (size_t start = 0; start < xs.size(); start += kChunk) {
    const size_t end = std::min(xs.size(), start + kChunk);
    std::vector<TokenSeq> inputs, prefixes, targets;
    for (size_t i = start; i < end; ++i) {
      const TokenSeq in = encode_input(clf, xs[i]);
      for (size_t c = 0; c < k; ++c) {
        inputs.push_back(in);
        prefixes.push_back(make_prefix(verbal[c]));
        targets.push_back(verbal[c]);
      }
    }
    const std::vector<double> nll = nll_loss(forward(clf.model, inputs, prefixes), targets);
    for (size_t i = 0; i < end - start; ++i) {
      std::vector<double> s(k);
      for (size_t c = 0; c < k; ++c) s[c] = -nll[i * k + c];
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<double> class_scores(const Classifier& clf, const std::string& x) {
  return class_scores_batch(clf, {x}).front();
}

int argmax_lowest(const std::vector<double>& scores) {
  if (scores.empty()) fail(ErrorCode::kShape, "argmax of no scores");
  int best = 0;
  for (size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[static_cast<size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

int rank_classify(const Classifier& clf, const std::string& x) { return argmax_lowest(class_scores(clf, x)); }

std::vector<int> rank_classify_batch(const Classifier& clf, const std::vector<std::string>& xs) {
  std::vector<int> out;
  for (const auto& s : class_scores_batch(clf, xs)) out.push_back(argmax_lowest(s));
  return out;
}

Domain parse_domain(const std::string& name) {
  if (name == "source") return Domain::kSource;
  if (name == "target") return Domain::kTarget;
  fail(ErrorCode::kConfig, "domain must be source or target, got `" + name + "`");
}

const char* domain_name(Domain domain) { return domain == Domain::kSource ? "source" : "target"; }

std::string EvalReport::to_json(bool with_predictions) const {
  nlohmann::ordered_json j;
  j["domain"] = domain;
  j["split"] = split;
  j["accuracy"] = accuracy;
  j["n"] = n;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  if (!masked_inference.empty()) j["masked_inference"] = masked_inference;
  if (with_predictions) j["predictions"] = predictions;
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("eval report: ") + e.what());
  }
  EvalReport r;
  try {
    r.domain = j.at("domain").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.n = j.at("n").get<size_t>();
    r.seed = j.at("seed").get<uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("masked_inference")) r.masked_inference = j["masked_inference"].get<std::string>();
    if (j.contains("predictions")) r.predictions = j["predictions"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("eval report: ") + e.what());
  }
  return r;
}

namespace {

const Corpus& labeled_split(const DomainPair& pair, Domain domain, const std::string& split) {
  if (domain == Domain::kSource) return pair.source_split(split);
  return EvaluationAccess::labeled(pair.target_split(split));
}

EvalReport score_texts(const Classifier& clf, const Corpus& corpus, const std::vector<std::string>& texts,
                       Domain domain, const std::string& split) {
  EvalReport r;
  r.domain = domain_name(domain);
  r.split = split;
  r.n = corpus.size();
  r.predictions = rank_classify_batch(clf, texts);
  size_t correct = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].label) fail(ErrorCode::kLabel, "evaluation split has an unlabeled example");
    if (r.predictions[i] == *corpus[i].label) ++correct;
  }
  r.accuracy = r.n ? static_cast<double>(correct) / static_cast<double>(r.n) : 0.0;
  return r;
}

}  // namespace

EvalReport evaluate(const Classifier& clf, const DomainPair& pair, Domain domain, const std::string& split) {
  const Corpus& corpus = labeled_split(pair, domain, split);
  return score_texts(clf, corpus, corpus.texts(), domain, split);
}

std::string mask_text_at_inference(const std::string& text, const WordSets& sets, InferenceMaskMode mode) {
  const auto words = mask_at_inference(split_whitespace(text), sets, mode);
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

EvalReport masked_inference_eval(const Classifier& clf, const DomainPair& pair, Domain domain,
                                 const std::string& split, const WordSets& sets, InferenceMaskMode mode) {
  const Corpus& corpus = labeled_split(pair, domain, split);
  std::vector<std::string> texts;
  for (const auto& t : corpus.texts()) texts.push_back(mask_text_at_inference(t, sets, mode));
  EvalReport r = score_texts(clf, corpus, texts, domain, split);
  r.masked_inference = mode == InferenceMaskMode::kInformative ? "informative" : "uninformative";
  return r;
}

std::string embeddings_csv(const Classifier& clf, const DomainPair& pair, const std::string& split) {
  const int d = clf.model.config.d_model;
  std::string out = "domain,label";
  for (int i = 0; i < d; ++i) out += ",e" + std::to_string(i);
  out += "\n";
  char buf[64];
  for (Domain domain : {Domain::kSource, Domain::kTarget}) {
    const Corpus& corpus = labeled_split(pair, domain, split);
    for (size_t start = 0; start < corpus.size(); start += kChunk) {
      const size_t end = std::min(corpus.size(), start + kChunk);
      std::vector<TokenSeq> inputs;
      for (size_t i = start; i < end; ++i) inputs.push_back(encode_input(clf, corpus[i].text));
      const Mat emb = forward(clf.model, inputs, {}).layer_embeddings.back();
      for (size_t i = start; i < end; ++i) {
        out += domain_name(domain);
        out += ",";
        out += corpus[i].label ? std::to_string(*corpus[i].label) : "";
        for (int c = 0; c < d; ++c) {
          std::snprintf(buf, sizeof buf, ",%.17g", emb(static_cast<Eigen::Index>(i - start), c));
          out += buf;
        }
        out += "\n";
      }
    }
  }
  return out;
}

void export_embeddings(const Classifier& clf, const DomainPair& pair, const std::string& split,
                       const std::filesystem::path& path) {
  write_file_atomic(path, embeddings_csv(clf, pair, split));
}

// --- significance tests ------------------------------------------------------------------

namespace {

std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> ranks(pooled.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

void require_samples(const std::vector<double>& a, const std::vector<double>& b, size_t least, const char* who) {
  if (a.size() < least || b.size() < least) {
    fail(ErrorCode::kDomain, std::string(who) + ": each sample needs >= " + std::to_string(least) + " values");
  }
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  require_samples(a, b, 1, "mann_whitney_u");
  const size_t n = a.size(), m = b.size(), total = n + m;
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);
  const double rn = static_cast<double>(n), rm = static_cast<double>(m);
  const double offset = rn * (rn + 1.0) / 2.0;
  double ra = 0.0;
  for (size_t i = 0; i < n; ++i) ra += ranks[i];

  MannWhitneyResult r;
  r.u = ra - offset;
  const double centre = rn * rm / 2.0;
  const double observed = std::abs(r.u - centre);

  if (n <= 8 && m <= 8) {
    // Every way of choosing which n of the pooled ranks belong to the first sample.
    r.exact = true;
    size_t hits = 0, count = 0;
    std::vector<bool> pick(total, false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(n), true);
    do {
      double s = 0.0;
      for (size_t i = 0; i < total; ++i) {
        if (pick[i]) s += ranks[i];
      }
      ++count;
      if (std::abs(s - offset - centre) >= observed - 1e-9) ++hits;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    r.p = static_cast<double>(hits) / static_cast<double>(count);
    return r;
  }

  double ties = 0.0;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size();) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double nn = static_cast<double>(total);
  const double var = rn * rm / 12.0 * ((nn + 1.0) - ties / (nn * (nn - 1.0)));
  if (var <= 0.0) {
    r.p = 1.0;
    return r;
  }
  const double z = std::max(0.0, observed - 0.5) / std::sqrt(var);
  const boost::math::normal_distribution<double> normal;
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, z)));
  return r;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

TTestResult students_t(const std::vector<double>& a, const std::vector<double>& b) {
  require_samples(a, b, 2, "students_t");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = std::pow(stddev_of(a), 2), vb = std::pow(stddev_of(b), 2);
  TTestResult r;
  const double se2 = va / na + vb / nb;
  if (se2 == 0.0) {
    r.degenerate = true;
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  const boost::math::students_t_distribution<double> dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

}  // namespace genuda

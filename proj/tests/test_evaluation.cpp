#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "checks.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "genuda/evaluation.hpp"
#include "genuda/training.hpp"
#include "oracles.hpp"

using namespace genuda;

namespace {

struct Nli {
  LabelSpace labels = LabelSpace::nli();
  PromptTemplate prompt = PromptTemplate::defaults(labels);
  Vocab vocab;
  Model model;

  explicit Nli(Architecture arch) {
    std::vector<std::string> req = {prompt.instruction, prompt.cls_pattern};
    for (const auto& v : prompt.verbalizer) req.push_back(v);
    vocab = build_vocab(std::vector<std::vector<std::string>>{{"a cat sat on the mat", "the dog barked twice"}}, 64, 1,
                        req);
    ModelConfig c;
    c.arch = arch;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 1;
    c.d_ff = 12;
    c.max_seq_len = 40;
    c.vocab_size = vocab.size();
    model = Model::init(c, 5);
    checks::jitter(model, 9, 0.4);
  }

  Classifier clf() const { return Classifier{model, vocab, prompt}; }
};

const std::vector<std::string> kTexts = {"a cat sat on the mat", "the dog barked twice", "cat dog cat", "mat"};

// Two-sided Welch p from the regularized incomplete beta.
double welch_p(double t, double df) { return boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t)); }

}  // namespace

TEST_CASE("rank scores equal the reference mean log-likelihood of each verbalization") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    Nli n(arch);
    const auto scores = class_scores_batch(n.clf(), kTexts);
    REQUIRE(scores.size() == kTexts.size());
    for (size_t i = 0; i < kTexts.size(); ++i) {
      const TokenSeq in = encode_template(cls_input(kTexts[i], n.prompt), n.vocab, 40);
      std::vector<double> want;
      for (const auto& v : n.prompt.verbalizer) {
        want.push_back(oracle::mean_log_prob(n.model, in, encode_template(v, n.vocab, 40)));
      }
      REQUIRE(scores[i].size() == 3);
      int best = 0;
      for (int c = 0; c < 3; ++c) {
        CHECK(scores[i][c] == doctest::Approx(want[c]).epsilon(1e-10));
        if (want[c] > want[best]) best = c;
      }
      CHECK(rank_classify(n.clf(), kTexts[i]) == best);
      CHECK(class_scores(n.clf(), kTexts[i]) == scores[i]);
    }
  }
}

TEST_CASE("single-token verbalizations reduce to the next-token log-probability") {
  Nli n(Architecture::kEncoderDecoder);
  for (const auto& v : n.prompt.verbalizer) REQUIRE(encode_template(v, n.vocab, 40).size() == 1);
  const TokenSeq in = encode_template(cls_input(kTexts[0], n.prompt), n.vocab, 40);
  const auto out = oracle::Reference(n.model).run({in}, {TokenSeq{kPad}});
  const auto scores = class_scores(n.clf(), kTexts[0]);
  for (int c = 0; c < 3; ++c) {
    const int id = encode_template(n.prompt.verbalizer[c], n.vocab, 40)[0];
    CHECK(scores[c] == doctest::Approx(oracle::log_softmax_at(out.logits[0][0], id)).epsilon(1e-10));
  }
}

TEST_CASE("argmax breaks ties to the lowest index and ignores constant offsets") {
  CHECK(argmax_lowest({1.0, 1.0}) == 0);
  CHECK(argmax_lowest({0.0, 2.0, 2.0}) == 1);
  CHECK(argmax_lowest({-3.0, -1.0, -2.0}) == 1);
  CHECK(fixture::error_of([] { argmax_lowest({}); }) == ErrorCode::kShape);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 200; ++k) {
    std::vector<double> s(4), t(4);
    const double off = 50.0 * g(rng);
    for (int c = 0; c < 4; ++c) {
      s[c] = std::round(g(rng) * 2.0) / 2.0;  // coarse grid: ties happen
      t[c] = s[c] + off;
    }
    int want = 0;
    for (int c = 1; c < 4; ++c) {
      if (s[c] > s[want]) want = c;
    }
    CHECK(argmax_lowest(s) == want);
    if (off == std::round(off)) CHECK(argmax_lowest(t) == want);
  }
}

TEST_CASE("accuracy counts matching predictions") {
  const DomainPair pair = fixture::small_pair();
  const TrainConfig c = fixture::tiny_config(ScheduleKind::kSrcOnly, 10);
  const TrainResult r = train(c, pair);
  const Classifier clf{r.model, r.context.vocab, r.context.prompt};

  const EvalReport src = evaluate(clf, pair, Domain::kSource, "test");
  REQUIRE(src.n == pair.source_test.size());
  CHECK(src.predictions == rank_classify_batch(clf, pair.source_test.texts()));
  size_t right = 0;
  for (size_t i = 0; i < src.n; ++i) right += src.predictions[i] == *pair.source_test[i].label;
  CHECK(src.accuracy == doctest::Approx(static_cast<double>(right) / static_cast<double>(src.n)));
  CHECK(src.domain == "source");
  CHECK(src.masked_inference.empty());

  reset_gated_label_accesses();
  const EvalReport tgt = evaluate(clf, pair, Domain::kTarget, "test");
  CHECK(tgt.predictions == rank_classify_batch(clf, pair.target_test.unlabeled().texts()));
  CHECK(tgt.accuracy >= 0.0);
  CHECK(tgt.accuracy <= 1.0);
  CHECK(gated_label_accesses() == 1);  // the evaluation read of the target split
  CHECK(fixture::error_of([&] { evaluate(clf, pair, Domain::kSource, "dev"); }) != static_cast<ErrorCode>(0));
}

TEST_CASE("masked inference scores the masked sentences") {
  const DomainPair pair = fixture::small_pair();
  const TrainConfig c = fixture::tiny_config(ScheduleKind::kSrcOnly, 4);
  const TrainResult r = train(c, pair);
  const Classifier clf{r.model, r.context.vocab, r.context.prompt};
  const WordSets& sets = *r.context.word_sets;
  REQUIRE(!sets.informative.empty());

  for (auto mode : {InferenceMaskMode::kInformative, InferenceMaskMode::kUninformative}) {
    const EvalReport rep = masked_inference_eval(clf, pair, Domain::kSource, "test", sets, mode);
    std::vector<std::string> masked;
    for (const auto& t : pair.source_test.texts()) {
      const std::string m = mask_text_at_inference(t, sets, mode);
      CHECK(split_whitespace(m).size() == split_whitespace(t).size());
      masked.push_back(m);
    }
    CHECK(rep.predictions == rank_classify_batch(clf, masked));
    CHECK(rep.masked_inference == (mode == InferenceMaskMode::kInformative ? "informative" : "uninformative"));
  }

  WordSets hand;
  hand.informative = {"great"};
  hand.uninformative = {"the"};
  CHECK(mask_text_at_inference("the great film", hand, InferenceMaskMode::kInformative) == "the _ film");
  CHECK(mask_text_at_inference("the great film", hand, InferenceMaskMode::kUninformative) == "_ great film");
}

TEST_CASE("embedding export: one row per example, d columns, stable") {
  const DomainPair pair = fixture::small_pair();
  const TrainConfig c = fixture::tiny_config(ScheduleKind::kSrcOnly, 2);
  const TrainResult r = train(c, pair);
  const Classifier clf{r.model, r.context.vocab, r.context.prompt};
  const std::string csv = embeddings_csv(clf, pair, "test");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("domain,label,e0,", 0) == 0);
  CHECK(line.find(",e15") != std::string::npos);
  size_t src = 0, tgt = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 1 + 16);
    if (line.rfind("source,", 0) == 0) {
      CHECK(tgt == 0);
      ++src;
    } else if (line.rfind("target,", 0) == 0) {
      ++tgt;
    } else {
      FAIL("unexpected row " << line);
    }
  }
  CHECK(src == pair.source_test.size());
  CHECK(tgt == pair.target_test.size());
  CHECK(embeddings_csv(clf, pair, "test") == csv);

  const auto dir = fixture::scratch("emb");
  export_embeddings(clf, pair, "test", dir / "e.csv");
  std::ifstream f(dir / "e.csv");
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == csv);
}

TEST_CASE("Mann-Whitney exact p matches enumeration") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> val(0, 6);  // small range so ties occur
  for (size_t n = 1; n <= 8; ++n) {
    for (size_t m = 1; m <= 8; ++m) {
      if (n + m > 12 && !(n == 8 && m == 8)) continue;
      for (int rep = 0; rep < 2; ++rep) {
        std::vector<double> a(n), b(m);
        for (auto& x : a) x = val(rng);
        for (auto& x : b) x = val(rng) + (rep ? 0.5 : 0.0);
        const auto r = mann_whitney_u(a, b);
        INFO("n=" << n << " m=" << m);
        CHECK(r.exact);
        CHECK(r.u == doctest::Approx(oracle::u_pairs(a, b)).epsilon(1e-12));
        CHECK(r.p == doctest::Approx(oracle::mw_exact_p(a, b)).epsilon(1e-12));
        const auto back = mann_whitney_u(b, a);
        CHECK(r.u + back.u == doctest::Approx(static_cast<double>(n * m)));
        CHECK(back.p == doctest::Approx(r.p).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("Mann-Whitney known values and the large-sample path") {
  const auto r = mann_whitney_u({1, 2, 3}, {4, 5, 6});
  CHECK(r.u == 0.0);
  CHECK(r.p == doctest::Approx(0.1));

  std::vector<double> lo, hi;
  for (int i = 0; i < 20; ++i) {
    lo.push_back(i);
    hi.push_back(100 + i);
  }
  const auto far = mann_whitney_u(lo, hi);
  CHECK(!far.exact);
  CHECK(far.p < 0.01);
  const auto same = mann_whitney_u(lo, lo);
  CHECK(same.p > 0.9);
  const auto flat = mann_whitney_u(std::vector<double>(10, 1.0), std::vector<double>(10, 1.0));
  CHECK(flat.p == 1.0);
  CHECK(fixture::error_of([] { mann_whitney_u({}, {2, 3}); }) == ErrorCode::kDomain);
  CHECK(mann_whitney_u({1}, {2, 3}).p == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("Welch t-test against a hand computation") {
  const std::vector<double> a = {1, 2, 3, 4}, b = {2, 4, 6, 8, 10};
  const double va = 5.0 / 3.0, vb = 10.0;
  const double se2 = va / 4 + vb / 5;
  const double t = (2.5 - 6.0) / std::sqrt(se2);
  const double df = se2 * se2 / ((va / 4) * (va / 4) / 3 + (vb / 5) * (vb / 5) / 4);
  const auto r = students_t(a, b);
  CHECK(r.t == doctest::Approx(t).epsilon(1e-12));
  CHECK(r.df == doctest::Approx(df).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(welch_p(t, df)).epsilon(1e-9));
  CHECK(!r.degenerate);
  CHECK(students_t(b, a).p == doctest::Approx(r.p).epsilon(1e-12));

  const auto flat = students_t({1, 1, 1}, {1, 1});
  CHECK(flat.degenerate);
  CHECK(flat.p == 1.0);
  const auto apart = students_t({1, 1, 1}, {2, 2});
  CHECK(apart.degenerate);
  CHECK(apart.p == 0.0);
  CHECK(mean_of({}) == 0.0);
  CHECK(stddev_of({4.0}) == 0.0);
  CHECK(stddev_of({1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("eval report json round trip") {
  EvalReport r;
  r.domain = "target";
  r.split = "test";
  r.accuracy = 0.8125;
  r.n = 16;
  r.seed = 42;
  r.config_hash = "abc123";
  r.masked_inference = "informative";
  r.predictions = {0, 1, 1, 0};
  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.predictions == r.predictions);
  CHECK(EvalReport::from_json(r.to_json(false)).predictions.empty());
  CHECK(fixture::error_of([] { EvalReport::from_json("{\"domain\": 1}"); }) == ErrorCode::kParse);
  CHECK(fixture::error_of([] { EvalReport::from_json("not json"); }) == ErrorCode::kParse);
}

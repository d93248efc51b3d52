#include <cmath>

#include "checks.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "genuda/model.hpp"
#include "oracles.hpp"

using namespace genuda;

namespace {

ModelConfig small(Architecture arch, PeftConfig peft = {}) {
  ModelConfig c;
  c.arch = arch;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 12;
  c.vocab_size = 15;
  c.max_seq_len = 16;
  c.peft = peft;
  return c;
}

const std::vector<TokenSeq> kInputs = {{5, 6, 7}, {8, 9}, {10, 11, 12, 13}};
const std::vector<TokenSeq> kPrefixes = {{0, 7, 3}, {0, 4}, {0, 12, 3, 14}};

double max_diff(const ForwardOutput& got, const oracle::Reference::Output& want) {
  double worst = 0;
  for (size_t b = 0; b < got.logits.size(); ++b) {
    for (Eigen::Index i = 0; i < got.logits[b].rows(); ++i) {
      for (Eigen::Index j = 0; j < got.logits[b].cols(); ++j) {
        worst = std::max(worst, std::abs(got.logits[b](i, j) - want.logits[b][static_cast<size_t>(i)][static_cast<size_t>(j)]));
      }
    }
  }
  for (size_t l = 0; l < got.layer_embeddings.size(); ++l) {
    for (Eigen::Index i = 0; i < got.layer_embeddings[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < got.layer_embeddings[l].cols(); ++j) {
        worst = std::max(worst, std::abs(got.layer_embeddings[l](i, j) -
                                         want.layer_embeddings[l][static_cast<size_t>(i)][static_cast<size_t>(j)]));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("packed forward matches the loop-based reference") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    for (auto peft : {PeftConfig::none(), PeftConfig::ia3(), PeftConfig::adapter(3)}) {
      Model m = Model::init(small(arch, peft), 1);
      checks::jitter(m, 2);
      const ForwardOutput got = forward(m, kInputs, kPrefixes);
      const auto want = oracle::Reference(m).run(kInputs, kPrefixes);
      REQUIRE(got.logits.size() == 3);
      CHECK(got.logits[2].rows() == 4);
      CHECK(got.layer_embeddings.size() == 2);
      CHECK(max_diff(got, want) < 1e-12);
    }
  }
}

TEST_CASE("PEFT at initialization is the identity") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    Model base = Model::init(small(arch), 4);
    checks::jitter(base, 5);
    for (auto peft : {PeftConfig::ia3(), PeftConfig::adapter(4)}) {
      Model m = Model::init(small(arch, peft), 4);
      // Copy base weights; PEFT tensors keep their identity initialization.
      for (size_t i = 0; i < m.params.size(); ++i) {
        if (!is_peft_tensor(m.params.name(i))) m.params.tensor(i).value = base.params.at(m.params.name(i)).value;
      }
      const ForwardOutput a = forward(base, kInputs, kPrefixes);
      const ForwardOutput b = forward(m, kInputs, kPrefixes);
      for (size_t s = 0; s < a.logits.size(); ++s) CHECK((a.logits[s] - b.logits[s]).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("uniform logits give log V and a confident model gives near zero") {
  Model m = Model::init(small(Architecture::kEncoderDecoder), 1);
  m.params.at("head.w").value.setZero();
  const auto out = forward(m, {{5, 6}}, {{0, 9}});
  CHECK(std::abs(nll_loss(out, {{9, 3}})[0] - std::log(15.0)) < 1e-12);
  m.params.at("head.b").value(0, 9) = 60.0;
  const auto sure = forward(m, {{5, 6}}, {{0}});
  CHECK(nll_loss(sure, {{9}})[0] < 1e-20);
  CHECK(fixture::error_of([&] { nll_loss(sure, {{kPad}}); }) == ErrorCode::kDomain);
}

TEST_CASE("sequence loss matches a scalar log-softmax oracle") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    Model m = Model::init(small(arch), 0);
    checks::jitter(m, 0);
    const std::vector<TokenSeq> targets = {{7, 3}, {4}, {12, 3, 14, 2}};
    ag::Tape t;
    ParamBinder bind(t, m.params, false);
    const double got = sequence_loss(bind, m.config, kInputs, targets).scalar();
    double want = 0;
    for (size_t b = 0; b < targets.size(); ++b) want -= oracle::mean_log_prob(m, kInputs[b], targets[b]);
    want /= 3.0;
    CHECK(std::abs(got - want) < 1e-10);
  }
}

TEST_CASE("token probabilities sum to one") {
  Model m = Model::init(small(Architecture::kDecoderOnly), 3);
  checks::jitter(m, 3);
  const auto out = forward(m, {{5, 6, 7}}, {{0}});
  double total = 0;
  for (int v = 0; v < m.config.vocab_size; ++v) {
    if (v == kPad) {
      total += std::exp(oracle::log_softmax_at(std::vector<double>(out.logits[0].data(), out.logits[0].data() + out.logits[0].cols()), v));
      continue;
    }
    total += std::exp(-nll_loss(out, {{v}})[0]);
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("causal mask: later tokens never change earlier logits") {
  Model m = Model::init(small(Architecture::kDecoderOnly), 6);
  checks::jitter(m, 6);
  // Logits over the whole sequence: a one-token input and the rest as the decoder prefix.
  TokenSeq prefix = {0, 6, 7, 8, 9, 10};
  const Mat base = forward(m, {{5}}, {prefix}).logits[0];
  for (size_t t = 2; t < prefix.size(); ++t) {
    TokenSeq changed = prefix;
    changed[t] = 13;
    const Mat other = forward(m, {{5}}, {changed}).logits[0];
    // Prefix position t is sequence position t; rows 0..t-1 cannot see it.
    CHECK((base.topRows(static_cast<Eigen::Index>(t)) - other.topRows(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() == 0.0);
    CHECK((base.row(static_cast<Eigen::Index>(t)) - other.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("trainable counts match an independent tally") {
  ModelConfig c = checks::desk_model(Architecture::kEncoderDecoder, PeftConfig::none(), 100);
  const Model full = Model::init(c, 1);
  // d=64, ff=128, V=100, L=64 positions, 2+2 layers.
  const size_t d = 64, ff = 128, v = 100, pos = 64;
  const size_t ln = 2 * d, attn = 4 * d * d, ffn = d * ff + ff + ff * d + d;
  const size_t enc_layer = 2 * ln + attn + ffn;
  const size_t dec_layer = 3 * ln + 2 * attn + ffn;
  const size_t expected = v * d + 2 * pos * d + 2 * enc_layer + 2 * dec_layer + 2 * ln + d * v + v;
  CHECK(full.params.count() == expected);
  CHECK(full.params.trainable_count() == expected);

  c.peft = PeftConfig::ia3();
  const Model ia3 = Model::init(c, 1);
  // l_k, l_v per attention block (2 enc + 4 dec) and l_ff per feed-forward (4).
  CHECK(ia3.params.trainable_count() == 6 * 2 * d + 4 * ff);
  c.peft = PeftConfig::adapter(16);
  const Model adapter = Model::init(c, 1);
  CHECK(adapter.params.trainable_count() == 4 * 2 * d * 16);
  CHECK(ia3.params.trainable_count() < adapter.params.trainable_count());
  CHECK(adapter.params.trainable_count() < full.params.trainable_count());
}

TEST_CASE("frozen base weights get zero gradient under PEFT") {
  for (auto peft : {PeftConfig::ia3(), PeftConfig::adapter(4)}) {
    Model m = Model::init(small(Architecture::kEncoderDecoder, peft), 2);
    checks::jitter(m, 2);
    ag::Tape t;
    ParamBinder bind(t, m.params, true);
    t.backward(sequence_loss(bind, m.config, kInputs, {{7, 3}, {4}, {12, 3}}));
    const auto g = bind.gradients();
    bool any_peft = false;
    for (size_t i = 0; i < m.params.size(); ++i) {
      if (!m.params.tensor(i).trainable) {
        CHECK(g[i].cwiseAbs().maxCoeff() == 0.0);
      } else {
        any_peft = any_peft || g[i].cwiseAbs().maxCoeff() > 0.0;
      }
    }
    CHECK(any_peft);
  }
}

TEST_CASE("gradients match finite differences on a small model") {
  for (auto arch : {Architecture::kEncoderDecoder, Architecture::kDecoderOnly}) {
    for (auto peft : {PeftConfig::none(), PeftConfig::ia3(), PeftConfig::adapter(3)}) {
      Model m = Model::init(small(arch, peft), 8);
      checks::jitter(m, 8);
      checks::Objective obj;
      obj.inputs = {{5, 6, 7}, {8, 9}};
      obj.targets = {{7, 3}, {4, 9, 2}};
      obj.source = {{5, 6}, {7, 8, 9}};
      obj.target = {{10, 11}, {12, 13, 14}};
      const auto grads = obj.gradients(m);
      const auto r = oracle::finite_difference(m, [&] { return obj.value(m); }, grads, 40);
      INFO(architecture_name(arch), " ", peft_kind_name(peft.kind), " worst in ", r.worst_tensor);
      CHECK(r.worst <= 1e-4);
    }
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  Model m = Model::init(small(Architecture::kDecoderOnly, PeftConfig::adapter(2)), 3);
  checks::jitter(m, 3);
  const auto dir = fixture::scratch("checkpoint");
  save_checkpoint(m, dir);
  const Model back = load_checkpoint(dir);
  CHECK(back.config.arch == m.config.arch);
  CHECK(back.config.peft.kind == PeftConfig::Kind::kAdapter);
  REQUIRE(back.params.size() == m.params.size());
  for (size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.params.name(i) == m.params.name(i));
    CHECK(back.params.tensor(i).value == m.params.tensor(i).value);
    CHECK(back.params.tensor(i).trainable == m.params.tensor(i).trainable);
  }
  write_file_atomic(dir / "model.bin", "GENUDA01garbage");
  CHECK(fixture::error_of([&] { load_checkpoint(dir); }) == ErrorCode::kParse);
}

TEST_CASE("shape errors") {
  const Model m = Model::init(small(Architecture::kEncoderDecoder), 1);
  CHECK(fixture::error_of([&] { forward(m, {}, {}); }) == ErrorCode::kShape);
  CHECK(fixture::error_of([&] { forward(m, {{5}}, {{0}, {0}}); }) == ErrorCode::kShape);
  CHECK(fixture::error_of([&] { forward(m, {TokenSeq(17, 5)}, {}); }) == ErrorCode::kShape);
  ModelConfig bad = small(Architecture::kEncoderDecoder);
  bad.n_heads = 3;
  CHECK(fixture::error_of([&] { Model::init(bad, 1); }) == ErrorCode::kConfig);
}

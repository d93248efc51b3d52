#include "genuda/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <set>

#include "genuda/error.hpp"
#include "genuda/rng.hpp"

namespace genuda {

namespace {

struct ScheduleName {
  ScheduleKind kind;
  const char* name;
};

constexpr ScheduleName kScheduleNames[] = {
    {ScheduleKind::kTwoPhaseCpt, "two_phase_cpt"},
    {ScheduleKind::kSinglePhaseCpt, "single_phase_cpt"},
    {ScheduleKind::kSinglePhaseVanilla, "single_phase_vanilla"},
    {ScheduleKind::kUdapterJoint, "udapter_joint"},
    {ScheduleKind::kUdapterFixedWeight, "udapter_fixed_weight"},
    {ScheduleKind::kUdapterTwoPhase, "udapter_two_phase"},
    {ScheduleKind::kSrcOnly, "src_only"},
    {ScheduleKind::kSrcPlusTgt, "src_plus_tgt"},
};

}  // namespace

ScheduleKind parse_schedule(const std::string& name) {
  for (const auto& s : kScheduleNames) {
    if (name == s.name) return s.kind;
  }
  fail(ErrorCode::kConfig, "unknown schedule `" + name + "`");
}

const char* schedule_name(ScheduleKind kind) {
  for (const auto& s : kScheduleNames) {
    if (kind == s.kind) return s.name;
  }
  return "?";
}

std::vector<ScheduleKind> all_schedules() {
  std::vector<ScheduleKind> out;
  for (const auto& s : kScheduleNames) out.push_back(s.kind);
  return out;
}

Phase1Data parse_phase1_data(const std::string& name) {
  if (name == "source_only") return Phase1Data::kSourceOnly;
  if (name == "target_only") return Phase1Data::kTargetOnly;
  if (name == "source_and_target") return Phase1Data::kSourceAndTarget;
  fail(ErrorCode::kConfig, "phase1_data must be source_only, target_only or source_and_target, got `" + name + "`");
}

const char* phase1_data_name(Phase1Data data) {
  switch (data) {
    case Phase1Data::kSourceOnly: return "source_only";
    case Phase1Data::kTargetOnly: return "target_only";
    case Phase1Data::kSourceAndTarget: return "source_and_target";
  }
  return "?";
}

namespace {

MaskStrategy::Kind parse_mask_kind(const std::string& name) {
  if (name == "random") return MaskStrategy::Kind::kRandom;
  if (name == "informative") return MaskStrategy::Kind::kInformative;
  if (name == "uninformative") return MaskStrategy::Kind::kUninformative;
  fail(ErrorCode::kConfig, "mask.strategy must be random, informative or uninformative, got `" + name + "`");
}

const char* mask_kind_name(MaskStrategy::Kind kind) {
  switch (kind) {
    case MaskStrategy::Kind::kRandom: return "random";
    case MaskStrategy::Kind::kInformative: return "informative";
    case MaskStrategy::Kind::kUninformative: return "uninformative";
  }
  return "?";
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

bool TrainConfig::uses_cpt() const {
  return schedule == ScheduleKind::kTwoPhaseCpt || schedule == ScheduleKind::kSinglePhaseCpt ||
         schedule == ScheduleKind::kSinglePhaseVanilla;
}

bool TrainConfig::uses_divergence() const {
  return schedule == ScheduleKind::kUdapterJoint || schedule == ScheduleKind::kUdapterFixedWeight ||
         schedule == ScheduleKind::kUdapterTwoPhase;
}

long TrainConfig::total_steps() const {
  switch (schedule) {
    case ScheduleKind::kTwoPhaseCpt:
    case ScheduleKind::kUdapterTwoPhase: return phase1_steps + phase2_steps;
    case ScheduleKind::kSinglePhaseCpt:
    case ScheduleKind::kSinglePhaseVanilla: return phase1_steps;
    default: return phase2_steps;
  }
}

void TrainConfig::validate() const {
  if (phase1_steps < 1 || phase2_steps < 1) fail(ErrorCode::kConfig, "phase step counts must be >= 1");
  if (batch_size < 1) fail(ErrorCode::kConfig, "batch_size must be >= 1");
  if (uses_divergence() && batch_size < 2) fail(ErrorCode::kConfig, "batch_size must be >= 2 for MMD schedules");
  if (!(lr > 0.0)) fail(ErrorCode::kConfig, "lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail(ErrorCode::kConfig, "adam betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) fail(ErrorCode::kConfig, "adam eps must be positive");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) fail(ErrorCode::kConfig, "mask.rate must lie in (0,1)");
  if (!(select_k_percent > 0.0 && select_k_percent <= 100.0)) fail(ErrorCode::kConfig, "mask.k_percent must lie in (0,100]");
  if (lambda_total_steps < 0) fail(ErrorCode::kConfig, "lambda.total_steps must be >= 0");
  if (mmd_weight < 0.0) fail(ErrorCode::kConfig, "mmd_weight must be >= 0");
  if (max_vocab < 16) fail(ErrorCode::kConfig, "vocab.max_size must be >= 16");
  if (cpt_template == TemplateKind::kCls) fail(ErrorCode::kConfig, "cpt.template must be mlm or clm");
  if (cpt_template == TemplateKind::kClm && model.arch != Architecture::kDecoderOnly) {
    fail(ErrorCode::kConfig, "cpt.template = clm requires model.arch = decoder_only");
  }
}

TrainConfig TrainConfig::from_config(const KvConfig& cfg) {
  static const std::set<std::string> known = {
      "schedule", "phase1_steps", "phase2_steps", "batch_size", "lr", "adam.beta1", "adam.beta2", "adam.eps",
      "mask.strategy", "mask.rate", "mask.k_percent", "mask.min_freq", "cpt.template", "phase1_data",
      "lambda.kind", "lambda.total_steps", "divergence.kind", "mmd_weight", "shots", "seed", "vocab.max_size",
      "vocab.min_count", "pair", "format"};
  cfg.require_known(known, {"model.", "template."});

  TrainConfig c;
  c.schedule = parse_schedule(cfg.get_string("schedule", schedule_name(c.schedule)));
  c.phase1_steps = cfg.get_int("phase1_steps", c.phase1_steps);
  c.phase2_steps = cfg.get_int("phase2_steps", c.phase1_steps);  // phase 2 defaults to phase 1
  c.batch_size = static_cast<int>(cfg.get_int("batch_size", c.batch_size));
  c.lr = cfg.get_double("lr", c.lr);
  c.beta1 = cfg.get_double("adam.beta1", c.beta1);
  c.beta2 = cfg.get_double("adam.beta2", c.beta2);
  c.eps = cfg.get_double("adam.eps", c.eps);
  c.mask_strategy = parse_mask_kind(cfg.get_string("mask.strategy", mask_kind_name(c.mask_strategy)));
  c.mask_rate = cfg.get_double("mask.rate", c.mask_rate);
  c.select_k_percent = cfg.get_double("mask.k_percent", c.select_k_percent);
  c.select_min_freq = static_cast<size_t>(cfg.get_u64("mask.min_freq", c.select_min_freq));
  c.cpt_template = parse_template_kind(cfg.get_string("cpt.template", template_kind_name(c.cpt_template)));
  c.phase1_data = parse_phase1_data(cfg.get_string("phase1_data", phase1_data_name(c.phase1_data)));
  c.lambda_kind = parse_lambda_kind(cfg.get_string("lambda.kind", lambda_kind_name(c.lambda_kind)));
  c.lambda_total_steps = cfg.get_int("lambda.total_steps", c.lambda_total_steps);
  c.divergence = parse_divergence_kind(cfg.get_string("divergence.kind", divergence_kind_name(c.divergence)));
  c.mmd_weight = cfg.get_double("mmd_weight", c.mmd_weight);
  c.shots = static_cast<size_t>(cfg.get_u64("shots", c.shots));
  c.seed = cfg.get_u64("seed", c.seed);
  c.max_vocab = static_cast<size_t>(cfg.get_u64("vocab.max_size", c.max_vocab));
  c.min_count = static_cast<size_t>(cfg.get_u64("vocab.min_count", c.min_count));
  c.model = ModelConfig::from_config(cfg);
  for (const auto& [k, v] : cfg.with_prefix("template.")) c.prompt.set(k, v);
  c.validate();
  return c;
}

KvConfig TrainConfig::to_config() const {
  KvConfig cfg;
  cfg.set("schedule", schedule_name(schedule));
  cfg.set("phase1_steps", std::to_string(phase1_steps));
  cfg.set("phase2_steps", std::to_string(phase2_steps));
  cfg.set("batch_size", std::to_string(batch_size));
  cfg.set("lr", fmt(lr));
  cfg.set("adam.beta1", fmt(beta1));
  cfg.set("adam.beta2", fmt(beta2));
  cfg.set("adam.eps", fmt(eps));
  cfg.set("mask.strategy", mask_kind_name(mask_strategy));
  cfg.set("mask.rate", fmt(mask_rate));
  cfg.set("mask.k_percent", fmt(select_k_percent));
  cfg.set("mask.min_freq", std::to_string(select_min_freq));
  cfg.set("cpt.template", template_kind_name(cpt_template));
  cfg.set("phase1_data", phase1_data_name(phase1_data));
  cfg.set("lambda.kind", lambda_kind_name(lambda_kind));
  cfg.set("lambda.total_steps", std::to_string(lambda_total_steps));
  cfg.set("divergence.kind", divergence_kind_name(divergence));
  cfg.set("mmd_weight", fmt(mmd_weight));
  cfg.set("shots", std::to_string(shots));
  cfg.set("seed", std::to_string(seed));
  cfg.set("vocab.max_size", std::to_string(max_vocab));
  cfg.set("vocab.min_count", std::to_string(min_count));
  model.write(cfg);
  for (const auto& [k, v] : prompt.entries()) cfg.set("template." + k, v);
  return cfg;
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "step,phase,loss,cls,cpt,div,lambda\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + "," + std::to_string(r.phase) + "," + fmt(r.loss) + "," + fmt(r.cls) + "," +
           fmt(r.cpt) + "," + fmt(r.div) + "," + fmt(r.lambda) + "\n";
  }
  return out;
}

AdamState::AdamState(const Parameters& params) {
  for (size_t i = 0; i < params.size(); ++i) {
    const Mat& v = params.tensor(i).value;
    m.push_back(Mat::Zero(v.rows(), v.cols()));
    this->v.push_back(Mat::Zero(v.rows(), v.cols()));
  }
}

void adam_step(AdamState& state, Parameters& params, const std::vector<Mat>& grads, const AdamHyper& h) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    fail(ErrorCode::kShape, "adam_step: gradient/parameter count mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params.tensor(i);
    if (!t.trainable) continue;
    const Mat& g = grads[i];
    if (g.rows() != t.value.rows() || g.cols() != t.value.cols()) {
      fail(ErrorCode::kShape, "adam_step: gradient shape mismatch for " + params.name(i));
    }
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g.cwiseProduct(g);
    t.value.array() -= h.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + h.eps);
  }
}

// --- data -------------------------------------------------------------------------------

TrainingContext make_context(const TrainConfig& config, const DomainPair& pair) {
  TrainingContext ctx;
  ctx.prompt = PromptTemplate::from_config(config.prompt, pair.label_space);
  std::vector<std::string> required = {ctx.prompt.instruction, ctx.prompt.cls_pattern};
  for (const auto& v : ctx.prompt.verbalizer) required.push_back(v);
  ctx.vocab = build_vocab(std::vector<std::vector<std::string>>{pair.source_train.texts(), pair.target_train.texts()},
                          config.max_vocab, config.min_count, required);
  ctx.word_sets = std::make_shared<const WordSets>(
      select_word_sets(compute_pmi(pair.source_train), config.select_k_percent, config.select_min_freq));
  return ctx;
}

ModelConfig resolved_model_config(const TrainConfig& config, const Vocab& vocab) {
  ModelConfig m = config.model;
  if (m.vocab_size == 0) m.vocab_size = vocab.size();
  if (m.vocab_size != vocab.size()) {
    fail(ErrorCode::kConfig, "model.vocab_size " + std::to_string(m.vocab_size) + " disagrees with the vocabulary (" +
                                 std::to_string(vocab.size()) + ")");
  }
  return m;
}

// Only the explicitly flagged upper-bound baseline may read target training labels.
struct UpperBoundAccess {
  static const Corpus& target_train(const DomainPair& pair) {
    static const EvaluationGate gate;
    return pair.target_train.labeled(gate);
  }
};

namespace {

// Position p of an endless stream of epoch permutations over n items.
class EpochStream {
 public:
  EpochStream(uint64_t seed, std::string name, size_t n) : seed_(seed), name_(std::move(name)), n_(n) {
    if (n_ == 0) fail(ErrorCode::kDomain, "empty data pool for stream " + name_);
  }

  struct Item {
    uint64_t epoch;
    size_t index;
  };

  Item at(uint64_t p) {
    const uint64_t epoch = p / n_;
    if (epoch != cached_epoch_ || perm_.empty()) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), size_t{0});
      Rng rng = make_rng(seed_, name_, {epoch});
      std::shuffle(perm_.begin(), perm_.end(), rng);
      cached_epoch_ = epoch;
    }
    return {epoch, perm_[p % n_]};
  }

 private:
  uint64_t seed_;
  std::string name_;
  size_t n_;
  uint64_t cached_epoch_ = 0;
  std::vector<size_t> perm_;
};

struct StreamUse {
  bool cls = false, cpt = false, div = false;
  int phase = 1;
  long k = 0;  // steps of this phase already taken
};

StreamUse stream_use(const TrainConfig& c, long step) {
  StreamUse u;
  const bool second = step >= c.phase1_steps;
  switch (c.schedule) {
    case ScheduleKind::kTwoPhaseCpt:
      u.phase = second ? 2 : 1;
      u.cpt = !second;
      u.cls = second;
      u.k = second ? step - c.phase1_steps : step;
      break;
    case ScheduleKind::kUdapterTwoPhase:
      u.phase = second ? 2 : 1;
      u.div = !second;
      u.cls = second;
      u.k = second ? step - c.phase1_steps : step;
      break;
    case ScheduleKind::kSinglePhaseCpt:
    case ScheduleKind::kSinglePhaseVanilla:
      u.cpt = u.cls = true;
      u.k = step;
      break;
    case ScheduleKind::kUdapterJoint:
    case ScheduleKind::kUdapterFixedWeight:
      u.div = u.cls = true;
      u.k = step;
      break;
    case ScheduleKind::kSrcOnly:
    case ScheduleKind::kSrcPlusTgt:
      u.phase = 2;
      u.cls = true;
      u.k = step;
      break;
  }
  return u;
}

// Materialized data pools and the streams over them.
class DataPlan {
 public:
  DataPlan(const TrainConfig& c, const DomainPair& pair, const TrainingContext& ctx) : c_(c), ctx_(ctx) {
    const size_t max_len = static_cast<size_t>(c.model.max_seq_len);
    if (c.uses_cpt()) {
      if (c.phase1_data != Phase1Data::kTargetOnly) append(cpt_texts_, pair.source_train.texts());
      if (c.phase1_data != Phase1Data::kSourceOnly) append(cpt_texts_, pair.target_train.texts());
      strategy_.kind = c.mask_strategy;
      strategy_.rate = c.mask_rate;
      strategy_.word_sets = ctx.word_sets;
    }
    {
      Corpus labeled = c.shots ? kshot_subsample(pair.source_train, c.shots, derive_seed(c.seed, "kshot"))
                               : pair.source_train;
      std::vector<Example> pool = labeled.examples();
      if (c.schedule == ScheduleKind::kSrcPlusTgt) {
        const auto& tgt = UpperBoundAccess::target_train(pair).examples();
        pool.insert(pool.end(), tgt.begin(), tgt.end());
      }
      for (const auto& ex : pool) {
        if (!ex.label) fail(ErrorCode::kLabel, "supervised pool contains an unlabeled example");
        const TemplatePair tp = cls_template(ex.text, *ex.label, ctx.prompt);
        cls_in_.push_back(encode_template(tp.input_text, ctx.vocab, max_len));
        cls_out_.push_back(encode_template(tp.output_text, ctx.vocab, max_len));
      }
    }
    if (c.uses_divergence()) {
      for (const auto& t : pair.source_train.texts()) div_src_.push_back(encode_cls_input(t));
      for (const auto& t : pair.target_train.texts()) div_tgt_.push_back(encode_cls_input(t));
    }
    const uint64_t seed = c.seed;
    if (!cls_in_.empty()) cls_stream_.emplace(seed, "batch.cls", cls_in_.size());
    if (!cpt_texts_.empty()) cpt_stream_.emplace(seed, "batch.cpt", cpt_texts_.size());
    if (!div_src_.empty()) div_src_stream_.emplace(seed, "batch.div.source", div_src_.size());
    if (!div_tgt_.empty()) div_tgt_stream_.emplace(seed, "batch.div.target", div_tgt_.size());
  }

  StepBatches at(long step) {
    const StreamUse u = stream_use(c_, step);
    const uint64_t b = static_cast<uint64_t>(c_.batch_size);
    const uint64_t start = static_cast<uint64_t>(u.k) * b;
    StepBatches out;
    if (u.cls) {
      for (uint64_t i = 0; i < b; ++i) {
        const auto it = cls_stream_->at(start + i);
        out.cls_inputs.push_back(cls_in_[it.index]);
        out.cls_targets.push_back(cls_out_[it.index]);
      }
    }
    if (u.cpt) {
      const size_t max_len = static_cast<size_t>(c_.model.max_seq_len);
      for (uint64_t i = 0; i < b; ++i) {
        const auto it = cpt_stream_->at(start + i);
        const auto words = split_whitespace(cpt_texts_[it.index]);
        TemplatePair tp;
        if (c_.cpt_template == TemplateKind::kClm) {
          tp = clm_template(words);
        } else {
          Rng rng = make_rng(c_.seed, "cpt.mask", {it.epoch, it.index});
          tp = mlm_template(words, plan_masks(words, strategy_, rng), ctx_.prompt);
        }
        out.cpt_inputs.push_back(encode_template(tp.input_text, ctx_.vocab, max_len));
        out.cpt_targets.push_back(encode_template(tp.output_text, ctx_.vocab, max_len));
      }
    }
    if (u.div) {
      for (uint64_t i = 0; i < b; ++i) {
        out.div_source.push_back(div_src_[div_src_stream_->at(start + i).index]);
        out.div_target.push_back(div_tgt_[div_tgt_stream_->at(start + i).index]);
      }
    }
    return out;
  }

 private:
  static void append(std::vector<std::string>& dst, const std::vector<std::string>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }

  TokenSeq encode_cls_input(const std::string& text) const {
    return encode_template(cls_input(text, ctx_.prompt), ctx_.vocab, static_cast<size_t>(c_.model.max_seq_len));
  }

  const TrainConfig& c_;
  const TrainingContext& ctx_;
  MaskStrategy strategy_;
  std::vector<std::string> cpt_texts_;
  std::vector<TokenSeq> cls_in_, cls_out_, div_src_, div_tgt_;
  std::optional<EpochStream> cls_stream_, cpt_stream_, div_src_stream_, div_tgt_stream_;
};

ag::Var divergence_term(ParamBinder& bind, const TrainConfig& c, const StepBatches& b) {
  const KernelBank bank;
  if (c.divergence == DivergenceKind::kLogits) {
    std::vector<TokenSeq> start(b.div_source.size(), TokenSeq{kPad});
    GraphOutput s = forward_graph(bind, c.model, b.div_source, start);
    start.assign(b.div_target.size(), TokenSeq{kPad});
    GraphOutput t = forward_graph(bind, c.model, b.div_target, start);
    return mmd2_node(s.logits, t.logits, bank);
  }
  GraphOutput s = forward_graph(bind, c.model, b.div_source, {});
  GraphOutput t = forward_graph(bind, c.model, b.div_target, {});
  ag::Var total;
  for (size_t l = 0; l < s.layer_embeddings.size(); ++l) {
    ag::Var term = c.divergence == DivergenceKind::kCoral ? coral_node(s.layer_embeddings[l], t.layer_embeddings[l])
                                                          : mmd2_node(s.layer_embeddings[l], t.layer_embeddings[l], bank);
    total = total.valid() ? ag::add(total, term) : term;
  }
  return total;
}

struct Combined {
  ag::Var loss;
  StepLosses parts;
  double lambda = 0.0;
};

// Builds the step's loss graph exactly as declared by the schedule.
Combined combine(ParamBinder& bind, const TrainConfig& c, const StepBatches& b, long step) {
  Combined out;
  const StreamUse u = stream_use(c, step);
  ag::Var cls, cpt, div;
  if (u.cls) cls = sequence_loss(bind, c.model, b.cls_inputs, b.cls_targets);
  if (u.cpt) cpt = sequence_loss(bind, c.model, b.cpt_inputs, b.cpt_targets);
  if (u.div) div = divergence_term(bind, c, b);
  if (cls.valid()) out.parts.cls = cls.scalar();
  if (cpt.valid()) out.parts.cpt = cpt.scalar();
  if (div.valid()) out.parts.div = div.scalar();

  const long joint = c.total_steps();
  const long total = c.lambda_total_steps > 0 ? c.lambda_total_steps : joint;
  auto ramp = [&]() {
    LambdaSchedule s{c.lambda_kind, total, 0.5, 10.0};
    return lambda_at(s, std::min(step, total));
  };
  switch (c.schedule) {
    case ScheduleKind::kSinglePhaseCpt:
    case ScheduleKind::kUdapterJoint: {
      out.lambda = ramp();
      ag::Var other = cpt.valid() ? cpt : div;
      out.loss = ag::add(ag::scale(cls, out.lambda), ag::scale(other, 1.0 - out.lambda));
      break;
    }
    case ScheduleKind::kSinglePhaseVanilla:
      out.lambda = 0.5;
      out.loss = ag::add(ag::scale(cls, 0.5), ag::scale(cpt, 0.5));
      break;
    case ScheduleKind::kUdapterFixedWeight:
      out.lambda = c.mmd_weight;
      out.loss = ag::add(cls, ag::scale(div, c.mmd_weight));
      break;
    default:
      out.loss = cls.valid() ? cls : (cpt.valid() ? cpt : div);
      break;
  }
  return out;
}

}  // namespace

StepBatches batches_at(const TrainConfig& config, const DomainPair& pair, const TrainingContext& ctx, long step) {
  DataPlan plan(config, pair, ctx);
  return plan.at(step);
}

StepLosses evaluate_components(const Model& model, const TrainConfig& config, const StepBatches& b) {
  TrainConfig c = config;
  c.model = model.config;
  ag::Tape tape;
  ParamBinder bind(tape, model.params, false);
  StepLosses out;
  if (!b.cls_inputs.empty()) out.cls = sequence_loss(bind, c.model, b.cls_inputs, b.cls_targets).scalar();
  if (!b.cpt_inputs.empty()) out.cpt = sequence_loss(bind, c.model, b.cpt_inputs, b.cpt_targets).scalar();
  if (!b.div_source.empty()) out.div = divergence_term(bind, c, b).scalar();
  return out;
}

std::vector<LossRecord> run(const TrainConfig& config, const DomainPair& pair, const TrainingContext& ctx,
                            Model& model) {
  config.validate();
  if (model.config.vocab_size != ctx.vocab.size()) {
    fail(ErrorCode::kContract, "model vocabulary does not match the training vocabulary");
  }
  TrainConfig c = config;
  c.model = model.config;
  DataPlan plan(c, pair, ctx);
  AdamState adam(model.params);
  const AdamHyper hyper{c.lr, c.beta1, c.beta2, c.eps};
  std::vector<LossRecord> log;
  const long steps = c.total_steps();
  log.reserve(static_cast<size_t>(steps));
  for (long step = 0; step < steps; ++step) {
    if (step > 0 && stream_use(c, step).phase != stream_use(c, step - 1).phase) adam = AdamState(model.params);
    const StepBatches batches = plan.at(step);
    ag::Tape tape;
    ParamBinder bind(tape, model.params, true);
    Combined comb = combine(bind, c, batches, step);
    tape.backward(comb.loss);
    LossRecord r;
    r.step = step;
    r.phase = stream_use(c, step).phase;
    r.loss = comb.loss.scalar();
    r.cls = comb.parts.cls;
    r.cpt = comb.parts.cpt;
    r.div = comb.parts.div;
    r.lambda = comb.lambda;
    log.push_back(r);
    adam_step(adam, model.params, bind.gradients(), hyper);
  }
  return log;
}

TrainResult train(const TrainConfig& config, const DomainPair& pair) {
  config.validate();
  TrainResult r;
  r.context = make_context(config, pair);
  r.model = Model::init(resolved_model_config(config, r.context.vocab), derive_seed(config.seed, "model"));
  r.log = run(config, pair, r.context, r.model);
  return r;
}

}  // namespace genuda

#pragma once

// Training schedules over Adam with deterministic epoch-shuffled batching.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "genuda/corpus.hpp"
#include "genuda/divergence.hpp"
#include "genuda/masking.hpp"
#include "genuda/model.hpp"
#include "genuda/templating.hpp"
#include "genuda/tokenizer.hpp"

namespace genuda {

enum class ScheduleKind {
  kTwoPhaseCpt,
  kSinglePhaseCpt,
  kSinglePhaseVanilla,
  kUdapterJoint,
  kUdapterFixedWeight,
  kUdapterTwoPhase,
  kSrcOnly,
  kSrcPlusTgt,
};

ScheduleKind parse_schedule(const std::string& name);
const char* schedule_name(ScheduleKind kind);
std::vector<ScheduleKind> all_schedules();

// Which unlabeled sequences feed the CPT objective.
enum class Phase1Data { kSourceOnly, kTargetOnly, kSourceAndTarget };

Phase1Data parse_phase1_data(const std::string& name);
const char* phase1_data_name(Phase1Data data);

struct TrainConfig {
  ScheduleKind schedule = ScheduleKind::kTwoPhaseCpt;
  long phase1_steps = 2000;
  long phase2_steps = 2000;
  int batch_size = 8;
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  MaskStrategy::Kind mask_strategy = MaskStrategy::Kind::kRandom;
  double mask_rate = 0.15;
  double select_k_percent = 15.0;  // informative/uninformative set size
  size_t select_min_freq = 10;
  TemplateKind cpt_template = TemplateKind::kMlm;
  Phase1Data phase1_data = Phase1Data::kSourceAndTarget;

  LambdaSchedule::Kind lambda_kind = LambdaSchedule::Kind::kLinear;
  long lambda_total_steps = 0;  // 0: the length of the joint phase
  DivergenceKind divergence = DivergenceKind::kMkMmd;
  double mmd_weight = 3.0;

  size_t shots = 0;  // 0: the full labeled source set in the supervised phase
  uint64_t seed = 0;

  size_t max_vocab = 4096;
  size_t min_count = 1;
  ModelConfig model;
  KvConfig prompt;  // `template.*` keys, forwarded to PromptTemplate::from_config

  void validate() const;
  // Unknown keys are fatal. `pair` and `format` are accepted and ignored here (the CLI
  // resolves the data location).
  static TrainConfig from_config(const KvConfig& cfg);
  KvConfig to_config() const;

  bool uses_cpt() const;
  bool uses_divergence() const;
  // Total optimizer steps of the whole run.
  long total_steps() const;
};

struct LossRecord {
  long step = 0;
  int phase = 1;
  double loss = 0.0;
  double cls = 0.0;
  double cpt = 0.0;
  double div = 0.0;
  double lambda = 0.0;
};

std::string loss_log_csv(const std::vector<LossRecord>& log);

struct AdamState {
  std::vector<Mat> m, v;
  long step = 0;

  explicit AdamState(const Parameters& params);
};

struct AdamHyper {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every trainable tensor; frozen tensors are untouched.
void adam_step(AdamState& state, Parameters& params, const std::vector<Mat>& grads, const AdamHyper& hyper);

// Everything a run needs besides the model: the vocabulary, the prompt and the PMI sets.
struct TrainingContext {
  Vocab vocab;
  PromptTemplate prompt;
  std::shared_ptr<const WordSets> word_sets;  // from the labeled source train split
};

TrainingContext make_context(const TrainConfig& config, const DomainPair& pair);
// Model configuration with the vocabulary size filled in.
ModelConfig resolved_model_config(const TrainConfig& config, const Vocab& vocab);

// Runs the configured schedule in place on `model`.
std::vector<LossRecord> run(const TrainConfig& config, const DomainPair& pair, const TrainingContext& ctx,
                            Model& model);

struct TrainResult {
  TrainingContext context;
  Model model;
  std::vector<LossRecord> log;
};

// Builds the context and a freshly initialized model, then runs.
TrainResult train(const TrainConfig& config, const DomainPair& pair);

// Per-step components, exposed so tests can recompute a step independently.
struct StepBatches {
  std::vector<TokenSeq> cls_inputs, cls_targets;
  std::vector<TokenSeq> cpt_inputs, cpt_targets;
  std::vector<TokenSeq> div_source, div_target;  // classification inputs, no targets
};

struct StepLosses {
  double cls = 0.0, cpt = 0.0, div = 0.0;
};

// Component losses of one batch set, evaluated without touching the parameters.
StepLosses evaluate_components(const Model& model, const TrainConfig& config, const StepBatches& batches);

// Reproduces the batches a run draws at global step `step`.
StepBatches batches_at(const TrainConfig& config, const DomainPair& pair, const TrainingContext& ctx, long step);

}  // namespace genuda

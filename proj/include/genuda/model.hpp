#pragma once

// Tiny autoregressive transformer (encoder-decoder or decoder-only) with optional IA3 or
// Adapter PEFT parameters. All arithmetic is 64-bit.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "genuda/autograd.hpp"
#include "genuda/kv_config.hpp"
#include "genuda/tokenizer.hpp"

namespace genuda {

using ag::Mat;

enum class Architecture { kEncoderDecoder, kDecoderOnly };

Architecture parse_architecture(const std::string& name);
const char* architecture_name(Architecture arch);

struct PeftConfig {
  enum class Kind { kNone, kIa3, kAdapter };
  Kind kind = Kind::kNone;
  int bottleneck = 16;  // Adapter r

  static PeftConfig none() { return {}; }
  static PeftConfig ia3() { return {Kind::kIa3, 16}; }
  static PeftConfig adapter(int r) { return {Kind::kAdapter, r}; }
};

PeftConfig::Kind parse_peft_kind(const std::string& name);
const char* peft_kind_name(PeftConfig::Kind kind);

struct ModelConfig {
  Architecture arch = Architecture::kEncoderDecoder;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;  // per stack
  int d_ff = 128;
  int vocab_size = 0;
  int max_seq_len = 64;
  PeftConfig peft;

  void validate() const;
  // Keys prefixed `model.`: arch, d_model, n_heads, n_layers, d_ff, vocab_size, max_seq_len,
  // peft, adapter_r.
  static ModelConfig from_config(const KvConfig& cfg);
  void write(KvConfig& cfg) const;
};

struct Tensor {
  Mat value;
  bool trainable = true;
};

// Named tensors in a fixed (insertion) order.
class Parameters {
 public:
  Tensor& add(const std::string& name, Mat value, bool trainable);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  size_t size() const { return entries_.size(); }
  const std::string& name(size_t i) const { return entries_[i].first; }
  Tensor& tensor(size_t i) { return entries_[i].second; }
  const Tensor& tensor(size_t i) const { return entries_[i].second; }

  size_t count() const;
  size_t trainable_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, size_t> index_;
};

struct Model {
  ModelConfig config;
  Parameters params;

  // Gaussian(0, 0.02) weights, zero biases, unit layer-norm gains, ones for IA3 vectors,
  // zero W_up. With PEFT enabled only the PEFT tensors are trainable.
  static Model init(const ModelConfig& config, uint64_t seed);
};

bool is_peft_tensor(const std::string& name);

// Binds parameters to tape leaves on first use.
class ParamBinder {
 public:
  ParamBinder(ag::Tape& tape, const Parameters& params, bool track_gradients)
      : tape_(tape), params_(params), track_(track_gradients) {}

  ag::Var operator()(const std::string& name);
  ag::Tape& tape() { return tape_; }

  // Gradient for every parameter, in parameter order; zero for frozen or unused tensors.
  std::vector<Mat> gradients() const;

 private:
  ag::Tape& tape_;
  const Parameters& params_;
  bool track_;
  std::map<std::string, ag::Var> bound_;
};

// Decoder input for teacher forcing: PAD as the start token, then target[0..T-2].
TokenSeq make_prefix(const TokenSeq& target);

struct GraphOutput {
  ag::Var logits;                            // rows: packed prefix positions (absent if no prefixes)
  std::vector<ag::Segment> logit_segments;   // one per sequence
  std::vector<ag::Var> layer_embeddings;     // per layer, [batch x d_model], mean over input positions
};

// Encoder-decoder: inputs feed the encoder, prefixes the decoder. Decoder-only: each
// sequence is input ++ prefix[1:], and logits are read from the last input position on.
// Empty `prefixes` runs the input side only (layer embeddings, no logits).
GraphOutput forward_graph(ParamBinder& bind, const ModelConfig& config, const std::vector<TokenSeq>& inputs,
                          const std::vector<TokenSeq>& prefixes);

struct ForwardOutput {
  std::vector<Mat> logits;            // per sequence: [prefix_len x vocab]
  std::vector<Mat> layer_embeddings;  // per layer: [batch x d_model]
};

ForwardOutput forward(const Model& model, const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& prefixes);

// Mean NLL of the target under teacher forcing, one value per pair.
std::vector<double> nll_loss(const ForwardOutput& out, const std::vector<TokenSeq>& targets);

// Batch of (input, target) pairs -> mean per-pair NLL as a 1x1 graph node.
ag::Var sequence_loss(ParamBinder& bind, const ModelConfig& config, const std::vector<TokenSeq>& inputs,
                      const std::vector<TokenSeq>& targets, GraphOutput* out = nullptr);

// Self-describing tensor container: magic, count, then (name, rank, shape, row-major f64).
void save_parameters(const Parameters& params, const std::filesystem::path& path);
Parameters load_parameters(const std::filesystem::path& path);

// Checkpoint directory: model.bin + model.cfg (flat key-value sidecar).
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace genuda

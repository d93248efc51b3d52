#include "genuda/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "genuda/error.hpp"
#include "genuda/rng.hpp"

namespace genuda {

Architecture parse_architecture(const std::string& name) {
  if (name == "encoder_decoder") return Architecture::kEncoderDecoder;
  if (name == "decoder_only") return Architecture::kDecoderOnly;
  fail(ErrorCode::kConfig, "model.arch must be encoder_decoder or decoder_only, got `" + name + "`");
}

const char* architecture_name(Architecture arch) {
  return arch == Architecture::kEncoderDecoder ? "encoder_decoder" : "decoder_only";
}

PeftConfig::Kind parse_peft_kind(const std::string& name) {
  if (name == "none") return PeftConfig::Kind::kNone;
  if (name == "ia3") return PeftConfig::Kind::kIa3;
  if (name == "adapter") return PeftConfig::Kind::kAdapter;
  fail(ErrorCode::kConfig, "model.peft must be none, ia3 or adapter, got `" + name + "`");
}

const char* peft_kind_name(PeftConfig::Kind kind) {
  switch (kind) {
    case PeftConfig::Kind::kNone: return "none";
    case PeftConfig::Kind::kIa3: return "ia3";
    case PeftConfig::Kind::kAdapter: return "adapter";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1 || vocab_size < 1 || max_seq_len < 1) {
    fail(ErrorCode::kConfig, "model dimensions must all be >= 1");
  }
  if (d_model % n_heads != 0) fail(ErrorCode::kConfig, "model.d_model must be divisible by model.n_heads");
  if (peft.kind == PeftConfig::Kind::kAdapter && peft.bottleneck < 1) {
    fail(ErrorCode::kConfig, "model.adapter_r must be >= 1");
  }
}

ModelConfig ModelConfig::from_config(const KvConfig& cfg) {
  ModelConfig m;
  m.arch = parse_architecture(cfg.get_string("model.arch", architecture_name(m.arch)));
  m.d_model = static_cast<int>(cfg.get_int("model.d_model", m.d_model));
  m.n_heads = static_cast<int>(cfg.get_int("model.n_heads", m.n_heads));
  m.n_layers = static_cast<int>(cfg.get_int("model.n_layers", m.n_layers));
  m.d_ff = static_cast<int>(cfg.get_int("model.d_ff", m.d_ff));
  m.vocab_size = static_cast<int>(cfg.get_int("model.vocab_size", m.vocab_size));
  m.max_seq_len = static_cast<int>(cfg.get_int("model.max_seq_len", m.max_seq_len));
  m.peft.kind = parse_peft_kind(cfg.get_string("model.peft", "none"));
  m.peft.bottleneck = static_cast<int>(cfg.get_int("model.adapter_r", m.peft.bottleneck));
  return m;
}

void ModelConfig::write(KvConfig& cfg) const {
  cfg.set("model.arch", architecture_name(arch));
  cfg.set("model.d_model", std::to_string(d_model));
  cfg.set("model.n_heads", std::to_string(n_heads));
  cfg.set("model.n_layers", std::to_string(n_layers));
  cfg.set("model.d_ff", std::to_string(d_ff));
  cfg.set("model.vocab_size", std::to_string(vocab_size));
  cfg.set("model.max_seq_len", std::to_string(max_seq_len));
  cfg.set("model.peft", peft_kind_name(peft.kind));
  cfg.set("model.adapter_r", std::to_string(peft.bottleneck));
}

Tensor& Parameters::add(const std::string& name, Mat value, bool trainable) {
  if (index_.count(name)) fail(ErrorCode::kShape, "duplicate parameter `" + name + "`");
  index_[name] = entries_.size();
  entries_.emplace_back(name, Tensor{std::move(value), trainable});
  return entries_.back().second;
}

Tensor& Parameters::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kShape, "no parameter `" + name + "`");
  return entries_[it->second].second;
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kShape, "no parameter `" + name + "`");
  return entries_[it->second].second;
}

size_t Parameters::count() const {
  size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<size_t>(t.value.size());
  return n;
}

size_t Parameters::trainable_count() const {
  size_t n = 0;
  for (const auto& [name, t] : entries_) {
    if (t.trainable) n += static_cast<size_t>(t.value.size());
  }
  return n;
}

bool is_peft_tensor(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const size_t n = std::strlen(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return ends_with(".lk") || ends_with(".lv") || ends_with(".lff") || ends_with("adapter.down") ||
         ends_with("adapter.up");
}

namespace {

enum class Init { kNormal, kZero, kOne };

struct TensorSpec {
  std::string name;
  int rows, cols;
  Init init;
};

void attention_specs(std::vector<TensorSpec>& out, const std::string& p, const ModelConfig& c) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) out.push_back({p + "." + w, c.d_model, c.d_model, Init::kNormal});
  if (c.peft.kind == PeftConfig::Kind::kIa3) {
    out.push_back({p + ".lk", 1, c.d_model, Init::kOne});
    out.push_back({p + ".lv", 1, c.d_model, Init::kOne});
  }
}

void ln_specs(std::vector<TensorSpec>& out, const std::string& p, const ModelConfig& c) {
  out.push_back({p + ".g", 1, c.d_model, Init::kOne});
  out.push_back({p + ".b", 1, c.d_model, Init::kZero});
}

void ff_specs(std::vector<TensorSpec>& out, const std::string& p, const ModelConfig& c) {
  out.push_back({p + ".w1", c.d_model, c.d_ff, Init::kNormal});
  out.push_back({p + ".b1", 1, c.d_ff, Init::kZero});
  out.push_back({p + ".w2", c.d_ff, c.d_model, Init::kNormal});
  out.push_back({p + ".b2", 1, c.d_model, Init::kZero});
  if (c.peft.kind == PeftConfig::Kind::kIa3) out.push_back({p + ".lff", 1, c.d_ff, Init::kOne});
}

void adapter_specs(std::vector<TensorSpec>& out, const std::string& p, const ModelConfig& c) {
  if (c.peft.kind != PeftConfig::Kind::kAdapter) return;
  out.push_back({p + ".adapter.down", c.d_model, c.peft.bottleneck, Init::kNormal});
  out.push_back({p + ".adapter.up", c.peft.bottleneck, c.d_model, Init::kZero});
}

std::vector<TensorSpec> layout(const ModelConfig& c) {
  std::vector<TensorSpec> out;
  out.push_back({"tok_emb", c.vocab_size, c.d_model, Init::kNormal});
  const bool enc_dec = c.arch == Architecture::kEncoderDecoder;
  if (enc_dec) {
    out.push_back({"enc.pos", c.max_seq_len, c.d_model, Init::kNormal});
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      ln_specs(out, p + ".ln1", c);
      attention_specs(out, p + ".attn", c);
      ln_specs(out, p + ".ln2", c);
      ff_specs(out, p + ".ff", c);
      adapter_specs(out, p, c);
    }
    ln_specs(out, "enc.ln_f", c);
  }
  out.push_back({"dec.pos", c.max_seq_len, c.d_model, Init::kNormal});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    ln_specs(out, p + ".ln1", c);
    attention_specs(out, p + ".self", c);
    if (enc_dec) {
      ln_specs(out, p + ".ln2", c);
      attention_specs(out, p + ".cross", c);
    }
    ln_specs(out, p + ".ln3", c);
    ff_specs(out, p + ".ff", c);
    adapter_specs(out, p, c);
  }
  ln_specs(out, "dec.ln_f", c);
  out.push_back({"head.w", c.d_model, c.vocab_size, Init::kNormal});
  out.push_back({"head.b", 1, c.vocab_size, Init::kZero});
  return out;
}

}  // namespace

Model Model::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  const bool peft = config.peft.kind != PeftConfig::Kind::kNone;
  for (const auto& spec : layout(config)) {
    Mat v(spec.rows, spec.cols);
    switch (spec.init) {
      case Init::kZero: v.setZero(); break;
      case Init::kOne: v.setOnes(); break;
      case Init::kNormal: {
        Rng rng = make_rng(seed, "init." + spec.name);
        std::normal_distribution<double> normal(0.0, 0.02);
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = normal(rng);
        break;
      }
    }
    const bool trainable = peft ? is_peft_tensor(spec.name) : true;
    m.params.add(spec.name, std::move(v), trainable);
  }
  return m;
}

ag::Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& t = params_.at(name);
  ag::Var v = tape_.leaf(&t.value, track_ && t.trainable);
  bound_.emplace(name, v);
  return v;
}

std::vector<Mat> ParamBinder::gradients() const {
  std::vector<Mat> out;
  out.reserve(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    const Mat& value = params_.tensor(i).value;
    auto it = bound_.find(params_.name(i));
    if (it != bound_.end() && tape_.has_grad(it->second)) {
      out.push_back(tape_.grad(it->second));
    } else {
      out.push_back(Mat::Zero(value.rows(), value.cols()));
    }
  }
  return out;
}

TokenSeq make_prefix(const TokenSeq& target) {
  TokenSeq p;
  p.reserve(target.size());
  p.push_back(kPad);
  for (size_t i = 0; i + 1 < target.size(); ++i) p.push_back(target[i]);
  return p;
}

namespace {

using ag::Segment;
using ag::Var;

struct Packed {
  std::vector<int> ids, positions;
  std::vector<Segment> segs;
};

Packed pack(const std::vector<TokenSeq>& seqs) {
  Packed p;
  int offset = 0;
  for (const auto& s : seqs) {
    p.segs.push_back({offset, static_cast<int>(s.size())});
    for (size_t i = 0; i < s.size(); ++i) {
      p.ids.push_back(s[i]);
      p.positions.push_back(static_cast<int>(i));
    }
    offset += static_cast<int>(s.size());
  }
  return p;
}

class Blocks {
 public:
  Blocks(ParamBinder& bind, const ModelConfig& c) : b_(bind), c_(c) {}

  Var ln(Var x, const std::string& p) { return ag::layer_norm(x, b_(p + ".g"), b_(p + ".b")); }

  Var attn(const std::string& p, Var xq, Var xkv, const std::vector<Segment>& qs, const std::vector<Segment>& ks,
           bool causal) {
    Var q = ag::matmul(xq, b_(p + ".wq"));
    Var k = ag::matmul(xkv, b_(p + ".wk"));
    Var v = ag::matmul(xkv, b_(p + ".wv"));
    if (c_.peft.kind == PeftConfig::Kind::kIa3) {
      k = ag::scale_cols(k, b_(p + ".lk"));
      v = ag::scale_cols(v, b_(p + ".lv"));
    }
    Var a = ag::attention(q, k, v, qs, ks, c_.n_heads, causal);
    return ag::matmul(a, b_(p + ".wo"));
  }

  Var ff(const std::string& p, Var x) {
    Var h = ag::relu(ag::add_row(ag::matmul(x, b_(p + ".w1")), b_(p + ".b1")));
    if (c_.peft.kind == PeftConfig::Kind::kIa3) h = ag::scale_cols(h, b_(p + ".lff"));
    return ag::add_row(ag::matmul(h, b_(p + ".w2")), b_(p + ".b2"));
  }

  Var adapter(const std::string& p, Var x) {
    if (c_.peft.kind != PeftConfig::Kind::kAdapter) return x;
    Var h = ag::relu(ag::matmul(x, b_(p + ".adapter.down")));
    return ag::add(x, ag::matmul(h, b_(p + ".adapter.up")));
  }

  Var embed(const Packed& p, const std::string& pos_table) {
    return ag::add(ag::gather_rows(b_("tok_emb"), p.ids), ag::gather_rows(b_(pos_table), p.positions));
  }

  Var head(Var x) { return ag::add_row(ag::matmul(x, b_("head.w")), b_("head.b")); }

 private:
  ParamBinder& b_;
  const ModelConfig& c_;
};

void check_lengths(const ModelConfig& c, const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& prefixes) {
  if (inputs.empty()) fail(ErrorCode::kShape, "forward: empty batch");
  if (!prefixes.empty() && prefixes.size() != inputs.size()) {
    fail(ErrorCode::kShape, "forward: input and prefix batch sizes differ");
  }
  for (size_t b = 0; b < inputs.size(); ++b) {
    if (inputs[b].empty()) fail(ErrorCode::kShape, "forward: empty input sequence");
    const size_t plen = prefixes.empty() ? 0 : prefixes[b].size();
    if (!prefixes.empty() && plen == 0) fail(ErrorCode::kShape, "forward: empty decoder prefix");
    const size_t total = c.arch == Architecture::kEncoderDecoder ? std::max(inputs[b].size(), plen)
                                                                 : inputs[b].size() + (plen ? plen - 1 : 0);
    if (total > static_cast<size_t>(c.max_seq_len)) {
      fail(ErrorCode::kShape, "forward: sequence length " + std::to_string(total) + " exceeds max_seq_len " +
                                  std::to_string(c.max_seq_len));
    }
  }
}

}  // namespace

GraphOutput forward_graph(ParamBinder& bind, const ModelConfig& c, const std::vector<TokenSeq>& inputs,
                          const std::vector<TokenSeq>& prefixes) {
  check_lengths(c, inputs, prefixes);
  Blocks blk(bind, c);
  GraphOutput out;

  if (c.arch == Architecture::kEncoderDecoder) {
    const Packed enc = pack(inputs);
    Var x = blk.embed(enc, "enc.pos");
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      Var h = blk.ln(x, p + ".ln1");
      x = ag::add(x, blk.attn(p + ".attn", h, h, enc.segs, enc.segs, false));
      x = ag::add(x, blk.ff(p + ".ff", blk.ln(x, p + ".ln2")));
      x = blk.adapter(p, x);
      out.layer_embeddings.push_back(ag::pool_mean(x, enc.segs));
    }
    if (prefixes.empty()) return out;
    Var memory = blk.ln(x, "enc.ln_f");
    const Packed dec = pack(prefixes);
    Var y = blk.embed(dec, "dec.pos");
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      Var h = blk.ln(y, p + ".ln1");
      y = ag::add(y, blk.attn(p + ".self", h, h, dec.segs, dec.segs, true));
      y = ag::add(y, blk.attn(p + ".cross", blk.ln(y, p + ".ln2"), memory, dec.segs, enc.segs, false));
      y = ag::add(y, blk.ff(p + ".ff", blk.ln(y, p + ".ln3")));
      y = blk.adapter(p, y);
    }
    out.logits = blk.head(blk.ln(y, "dec.ln_f"));
    out.logit_segments = dec.segs;
    return out;
  }

  // Decoder-only: one causal stack over input ++ prefix[1:].
  std::vector<TokenSeq> seqs;
  std::vector<Segment> input_segs;
  std::vector<int> logit_rows;
  int offset = 0;
  for (size_t b = 0; b < inputs.size(); ++b) {
    TokenSeq s = inputs[b];
    if (!prefixes.empty()) s.insert(s.end(), prefixes[b].begin() + 1, prefixes[b].end());
    const int in_len = static_cast<int>(inputs[b].size());
    input_segs.push_back({offset, in_len});
    if (!prefixes.empty()) {
      const int first = offset + in_len - 1;
      const int count = static_cast<int>(prefixes[b].size());
      out.logit_segments.push_back({static_cast<int>(logit_rows.size()), count});
      for (int i = 0; i < count; ++i) logit_rows.push_back(first + i);
    }
    offset += static_cast<int>(s.size());
    seqs.push_back(std::move(s));
  }
  const Packed packed = pack(seqs);
  Var x = blk.embed(packed, "dec.pos");
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    Var h = blk.ln(x, p + ".ln1");
    x = ag::add(x, blk.attn(p + ".self", h, h, packed.segs, packed.segs, true));
    x = ag::add(x, blk.ff(p + ".ff", blk.ln(x, p + ".ln3")));
    x = blk.adapter(p, x);
    out.layer_embeddings.push_back(ag::pool_mean(x, input_segs));
  }
  if (prefixes.empty()) return out;
  out.logits = blk.head(ag::select_rows(blk.ln(x, "dec.ln_f"), logit_rows));
  return out;
}

ForwardOutput forward(const Model& model, const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& prefixes) {
  ag::Tape tape;
  ParamBinder bind(tape, model.params, false);
  GraphOutput g = forward_graph(bind, model.config, inputs, prefixes);
  ForwardOutput out;
  for (const auto& e : g.layer_embeddings) out.layer_embeddings.push_back(e.value());
  if (g.logits.valid()) {
    for (const auto& s : g.logit_segments) out.logits.push_back(g.logits.value().middleRows(s.offset, s.length));
  }
  return out;
}

std::vector<double> nll_loss(const ForwardOutput& out, const std::vector<TokenSeq>& targets) {
  if (out.logits.size() != targets.size()) fail(ErrorCode::kShape, "nll_loss: batch size mismatch");
  std::vector<double> losses;
  for (size_t b = 0; b < targets.size(); ++b) {
    const Mat& lg = out.logits[b];
    const auto& t = targets[b];
    if (t.empty() || std::all_of(t.begin(), t.end(), [](int id) { return id == kPad; })) {
      fail(ErrorCode::kDomain, "nll_loss: empty or PAD-only target");
    }
    if (static_cast<size_t>(lg.rows()) != t.size()) fail(ErrorCode::kShape, "nll_loss: target length mismatch");
    double total = 0.0;
    for (size_t i = 0; i < t.size(); ++i) {
      const auto row = lg.row(static_cast<Eigen::Index>(i));
      const double mx = row.maxCoeff();
      total += mx + std::log((row.array() - mx).exp().sum()) - row(t[i]);
    }
    losses.push_back(total / static_cast<double>(t.size()));
  }
  return losses;
}

ag::Var sequence_loss(ParamBinder& bind, const ModelConfig& config, const std::vector<TokenSeq>& inputs,
                      const std::vector<TokenSeq>& targets, GraphOutput* out) {
  std::vector<TokenSeq> prefixes;
  std::vector<int> flat;
  for (const auto& t : targets) {
    if (t.empty() || std::all_of(t.begin(), t.end(), [](int id) { return id == kPad; })) {
      fail(ErrorCode::kDomain, "sequence_loss: empty or PAD-only target");
    }
    prefixes.push_back(make_prefix(t));
    flat.insert(flat.end(), t.begin(), t.end());
  }
  GraphOutput g = forward_graph(bind, config, inputs, prefixes);
  ag::Var loss = ag::mean(ag::nll(g.logits, flat, g.logit_segments));
  if (out) *out = std::move(g);
  return loss;
}

// --- checkpoints -------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'E', 'N', 'U', 'D', 'A', '0', '1'};

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size()) fail(ErrorCode::kParse, "checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_parameters(const Parameters& params, const std::filesystem::path& path) {
  std::string buf(kMagic, sizeof(kMagic));
  put<uint64_t>(buf, params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const Tensor& t = params.tensor(i);
    put<uint64_t>(buf, name.size());
    buf += name;
    put<uint8_t>(buf, t.trainable ? 1 : 0);
    put<uint64_t>(buf, 2);
    put<uint64_t>(buf, static_cast<uint64_t>(t.value.rows()));
    put<uint64_t>(buf, static_cast<uint64_t>(t.value.cols()));
    buf.append(reinterpret_cast<const char*>(t.value.data()), static_cast<size_t>(t.value.size()) * sizeof(double));
  }
  write_file_atomic(path, buf);
}

Parameters load_parameters(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kParse, "`" + path.string() + "` is not a parameter container");
  }
  size_t pos = sizeof(kMagic);
  Parameters params;
  const auto count = get<uint64_t>(buf, pos);
  for (uint64_t i = 0; i < count; ++i) {
    const auto len = get<uint64_t>(buf, pos);
    if (pos + len > buf.size()) fail(ErrorCode::kParse, "checkpoint truncated");
    std::string name = buf.substr(pos, len);
    pos += len;
    const bool trainable = get<uint8_t>(buf, pos) != 0;
    const auto rank = get<uint64_t>(buf, pos);
    if (rank != 2) fail(ErrorCode::kParse, "tensor `" + name + "`: unsupported rank");
    const auto rows = get<uint64_t>(buf, pos);
    const auto cols = get<uint64_t>(buf, pos);
    const size_t bytes = rows * cols * sizeof(double);
    if (pos + bytes > buf.size()) fail(ErrorCode::kParse, "checkpoint truncated");
    Mat v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(v.data(), buf.data() + pos, bytes);
    pos += bytes;
    params.add(name, std::move(v), trainable);
  }
  if (pos != buf.size()) fail(ErrorCode::kParse, "trailing bytes in checkpoint");
  return params;
}

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  KvConfig cfg;
  model.config.write(cfg);
  write_file_atomic(dir / "model.cfg", cfg.serialize());
  save_parameters(model.params, dir / "model.bin");
}

Model load_checkpoint(const std::filesystem::path& dir) {
  Model m;
  m.config = ModelConfig::from_config(KvConfig::load(dir / "model.cfg"));
  m.config.validate();
  m.params = load_parameters(dir / "model.bin");
  // The container must match the configured layout exactly.
  const Model fresh = Model::init(m.config, 0);
  if (fresh.params.size() != m.params.size()) fail(ErrorCode::kShape, "checkpoint layout does not match model.cfg");
  for (size_t i = 0; i < fresh.params.size(); ++i) {
    const auto& a = fresh.params.tensor(i).value;
    const auto& b = m.params.at(fresh.params.name(i)).value;
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      fail(ErrorCode::kShape, "checkpoint tensor `" + fresh.params.name(i) + "` has the wrong shape");
    }
  }
  return m;
}

}  // namespace genuda

#pragma once

// Independent reference implementations the tests compare the library against. None of
// these call into the code under test beyond reading parameter values.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "genuda/model.hpp"

namespace oracle {

// --- word normalization and PMI counting -------------------------------------------------

inline std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    std::vector<std::string> tail;
    while (!cur.empty() && std::string(".,!?;:").find(cur.back()) != std::string::npos) {
      tail.insert(tail.begin(), std::string(1, cur.back()));
      cur.pop_back();
    }
    if (!cur.empty()) out.push_back(cur);
    for (auto& t : tail) out.push_back(t);
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

// PMI from raw integer counts: log(count * N / (count_w * count_c)).
inline std::map<std::pair<std::string, int>, double> pmi(const std::vector<std::pair<std::string, int>>& corpus,
                                                         std::map<std::pair<std::string, int>, long>* joint_out = nullptr) {
  std::map<std::pair<std::string, int>, long> joint;
  std::map<std::string, long> word;
  std::map<int, long> cls;
  long n = 0;
  for (const auto& [text, label] : corpus) {
    for (const auto& w : words_of(text)) {
      joint[{w, label}] += 1;
      word[w] += 1;
      cls[label] += 1;
      n += 1;
    }
  }
  std::map<std::pair<std::string, int>, double> out;
  for (const auto& [key, c] : joint) {
    const long double num = static_cast<long double>(c) * static_cast<long double>(n);
    const long double den = static_cast<long double>(word[key.first]) * static_cast<long double>(cls[key.second]);
    out[key] = static_cast<double>(std::log(num / den));
  }
  if (joint_out) *joint_out = joint;
  return out;
}

// --- Mann-Whitney by enumeration -----------------------------------------------------------

// U of `a`: pairs with a_i > b_j count 1, ties 1/2.
inline double u_pairs(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0;
  for (double x : a) {
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  }
  return u;
}

// Two-sided p: share of all C(n+m, n) relabelings of the pooled sample whose U is at least
// as far from nm/2 as the observed one.
inline double mw_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const size_t n = a.size(), total = pooled.size();
  const double centre = static_cast<double>(a.size() * b.size()) / 2.0;
  const double observed = std::abs(u_pairs(a, b) - centre);
  long hits = 0, all = 0;
  for (uint32_t mask = 0; mask < (1u << total); ++mask) {
    if (static_cast<size_t>(__builtin_popcount(mask)) != n) continue;
    std::vector<double> x, y;
    for (size_t i = 0; i < total; ++i) ((mask >> i) & 1u ? x : y).push_back(pooled[i]);
    ++all;
    if (std::abs(u_pairs(x, y) - centre) >= observed - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(all);
}

// --- loop-based transformer -----------------------------------------------------------------

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

class Reference {
 public:
  explicit Reference(const genuda::Model& m) : m_(m), c_(m.config) {}

  struct Output {
    std::vector<Rows> logits;            // per sequence
    std::vector<Rows> layer_embeddings;  // per layer, one row per sequence
  };

  Output run(const std::vector<genuda::TokenSeq>& inputs, const std::vector<genuda::TokenSeq>& prefixes) const {
    Output out;
    out.layer_embeddings.assign(static_cast<size_t>(c_.n_layers), {});
    for (size_t b = 0; b < inputs.size(); ++b) {
      if (c_.arch == genuda::Architecture::kEncoderDecoder) {
        Rows x = embed(inputs[b], "enc.pos");
        for (int l = 0; l < c_.n_layers; ++l) {
          const std::string p = "enc." + std::to_string(l);
          x = plus(x, attention(p + ".attn", ln(x, p + ".ln1"), ln(x, p + ".ln1"), false));
          x = plus(x, ff(p + ".ff", ln(x, p + ".ln2")));
          x = adapter(p, x);
          out.layer_embeddings[static_cast<size_t>(l)].push_back(mean_rows(x, x.size()));
        }
        if (prefixes.empty()) continue;
        const Rows memory = ln(x, "enc.ln_f");
        Rows y = embed(prefixes[b], "dec.pos");
        for (int l = 0; l < c_.n_layers; ++l) {
          const std::string p = "dec." + std::to_string(l);
          y = plus(y, attention(p + ".self", ln(y, p + ".ln1"), ln(y, p + ".ln1"), true));
          y = plus(y, attention(p + ".cross", ln(y, p + ".ln2"), memory, false));
          y = plus(y, ff(p + ".ff", ln(y, p + ".ln3")));
          y = adapter(p, y);
        }
        out.logits.push_back(head(ln(y, "dec.ln_f")));
      } else {
        genuda::TokenSeq seq = inputs[b];
        if (!prefixes.empty()) seq.insert(seq.end(), prefixes[b].begin() + 1, prefixes[b].end());
        Rows x = embed(seq, "dec.pos");
        for (int l = 0; l < c_.n_layers; ++l) {
          const std::string p = "dec." + std::to_string(l);
          x = plus(x, attention(p + ".self", ln(x, p + ".ln1"), ln(x, p + ".ln1"), true));
          x = plus(x, ff(p + ".ff", ln(x, p + ".ln3")));
          x = adapter(p, x);
          out.layer_embeddings[static_cast<size_t>(l)].push_back(mean_rows(x, inputs[b].size()));
        }
        if (prefixes.empty()) continue;
        const Rows all = head(ln(x, "dec.ln_f"));
        Rows mine(all.begin() + static_cast<long>(inputs[b].size()) - 1, all.end());
        out.logits.push_back(mine);
      }
    }
    return out;
  }

 private:
  double w(const std::string& name, size_t r, size_t col) const {
    return m_.params.at(name).value(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col));
  }
  size_t cols(const std::string& name) const { return static_cast<size_t>(m_.params.at(name).value.cols()); }
  bool has(const std::string& name) const { return m_.params.contains(name); }

  Rows embed(const genuda::TokenSeq& ids, const std::string& pos) const {
    Rows x;
    for (size_t i = 0; i < ids.size(); ++i) {
      Vec row(static_cast<size_t>(c_.d_model));
      for (size_t d = 0; d < row.size(); ++d) row[d] = w("tok_emb", static_cast<size_t>(ids[i]), d) + w(pos, i, d);
      x.push_back(row);
    }
    return x;
  }

  Rows matmul(const Rows& x, const std::string& name) const {
    Rows out;
    const size_t n_out = cols(name);
    for (const auto& row : x) {
      Vec o(n_out, 0.0);
      for (size_t j = 0; j < n_out; ++j) {
        for (size_t k = 0; k < row.size(); ++k) o[j] += row[k] * w(name, k, j);
      }
      out.push_back(o);
    }
    return out;
  }

  void add_bias(Rows& x, const std::string& name) const {
    for (auto& row : x) {
      for (size_t j = 0; j < row.size(); ++j) row[j] += w(name, 0, j);
    }
  }

  void scale(Rows& x, const std::string& name) const {
    if (!has(name)) return;
    for (auto& row : x) {
      for (size_t j = 0; j < row.size(); ++j) row[j] *= w(name, 0, j);
    }
  }

  static Rows plus(const Rows& a, const Rows& b) {
    Rows out = a;
    for (size_t i = 0; i < a.size(); ++i) {
      for (size_t j = 0; j < a[i].size(); ++j) out[i][j] += b[i][j];
    }
    return out;
  }

  static Rows relu(Rows x) {
    for (auto& row : x) {
      for (auto& v : row) v = v > 0 ? v : 0.0;
    }
    return x;
  }

  Rows ln(const Rows& x, const std::string& p) const {
    Rows out;
    for (const auto& row : x) {
      double mu = 0, var = 0;
      for (double v : row) mu += v;
      mu /= static_cast<double>(row.size());
      for (double v : row) var += (v - mu) * (v - mu);
      var /= static_cast<double>(row.size());
      Vec o(row.size());
      for (size_t j = 0; j < row.size(); ++j) {
        o[j] = (row[j] - mu) / std::sqrt(var + 1e-5) * w(p + ".g", 0, j) + w(p + ".b", 0, j);
      }
      out.push_back(o);
    }
    return out;
  }

  Rows attention(const std::string& p, const Rows& xq, const Rows& xkv, bool causal) const {
    const Rows q = matmul(xq, p + ".wq");
    Rows k = matmul(xkv, p + ".wk");
    Rows v = matmul(xkv, p + ".wv");
    scale(k, p + ".lk");
    scale(v, p + ".lv");
    const size_t heads = static_cast<size_t>(c_.n_heads);
    const size_t dk = static_cast<size_t>(c_.d_model) / heads;
    Rows mixed(q.size(), Vec(static_cast<size_t>(c_.d_model), 0.0));
    for (size_t h = 0; h < heads; ++h) {
      for (size_t i = 0; i < q.size(); ++i) {
        const size_t visible = causal ? i + 1 : k.size();
        Vec score(visible);
        double mx = -1e300;
        for (size_t j = 0; j < visible; ++j) {
          double s = 0;
          for (size_t d = 0; d < dk; ++d) s += q[i][h * dk + d] * k[j][h * dk + d];
          score[j] = s / std::sqrt(static_cast<double>(dk));
          mx = std::max(mx, score[j]);
        }
        double z = 0;
        for (auto& s : score) z += (s = std::exp(s - mx));
        for (size_t j = 0; j < visible; ++j) {
          for (size_t d = 0; d < dk; ++d) mixed[i][h * dk + d] += score[j] / z * v[j][h * dk + d];
        }
      }
    }
    return matmul(mixed, p + ".wo");
  }

  Rows ff(const std::string& p, const Rows& x) const {
    Rows h = matmul(x, p + ".w1");
    add_bias(h, p + ".b1");
    h = relu(h);
    scale(h, p + ".lff");
    Rows o = matmul(h, p + ".w2");
    add_bias(o, p + ".b2");
    return o;
  }

  Rows adapter(const std::string& p, const Rows& x) const {
    if (!has(p + ".adapter.down")) return x;
    return plus(x, matmul(relu(matmul(x, p + ".adapter.down")), p + ".adapter.up"));
  }

  Rows head(const Rows& x) const {
    Rows o = matmul(x, "head.w");
    add_bias(o, "head.b");
    return o;
  }

  static Vec mean_rows(const Rows& x, size_t n) {
    Vec out(x[0].size(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < out.size(); ++j) out[j] += x[i][j];
    }
    for (auto& v : out) v /= static_cast<double>(n);
    return out;
  }

  const genuda::Model& m_;
  const genuda::ModelConfig& c_;
};

inline double log_softmax_at(const Vec& row, int id) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double z = 0;
  for (double v : row) z += std::exp(v - mx);
  return row[static_cast<size_t>(id)] - mx - std::log(z);
}

// Mean per-token log-probability of `target` after `input`, scored token by token.
inline double mean_log_prob(const genuda::Model& m, const genuda::TokenSeq& input, const genuda::TokenSeq& target) {
  genuda::TokenSeq prefix{genuda::kPad};
  prefix.insert(prefix.end(), target.begin(), target.end() - 1);
  const auto out = Reference(m).run({input}, {prefix});
  double total = 0;
  for (size_t t = 0; t < target.size(); ++t) total += log_softmax_at(out.logits[0][t], target[t]);
  return total / static_cast<double>(target.size());
}

// --- finite differences ----------------------------------------------------------------------

struct GradCheck {
  double worst = 0.0;
  std::string worst_tensor;
  size_t checked = 0;
  size_t kinks = 0;  // entries left out of `worst`, see below
};

// Central differences of `loss` against `analytic` over up to `per_tensor` entries of each
// trainable tensor (every entry when the tensor is smaller). Relative error uses
// max(|a|, |n|, floor) as the denominator. An entry whose own differences at h and h/2
// disagree by more than 1e-4 relative has a ReLU kink inside [x-h, x+h]; it is counted in
// `kinks` and kept out of `worst`. The test never looks at the analytic value.
inline GradCheck finite_difference(genuda::Model& m, const std::function<double()>& loss,
                                   const std::vector<genuda::Mat>& analytic, size_t per_tensor, double h = 1e-5,
                                   double floor = 1e-6) {
  GradCheck r;
  for (size_t i = 0; i < m.params.size(); ++i) {
    genuda::Tensor& t = m.params.tensor(i);
    if (!t.trainable) continue;
    const size_t n = static_cast<size_t>(t.value.size());
    const size_t stride = n <= per_tensor ? 1 : n / per_tensor;
    for (size_t k = 0; k < n; k += stride) {
      double& x = t.value.data()[k];
      const double orig = x;
      auto central = [&](double step) {
        x = orig + step;
        const double up = loss();
        x = orig - step;
        const double down = loss();
        x = orig;
        return (up - down) / (2 * step);
      };
      const double numeric = central(h);
      const double half = central(h / 2);
      ++r.checked;
      if (std::abs(numeric - half) > 1e-4 * std::max({std::abs(numeric), std::abs(half), floor})) {
        ++r.kinks;
        continue;
      }
      const double a = analytic[i].data()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > r.worst) {
        r.worst = rel;
        r.worst_tensor = m.params.name(i);
      }
    }
  }
  return r;
}

}  // namespace oracle

#include "genuda/autograd.hpp"

#include <cmath>
#include <limits>

#include "genuda/error.hpp"

namespace genuda::ag {

const Mat& Var::value() const { return tape->value(id); }

const Mat& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.ext ? *n.ext : n.own;
}

Var Tape::constant(Mat value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Mat* external, bool requires_grad) {
  Node n;
  n.ext = external;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.own = std::move(value);
  for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_[static_cast<size_t>(v.id)].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_ref(Var v) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.size() == 0) {
    const Mat& val = n.ext ? *n.ext : n.own;
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.rows() != 1 || out.cols() != 1) fail(ErrorCode::kShape, "backward needs a 1x1 output");
  if (!requires_grad(out)) return;
  grad_ref(out)(0, 0) += 1.0;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

namespace {

void check(bool ok, const char* what) {
  if (!ok) fail(ErrorCode::kShape, what);
}

}  // namespace

Var matmul(Var a, Var b) {
  check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape& t = *a.tape;
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.grad_ref(a).noalias() += g * b.value().transpose();
    if (t.requires_grad(b)) t.grad_ref(b).noalias() += a.value().transpose() * g;
  });
}

Var add(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  Tape& t = *a.tape;
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.grad_ref(a) += g;
    if (t.requires_grad(b)) t.grad_ref(b) += g;
  });
}

Var add_row(Var a, Var row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape");
  Tape& t = *a.tape;
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.grad_ref(a) += g;
    if (t.requires_grad(row)) t.grad_ref(row) += g.colwise().sum();
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.record(a.value() * c, {a}, [a, c](Tape& t, const Mat& g) { t.grad_ref(a) += g * c; });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Mat& g) {
    t.grad_ref(a) += (a.value().array() > 0.0).select(g, 0.0);
  });
}

Var scale_cols(Var a, Var l) {
  check(l.rows() == 1 && l.cols() == a.cols(), "scale_cols: vector shape");
  Tape& t = *a.tape;
  Mat out = a.value().array().rowwise() * l.value().row(0).array();
  return t.record(std::move(out), {a, l}, [a, l](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.grad_ref(a).array() += g.array().rowwise() * l.value().row(0).array();
    if (t.requires_grad(l)) t.grad_ref(l) += (g.array() * a.value().array()).colwise().sum().matrix();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check(gain.cols() == x.cols() && bias.cols() == x.cols(), "layer_norm: parameter shape");
  Tape& t = *x.tape;
  const Mat& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  auto xhat = std::make_shared<Mat>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  Mat out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    xhat->row(i) = (xv.row(i).array() - mu) * is;
    out.row(i) = xhat->row(i).array() * gain.value().row(0).array() + bias.value().row(0).array();
  }
  return t.record(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std](Tape& t, const Mat& g) {
    if (t.requires_grad(gain)) t.grad_ref(gain) += (g.array() * xhat->array()).colwise().sum().matrix();
    if (t.requires_grad(bias)) t.grad_ref(bias) += g.colwise().sum();
    if (!t.requires_grad(x)) return;
    Mat& gx = t.grad_ref(x);
    const Eigen::Index d = g.cols();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      Eigen::RowVectorXd dxhat = g.row(i).array() * gain.value().row(0).array();
      const double m1 = dxhat.mean();
      const double m2 = (dxhat.array() * xhat->row(i).array()).sum() / static_cast<double>(d);
      gx.row(i).array() += (*inv_std)(i) * (dxhat.array() - m1 - xhat->row(i).array() * m2);
    }
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  Tape& t = *table.tape;
  const Mat& tv = table.value();
  Mat out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < tv.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  return t.record(std::move(out), {table}, [table, ids](Tape& t, const Mat& g) {
    Mat& gt = t.grad_ref(table);
    for (size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var select_rows(Var a, const std::vector<int>& rows) { return gather_rows(a, rows); }

Var attention(Var q, Var k, Var v, const std::vector<Segment>& q_segs, const std::vector<Segment>& k_segs,
              int n_heads, bool causal) {
  check(q_segs.size() == k_segs.size(), "attention: segment count mismatch");
  check(q.cols() == k.cols() && k.cols() == v.cols() && k.rows() == v.rows(), "attention: operand shapes");
  check(n_heads >= 1 && q.cols() % n_heads == 0, "attention: heads must divide width");
  Tape& t = *q.tape;
  const Eigen::Index dk = q.cols() / n_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  Mat out = Mat::Zero(qv.rows(), qv.cols());
  auto probs = std::make_shared<std::vector<Mat>>();
  probs->reserve(q_segs.size() * static_cast<size_t>(n_heads));
  for (size_t s = 0; s < q_segs.size(); ++s) {
    const Segment qs = q_segs[s], ks = k_segs[s];
    if (causal) check(qs.length <= ks.length, "attention: causal segment longer than keys");
    for (int h = 0; h < n_heads; ++h) {
      Mat scores = qv.block(qs.offset, h * dk, qs.length, dk) * kv.block(ks.offset, h * dk, ks.length, dk).transpose();
      scores *= sc;
      for (int i = 0; i < qs.length; ++i) {
        // Query i sits at key position i + (ks.length - qs.length) under a causal mask.
        const int last = causal ? i + (ks.length - qs.length) : ks.length - 1;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= last; ++j) mx = std::max(mx, scores(i, j));
        double z = 0.0;
        for (int j = 0; j < ks.length; ++j) {
          if (j <= last) {
            scores(i, j) = std::exp(scores(i, j) - mx);
            z += scores(i, j);
          } else {
            scores(i, j) = 0.0;
          }
        }
        scores.row(i) /= z;
      }
      out.block(qs.offset, h * dk, qs.length, dk).noalias() = scores * vv.block(ks.offset, h * dk, ks.length, dk);
      probs->push_back(std::move(scores));
    }
  }
  return t.record(std::move(out), {q, k, v}, [q, k, v, q_segs, k_segs, n_heads, dk, sc, probs](Tape& t, const Mat& g) {
    const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gv = t.requires_grad(v);
    const Mat& qv = q.value();
    const Mat& kv = k.value();
    const Mat& vv = v.value();
    Mat* dq = gq ? &t.grad_ref(q) : nullptr;
    Mat* dk_ = gk ? &t.grad_ref(k) : nullptr;
    Mat* dv = gv ? &t.grad_ref(v) : nullptr;
    size_t idx = 0;
    for (size_t s = 0; s < q_segs.size(); ++s) {
      const Segment qs = q_segs[s], ks = k_segs[s];
      for (int h = 0; h < n_heads; ++h, ++idx) {
        const Mat& p = (*probs)[idx];
        const Mat go = g.block(qs.offset, h * dk, qs.length, dk);
        if (dv) dv->block(ks.offset, h * dk, ks.length, dk).noalias() += p.transpose() * go;
        if (!dq && !dk_) continue;
        Mat dp = go * vv.block(ks.offset, h * dk, ks.length, dk).transpose();
        Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
        Mat ds = p.array() * (dp.array().colwise() - rowdot.array());
        ds *= sc;
        if (dq) dq->block(qs.offset, h * dk, qs.length, dk).noalias() += ds * kv.block(ks.offset, h * dk, ks.length, dk);
        if (dk_) dk_->block(ks.offset, h * dk, ks.length, dk).noalias() += ds.transpose() * qv.block(qs.offset, h * dk, qs.length, dk);
      }
    }
  });
}

Var pool_mean(Var x, const std::vector<Segment>& segs) {
  Tape& t = *x.tape;
  const Mat& xv = x.value();
  Mat out(static_cast<Eigen::Index>(segs.size()), xv.cols());
  for (size_t s = 0; s < segs.size(); ++s) {
    check(segs[s].length > 0, "pool_mean: empty segment");
    out.row(static_cast<Eigen::Index>(s)) = xv.middleRows(segs[s].offset, segs[s].length).colwise().mean();
  }
  return t.record(std::move(out), {x}, [x, segs](Tape& t, const Mat& g) {
    Mat& gx = t.grad_ref(x);
    for (size_t s = 0; s < segs.size(); ++s) {
      const Eigen::RowVectorXd r = g.row(static_cast<Eigen::Index>(s)) / static_cast<double>(segs[s].length);
      for (int i = 0; i < segs[s].length; ++i) gx.row(segs[s].offset + i) += r;
    }
  });
}

Var nll(Var logits, const std::vector<int>& targets, const std::vector<Segment>& segs) {
  check(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "nll: one target per logit row");
  Tape& t = *logits.tape;
  const Mat& lv = logits.value();
  auto probs = std::make_shared<Mat>(lv.rows(), lv.cols());
  Mat out(static_cast<Eigen::Index>(segs.size()), 1);
  for (size_t s = 0; s < segs.size(); ++s) {
    check(segs[s].length > 0, "nll: empty target");
    double total = 0.0;
    for (int r = segs[s].offset; r < segs[s].offset + segs[s].length; ++r) {
      const int y = targets[static_cast<size_t>(r)];
      check(y >= 0 && y < lv.cols(), "nll: target id out of range");
      const double mx = lv.row(r).maxCoeff();
      const double lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
      probs->row(r) = (lv.row(r).array() - lse).exp();
      total += lse - lv(r, y);
    }
    out(static_cast<Eigen::Index>(s), 0) = total / segs[s].length;
  }
  return t.record(std::move(out), {logits}, [logits, targets, segs, probs](Tape& t, const Mat& g) {
    Mat& gl = t.grad_ref(logits);
    for (size_t s = 0; s < segs.size(); ++s) {
      const double w = g(static_cast<Eigen::Index>(s), 0) / segs[s].length;
      for (int r = segs[s].offset; r < segs[s].offset + segs[s].length; ++r) {
        gl.row(r) += w * probs->row(r);
        gl(r, targets[static_cast<size_t>(r)]) -= w;
      }
    }
  });
}

Var mean(Var a) {
  Tape& t = *a.tape;
  Mat out(1, 1);
  out(0, 0) = a.value().mean();
  const double n = static_cast<double>(a.value().size());
  return t.record(std::move(out), {a}, [a, n](Tape& t, const Mat& g) { t.grad_ref(a).array() += g(0, 0) / n; });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, const Mat& g) { t.grad_ref(a).array() += g(0, 0); });
}

Var scalar_op(Var a, Var b, double value, Mat grad_a, Mat grad_b) {
  Tape& t = *a.tape;
  Mat out(1, 1);
  out(0, 0) = value;
  auto ga = std::make_shared<Mat>(std::move(grad_a));
  auto gb = std::make_shared<Mat>(std::move(grad_b));
  return t.record(std::move(out), {a, b}, [a, b, ga, gb](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.grad_ref(a) += g(0, 0) * *ga;
    if (t.requires_grad(b)) t.grad_ref(b) += g(0, 0) * *gb;
  });
}

}  // namespace genuda::ag

#pragma once

// Matrix-level reverse-mode differentiation. Every op records its value eagerly and, when
// any input needs a gradient, a closure that accumulates into its inputs' gradients.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace genuda::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Contiguous block of rows belonging to one sequence of a packed batch.
struct Segment {
  int offset = 0;
  int length = 0;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  // A leaf that reads `external` in place; it must outlive the tape.
  Var leaf(const Mat* external, bool requires_grad);

  // Seeds d(out)/d(out) = 1 for a 1x1 output and runs every recorded closure in reverse.
  void backward(Var out);

  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  bool has_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad.size() != 0; }
  const Mat& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }
  const Mat& value(int id) const;
  size_t size() const { return nodes_.size(); }

  // Op plumbing.
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;
  Var record(Mat value, std::initializer_list<Var> inputs, Backward backward);
  Mat& grad_ref(Var v);

 private:
  struct Node {
    Mat own;
    const Mat* ext = nullptr;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // row broadcast over a's rows
Var scale(Var a, double c);
Var relu(Var a);
Var scale_cols(Var a, Var l);  // a .* l, l a 1xN row
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gather_rows(Var table, const std::vector<int>& ids);
Var select_rows(Var a, const std::vector<int>& rows);

// Multi-head scaled dot-product attention over packed sequences: query segment i attends
// to key segment i only. `causal` additionally hides keys after the query position.
Var attention(Var q, Var k, Var v, const std::vector<Segment>& q_segs, const std::vector<Segment>& k_segs,
              int n_heads, bool causal);

Var pool_mean(Var x, const std::vector<Segment>& segs);  // -> [segments x cols]

// Per-segment mean token NLL under softmax(logits): -> [segments x 1].
Var nll(Var logits, const std::vector<int>& targets, const std::vector<Segment>& segs);

Var mean(Var a);  // -> 1x1
Var sum(Var a);   // -> 1x1

// Scalar-valued op of two matrices whose gradients were already computed in closed form.
Var scalar_op(Var a, Var b, double value, Mat grad_a, Mat grad_b);

}  // namespace genuda::ag

#include "genuda/divergence.hpp"

#include <algorithm>
#include <cmath>

#include "genuda/error.hpp"

namespace genuda {

namespace {

void require_batches(const Mat& x, const Mat& y, const char* who) {
  if (x.rows() < 2 || y.rows() < 2) fail(ErrorCode::kDomain, std::string(who) + ": each batch needs >= 2 rows");
  if (x.cols() != y.cols()) fail(ErrorCode::kShape, std::string(who) + ": embedding dimensions differ");
}

Mat squared_distances(const Mat& a, const Mat& b) {
  Mat d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  }
  return d;
}

// G(i,j) = sum_s w_s exp(-d2/(2 s^2)) for w_s = 1 (kernel) or 1/s^2 (gradient weight).
void kernel_sums(const Mat& d2, const std::vector<double>& sig, Mat& k, Mat* g) {
  k = Mat::Zero(d2.rows(), d2.cols());
  if (g) *g = Mat::Zero(d2.rows(), d2.cols());
  for (double s : sig) {
    const Mat e = (-d2.array() / (2.0 * s * s)).exp().matrix();
    k += e;
    if (g) *g += e / (s * s);
  }
}

// True when (y, x) is the canonical argument order, so that mmd2(x, y) and mmd2(y, x)
// perform identical floating-point operations.
bool swapped(const Mat& x, const Mat& y) {
  if (x.rows() != y.rows()) return x.rows() > y.rows();
  return std::lexicographical_compare(y.data(), y.data() + y.size(), x.data(), x.data() + x.size());
}

}  // namespace

double median_pairwise_distance(const Mat& x, const Mat& y) {
  Mat z(x.rows() + y.rows(), x.cols());
  z << x, y;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) d.push_back((z.row(i) - z.row(j)).norm());
  }
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const size_t n = d.size();
  const double med = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return med > 0.0 ? med : 1.0;
}

std::vector<double> KernelBank::bandwidths(const Mat& x, const Mat& y) const {
  if (multipliers.empty()) fail(ErrorCode::kConfig, "kernel bank needs at least one multiplier");
  const double base = fixed_bandwidth ? *fixed_bandwidth : median_pairwise_distance(x, y);
  std::vector<double> out;
  for (double m : multipliers) {
    const double s = m * base;
    if (!(s > 0.0)) fail(ErrorCode::kConfig, "kernel bandwidths must be positive");
    out.push_back(s);
  }
  return out;
}

KernelBank KernelBank::frozen_at(const Mat& x, const Mat& y) const {
  KernelBank b = *this;
  b.fixed_bandwidth = fixed_bandwidth ? *fixed_bandwidth : median_pairwise_distance(x, y);
  return b;
}

double mmd2(const Mat& x, const Mat& y, const KernelBank& bank) {
  require_batches(x, y, "mmd2");
  if (swapped(x, y)) return mmd2(y, x, bank);
  const auto sig = bank.bandwidths(x, y);
  Mat kxx, kyy, kxy;
  kernel_sums(squared_distances(x, x), sig, kxx, nullptr);
  kernel_sums(squared_distances(y, y), sig, kyy, nullptr);
  kernel_sums(squared_distances(x, y), sig, kxy, nullptr);
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  return kxx.sum() / (n * n) + kyy.sum() / (m * m) - 2.0 * kxy.sum() / (n * m);
}

ScalarGrad mmd2_with_grad(const Mat& x, const Mat& y, const KernelBank& bank) {
  require_batches(x, y, "mmd2");
  if (swapped(x, y)) {
    ScalarGrad r = mmd2_with_grad(y, x, bank);
    std::swap(r.grad_x, r.grad_y);
    return r;
  }
  const auto sig = bank.bandwidths(x, y);
  Mat kxx, kyy, kxy, gxx, gyy, gxy;
  kernel_sums(squared_distances(x, x), sig, kxx, &gxx);
  kernel_sums(squared_distances(y, y), sig, kyy, &gyy);
  kernel_sums(squared_distances(x, y), sig, kxy, &gxy);
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  ScalarGrad r;
  r.value = kxx.sum() / (n * n) + kyy.sum() / (m * m) - 2.0 * kxy.sum() / (n * m);
  // d k(a,b)/da = -G(a,b) (a - b); sum_k G(i,k)(a_i - b_k) = rowsum(G)_i a_i - (G B)_i.
  auto pull = [](const Mat& g, const Mat& a, const Mat& b) -> Mat {
    Mat out = -(g.rowwise().sum().asDiagonal() * a - g * b);
    return out;
  };
  r.grad_x = (2.0 / (n * n)) * pull(gxx, x, x) - (2.0 / (n * m)) * pull(gxy, x, y);
  r.grad_y = (2.0 / (m * m)) * pull(gyy, y, y) - (2.0 / (n * m)) * pull(gxy.transpose(), y, x);
  return r;
}

double mkmmd_layerwise(const ForwardOutput& src, const ForwardOutput& tgt, const KernelBank& bank) {
  if (src.layer_embeddings.size() != tgt.layer_embeddings.size()) {
    fail(ErrorCode::kShape, "mkmmd_layerwise: layer counts differ");
  }
  double total = 0.0;
  for (size_t l = 0; l < src.layer_embeddings.size(); ++l) {
    total += mmd2(src.layer_embeddings[l], tgt.layer_embeddings[l], bank);
  }
  return total;
}

Mat pooled_logits(const ForwardOutput& out) {
  if (out.logits.empty()) fail(ErrorCode::kShape, "pooled_logits: no logits");
  Mat p(static_cast<Eigen::Index>(out.logits.size()), out.logits.front().cols());
  for (size_t b = 0; b < out.logits.size(); ++b) p.row(static_cast<Eigen::Index>(b)) = out.logits[b].colwise().mean();
  return p;
}

double mmd_over_logits(const ForwardOutput& src, const ForwardOutput& tgt, const KernelBank& bank) {
  return mmd2(pooled_logits(src), pooled_logits(tgt), bank);
}

namespace {

Mat covariance(const Mat& x, Mat* centered) {
  Mat c = x.rowwise() - x.colwise().mean();
  Mat cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  if (centered) *centered = std::move(c);
  return cov;
}

}  // namespace

double coral(const Mat& x, const Mat& y) {
  require_batches(x, y, "coral");
  const double d = static_cast<double>(x.cols());
  return (covariance(x, nullptr) - covariance(y, nullptr)).squaredNorm() / (4.0 * d * d);
}

ScalarGrad coral_with_grad(const Mat& x, const Mat& y) {
  require_batches(x, y, "coral");
  const double d = static_cast<double>(x.cols());
  Mat xc, yc;
  const Mat diff = covariance(x, &xc) - covariance(y, &yc);
  ScalarGrad r;
  r.value = diff.squaredNorm() / (4.0 * d * d);
  const Mat g = diff * (2.0 / (4.0 * d * d));  // dL/dC_x, symmetric
  r.grad_x = (2.0 / static_cast<double>(x.rows() - 1)) * xc * g;
  r.grad_y = -(2.0 / static_cast<double>(y.rows() - 1)) * yc * g;
  return r;
}

DivergenceKind parse_divergence_kind(const std::string& name) {
  if (name == "mkmmd") return DivergenceKind::kMkMmd;
  if (name == "logits") return DivergenceKind::kLogits;
  if (name == "coral") return DivergenceKind::kCoral;
  fail(ErrorCode::kConfig, "divergence.kind must be mkmmd, logits or coral, got `" + name + "`");
}

const char* divergence_kind_name(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::kMkMmd: return "mkmmd";
    case DivergenceKind::kLogits: return "logits";
    case DivergenceKind::kCoral: return "coral";
  }
  return "?";
}

LambdaSchedule::Kind parse_lambda_kind(const std::string& name) {
  if (name == "linear") return LambdaSchedule::Kind::kLinear;
  if (name == "sigmoid") return LambdaSchedule::Kind::kSigmoid;
  if (name == "fixed") return LambdaSchedule::Kind::kFixed;
  fail(ErrorCode::kConfig, "lambda.kind must be linear, sigmoid or fixed, got `" + name + "`");
}

const char* lambda_kind_name(LambdaSchedule::Kind kind) {
  switch (kind) {
    case LambdaSchedule::Kind::kLinear: return "linear";
    case LambdaSchedule::Kind::kSigmoid: return "sigmoid";
    case LambdaSchedule::Kind::kFixed: return "fixed";
  }
  return "?";
}

double lambda_at(const LambdaSchedule& s, long step) {
  if (s.total_steps < 1) fail(ErrorCode::kConfig, "lambda.total_steps must be >= 1");
  if (step < 0 || step > s.total_steps) {
    fail(ErrorCode::kDomain, "lambda_at: step " + std::to_string(step) + " outside [0, " +
                                 std::to_string(s.total_steps) + "]");
  }
  const double p = static_cast<double>(step) / static_cast<double>(s.total_steps);
  switch (s.kind) {
    case LambdaSchedule::Kind::kLinear: return p;
    case LambdaSchedule::Kind::kSigmoid: return 2.0 / (1.0 + std::exp(-s.gamma * p)) - 1.0;
    case LambdaSchedule::Kind::kFixed:
      if (s.fixed_value < 0.0 || s.fixed_value > 1.0) fail(ErrorCode::kConfig, "fixed lambda must lie in [0,1]");
      return s.fixed_value;
  }
  return p;
}

ag::Var mmd2_node(ag::Var x, ag::Var y, const KernelBank& bank) {
  ScalarGrad r = mmd2_with_grad(x.value(), y.value(), bank);
  return ag::scalar_op(x, y, r.value, std::move(r.grad_x), std::move(r.grad_y));
}

ag::Var coral_node(ag::Var x, ag::Var y) {
  ScalarGrad r = coral_with_grad(x.value(), y.value());
  return ag::scalar_op(x, y, r.value, std::move(r.grad_x), std::move(r.grad_y));
}

}  // namespace genuda

#pragma once

// Multi-kernel MMD, CORAL and adaptation-factor schedules.

#include <optional>
#include <string>
#include <vector>

#include "genuda/model.hpp"

namespace genuda {

// Gaussian kernel bank k(a,b) = sum_j exp(-|a-b|^2 / (2 sigma_j^2)), sigma_j = m_j * sigma0,
// sigma0 the median pairwise distance of the pooled batch unless fixed.
struct KernelBank {
  std::vector<double> multipliers{0.25, 0.5, 1.0, 2.0, 4.0};
  std::optional<double> fixed_bandwidth;

  std::vector<double> bandwidths(const Mat& x, const Mat& y) const;
  // Same bank with the base bandwidth frozen at the median of (x, y).
  KernelBank frozen_at(const Mat& x, const Mat& y) const;
};

double median_pairwise_distance(const Mat& x, const Mat& y);

struct ScalarGrad {
  double value = 0.0;
  Mat grad_x, grad_y;
};

// Biased (V-statistic) MMD^2.
double mmd2(const Mat& x, const Mat& y, const KernelBank& bank);
// Gradient treats the bandwidths as constants.
ScalarGrad mmd2_with_grad(const Mat& x, const Mat& y, const KernelBank& bank);

// Sum over layers of mmd2 between source and target pooled embeddings.
double mkmmd_layerwise(const ForwardOutput& src, const ForwardOutput& tgt, const KernelBank& bank);

// MMD^2 between mean-pooled per-sequence logit vectors.
double mmd_over_logits(const ForwardOutput& src, const ForwardOutput& tgt, const KernelBank& bank);
Mat pooled_logits(const ForwardOutput& out);

// |C_x - C_y|_F^2 / (4 d^2) with unbiased sample covariances.
double coral(const Mat& x, const Mat& y);
ScalarGrad coral_with_grad(const Mat& x, const Mat& y);

enum class DivergenceKind { kMkMmd, kLogits, kCoral };
DivergenceKind parse_divergence_kind(const std::string& name);
const char* divergence_kind_name(DivergenceKind kind);

struct LambdaSchedule {
  enum class Kind { kLinear, kSigmoid, kFixed };
  Kind kind = Kind::kLinear;
  long total_steps = 1;
  double fixed_value = 0.5;
  double gamma = 10.0;

  static LambdaSchedule linear(long total) { return {Kind::kLinear, total, 0.5, 10.0}; }
  static LambdaSchedule sigmoid(long total) { return {Kind::kSigmoid, total, 0.5, 10.0}; }
  static LambdaSchedule fixed(double v, long total = 1) { return {Kind::kFixed, total, v, 10.0}; }
};

LambdaSchedule::Kind parse_lambda_kind(const std::string& name);
const char* lambda_kind_name(LambdaSchedule::Kind kind);

double lambda_at(const LambdaSchedule& schedule, long step);

// Graph-level wrappers: differentiable through the model's backward.
ag::Var mmd2_node(ag::Var x, ag::Var y, const KernelBank& bank);
ag::Var coral_node(ag::Var x, ag::Var y);

}  // namespace genuda

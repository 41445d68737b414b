#pragma once

// Base losses and group-fairness penalties, each with an analytic gradient.
//
// Conventions: losses return batch means. The *_per_sample variants return
// the per-sample values l_i together with d l_i / d input_i (one row per
// sample), which lets training scale and combine samples freely.

#include <array>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fairlab/matrix.hpp"

namespace fairlab::objectives {

// Clamp applied to probabilities before logs and ratios.
inline constexpr double kProbEpsilon = 1e-7;

enum class ObjectiveKind { Baseline, EqualLoss, EqOddsPenalty, DispImpactPenalty, MinMax, Adversarial };
enum class PenaltySplit { Train, Holdout };

std::string_view to_string(ObjectiveKind k);
ObjectiveKind parse_objective_kind(std::string_view s);
std::string_view to_string(PenaltySplit s);
PenaltySplit parse_penalty_split(std::string_view s);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::Baseline;
  double alpha = 0.0;  // ignored by MinMax
  PenaltySplit penalty_split = PenaltySplit::Train;

  bool has_penalty() const {
    return kind == ObjectiveKind::EqualLoss || kind == ObjectiveKind::EqOddsPenalty ||
           kind == ObjectiveKind::DispImpactPenalty;
  }
  friend bool operator==(const ObjectiveSpec&, const ObjectiveSpec&) = default;
};

// CosFace scale and the additive cosine margin used for each sensitive group.
struct MarginSpec {
  double scale = 64.0;
  std::array<double, 2> margin_per_group{0.35, 0.35};  // indexed by a

  double margin(int a) const { return margin_per_group.at(static_cast<std::size_t>(a)); }
  void validate() const;
  friend bool operator==(const MarginSpec&, const MarginSpec&) = default;
};

// One batch as seen by the group penalties. Spans must outlive the batch.
struct GroupedBatch {
  std::span<const double> probs;  // p_i in [0, 1]
  std::span<const int> labels;    // y_i in {0, 1}
  std::span<const int> a;         // sensitive attribute in {0, 1}

  // Throws ShapeError on length mismatch and DegenerateGroupError when a group is empty.
  void validate() const;
};

struct PerSample {
  std::vector<double> values;
  Matrix grad;  // row i holds d values[i] / d input row i

  double mean() const;
};

// Rows of grad scaled by coeff[i]; the result is the gradient of sum_i coeff[i] * l_i.
Matrix combine_rows(const Matrix& grad, std::span<const double> coeff);

// --- base losses -----------------------------------------------------------

PerSample cross_entropy_per_sample(const Matrix& logits, std::span<const int> y);
double cross_entropy(const Matrix& logits, std::span<const int> y);

// -(1 - p_t)^gamma log p_t with p_t the softmax probability of the true class.
PerSample focal_per_sample(const Matrix& logits, std::span<const int> y, double gamma);
double focal_loss(const Matrix& logits, std::span<const int> y, double gamma);

// Probabilities p (N x K) against binary labels y (N*K, row-major). The
// per-sample value averages the K tasks. Gradient is w.r.t. p.
PerSample weighted_bce_per_sample(const Matrix& p, std::span<const int> y, double pos_weight);
double weighted_bce(const Matrix& p, std::span<const int> y, double pos_weight);
// Same loss with p = sigmoid(z); gradient is w.r.t. the logits z.
PerSample weighted_bce_logits_per_sample(const Matrix& z, std::span<const int> y, double pos_weight);

// #negatives / #positives, or 1 when a class is absent.
double balanced_pos_weight(std::span<const int> y);

// --- angular-margin head ---------------------------------------------------

struct MarginLogits {
  Matrix logits;       // s * (cos - m_{a_i} [j == y_i])
  Matrix unit_features;  // N x d
  Matrix unit_weights;   // d x C, columns normalised
  std::vector<double> feature_norms;
  std::vector<double> weight_norms;
};

// features: N x d, weights: d x C (one column per class).
MarginLogits cosface_logits(const Matrix& features, const Matrix& weights, std::span<const int> y,
                            std::span<const int> a, const MarginSpec& margins);

struct MarginGrad {
  Matrix d_features;
  Matrix d_weights;
};

// Pulls d loss / d logits back through the normalisations.
MarginGrad cosface_backward(const MarginLogits& cache, const Matrix& d_logits, double scale);

double cosface_loss(const Matrix& features, const Matrix& weights, std::span<const int> y, std::span<const int> a,
                    const MarginSpec& margins);

// --- group terms -----------------------------------------------------------

struct GroupLosses {
  double pos;  // mean over a_i = 1
  double neg;  // mean over a_i = 0
};

GroupLosses group_losses(std::span<const double> per_sample, std::span<const int> a);

double equal_loss_objective(double base_loss, double l_pos, double l_neg, double alpha);
// Coefficients c_i with d/d theta [mean l + alpha |L+ - L-|] = sum_i c_i d l_i / d theta.
std::vector<double> equal_loss_coefficients(std::span<const int> a, const GroupLosses& g, double alpha);

struct EqOddsTerms {
  double fpr;
  double fnr;
  double value() const { return fpr + fnr; }
};

EqOddsTerms eq_odds_terms(const GroupedBatch& batch);
double eq_odds_penalty(const GroupedBatch& batch);
// d (fpr + fnr) / d p_i.
std::vector<double> eq_odds_penalty_grad(const GroupedBatch& batch);

// -min(r, 1/r) for the ratio of group-mean probabilities; in [-1, 0).
double disparate_impact_penalty(std::span<const double> p, std::span<const int> a);
std::vector<double> disparate_impact_penalty_grad(std::span<const double> p, std::span<const int> a);

// Group (1 or 0) whose loss is larger; ties go to a = 1.
int minmax_select(double l_pos, double l_neg);

inline constexpr double kAdversarialTarget = 0.9;

// fr_loss + alpha * mean_i log(1 + |target - P_i|).
double adversarial_removal_terms(double fr_loss, std::span<const double> sensitive_prob, double alpha,
                                 double target = kAdversarialTarget);
// d/d P_i of alpha * mean_i log(1 + |target - P_i|).
std::vector<double> adversarial_penalty_grad(std::span<const double> sensitive_prob, double alpha,
                                             double target = kAdversarialTarget);

}  // namespace fairlab::objectives

#include "fairlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fairlab::objectives {

namespace {

void require_labels(const Matrix& logits, std::span<const int> y) {
  if (y.size() != logits.rows()) throw ShapeError("label count does not match logits rows");
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= logits.cols()) {
      throw DomainError("class index " + std::to_string(v) + " out of range");
    }
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

struct Counts {
  double pos = 0;
  double neg = 0;
};

Counts group_counts(std::span<const int> a) {
  Counts c;
  for (int v : a) {
    if (v == 1)
      c.pos += 1;
    else if (v == 0)
      c.neg += 1;
    else
      throw DomainError("sensitive attribute must be 0 or 1");
  }
  if (c.pos == 0 || c.neg == 0) throw DegenerateGroupError("both sensitive groups must be non-empty");
  return c;
}

// log softmax(z)[y] for one row.
double log_softmax_at(std::span<const double> z, std::size_t y, std::vector<double>& probs) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    probs[j] = std::exp(z[j] - mx);
    s += probs[j];
  }
  for (auto& v : probs) v /= s;
  return z[y] - mx - std::log(s);
}

}  // namespace

std::string_view to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::Baseline: return "baseline";
    case ObjectiveKind::EqualLoss: return "equal_loss";
    case ObjectiveKind::EqOddsPenalty: return "eq_odds";
    case ObjectiveKind::DispImpactPenalty: return "disp_impact";
    case ObjectiveKind::MinMax: return "minmax";
    case ObjectiveKind::Adversarial: return "adversarial";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(std::string_view s) {
  for (auto k : {ObjectiveKind::Baseline, ObjectiveKind::EqualLoss, ObjectiveKind::EqOddsPenalty,
                 ObjectiveKind::DispImpactPenalty, ObjectiveKind::MinMax, ObjectiveKind::Adversarial}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

std::string_view to_string(PenaltySplit s) { return s == PenaltySplit::Train ? "train" : "holdout"; }

PenaltySplit parse_penalty_split(std::string_view s) {
  if (s == "train") return PenaltySplit::Train;
  if (s == "holdout") return PenaltySplit::Holdout;
  throw ConfigError("unknown penalty split '" + std::string(s) + "'");
}

void MarginSpec::validate() const {
  if (!(scale > 0.0)) throw ConfigError("margin scale must be positive");
  for (double m : margin_per_group)
    if (!(m >= 0.0)) throw ConfigError("margins must be non-negative");
}

void GroupedBatch::validate() const {
  if (probs.size() != a.size() || labels.size() != a.size()) throw ShapeError("grouped batch arrays differ in length");
  if (a.empty()) throw DegenerateGroupError("empty batch");
  for (int v : labels)
    if (v != 0 && v != 1) throw DomainError("labels must be binary");
  group_counts(a);
}

double PerSample::mean() const {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

Matrix combine_rows(const Matrix& grad, std::span<const double> coeff) {
  if (coeff.size() != grad.rows()) throw ShapeError("combine_rows: coefficient count mismatch");
  Matrix out = grad;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (auto& v : out.row(r)) v *= coeff[r];
  return out;
}

PerSample cross_entropy_per_sample(const Matrix& logits, std::span<const int> y) {
  require_labels(logits, y);
  PerSample out{std::vector<double>(logits.rows()), Matrix(logits.rows(), logits.cols())};
  std::vector<double> q(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto yi = static_cast<std::size_t>(y[i]);
    out.values[i] = -log_softmax_at(logits.row(i), yi, q);
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < q.size(); ++j) g[j] = q[j] - (j == yi ? 1.0 : 0.0);
  }
  return out;
}

double cross_entropy(const Matrix& logits, std::span<const int> y) { return cross_entropy_per_sample(logits, y).mean(); }

PerSample focal_per_sample(const Matrix& logits, std::span<const int> y, double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("focal gamma must be non-negative");
  require_labels(logits, y);
  PerSample out{std::vector<double>(logits.rows()), Matrix(logits.rows(), logits.cols())};
  std::vector<double> q(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto yi = static_cast<std::size_t>(y[i]);
    const double logp = log_softmax_at(logits.row(i), yi, q);
    const double p = std::exp(logp);
    const double one_minus = 1.0 - p;
    // d l / d p_t, then through d p_t / d z_j = p_t (delta_jy - q_j).
    const double w = std::pow(one_minus, gamma);
    out.values[i] = -w * logp;
    const double dw = (gamma > 0.0 && one_minus > 0.0) ? gamma * std::pow(one_minus, gamma - 1.0) * logp : 0.0;
    const double dl_dp = dw - w / p;
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < q.size(); ++j) g[j] = dl_dp * p * ((j == yi ? 1.0 : 0.0) - q[j]);
  }
  return out;
}

double focal_loss(const Matrix& logits, std::span<const int> y, double gamma) {
  return focal_per_sample(logits, y, gamma).mean();
}

PerSample weighted_bce_per_sample(const Matrix& p, std::span<const int> y, double pos_weight) {
  if (y.size() != p.size()) throw ShapeError("weighted_bce: label count mismatch");
  const auto k = static_cast<double>(p.cols());
  PerSample out{std::vector<double>(p.rows()), Matrix(p.rows(), p.cols())};
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < p.cols(); ++t) {
      const double raw = p(i, t);
      const double pc = clamp_prob(raw);
      const int yi = y[i * p.cols() + t];
      if (yi != 0 && yi != 1) throw DomainError("weighted_bce labels must be binary");
      s += -(pos_weight * yi * std::log(pc) + (1 - yi) * std::log(1.0 - pc));
      const bool clamped = raw != pc;
      out.grad(i, t) = clamped ? 0.0 : -(pos_weight * yi / pc - (1 - yi) / (1.0 - pc)) / k;
    }
    out.values[i] = s / k;
  }
  return out;
}

double weighted_bce(const Matrix& p, std::span<const int> y, double pos_weight) {
  return weighted_bce_per_sample(p, y, pos_weight).mean();
}

PerSample weighted_bce_logits_per_sample(const Matrix& z, std::span<const int> y, double pos_weight) {
  Matrix p(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) p.data()[i] = sigmoid(z.data()[i]);
  PerSample out = weighted_bce_per_sample(p, y, pos_weight);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double pi = p.data()[i];
    out.grad.data()[i] *= pi * (1.0 - pi);
  }
  return out;
}

double balanced_pos_weight(std::span<const int> y) {
  double pos = 0, neg = 0;
  for (int v : y) (v == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return 1.0;
  return neg / pos;
}

MarginLogits cosface_logits(const Matrix& features, const Matrix& weights, std::span<const int> y,
                            std::span<const int> a, const MarginSpec& margins) {
  margins.validate();
  if (features.cols() != weights.rows()) throw ShapeError("cosface: feature dim does not match head");
  if (y.size() != features.rows() || a.size() != features.rows()) throw ShapeError("cosface: label count mismatch");
  MarginLogits out;
  out.unit_features = features;
  out.feature_norms.resize(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const double n = l2_norm(features.row(i));
    if (n == 0.0) throw DomainError("cosface: zero-norm feature vector");
    out.feature_norms[i] = n;
    for (auto& v : out.unit_features.row(i)) v /= n;
  }
  out.unit_weights = weights;
  out.weight_norms.assign(weights.cols(), 0.0);
  for (std::size_t r = 0; r < weights.rows(); ++r)
    for (std::size_t c = 0; c < weights.cols(); ++c) out.weight_norms[c] += weights(r, c) * weights(r, c);
  for (auto& n : out.weight_norms) {
    n = std::sqrt(n);
    if (n == 0.0) throw DomainError("cosface: zero-norm weight column");
  }
  for (std::size_t r = 0; r < weights.rows(); ++r)
    for (std::size_t c = 0; c < weights.cols(); ++c) out.unit_weights(r, c) /= out.weight_norms[c];

  out.logits = matmul(out.unit_features, out.unit_weights);
  for (std::size_t i = 0; i < out.logits.rows(); ++i) {
    const int yi = y[i];
    if (yi < 0 || static_cast<std::size_t>(yi) >= weights.cols()) throw DomainError("cosface: class index out of range");
    const int ai = a[i];
    if (ai != 0 && ai != 1) throw DomainError("sensitive attribute must be 0 or 1");
    auto row = out.logits.row(i);
    row[static_cast<std::size_t>(yi)] -= margins.margin(ai);
    for (auto& v : row) v *= margins.scale;
  }
  return out;
}

MarginGrad cosface_backward(const MarginLogits& cache, const Matrix& d_logits, double scale) {
  // d/d cos = s * d/d logits; the margin is a constant offset.
  const Matrix d_cos = scaled(d_logits, scale);
  Matrix d_unit_f = matmul_nt(d_cos, cache.unit_weights);  // N x d
  Matrix d_unit_w = matmul_tn(cache.unit_features, d_cos);  // d x C

  MarginGrad g{Matrix(d_unit_f.rows(), d_unit_f.cols()), Matrix(d_unit_w.rows(), d_unit_w.cols())};
  for (std::size_t i = 0; i < d_unit_f.rows(); ++i) {
    const auto u = cache.unit_features.row(i);
    const auto gu = d_unit_f.row(i);
    const double proj = dot(u, gu);
    auto out = g.d_features.row(i);
    for (std::size_t c = 0; c < u.size(); ++c) out[c] = (gu[c] - u[c] * proj) / cache.feature_norms[i];
  }
  for (std::size_t c = 0; c < d_unit_w.cols(); ++c) {
    double proj = 0.0;
    for (std::size_t r = 0; r < d_unit_w.rows(); ++r) proj += cache.unit_weights(r, c) * d_unit_w(r, c);
    for (std::size_t r = 0; r < d_unit_w.rows(); ++r) {
      g.d_weights(r, c) = (d_unit_w(r, c) - cache.unit_weights(r, c) * proj) / cache.weight_norms[c];
    }
  }
  return g;
}

double cosface_loss(const Matrix& features, const Matrix& weights, std::span<const int> y, std::span<const int> a,
                    const MarginSpec& margins) {
  return cross_entropy(cosface_logits(features, weights, y, a, margins).logits, y);
}

GroupLosses group_losses(std::span<const double> per_sample, std::span<const int> a) {
  if (per_sample.size() != a.size()) throw ShapeError("group_losses: length mismatch");
  const Counts c = group_counts(a);
  double pos = 0, neg = 0;
  for (std::size_t i = 0; i < a.size(); ++i) (a[i] == 1 ? pos : neg) += per_sample[i];
  return {pos / c.pos, neg / c.neg};
}

double equal_loss_objective(double base_loss, double l_pos, double l_neg, double alpha) {
  return base_loss + alpha * std::abs(l_pos - l_neg);
}

std::vector<double> equal_loss_coefficients(std::span<const int> a, const GroupLosses& g, double alpha) {
  const Counts c = group_counts(a);
  const auto n = static_cast<double>(a.size());
  const double s = alpha * sign(g.pos - g.neg);
  std::vector<double> coeff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) coeff[i] = 1.0 / n + (a[i] == 1 ? s / c.pos : -s / c.neg);
  return coeff;
}

EqOddsTerms eq_odds_terms(const GroupedBatch& batch) {
  batch.validate();
  const Counts c = group_counts(batch.a);
  double fp_pos = 0, fp_neg = 0, fn_pos = 0, fn_neg = 0;
  for (std::size_t i = 0; i < batch.a.size(); ++i) {
    const double p = batch.probs[i];
    const int y = batch.labels[i];
    if (batch.a[i] == 1) {
      fp_pos += p * (1 - y);
      fn_pos += (1.0 - p) * y;
    } else {
      fp_neg += p * (1 - y);
      fn_neg += (1.0 - p) * y;
    }
  }
  return {std::abs(fp_pos / c.pos - fp_neg / c.neg), std::abs(fn_pos / c.pos - fn_neg / c.neg)};
}

double eq_odds_penalty(const GroupedBatch& batch) { return eq_odds_terms(batch).value(); }

std::vector<double> eq_odds_penalty_grad(const GroupedBatch& batch) {
  batch.validate();
  const Counts c = group_counts(batch.a);
  double fp_pos = 0, fp_neg = 0, fn_pos = 0, fn_neg = 0;
  for (std::size_t i = 0; i < batch.a.size(); ++i) {
    const double p = batch.probs[i];
    const int y = batch.labels[i];
    if (batch.a[i] == 1) {
      fp_pos += p * (1 - y);
      fn_pos += (1.0 - p) * y;
    } else {
      fp_neg += p * (1 - y);
      fn_neg += (1.0 - p) * y;
    }
  }
  const double s_fpr = sign(fp_pos / c.pos - fp_neg / c.neg);
  const double s_fnr = sign(fn_pos / c.pos - fn_neg / c.neg);
  std::vector<double> g(batch.a.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = batch.a[i] == 1 ? 1.0 / c.pos : -1.0 / c.neg;
    const int y = batch.labels[i];
    g[i] = s_fpr * (1 - y) * w - s_fnr * y * w;
  }
  return g;
}

namespace {

struct GroupMeans {
  double pos;
  double neg;
  Counts counts;
};

GroupMeans group_means(std::span<const double> p, std::span<const int> a) {
  if (p.size() != a.size()) throw ShapeError("disparate impact: length mismatch");
  const Counts c = group_counts(a);
  double pos = 0, neg = 0;
  for (std::size_t i = 0; i < a.size(); ++i) (a[i] == 1 ? pos : neg) += p[i];
  GroupMeans m{pos / c.pos, neg / c.neg, c};
  if (m.pos < kProbEpsilon || m.neg < kProbEpsilon) {
    throw DegenerateGroupError("disparate impact: a group-mean probability is below epsilon");
  }
  return m;
}

}  // namespace

double disparate_impact_penalty(std::span<const double> p, std::span<const int> a) {
  const GroupMeans m = group_means(p, a);
  return -std::min(m.pos / m.neg, m.neg / m.pos);
}

std::vector<double> disparate_impact_penalty_grad(std::span<const double> p, std::span<const int> a) {
  const GroupMeans m = group_means(p, a);
  // The smaller ratio is (lower mean) / (higher mean).
  double d_pos, d_neg;
  if (m.pos <= m.neg) {
    d_pos = -1.0 / m.neg;
    d_neg = m.pos / (m.neg * m.neg);
  } else {
    d_neg = -1.0 / m.pos;
    d_pos = m.neg / (m.pos * m.pos);
  }
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = a[i] == 1 ? d_pos / m.counts.pos : d_neg / m.counts.neg;
  return g;
}

int minmax_select(double l_pos, double l_neg) { return l_pos >= l_neg ? 1 : 0; }

double adversarial_removal_terms(double fr_loss, std::span<const double> sensitive_prob, double alpha, double target) {
  if (!(alpha >= 0.0)) throw DomainError("alpha must be non-negative");
  if (sensitive_prob.empty()) return fr_loss;
  double s = 0.0;
  for (double p : sensitive_prob) s += std::log1p(std::abs(target - p));
  return fr_loss + alpha * s / static_cast<double>(sensitive_prob.size());
}

std::vector<double> adversarial_penalty_grad(std::span<const double> sensitive_prob, double alpha, double target) {
  std::vector<double> g(sensitive_prob.size());
  const auto n = static_cast<double>(sensitive_prob.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = target - sensitive_prob[i];
    g[i] = alpha * (-sign(d)) / (1.0 + std::abs(d)) / n;
  }
  return g;
}

}  // namespace fairlab::objectives

#include "fairlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <ostream>
#include <set>

#include "fairlab/text.hpp"

namespace fairlab::train {

namespace ob = objectives;
using data::Dataset;
using data::Split;

// --- label flipping ----------------------------------------------------------

std::size_t flip_count(double p, std::size_t n) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("flip fraction must lie in [0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
  return std::min(k, n);
}

Dataset flip_labels(const Dataset& data, int group, double p, FlipMode mode, std::uint64_t seed) {
  if (group != 0 && group != 1) throw DomainError("flip group must be 0 or 1");
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.split[i] == Split::Train && data.a[i] == group) members.push_back(i);
  const std::size_t k = flip_count(p, members.size());
  Dataset out = data;
  if (mode == FlipMode::None || k == 0) return out;

  Rng rng = make_stream(seed, Stream::kFlip);
  rng.shuffle(std::span<std::size_t>(members));
  if (mode == FlipMode::BinaryFlip) {
    if (data.task != data::TaskKind::Binary) throw DataError("binary_flip needs binary labels");
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < data.num_tasks; ++t) {
        auto& v = out.y[members[j] * data.num_tasks + t];
        v = 1 - v;
      }
    return out;
  }

  if (data.task != data::TaskKind::Identity) throw DataError("identity_swap needs identity labels");
  std::set<int> id_set;
  for (auto r : members) id_set.insert(data.y[r]);
  const std::vector<int> ids(id_set.begin(), id_set.end());
  if (ids.size() < 2) {
    throw DataError("identity_swap needs at least two identities in group a=" + std::to_string(group));
  }
  for (std::size_t j = 0; j < k; ++j) {
    const int current = data.y[members[j]];
    const auto pos = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), current) - ids.begin());
    auto pick = static_cast<std::size_t>(rng.below(ids.size() - 1));
    if (pick >= pos) ++pick;
    out.y[members[j]] = ids[pick];
  }
  return out;
}

// --- batching and optimisation ---------------------------------------------

StratifiedBatcher::StratifiedBatcher(std::vector<std::size_t> rows, std::span<const int> a, std::size_t batch_size,
                                     Rng rng)
    : rng_(std::move(rng)) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  for (auto r : rows) groups_.at(static_cast<std::size_t>(a[r])).push_back(r);
  const std::size_t n = rows.size();
  batches_ = std::max<std::size_t>(1, (n + batch_size - 1) / batch_size);
  if (!groups_[0].empty() && !groups_[1].empty())
    batches_ = std::min({batches_, groups_[0].size(), groups_[1].size()});
  if (n == 0) batches_ = 0;
}

std::vector<std::vector<std::size_t>> StratifiedBatcher::next_epoch() {
  for (auto& g : groups_) rng_.shuffle(std::span<std::size_t>(g));
  std::vector<std::vector<std::size_t>> out(batches_);
  for (const auto& g : groups_) {
    for (std::size_t b = 0; b < batches_; ++b) {
      const std::size_t lo = b * g.size() / batches_, hi = (b + 1) * g.size() / batches_;
      out[b].insert(out[b].end(), g.begin() + static_cast<std::ptrdiff_t>(lo), g.begin() + static_cast<std::ptrdiff_t>(hi));
    }
  }
  for (auto& b : out) std::sort(b.begin(), b.end());
  return out;
}

void Sgd::step(std::span<Matrix* const> params, const Gradient& grad, double learning_rate) {
  if (grad.size() != params.size()) throw ShapeError("optimizer: gradient count does not match parameters");
  if (velocity_.empty() && momentum_ > 0.0) {
    for (auto* p : params) velocity_.emplace_back(p->rows(), p->cols());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = *params[i];
    if (w.rows() != grad[i].rows() || w.cols() != grad[i].cols()) throw ShapeError("optimizer: gradient shape mismatch");
    auto& wd = w.data();
    const auto& gd = grad[i].data();
    for (std::size_t j = 0; j < wd.size(); ++j) {
      double d = gd[j];
      if (weight_decay_ != 0.0) d += weight_decay_ * wd[j];
      if (momentum_ > 0.0) {
        double& v = velocity_[i].data()[j];
        v = momentum_ * v + d;
        d = v;
      }
      wd[j] -= learning_rate * d;
    }
  }
}

namespace {

std::vector<int> gather(const std::vector<int>& v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

std::vector<int> gather_labels(const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size() * d.num_tasks);
  for (auto r : rows)
    for (std::size_t t = 0; t < d.num_tasks; ++t) out.push_back(d.label(r, t));
  return out;
}

ParamList copy_params(std::span<Matrix* const> params) {
  ParamList out;
  for (auto* p : params) out.push_back(*p);
  return out;
}

Gradient add_gradients(const Gradient& a, const Gradient& b) {
  Gradient out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(add(a[i], b[i]));
  return out;
}

// A model plus the pieces of one forward pass needed to pull per-sample
// coefficients (and, for classifiers, probability gradients) back to the parameters.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::vector<Matrix*> params() = 0;
  virtual void forward(const Dataset& d, std::span<const std::size_t> rows, std::span<const int> labels) = 0;
  virtual Gradient backward(std::span<const double> coeff, const Matrix* d_probs) const = 0;
  virtual models::AnyModel model() const = 0;

  const std::vector<double>& losses() const { return losses_; }
  const Matrix& probs() const { return probs_; }

 protected:
  std::vector<double> losses_;
  Matrix probs_;
};

class ClassifierLearner final : public Learner {
 public:
  ClassifierLearner(models::Mlp mlp, eval::LossSpec loss) : mlp_(std::move(mlp)), loss_(std::move(loss)) {}

  std::vector<Matrix*> params() override {
    std::vector<Matrix*> out;
    for (auto& p : mlp_.params()) out.push_back(&p);
    return out;
  }

  void forward(const Dataset& d, std::span<const std::size_t> rows, std::span<const int> labels) override {
    const Matrix logits = mlp_.forward(d.x.gather_rows(rows), cache_);
    ps_ = eval::binary_loss_per_sample(logits, labels, loss_);
    losses_ = ps_.values;
    probs_ = Matrix(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.size(); ++i) probs_.data()[i] = sigmoid(logits.data()[i]);
  }

  Gradient backward(std::span<const double> coeff, const Matrix* d_probs) const override {
    Matrix dz = ob::combine_rows(ps_.grad, coeff);
    if (d_probs) {
      for (std::size_t i = 0; i < dz.size(); ++i) {
        const double p = probs_.data()[i];
        dz.data()[i] += d_probs->data()[i] * p * (1.0 - p);
      }
    }
    return mlp_.backward(cache_, dz);
  }

  models::AnyModel model() const override { return mlp_; }

 private:
  models::Mlp mlp_;
  eval::LossSpec loss_;
  models::Mlp::Cache cache_;
  ob::PerSample ps_;
};

class EmbeddingLearner final : public Learner {
 public:
  EmbeddingLearner(models::EmbeddingModel m, ob::MarginSpec margins) : m_(std::move(m)), margins_(margins) {}

  std::vector<Matrix*> params() override {
    std::vector<Matrix*> out;
    for (auto& p : m_.backbone.params()) out.push_back(&p);
    out.push_back(&m_.head);
    return out;
  }

  void forward(const Dataset& d, std::span<const std::size_t> rows, std::span<const int> labels) override {
    const Matrix feats = m_.backbone.forward(d.x.gather_rows(rows), cache_);
    const auto cols = m_.head_columns(labels);
    const auto a = gather(d.a, rows);
    ml_ = eval::margin_loss_per_sample(feats, m_.head, cols, a, margins_);
    losses_ = ml_.per_sample.values;
  }

  Gradient backward(std::span<const double> coeff, const Matrix*) const override {
    const Matrix d_logits = ob::combine_rows(ml_.per_sample.grad, coeff);
    const auto mg = ob::cosface_backward(ml_.cache, d_logits, margins_.scale);
    Gradient g = m_.backbone.backward(cache_, mg.d_features);
    g.push_back(mg.d_weights);
    return g;
  }

  models::AnyModel model() const override { return m_; }

 private:
  models::EmbeddingModel m_;
  ob::MarginSpec margins_;
  models::Mlp::Cache cache_;
  eval::MarginLoss ml_;
};

std::unique_ptr<Learner> make_learner(const ExperimentConfig& c, const Dataset& d, const eval::LossSpec& loss) {
  if (c.model == ModelKind::Mlp) {
    if (d.task != data::TaskKind::Binary) throw ConfigError("model = mlp needs a dataset with binary labels");
    models::MlpSpec spec;
    spec.layer_sizes.push_back(d.dim());
    spec.layer_sizes.insert(spec.layer_sizes.end(), c.hidden.begin(), c.hidden.end());
    spec.layer_sizes.push_back(d.num_tasks);
    spec.output = models::OutputKind::Sigmoid;
    return std::make_unique<ClassifierLearner>(models::Mlp::init(spec, c.seed), loss);
  }
  if (d.task != data::TaskKind::Identity) throw ConfigError("model = embedding needs a dataset with identity labels");
  std::set<int> ids;
  for (Split s : {Split::Train, Split::Holdout})
    for (int id : d.identities(s)) ids.insert(id);
  auto m = models::EmbeddingModel::init(d.dim(), c.hidden, c.feature_dim, {ids.begin(), ids.end()}, c.seed);
  return std::make_unique<EmbeddingLearner>(std::move(m), c.margins);
}

double nan_if_throws(const std::function<double()>& f) {
  try {
    return f();
  } catch (const DegenerateGroupError&) {
    return kMissing;
  } catch (const NumericError&) {
    return kMissing;
  }
}

std::vector<metrics::GroupReport> snapshot(const models::AnyModel& model, const Dataset& d,
                                           const eval::LossSpec& loss) {
  std::vector<metrics::GroupReport> out;
  for (Split s : {Split::Train, Split::Holdout, Split::Val, Split::Test}) {
    if (!d.has_split(s)) continue;
    try {
      out.push_back(eval::evaluate_split(model, d, s, loss));
    } catch (const DegenerateGroupError&) {
    }
  }
  return out;
}

const metrics::GroupReport* find_report(const std::vector<metrics::GroupReport>& reps, Split s) {
  for (const auto& r : reps)
    if (r.split == data::to_string(s)) return &r;
  return nullptr;
}

// Mean over tasks of a per-task penalty of the split's probabilities.
template <typename F>
double task_mean(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& a, std::size_t k, F f) {
  double s = 0.0;
  std::vector<double> p(probs.rows());
  std::vector<int> y(probs.rows());
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      p[i] = probs(i, t);
      y[i] = labels[i * k + t];
    }
    s += f(std::span<const double>(p), std::span<const int>(y), std::span<const int>(a));
  }
  return s / static_cast<double>(k);
}

// Gradient w.r.t. probabilities of alpha * (task-averaged penalty).
Matrix probability_penalty_grad(ob::ObjectiveKind kind, const Matrix& probs, std::span<const int> labels,
                                std::span<const int> a, double alpha) {
  const std::size_t n = probs.rows(), k = probs.cols();
  Matrix d(n, k);
  std::vector<double> p(n);
  std::vector<int> y(n);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = probs(i, t);
      y[i] = labels[i * k + t];
    }
    const auto g = kind == ob::ObjectiveKind::EqOddsPenalty ? ob::eq_odds_penalty_grad({p, y, a})
                                                            : ob::disparate_impact_penalty_grad(p, a);
    for (std::size_t i = 0; i < n; ++i) d(i, t) = alpha * g[i] / static_cast<double>(k);
  }
  return d;
}

// alpha * sign(L+ - L-) * (a_i / N+ - (1 - a_i) / N-): the equal-loss term alone.
std::vector<double> equal_loss_penalty_coefficients(std::span<const int> a, const ob::GroupLosses& g, double alpha) {
  double n_pos = 0, n_neg = 0;
  for (int v : a) (v == 1 ? n_pos : n_neg) += 1;
  const double diff = g.pos - g.neg;
  const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = alpha * sgn * (a[i] == 1 ? 1.0 / n_pos : -1.0 / n_neg);
  return c;
}

enum class Scheme { PenaltyOnTrain, PenaltyOnHoldout, MinMax };

struct Prepared {
  Dataset data;
  eval::LossSpec loss;
};

Prepared prepare(const ExperimentConfig& c, const Dataset& input, bool needs_holdout) {
  c.validate();
  input.validate();
  Prepared p{input, {}};
  if (!p.data.has_split(Split::Train)) throw DataError("dataset has no training split");
  if (c.flip.mode != FlipMode::None && c.flip.schedule == FlipSchedule::Once) {
    p.data = flip_labels(p.data, c.flip.group, c.flip.fraction, c.flip.mode, c.seed);
  }
  if (needs_holdout && !p.data.has_split(Split::Holdout)) {
    p.data = carve_holdout(p.data, c.holdout_fraction, c.seed);
  }
  p.loss = c.loss_spec(p.data);
  return p;
}

void record_epoch(EpochRecord& rec, const Learner& learner, const Dataset& d, const eval::LossSpec& loss,
                  Split penalty_split, bool keep_reports) {
  const auto model = learner.model();
  auto reps = snapshot(model, d, loss);
  if (const auto* tr = find_report(reps, Split::Train); tr && tr->has_row("loss")) {
    const auto& row = tr->row("loss");
    rec.train_loss = row.overall;
    rec.train_loss_a0 = row.group0;
    rec.train_loss_a1 = row.group1;
  }
  if (const auto* pr = find_report(reps, penalty_split); pr && pr->has_row("loss")) {
    rec.loss_gap = pr->row("loss").abs_gap;
  }
  if (const auto* mlp = std::get_if<models::Mlp>(&model)) {
    const auto rows = d.indices(penalty_split);
    const Matrix logits = mlp->forward(d.x.gather_rows(rows));
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.size(); ++i) probs.data()[i] = sigmoid(logits.data()[i]);
    const auto labels = gather_labels(d, rows);
    const auto a = gather(d.a, rows);
    rec.eq_odds = nan_if_throws([&] {
      return task_mean(probs, labels, a, d.num_tasks,
                       [](auto p, auto y, auto g) { return ob::eq_odds_penalty({p, y, g}); });
    });
    rec.disp_impact = nan_if_throws([&] {
      return task_mean(probs, labels, a, d.num_tasks,
                       [](auto p, auto, auto g) { return ob::disparate_impact_penalty(p, g); });
    });
  }
  if (keep_reports) rec.reports = std::move(reps);
}

TrainResult run(const ExperimentConfig& c, const Dataset& input, const TrainOptions& opt, Scheme scheme) {
  auto prep = prepare(c, input, scheme == Scheme::PenaltyOnHoldout);
  const Dataset& d = prep.data;
  auto learner = make_learner(c, d, prep.loss);
  const auto params = learner->params();

  const auto kind = c.objective.kind;
  const double alpha = c.objective.alpha;
  const bool penalised = c.objective.has_penalty() && alpha != 0.0;

  StratifiedBatcher batcher(d.indices(Split::Train), d.a, c.batch_size, make_stream(c.seed, Stream::kBatching));
  std::unique_ptr<StratifiedBatcher> holdout_batcher;
  std::vector<std::vector<std::size_t>> holdout_batches;
  std::size_t holdout_next = 0;
  if (scheme == Scheme::PenaltyOnHoldout) {
    holdout_batcher = std::make_unique<StratifiedBatcher>(d.indices(Split::Holdout), d.a, c.batch_size,
                                                          make_stream(c.seed, Stream::kHoldoutBatching));
  }
  const auto next_holdout = [&]() -> const std::vector<std::size_t>& {
    if (holdout_next >= holdout_batches.size()) {
      holdout_batches = holdout_batcher->next_epoch();
      holdout_next = 0;
    }
    return holdout_batches[holdout_next++];
  };

  Sgd sgd(c.optimizer.momentum, c.optimizer.weight_decay);
  Sgd plain(0.0, 0.0);
  Rng flip_rng = make_stream(c.seed, Stream::kFlip);
  const bool per_iteration_flip = c.flip.mode == FlipMode::BinaryFlip && c.flip.schedule == FlipSchedule::PerIteration &&
                                  c.flip.fraction > 0.0;
  const Split penalty_split = scheme == Scheme::PenaltyOnHoldout ? Split::Holdout : Split::Train;

  TrainHistory history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const double lr = c.optimizer.rate_at(epoch);
    rec.learning_rate = lr;

    for (const auto& rows : batcher.next_epoch()) {
      const auto a = gather(d.a, rows);
      auto labels = d.task == data::TaskKind::Binary ? gather_labels(d, rows) : gather(d.y, rows);
      if (per_iteration_flip) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (a[i] == c.flip.group) members.push_back(i);
        const std::size_t k = flip_count(c.flip.fraction, members.size());
        flip_rng.shuffle(std::span<std::size_t>(members));
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t t = 0; t < d.num_tasks; ++t) {
            auto& v = labels[members[j] * d.num_tasks + t];
            v = 1 - v;
          }
      }

      learner->forward(d, rows, labels);
      const auto n = static_cast<double>(rows.size());
      std::vector<double> coeff(rows.size(), 1.0 / n);
      std::optional<Matrix> d_probs;
      StepEvent ev;
      ev.kind = StepKind::Base;

      if (scheme == Scheme::MinMax) {
        const auto gl = ob::group_losses(learner->losses(), a);
        const int sel = ob::minmax_select(gl.pos, gl.neg);
        double n_sel = 0;
        for (int v : a) n_sel += (v == sel);
        for (std::size_t i = 0; i < rows.size(); ++i) coeff[i] = a[i] == sel ? 1.0 / n_sel : 0.0;
        ev.selected_group = sel;
        ev.group_losses = gl;
      } else if (scheme == Scheme::PenaltyOnTrain && penalised) {
        try {
          if (kind == ob::ObjectiveKind::EqualLoss) {
            const auto gl = ob::group_losses(learner->losses(), a);
            coeff = ob::equal_loss_coefficients(a, gl, alpha);
            ev.group_losses = gl;
          } else {
            d_probs = probability_penalty_grad(kind, learner->probs(), labels, a, alpha);
          }
          ++rec.penalty_steps;
        } catch (const DegenerateGroupError&) {
          ++rec.skipped_penalty_batches;
        } catch (const NumericError&) {
          ++rec.skipped_penalty_batches;
        }
      }
      Gradient grad = learner->backward(coeff, d_probs ? &*d_probs : nullptr);

      // Penalty gradient from a holdout batch, either applied as its own step or summed in.
      std::optional<Gradient> pen_grad;
      std::vector<std::size_t> pen_rows;
      if (scheme == Scheme::PenaltyOnHoldout && penalised) {
        pen_rows = next_holdout();
        const auto ha = gather(d.a, pen_rows);
        const auto hl = d.task == data::TaskKind::Binary ? gather_labels(d, pen_rows) : gather(d.y, pen_rows);
        try {
          learner->forward(d, pen_rows, hl);
          std::vector<double> pc(pen_rows.size(), 0.0);
          std::optional<Matrix> pd;
          if (kind == ob::ObjectiveKind::EqualLoss) {
            pc = equal_loss_penalty_coefficients(ha, ob::group_losses(learner->losses(), ha), alpha);
          } else {
            pd = probability_penalty_grad(kind, learner->probs(), hl, ha, alpha);
          }
          pen_grad = learner->backward(pc, pd ? &*pd : nullptr);
          ++rec.penalty_steps;
        } catch (const DegenerateGroupError&) {
          ++rec.skipped_penalty_batches;
        } catch (const NumericError&) {
          ++rec.skipped_penalty_batches;
        }
      }

      if (pen_grad && c.holdout_schedule == HoldoutSchedule::Joint) grad = add_gradients(grad, *pen_grad);
      if (opt.hook) {
        ev.epoch = epoch;
        ev.step = step;
        ev.rows = rows;
        ev.params_before = copy_params(params);
        ev.gradient = grad;
        ev.learning_rate = lr;
        opt.hook(ev);
      }
      sgd.step(params, grad, lr);
      ++step;
      ++rec.steps;

      if (pen_grad && c.holdout_schedule == HoldoutSchedule::Alternate) {
        if (opt.hook) {
          StepEvent pe;
          pe.epoch = epoch;
          pe.step = step;
          pe.kind = StepKind::Penalty;
          pe.rows = pen_rows;
          pe.params_before = copy_params(params);
          pe.gradient = *pen_grad;
          pe.learning_rate = lr;
          opt.hook(pe);
        }
        plain.step(params, *pen_grad, lr);
        ++step;
        ++rec.steps;
      }
    }
    record_epoch(rec, *learner, d, prep.loss, penalty_split, opt.record_reports);
    history.epochs.push_back(std::move(rec));
  }
  return {learner->model(), std::move(history), std::move(prep.data)};
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const Dataset& data, const TrainOptions& options) {
  switch (config.objective.kind) {
    case ob::ObjectiveKind::MinMax: return train_minmax(config, data, options);
    case ob::ObjectiveKind::Adversarial:
      throw ConfigError("objective = adversarial trains on top of a pretrained model; use train_adversarial");
    default: break;
  }
  if (config.objective.penalty_split == ob::PenaltySplit::Holdout) return train_holdout_penalty(config, data, options);
  return run(config, data, options, Scheme::PenaltyOnTrain);
}

TrainResult train_holdout_penalty(const ExperimentConfig& config, const Dataset& data, const TrainOptions& options) {
  if (!config.objective.has_penalty()) throw ConfigError("holdout training needs equal_loss, eq_odds or disp_impact");
  return run(config, data, options, Scheme::PenaltyOnHoldout);
}

TrainResult train_minmax(const ExperimentConfig& config, const Dataset& data, const TrainOptions& options) {
  const auto train_a = gather(data.a, data.indices(Split::Train));
  if (std::find(train_a.begin(), train_a.end(), 0) == train_a.end() ||
      std::find(train_a.begin(), train_a.end(), 1) == train_a.end()) {
    throw DegenerateGroupError("min-max training needs both groups in the training split");
  }
  return run(config, data, options, Scheme::MinMax);
}

// --- adversarial removal -----------------------------------------------------

namespace {

double mean_adversarial_term(const Matrix& disc_logits, std::span<const int> a, int penalized, int target) {
  const Matrix p = rowwise_softmax(disc_logits);
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != penalized) continue;
    s += std::log(1.0 + std::abs(ob::kAdversarialTarget - p(i, static_cast<std::size_t>(target))));
    ++n;
  }
  return n ? s / static_cast<double>(n) : kMissing;
}

}  // namespace

AdversarialResult train_adversarial(const ExperimentConfig& c, const Dataset& input,
                                    const models::EmbeddingModel& pretrained, const TrainOptions& opt) {
  c.validate();
  input.validate();
  if (c.model != ModelKind::Embedding) throw ConfigError("adversarial removal needs model = embedding");
  if (input.task != data::TaskKind::Identity) throw DataError("adversarial removal needs identity labels");
  if (!input.has_split(Split::Train)) throw DataError("dataset has no training split");
  Dataset d = input;
  if (c.flip.mode == FlipMode::IdentitySwap && c.flip.schedule == FlipSchedule::Once)
    d = flip_labels(d, c.flip.group, c.flip.fraction, c.flip.mode, c.seed);
  const auto loss = c.loss_spec(d);

  const std::size_t fdim = pretrained.feature_dim();
  const std::size_t hidden = c.adversarial.projection_hidden ? c.adversarial.projection_hidden : 2 * fdim;
  models::DebiasedEmbedding out{pretrained, models::SensitiveRemovalPair::init(fdim, hidden,
                                                                               c.adversarial.discriminator_hidden,
                                                                               c.adversarial.identity_init, c.seed)};
  auto& proj = out.removal.projection;
  auto& disc = out.removal.discriminator;
  const Matrix h_all = pretrained.backbone.forward(d.x);  // frozen backbone

  std::vector<Matrix*> proj_params, disc_params;
  for (auto& p : proj.params()) proj_params.push_back(&p);
  for (auto& p : disc.params()) disc_params.push_back(&p);

  const int penalized = c.adversarial.penalized_group;
  const int target = 1 - penalized;
  const double alpha = c.objective.alpha;
  const auto heldout_split = d.has_split(Split::Test) ? Split::Test : Split::Val;
  const bool has_heldout = d.has_split(heldout_split);

  StratifiedBatcher batcher(d.indices(Split::Train), d.a, c.batch_size, make_stream(c.seed, Stream::kBatching));
  Sgd proj_opt(c.optimizer.momentum, c.optimizer.weight_decay);
  Sgd disc_opt(c.optimizer.momentum, c.optimizer.weight_decay);

  TrainHistory history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const double lr = c.optimizer.rate_at(epoch);
    double disc_lr = c.adversarial.discriminator_lr;
    for (auto e : c.optimizer.decay_epochs)
      if (epoch >= e) disc_lr *= c.optimizer.decay_factor;
    rec.learning_rate = lr;

    for (const auto& rows : batcher.next_epoch()) {
      const Matrix h = h_all.gather_rows(rows);
      const auto a = gather(d.a, rows);
      const auto cols = out.base.head_columns(gather(d.y, rows));
      const auto n = static_cast<double>(rows.size());

      // Projection step: focal margin loss plus the fixed-class term on the penalised group.
      models::Mlp::Cache pc;
      const Matrix z = proj.forward(h, pc);
      const auto mlog = ob::cosface_logits(z, out.base.head, cols, a, c.margins);
      const auto fr = ob::focal_per_sample(mlog.logits, cols, c.focal_gamma);
      const Matrix d_logits = scaled(fr.grad, 1.0 / n);
      Matrix dz = ob::cosface_backward(mlog, d_logits, c.margins.scale).d_features;
      if (alpha != 0.0) {
        std::vector<std::size_t> pen;
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (a[i] == penalized) pen.push_back(i);
        if (!pen.empty()) {
          models::Mlp::Cache dc;
          const Matrix dl = disc.forward(z.gather_rows(pen), dc);
          const Matrix prob = rowwise_softmax(dl);
          std::vector<double> ps(pen.size());
          for (std::size_t j = 0; j < pen.size(); ++j) ps[j] = prob(j, static_cast<std::size_t>(target));
          const auto dps = ob::adversarial_penalty_grad(ps, alpha);
          Matrix d_dl(pen.size(), 2);
          for (std::size_t j = 0; j < pen.size(); ++j)
            for (std::size_t k = 0; k < 2; ++k) {
              const double delta = k == static_cast<std::size_t>(target) ? 1.0 : 0.0;
              d_dl(j, k) = dps[j] * ps[j] * (delta - prob(j, k));
            }
          Matrix dz_pen;
          disc.backward(dc, d_dl, &dz_pen);
          for (std::size_t j = 0; j < pen.size(); ++j)
            for (std::size_t k = 0; k < dz.cols(); ++k) dz(pen[j], k) += dz_pen(j, k);
          ++rec.penalty_steps;
        } else {
          ++rec.skipped_penalty_batches;
        }
      }
      const Gradient pg = proj.backward(pc, dz);
      if (opt.hook) {
        StepEvent ev;
        ev.epoch = epoch;
        ev.step = step;
        ev.kind = StepKind::Projection;
        ev.rows = rows;
        ev.params_before = copy_params(proj_params);
        ev.gradient = pg;
        ev.learning_rate = lr;
        opt.hook(ev);
      }
      proj_opt.step(proj_params, pg, lr);
      ++step;

      // Discriminator step on the updated projection.
      models::Mlp::Cache dc;
      const Matrix z2 = proj.forward(h);
      const Matrix dl = disc.forward(z2, dc);
      const auto ce = ob::cross_entropy_per_sample(dl, a);
      const Gradient dg = disc.backward(dc, scaled(ce.grad, 1.0 / n));
      if (opt.hook) {
        StepEvent ev;
        ev.epoch = epoch;
        ev.step = step;
        ev.kind = StepKind::Discriminator;
        ev.rows = rows;
        ev.params_before = copy_params(disc_params);
        ev.gradient = dg;
        ev.learning_rate = disc_lr;
        opt.hook(ev);
      }
      disc_opt.step(disc_params, dg, disc_lr);
      ++step;
      rec.steps += 2;
    }

    const auto train_rows = d.indices(Split::Train);
    const Matrix z_train = proj.forward(h_all.gather_rows(train_rows));
    const auto a_train = gather(d.a, train_rows);
    const auto cols_train = out.base.head_columns(gather(d.y, train_rows));
    const auto fr = ob::focal_per_sample(ob::cosface_logits(z_train, out.base.head, cols_train, a_train, c.margins).logits,
                                         cols_train, c.focal_gamma);
    const auto gl = ob::group_losses(fr.values, a_train);
    rec.train_loss = fr.mean();
    rec.train_loss_a0 = gl.neg;
    rec.train_loss_a1 = gl.pos;
    rec.loss_gap = std::abs(gl.pos - gl.neg);
    rec.adversarial_term = mean_adversarial_term(disc.forward(z_train), a_train, penalized, target);
    rec.discriminator_accuracy_train = eval::discriminator_accuracy(out.removal, z_train, a_train);
    if (has_heldout) {
      const auto rows = d.indices(heldout_split);
      rec.discriminator_accuracy_heldout =
          eval::discriminator_accuracy(out.removal, proj.forward(h_all.gather_rows(rows)), gather(d.a, rows));
    }
    if (opt.record_reports) rec.reports = snapshot(out, d, loss);
    history.epochs.push_back(std::move(rec));
  }
  return {std::move(out), std::move(history)};
}

// --- history export ----------------------------------------------------------

void TrainHistory::write_csv(std::ostream& out) const {
  std::vector<std::string> report_cols;
  std::set<std::string> seen;
  for (const auto& e : epochs)
    for (const auto& r : e.reports)
      for (const auto& row : r.rows)
        for (const char* sfx : {"_a0", "_a1"}) {
          const std::string col = r.split + "_" + row.name + sfx;
          if (seen.insert(col).second) report_cols.push_back(col);
        }

  out << "epoch,learning_rate,steps,penalty_steps,skipped_penalty_batches,train_loss,train_loss_a0,train_loss_a1,"
         "loss_gap,eq_odds,disp_impact,adversarial_term,disc_acc_train,disc_acc_heldout";
  for (const auto& col : report_cols) out << ',' << col;
  out << '\n';
  const auto num = [](double v) { return std::isnan(v) ? std::string() : text::format_double(v); };
  for (const auto& e : epochs) {
    out << e.epoch << ',' << num(e.learning_rate) << ',' << e.steps << ',' << e.penalty_steps << ','
        << e.skipped_penalty_batches << ',' << num(e.train_loss) << ',' << num(e.train_loss_a0) << ','
        << num(e.train_loss_a1) << ',' << num(e.loss_gap) << ',' << num(e.eq_odds) << ',' << num(e.disp_impact) << ','
        << num(e.adversarial_term) << ',' << num(e.discriminator_accuracy_train) << ','
        << num(e.discriminator_accuracy_heldout);
    std::map<std::string, double> vals;
    for (const auto& r : e.reports)
      for (const auto& row : r.rows) {
        vals[r.split + "_" + row.name + "_a0"] = row.group0;
        vals[r.split + "_" + row.name + "_a1"] = row.group1;
      }
    for (const auto& col : report_cols) {
      out << ',';
      if (auto it = vals.find(col); it != vals.end()) out << num(it->second);
    }
    out << '\n';
  }
}

}  // namespace fairlab::train

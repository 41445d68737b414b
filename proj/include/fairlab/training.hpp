#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairlab/dataio.hpp"
#include "fairlab/evaluation.hpp"
#include "fairlab/metrics.hpp"
#include "fairlab/models.hpp"
#include "fairlab/objectives.hpp"
#include "fairlab/rng.hpp"

namespace fairlab::train {

enum class ModelKind { Mlp, Embedding };
enum class FlipMode { None, BinaryFlip, IdentitySwap };
enum class FlipSchedule { Once, PerIteration };
enum class HoldoutSchedule { Alternate, Joint };

std::string_view to_string(ModelKind k);
std::string_view to_string(FlipMode m);
std::string_view to_string(FlipSchedule s);
std::string_view to_string(HoldoutSchedule s);

struct OptimizerSpec {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<std::size_t> decay_epochs;  // learning rate is multiplied by decay_factor from each listed epoch on
  double decay_factor = 0.1;

  double rate_at(std::size_t epoch) const;
  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

struct FlipSpec {
  FlipMode mode = FlipMode::None;
  int group = 0;
  double fraction = 0.0;
  FlipSchedule schedule = FlipSchedule::Once;
  friend bool operator==(const FlipSpec&, const FlipSpec&) = default;
};

struct AdversarialSpec {
  int penalized_group = 0;  // its images are pushed toward the other group's class
  std::size_t projection_hidden = 0;  // 0 selects 2 * feature_dim
  std::size_t discriminator_hidden = 32;
  bool identity_init = true;
  double discriminator_lr = 0.05;
  friend bool operator==(const AdversarialSpec&, const AdversarialSpec&) = default;
};

struct ExperimentConfig {
  static constexpr int kVersion = 1;

  ModelKind model = ModelKind::Mlp;
  std::vector<std::size_t> hidden{64};
  std::size_t feature_dim = 16;  // embedding models only
  eval::BaseLoss base_loss = eval::BaseLoss::Bce;
  double focal_gamma = 2.0;
  objectives::ObjectiveSpec objective;
  double holdout_fraction = 0.1;
  HoldoutSchedule holdout_schedule = HoldoutSchedule::Alternate;
  OptimizerSpec optimizer;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  FlipSpec flip;
  objectives::MarginSpec margins;
  AdversarialSpec adversarial;

  // Throws ConfigError naming the offending key.
  void validate() const;
  // Loss used for training and reporting; weighted BCE balances on the train split.
  eval::LossSpec loss_spec(const data::Dataset& data) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Flat "key = value" text; '#' starts a comment. Unknown keys, duplicate keys
// and a missing or unsupported version are errors.
std::string serialize(const ExperimentConfig& config);
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);
std::uint64_t config_hash(const ExperimentConfig& config);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  std::size_t steps = 0;
  std::size_t penalty_steps = 0;
  std::size_t skipped_penalty_batches = 0;
  double train_loss = kMissing;
  double train_loss_a0 = kMissing;
  double train_loss_a1 = kMissing;
  // Measured on the penalty split over the whole split, whatever the objective.
  double loss_gap = kMissing;
  double eq_odds = kMissing;
  double disp_impact = kMissing;
  double adversarial_term = kMissing;
  double discriminator_accuracy_train = kMissing;
  double discriminator_accuracy_heldout = kMissing;
  std::vector<metrics::GroupReport> reports;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // One row per epoch; report snapshots become <split>_<metric>_a0/_a1 columns.
  void write_csv(std::ostream& out) const;
};

enum class StepKind { Base, Penalty, Projection, Discriminator };

// Snapshot handed to an instrumentation hook just before parameters change.
struct StepEvent {
  std::size_t epoch = 0;
  std::size_t step = 0;
  StepKind kind = StepKind::Base;
  std::vector<std::size_t> rows;
  ParamList params_before;
  Gradient gradient;  // raw loss gradient, before weight decay and momentum
  double learning_rate = 0.0;
  int selected_group = -1;  // min-max only
  objectives::GroupLosses group_losses{0.0, 0.0};
};

using StepHook = std::function<void(const StepEvent&)>;

struct TrainOptions {
  StepHook hook;
  bool record_reports = true;
};

struct TrainResult {
  models::AnyModel model;
  TrainHistory history;
  data::Dataset data;  // the dataset as trained on (flips and holdout applied)
};

// Dispatches on the objective: penalty-on-train, penalty-on-holdout, or min-max.
TrainResult train(const ExperimentConfig& config, const data::Dataset& data, const TrainOptions& options = {});
TrainResult train_holdout_penalty(const ExperimentConfig& config, const data::Dataset& data,
                                  const TrainOptions& options = {});
TrainResult train_minmax(const ExperimentConfig& config, const data::Dataset& data, const TrainOptions& options = {});

struct AdversarialResult {
  models::DebiasedEmbedding model;
  TrainHistory history;
};

// Trains a removal projection over the frozen backbone of `pretrained`.
AdversarialResult train_adversarial(const ExperimentConfig& config, const data::Dataset& data,
                                    const models::EmbeddingModel& pretrained, const TrainOptions& options = {});

// Alters exactly floor(p * n) of the group's training samples, n being the
// group's train-split size. Other samples are untouched.
data::Dataset flip_labels(const data::Dataset& data, int group, double p, FlipMode mode, std::uint64_t seed);

// floor(p * n) with a small guard against representation error in p.
std::size_t flip_count(double p, std::size_t n);

// Batches over the given rows with every group represented in every batch
// whenever it has at least as many samples as there are batches.
class StratifiedBatcher {
 public:
  StratifiedBatcher(std::vector<std::size_t> rows, std::span<const int> a, std::size_t batch_size, Rng rng);

  std::size_t batches_per_epoch() const { return batches_; }
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::array<std::vector<std::size_t>, 2> groups_;
  std::size_t batches_ = 1;
  Rng rng_;
};

// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
class Sgd {
 public:
  explicit Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<Matrix* const> params, const Gradient& grad, double learning_rate);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix> velocity_;
};

}  // namespace fairlab::train

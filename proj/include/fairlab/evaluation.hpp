#pragma once

// Per-split group reports for trained models, and their text/CSV emitters.

#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fairlab/dataio.hpp"
#include "fairlab/metrics.hpp"
#include "fairlab/models.hpp"
#include "fairlab/objectives.hpp"

namespace fairlab::eval {

enum class BaseLoss { Bce, WeightedBce, Focal };

std::string_view to_string(BaseLoss b);
BaseLoss parse_base_loss(std::string_view s);

struct LossSpec {
  BaseLoss base = BaseLoss::Bce;
  double pos_weight = 1.0;   // used by WeightedBce
  double focal_gamma = 2.0;  // used by Focal
  objectives::MarginSpec margins;
};

// Per-sample base loss of a multi-task binary classifier with gradient
// w.r.t. the logits (N x K). Values average the K tasks.
objectives::PerSample binary_loss_per_sample(const Matrix& logits, std::span<const int> y, const LossSpec& loss);

// Per-sample margin-head cross-entropy. `columns` are head columns, not identity ids.
struct MarginLoss {
  objectives::MarginLogits cache;
  objectives::PerSample per_sample;  // gradient w.r.t. the margin logits
};
MarginLoss margin_loss_per_sample(const Matrix& features, const Matrix& head, std::span<const int> columns,
                                  std::span<const int> a, const objectives::MarginSpec& margins);

// Report rows for one split. Throws DegenerateGroupError when a group has no samples there.
metrics::GroupReport evaluate_split(const models::AnyModel& model, const data::Dataset& data, data::Split split,
                                    const LossSpec& loss);
// Every split present in the dataset, in Train, Holdout, Val, Test order.
std::vector<metrics::GroupReport> evaluate_all(const models::AnyModel& model, const data::Dataset& data,
                                               const LossSpec& loss);

// Positive-class probability of task 0 for every sample of a split.
std::vector<double> binary_scores(const models::Mlp& model, const data::Dataset& data, data::Split split);

// Discriminator accuracy at predicting a from projected features.
double discriminator_accuracy(const models::SensitiveRemovalPair& removal, const Matrix& features,
                              std::span<const int> a);

void write_report_table(std::span<const metrics::GroupReport> reports, std::ostream& out);
void write_report_csv(const metrics::GroupReport& report, std::ostream& out);

void write_audit_table(const metrics::GerrymanderReport& report, std::ostream& out);
void write_audit_csv(const metrics::GerrymanderReport& report, std::ostream& out);
// One row per (model, g bucket): accuracy and AUC for external plotting.
void write_bucket_csv(const metrics::GerrymanderReport& report, std::ostream& out);

}  // namespace fairlab::eval

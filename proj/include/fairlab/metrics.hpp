#pragma once

// Evaluation quantities over frozen predictions. Everything here is a pure
// function of its inputs.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlab/matrix.hpp"

namespace fairlab::metrics {

// Rank-based (Mann-Whitney) AUC; tied positive/negative pairs count 1/2.
// Throws DegenerateGroupError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Index of the Euclidean-nearest gallery row for each probe; ties go to the lowest index.
std::vector<std::size_t> nearest_gallery(const Matrix& gallery, const Matrix& probes);

struct Rank1 {
  double overall = 0.0;
  std::array<double, 2> per_group{0.0, 0.0};  // indexed by the probe's a
  std::array<std::size_t, 2> probes{0, 0};
};

Rank1 rank1_accuracy(const Matrix& gallery, std::span<const int> gallery_ids, const Matrix& probes,
                     std::span<const int> probe_ids, std::span<const int> probe_a);

// Mean intra-class angle (identity mean vs. its own images) and mean
// inter-class angle (identity mean vs. the nearest other identity mean), in
// degrees, averaged over the identities of each group.
struct AngleStats {
  std::array<double, 2> intra{0.0, 0.0};
  std::array<double, 2> inter{0.0, 0.0};
  std::array<std::size_t, 2> identities{0, 0};
};

AngleStats intra_inter_angles(const Matrix& features, std::span<const int> ids, std::span<const int> a);

// One metric for both groups; gap is group0 - group1.
struct MetricRow {
  std::string name;
  double group0 = 0.0;
  double group1 = 0.0;
  double gap = 0.0;
  double abs_gap = 0.0;
  double overall = 0.0;
};

MetricRow make_row(std::string name, double group0, double group1, double overall);

struct GroupReport {
  std::string split;
  std::vector<MetricRow> rows;

  const MetricRow& row(std::string_view name) const;
  bool has_row(std::string_view name) const;
};

enum class Tail { Greater, Less, TwoSided };

struct ProportionTest {
  double z = 0.0;
  double p_value = 1.0;
  // Pooled proportion of 0 or 1: z is reported as 0 and p as 1.
  bool degenerate = false;
};

double normal_cdf(double z);

// Pooled two-proportion z test of x1/n1 against x2/n2. Greater tests p1 > p2.
ProportionTest two_proportion_test(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2, Tail tail);

struct CellMetric {
  int a = 0;
  int g = 0;
  std::size_t count = 0;
  double baseline_accuracy = 0.0;
  double fair_accuracy = 0.0;
  std::optional<double> baseline_auc;
  std::optional<double> fair_auc;
};

struct FlipCounts {
  std::size_t population = 0;
  std::size_t correct_to_incorrect = 0;
  std::size_t incorrect_to_correct = 0;
};

struct GerrymanderReport {
  std::array<CellMetric, 4> cells;  // (a, g) = (0,0), (0,1), (1,0), (1,1)
  std::array<double, 2> baseline_accuracy_a{}, fair_accuracy_a{};
  std::array<double, 2> baseline_accuracy_g{}, fair_accuracy_g{};
  std::array<std::optional<double>, 2> baseline_auc_g, fair_auc_g;
  double baseline_gap_a = 0.0;  // |acc(a=0) - acc(a=1)|
  double fair_gap_a = 0.0;
  double baseline_disparity_g = 0.0;  // |acc(g=0) - acc(g=1)|
  double fair_disparity_g = 0.0;
  std::array<FlipCounts, 2> flips;  // indexed by g
  // Share of g = 1 among correct->incorrect flips versus among incorrect->correct flips.
  ProportionTest flip_test;
  bool flip_test_available = false;
};

// Predictions are probabilities thresholded at 0.5 against binary labels.
// An empty g span throws DataError ("audit unavailable").
GerrymanderReport gerrymander_audit(std::span<const double> baseline_scores, std::span<const double> fair_scores,
                                    std::span<const int> labels, std::span<const int> a, std::span<const int> g);

inline constexpr double kDecisionThreshold = 0.5;

}  // namespace fairlab::metrics

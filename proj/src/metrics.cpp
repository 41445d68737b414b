#include "fairlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "fairlab/kernels.hpp"

namespace fairlab::metrics {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  // Walk tie blocks in ascending score; each positive earns one for every
  // negative strictly below and one half for every negative in its block.
  std::uint64_t twice_wins = 0, pos = 0, neg_below = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    std::uint64_t block_pos = 0, block_neg = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      const int y = labels[order[end]];
      if (y == 1)
        ++block_pos;
      else if (y == 0)
        ++block_neg;
      else
        throw DomainError("auc: labels must be binary");
      ++end;
    }
    twice_wins += block_pos * (2 * neg_below + block_neg);
    pos += block_pos;
    neg_below += block_neg;
    start = end;
  }
  if (pos == 0 || neg_below == 0) throw DegenerateGroupError("auc: needs at least one positive and one negative");
  return (0.5 * static_cast<double>(twice_wins)) / (static_cast<double>(pos) * static_cast<double>(neg_below));
}

std::vector<std::size_t> nearest_gallery(const Matrix& gallery, const Matrix& probes) {
  if (gallery.rows() == 0) throw DomainError("rank-1: empty gallery");
  if (gallery.cols() != probes.cols()) throw ShapeError("rank-1: gallery and probe dims differ");
  const std::size_t p = probes.rows(), g = gallery.rows();
  std::vector<double> dist(p * g);
  if (kernels::openmp_enabled() && p * g * gallery.cols() >= kernels::kParallelThreshold)
    kernels::parallel::sq_distances(probes.data(), gallery.data(), dist, p, g, gallery.cols());
  else
    kernels::serial::sq_distances(probes.data(), gallery.data(), dist, p, g, gallery.cols());
  std::vector<std::size_t> best(p, 0);
  for (std::size_t i = 0; i < p; ++i) {
    const double* row = dist.data() + i * g;
    for (std::size_t j = 1; j < g; ++j)
      if (row[j] < row[best[i]]) best[i] = j;
  }
  return best;
}

Rank1 rank1_accuracy(const Matrix& gallery, std::span<const int> gallery_ids, const Matrix& probes,
                     std::span<const int> probe_ids, std::span<const int> probe_a) {
  if (gallery_ids.size() != gallery.rows()) throw ShapeError("rank-1: gallery id count mismatch");
  if (probe_ids.size() != probes.rows() || probe_a.size() != probes.rows()) {
    throw ShapeError("rank-1: probe id/attribute count mismatch");
  }
  const auto best = nearest_gallery(gallery, probes);
  Rank1 r;
  std::array<std::size_t, 2> hits{0, 0};
  for (std::size_t i = 0; i < best.size(); ++i) {
    const auto grp = static_cast<std::size_t>(probe_a[i]);
    if (grp > 1) throw DomainError("rank-1: sensitive attribute must be 0 or 1");
    ++r.probes[grp];
    if (gallery_ids[best[i]] == probe_ids[i]) ++hits[grp];
  }
  const std::size_t total = r.probes[0] + r.probes[1];
  for (std::size_t k = 0; k < 2; ++k)
    r.per_group[k] = r.probes[k] ? static_cast<double>(hits[k]) / static_cast<double>(r.probes[k]) : 0.0;
  r.overall = total ? static_cast<double>(hits[0] + hits[1]) / static_cast<double>(total) : 0.0;
  return r;
}

AngleStats intra_inter_angles(const Matrix& features, std::span<const int> ids, std::span<const int> a) {
  if (ids.size() != features.rows() || a.size() != features.rows()) throw ShapeError("angles: label count mismatch");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ids.size(); ++i) members[ids[i]].push_back(i);
  if (members.size() < 2) throw DomainError("angles: inter-class angle needs at least two identities");

  const std::size_t d = features.cols();
  std::vector<int> id_list, id_group;
  Matrix means(members.size(), d);
  std::size_t k = 0;
  for (const auto& [id, rows] : members) {
    auto m = means.row(k);
    for (auto r : rows)
      for (std::size_t c = 0; c < d; ++c) m[c] += features(r, c);
    for (auto& v : m) v /= static_cast<double>(rows.size());
    id_list.push_back(id);
    id_group.push_back(a[rows.front()]);
    ++k;
  }

  AngleStats s;
  k = 0;
  for (const auto& [id, rows] : members) {
    const auto grp = static_cast<std::size_t>(id_group[k]);
    if (grp > 1) throw DomainError("angles: sensitive attribute must be 0 or 1");
    double intra = 0.0;
    for (auto r : rows) intra += cosine_angle_deg(means.row(k), features.row(r));
    intra /= static_cast<double>(rows.size());
    double inter = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < means.rows(); ++o)
      if (o != k) inter = std::min(inter, cosine_angle_deg(means.row(k), means.row(o)));
    s.intra[grp] += intra;
    s.inter[grp] += inter;
    ++s.identities[grp];
    ++k;
  }
  for (std::size_t grp = 0; grp < 2; ++grp) {
    if (s.identities[grp]) {
      s.intra[grp] /= static_cast<double>(s.identities[grp]);
      s.inter[grp] /= static_cast<double>(s.identities[grp]);
    }
  }
  return s;
}

MetricRow make_row(std::string name, double group0, double group1, double overall) {
  MetricRow r{std::move(name), group0, group1, 0.0, 0.0, overall};
  r.gap = group0 - group1;
  r.abs_gap = std::abs(r.gap);
  return r;
}

const MetricRow& GroupReport::row(std::string_view name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw DataError("report for split '" + split + "' has no metric '" + std::string(name) + "'");
}

bool GroupReport::has_row(std::string_view name) const {
  return std::any_of(rows.begin(), rows.end(), [&](const MetricRow& r) { return r.name == name; });
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

ProportionTest two_proportion_test(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2, Tail tail) {
  if (n1 == 0 || n2 == 0) throw DomainError("two-proportion test: sample sizes must be positive");
  if (x1 > n1 || x2 > n2) throw DomainError("two-proportion test: successes exceed sample size");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  ProportionTest t;
  if (pooled <= 0.0 || pooled >= 1.0) {
    t.degenerate = true;
    return t;
  }
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  t.z = (p1 - p2) / se;
  switch (tail) {
    case Tail::Greater: t.p_value = 0.5 * std::erfc(t.z / std::sqrt(2.0)); break;
    case Tail::Less: t.p_value = normal_cdf(t.z); break;
    case Tail::TwoSided: t.p_value = std::erfc(std::abs(t.z) / std::sqrt(2.0)); break;
  }
  return t;
}

namespace {

bool correct(double score, int label) { return (score >= kDecisionThreshold ? 1 : 0) == label; }

std::optional<double> maybe_auc(std::span<const double> scores, std::span<const int> labels) {
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg) return std::nullopt;
  return auc(scores, labels);
}

struct Subset {
  std::vector<double> base, fair;
  std::vector<int> labels;
  std::size_t base_correct = 0, fair_correct = 0;

  void add(double b, double f, int y) {
    base.push_back(b);
    fair.push_back(f);
    labels.push_back(y);
    base_correct += correct(b, y);
    fair_correct += correct(f, y);
  }
  double base_acc() const { return labels.empty() ? 0.0 : static_cast<double>(base_correct) / static_cast<double>(labels.size()); }
  double fair_acc() const { return labels.empty() ? 0.0 : static_cast<double>(fair_correct) / static_cast<double>(labels.size()); }
};

}  // namespace

GerrymanderReport gerrymander_audit(std::span<const double> baseline_scores, std::span<const double> fair_scores,
                                    std::span<const int> labels, std::span<const int> a, std::span<const int> g) {
  if (g.empty()) throw DataError("audit unavailable: the dataset has no secondary attribute g");
  const std::size_t n = labels.size();
  if (baseline_scores.size() != n || fair_scores.size() != n || a.size() != n || g.size() != n) {
    throw ShapeError("audit: prediction sets are not aligned to the same samples");
  }
  std::array<Subset, 4> cells;
  std::array<Subset, 2> by_a, by_g;
  GerrymanderReport r;
  for (std::size_t i = 0; i < n; ++i) {
    if ((a[i] != 0 && a[i] != 1) || (g[i] != 0 && g[i] != 1)) throw DomainError("audit: attributes must be binary");
    const auto ai = static_cast<std::size_t>(a[i]);
    const auto gi = static_cast<std::size_t>(g[i]);
    cells[ai * 2 + gi].add(baseline_scores[i], fair_scores[i], labels[i]);
    by_a[ai].add(baseline_scores[i], fair_scores[i], labels[i]);
    by_g[gi].add(baseline_scores[i], fair_scores[i], labels[i]);
    const bool before = correct(baseline_scores[i], labels[i]);
    const bool after = correct(fair_scores[i], labels[i]);
    auto& f = r.flips[gi];
    ++f.population;
    if (before && !after) ++f.correct_to_incorrect;
    if (!before && after) ++f.incorrect_to_correct;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    auto& c = r.cells[k];
    c.a = static_cast<int>(k / 2);
    c.g = static_cast<int>(k % 2);
    c.count = cells[k].labels.size();
    c.baseline_accuracy = cells[k].base_acc();
    c.fair_accuracy = cells[k].fair_acc();
    c.baseline_auc = maybe_auc(cells[k].base, cells[k].labels);
    c.fair_auc = maybe_auc(cells[k].fair, cells[k].labels);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    r.baseline_accuracy_a[k] = by_a[k].base_acc();
    r.fair_accuracy_a[k] = by_a[k].fair_acc();
    r.baseline_accuracy_g[k] = by_g[k].base_acc();
    r.fair_accuracy_g[k] = by_g[k].fair_acc();
    r.baseline_auc_g[k] = maybe_auc(by_g[k].base, by_g[k].labels);
    r.fair_auc_g[k] = maybe_auc(by_g[k].fair, by_g[k].labels);
  }
  r.baseline_gap_a = std::abs(r.baseline_accuracy_a[0] - r.baseline_accuracy_a[1]);
  r.fair_gap_a = std::abs(r.fair_accuracy_a[0] - r.fair_accuracy_a[1]);
  r.baseline_disparity_g = std::abs(r.baseline_accuracy_g[0] - r.baseline_accuracy_g[1]);
  r.fair_disparity_g = std::abs(r.fair_accuracy_g[0] - r.fair_accuracy_g[1]);

  const std::size_t to_wrong = r.flips[0].correct_to_incorrect + r.flips[1].correct_to_incorrect;
  const std::size_t to_right = r.flips[0].incorrect_to_correct + r.flips[1].incorrect_to_correct;
  if (to_wrong > 0 && to_right > 0) {
    r.flip_test = two_proportion_test(r.flips[1].correct_to_incorrect, to_wrong, r.flips[1].incorrect_to_correct,
                                      to_right, Tail::Greater);
    r.flip_test_available = true;
  }
  return r;
}

}  // namespace fairlab::metrics

#include "fairlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "fairlab/text.hpp"

namespace fairlab::eval {

namespace ob = objectives;
using data::Dataset;
using data::Split;
using metrics::GroupReport;
using metrics::make_row;

std::string_view to_string(BaseLoss b) {
  switch (b) {
    case BaseLoss::Bce: return "bce";
    case BaseLoss::WeightedBce: return "weighted_bce";
    case BaseLoss::Focal: return "focal";
  }
  return "?";
}

BaseLoss parse_base_loss(std::string_view s) {
  if (s == "bce") return BaseLoss::Bce;
  if (s == "weighted_bce") return BaseLoss::WeightedBce;
  if (s == "focal") return BaseLoss::Focal;
  throw ConfigError("unknown base loss '" + std::string(s) + "' (expected bce, weighted_bce or focal)");
}

ob::PerSample binary_loss_per_sample(const Matrix& logits, std::span<const int> y, const LossSpec& loss) {
  if (y.size() != logits.size()) throw ShapeError("binary loss: label count does not match logits");
  switch (loss.base) {
    case BaseLoss::Bce: return ob::weighted_bce_logits_per_sample(logits, y, 1.0);
    case BaseLoss::WeightedBce: return ob::weighted_bce_logits_per_sample(logits, y, loss.pos_weight);
    case BaseLoss::Focal: break;
  }
  // Each task as a two-class softmax over [0, z], whose class-1 probability is sigmoid(z).
  const std::size_t n = logits.rows(), k = logits.cols();
  ob::PerSample out{std::vector<double>(n, 0.0), Matrix(n, k)};
  Matrix pair(n, 2);
  std::vector<int> yt(n);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      pair(i, 1) = logits(i, t);
      yt[i] = y[i * k + t];
    }
    const auto ps = ob::focal_per_sample(pair, yt, loss.focal_gamma);
    for (std::size_t i = 0; i < n; ++i) {
      out.values[i] += ps.values[i] / static_cast<double>(k);
      out.grad(i, t) = ps.grad(i, 1) / static_cast<double>(k);
    }
  }
  return out;
}

MarginLoss margin_loss_per_sample(const Matrix& features, const Matrix& head, std::span<const int> columns,
                                  std::span<const int> a, const ob::MarginSpec& margins) {
  MarginLoss m{ob::cosface_logits(features, head, columns, a, margins), {}};
  m.per_sample = ob::cross_entropy_per_sample(m.cache.logits, columns);
  return m;
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

struct GroupMean {
  std::array<double, 2> sum{0.0, 0.0};
  std::array<std::size_t, 2> n{0, 0};
  void add(int grp, double v) {
    sum[static_cast<std::size_t>(grp)] += v;
    ++n[static_cast<std::size_t>(grp)];
  }
  double mean(std::size_t grp) const { return n[grp] ? sum[grp] / static_cast<double>(n[grp]) : 0.0; }
  double overall() const {
    const auto total = n[0] + n[1];
    return total ? (sum[0] + sum[1]) / static_cast<double>(total) : 0.0;
  }
  metrics::MetricRow row(std::string name) const { return make_row(std::move(name), mean(0), mean(1), overall()); }
};

void require_both_groups(const std::vector<int>& a, Split split) {
  const bool has0 = std::find(a.begin(), a.end(), 0) != a.end();
  const bool has1 = std::find(a.begin(), a.end(), 1) != a.end();
  if (!has0 || !has1) {
    throw DegenerateGroupError("split '" + std::string(data::to_string(split)) + "' lacks samples of one group");
  }
}

std::optional<double> auc_if_defined(std::span<const double> s, std::span<const int> y) {
  const bool pos = std::find(y.begin(), y.end(), 1) != y.end();
  const bool neg = std::find(y.begin(), y.end(), 0) != y.end();
  if (!pos || !neg) return std::nullopt;
  return metrics::auc(s, y);
}

GroupReport binary_report(const models::Mlp& model, const Dataset& d, Split split, const LossSpec& loss) {
  if (d.task != data::TaskKind::Binary) throw DataError("classifier checkpoint needs a dataset with binary labels");
  if (model.input_dim() != d.dim() || model.output_dim() != d.num_tasks) {
    throw ShapeError("classifier expects " + std::to_string(model.input_dim()) + " features and " +
                     std::to_string(model.output_dim()) + " tasks; dataset has " + std::to_string(d.dim()) +
                     " and " + std::to_string(d.num_tasks));
  }
  const auto rows = d.indices(split);
  const auto a = gather(d.a, rows);
  require_both_groups(a, split);
  const auto y = gather_labels(d, rows);
  const Matrix logits = model.forward(d.x.gather_rows(rows));
  const auto ps = binary_loss_per_sample(logits, y, loss);

  const std::size_t k = d.num_tasks;
  GroupMean loss_m, acc_m;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    loss_m.add(a[i], ps.values[i]);
    double hits = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const int pred = sigmoid(logits(i, t)) >= metrics::kDecisionThreshold ? 1 : 0;
      hits += pred == y[i * k + t] ? 1.0 : 0.0;
    }
    acc_m.add(a[i], hits / static_cast<double>(k));
  }
  GroupReport rep{std::string(data::to_string(split)), {}};
  rep.rows.push_back(loss_m.row("loss"));
  rep.rows.push_back(acc_m.row("accuracy"));

  std::array<double, 3> auc_sum{0, 0, 0};
  std::size_t auc_tasks = 0;
  std::vector<metrics::MetricRow> task_rows;
  for (std::size_t t = 0; t < k; ++t) {
    std::array<std::vector<double>, 3> s;
    std::array<std::vector<int>, 3> lab;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double p = sigmoid(logits(i, t));
      const int lbl = y[i * k + t];
      s[static_cast<std::size_t>(a[i])].push_back(p);
      lab[static_cast<std::size_t>(a[i])].push_back(lbl);
      s[2].push_back(p);
      lab[2].push_back(lbl);
    }
    const auto g0 = auc_if_defined(s[0], lab[0]);
    const auto g1 = auc_if_defined(s[1], lab[1]);
    const auto all = auc_if_defined(s[2], lab[2]);
    if (!g0 || !g1 || !all) continue;
    auc_sum[0] += *g0;
    auc_sum[1] += *g1;
    auc_sum[2] += *all;
    ++auc_tasks;
    if (k > 1) task_rows.push_back(make_row("auc_task" + std::to_string(t), *g0, *g1, *all));
  }
  if (auc_tasks > 0) {
    const auto n = static_cast<double>(auc_tasks);
    rep.rows.push_back(make_row("auc", auc_sum[0] / n, auc_sum[1] / n, auc_sum[2] / n));
  }
  rep.rows.insert(rep.rows.end(), task_rows.begin(), task_rows.end());
  return rep;
}

// Rank-1 within a split: the first image of each identity (in row order)
// forms the gallery, the remaining images are probes.
std::optional<metrics::Rank1> rank1_within(const Matrix& feats, const std::vector<int>& ids,
                                           const std::vector<int>& a) {
  std::set<int> seen;
  std::vector<std::size_t> gallery, probes;
  for (std::size_t i = 0; i < ids.size(); ++i) (seen.insert(ids[i]).second ? gallery : probes).push_back(i);
  if (probes.empty()) return std::nullopt;
  return metrics::rank1_accuracy(feats.gather_rows(gallery), gather(ids, gallery), feats.gather_rows(probes),
                                 gather(ids, probes), gather(a, probes));
}

struct IdentityView {
  const models::EmbeddingModel* base = nullptr;
  const models::SensitiveRemovalPair* removal = nullptr;

  Matrix raw(const Matrix& x) const {
    Matrix h = base->backbone.forward(x);
    return removal ? removal->projection.forward(h) : h;
  }
};

GroupReport identity_report(const IdentityView& view, const Dataset& d, Split split, const LossSpec& loss) {
  if (d.task != data::TaskKind::Identity) throw DataError("embedding checkpoint needs a dataset with identity labels");
  if (view.base->backbone.input_dim() != d.dim()) {
    throw ShapeError("embedding model expects " + std::to_string(view.base->backbone.input_dim()) +
                     " features; dataset has " + std::to_string(d.dim()));
  }
  const auto rows = d.indices(split);
  const auto a = gather(d.a, rows);
  require_both_groups(a, split);
  const auto ids = gather(d.y, rows);
  const Matrix raw = view.raw(d.x.gather_rows(rows));
  const Matrix unit = models::normalize_rows(raw);
  GroupReport rep{std::string(data::to_string(split)), {}};

  const auto& head_ids = view.base->head_ids;
  const bool in_head = std::all_of(ids.begin(), ids.end(), [&](int id) {
    return std::find(head_ids.begin(), head_ids.end(), id) != head_ids.end();
  });
  if (in_head) {
    const auto cols = view.base->head_columns(ids);
    const auto ml = margin_loss_per_sample(raw, view.base->head, cols, a, loss.margins);
    // Head accuracy ignores the margin: argmax over plain cosines.
    const auto& cos_src = ml.cache;
    const Matrix cosines = matmul(cos_src.unit_features, cos_src.unit_weights);
    GroupMean loss_m, acc_m;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      loss_m.add(a[i], ml.per_sample.values[i]);
      const auto r = cosines.row(i);
      const auto best = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
      acc_m.add(a[i], best == cols[i] ? 1.0 : 0.0);
    }
    rep.rows.push_back(loss_m.row("loss"));
    rep.rows.push_back(acc_m.row("head_accuracy"));
  }

  std::optional<metrics::Rank1> r1;
  if (split == Split::Val && d.has_split(Split::Train)) {
    const auto train_rows = d.indices(Split::Train);
    const Matrix gallery = models::normalize_rows(view.raw(d.x.gather_rows(train_rows)));
    r1 = metrics::rank1_accuracy(gallery, gather(d.y, train_rows), unit, ids, a);
  } else {
    r1 = rank1_within(unit, ids, a);
  }
  if (r1 && r1->probes[0] > 0 && r1->probes[1] > 0) {
    rep.rows.push_back(make_row("rank1", r1->per_group[0], r1->per_group[1], r1->overall));
  }

  if (std::set<int>(ids.begin(), ids.end()).size() >= 2) {
    const auto ang = metrics::intra_inter_angles(unit, ids, a);
    if (ang.identities[0] > 0 && ang.identities[1] > 0) {
      const auto n0 = static_cast<double>(ang.identities[0]), n1 = static_cast<double>(ang.identities[1]);
      rep.rows.push_back(make_row("intra_angle", ang.intra[0], ang.intra[1],
                                  (ang.intra[0] * n0 + ang.intra[1] * n1) / (n0 + n1)));
      rep.rows.push_back(make_row("inter_angle", ang.inter[0], ang.inter[1],
                                  (ang.inter[0] * n0 + ang.inter[1] * n1) / (n0 + n1)));
    }
  }

  if (view.removal) {
    const Matrix logits = view.removal->discriminator.forward(raw);
    GroupMean acc_m;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int pred = logits(i, 1) > logits(i, 0) ? 1 : 0;
      acc_m.add(a[i], pred == a[i] ? 1.0 : 0.0);
    }
    rep.rows.push_back(acc_m.row("sensitive_accuracy"));
  }
  return rep;
}

}  // namespace

GroupReport evaluate_split(const models::AnyModel& model, const Dataset& data, Split split, const LossSpec& loss) {
  if (!data.has_split(split)) throw DataError("dataset has no '" + std::string(data::to_string(split)) + "' split");
  if (const auto* mlp = std::get_if<models::Mlp>(&model)) return binary_report(*mlp, data, split, loss);
  if (const auto* emb = std::get_if<models::EmbeddingModel>(&model)) {
    return identity_report(IdentityView{emb, nullptr}, data, split, loss);
  }
  const auto& deb = std::get<models::DebiasedEmbedding>(model);
  return identity_report(IdentityView{&deb.base, &deb.removal}, data, split, loss);
}

std::vector<GroupReport> evaluate_all(const models::AnyModel& model, const Dataset& data, const LossSpec& loss) {
  std::vector<GroupReport> out;
  for (Split s : {Split::Train, Split::Holdout, Split::Val, Split::Test})
    if (data.has_split(s)) out.push_back(evaluate_split(model, data, s, loss));
  return out;
}

std::vector<double> binary_scores(const models::Mlp& model, const Dataset& data, Split split) {
  const auto rows = data.indices(split);
  const Matrix logits = model.forward(data.x.gather_rows(rows));
  std::vector<double> s(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) s[i] = sigmoid(logits(i, 0));
  return s;
}

double discriminator_accuracy(const models::SensitiveRemovalPair& removal, const Matrix& features,
                              std::span<const int> a) {
  if (a.size() != features.rows()) throw ShapeError("discriminator accuracy: attribute count mismatch");
  if (a.empty()) return 0.0;
  const Matrix logits = removal.discriminator.forward(features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += ((logits(i, 1) > logits(i, 0) ? 1 : 0) == a[i]);
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

// --- emitters ----------------------------------------------------------------

void write_report_table(std::span<const GroupReport> reports, std::ostream& out) {
  std::size_t width = 6;
  for (const auto& r : reports)
    for (const auto& row : r.rows) width = std::max(width, row.name.size());
  const auto w = static_cast<int>(width);
  out << std::left << std::setw(8) << "split" << std::setw(w + 2) << "metric" << std::right;
  for (const char* h : {"a=0", "a=1", "gap", "|gap|", "overall"}) out << std::setw(10) << h;
  out << '\n';
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      out << std::left << std::setw(8) << r.split << std::setw(w + 2) << row.name << std::right;
      for (double v : {row.group0, row.group1, row.gap, row.abs_gap, row.overall})
        out << std::setw(10) << text::format_fixed(v, 4);
      out << '\n';
    }
  }
}

void write_report_csv(const GroupReport& report, std::ostream& out) {
  out << "split,metric,group0,group1,gap,abs_gap,overall\n";
  for (const auto& row : report.rows) {
    out << report.split << ',' << row.name << ',' << text::format_double(row.group0) << ','
        << text::format_double(row.group1) << ',' << text::format_double(row.gap) << ','
        << text::format_double(row.abs_gap) << ',' << text::format_double(row.overall) << '\n';
  }
}

namespace {

std::string opt(const std::optional<double>& v, int decimals = -1) {
  if (!v) return "";
  return decimals < 0 ? text::format_double(*v) : text::format_fixed(*v, decimals);
}

}  // namespace

void write_audit_table(const metrics::GerrymanderReport& r, std::ostream& out) {
  out << "cell       count  base_acc  fair_acc  base_auc  fair_auc\n";
  for (const auto& c : r.cells) {
    out << "a=" << c.a << ",g=" << c.g << std::right << std::setw(9) << c.count << std::setw(10)
        << text::format_fixed(c.baseline_accuracy, 4) << std::setw(10) << text::format_fixed(c.fair_accuracy, 4)
        << std::setw(10) << opt(c.baseline_auc, 4) << std::setw(10) << opt(c.fair_auc, 4) << '\n';
  }
  out << '\n';
  out << "gap across a (|acc a=0 - acc a=1|): baseline " << text::format_fixed(r.baseline_gap_a, 4) << ", fair "
      << text::format_fixed(r.fair_gap_a, 4) << '\n';
  out << "disparity across g (|acc g=0 - acc g=1|): baseline " << text::format_fixed(r.baseline_disparity_g, 4)
      << ", fair " << text::format_fixed(r.fair_disparity_g, 4) << '\n';
  out << '\n';
  out << "g  population  correct->incorrect  incorrect->correct\n";
  for (std::size_t g = 0; g < 2; ++g) {
    const auto& f = r.flips[g];
    out << g << std::setw(12) << f.population << std::setw(20) << f.correct_to_incorrect << std::setw(20)
        << f.incorrect_to_correct << '\n';
  }
  out << '\n';
  if (r.flip_test_available) {
    out << "share of g=1 among correct->incorrect vs incorrect->correct flips: z = "
        << text::format_fixed(r.flip_test.z, 4) << ", one-tailed p = " << text::format_fixed(r.flip_test.p_value, 6)
        << (r.flip_test.degenerate ? " (degenerate pooled proportion)" : "") << '\n';
  } else {
    out << "flip composition test unavailable: no flips in one direction\n";
  }
}

void write_audit_csv(const metrics::GerrymanderReport& r, std::ostream& out) {
  out << "section,key,baseline,fair\n";
  for (const auto& c : r.cells) {
    const std::string cell = "a" + std::to_string(c.a) + "_g" + std::to_string(c.g);
    out << "cell_count," << cell << ',' << c.count << ',' << c.count << '\n';
    out << "cell_accuracy," << cell << ',' << text::format_double(c.baseline_accuracy) << ','
        << text::format_double(c.fair_accuracy) << '\n';
    out << "cell_auc," << cell << ',' << opt(c.baseline_auc) << ',' << opt(c.fair_auc) << '\n';
  }
  out << "gap_a,abs," << text::format_double(r.baseline_gap_a) << ',' << text::format_double(r.fair_gap_a) << '\n';
  out << "disparity_g,abs," << text::format_double(r.baseline_disparity_g) << ','
      << text::format_double(r.fair_disparity_g) << '\n';
  for (std::size_t g = 0; g < 2; ++g) {
    out << "flips,g" << g << "_population," << r.flips[g].population << ',' << r.flips[g].population << '\n';
    out << "flips,g" << g << "_correct_to_incorrect,," << r.flips[g].correct_to_incorrect << '\n';
    out << "flips,g" << g << "_incorrect_to_correct,," << r.flips[g].incorrect_to_correct << '\n';
  }
  if (r.flip_test_available) {
    out << "flip_test,z,," << text::format_double(r.flip_test.z) << '\n';
    out << "flip_test,p_one_tailed,," << text::format_double(r.flip_test.p_value) << '\n';
  }
}

void write_bucket_csv(const metrics::GerrymanderReport& r, std::ostream& out) {
  out << "model,g,count,accuracy,auc\n";
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& c : r.cells) counts[static_cast<std::size_t>(c.g)] += c.count;
  for (std::size_t g = 0; g < 2; ++g) {
    out << "baseline," << g << ',' << counts[g] << ',' << text::format_double(r.baseline_accuracy_g[g]) << ','
        << opt(r.baseline_auc_g[g]) << '\n';
  }
  for (std::size_t g = 0; g < 2; ++g) {
    out << "fair," << g << ',' << counts[g] << ',' << text::format_double(r.fair_accuracy_g[g]) << ','
        << opt(r.fair_auc_g[g]) << '\n';
  }
}

}  // namespace fairlab::eval

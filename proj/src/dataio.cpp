#include "fairlab/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>

#include "fairlab/rng.hpp"
#include "fairlab/text.hpp"

namespace fairlab::data {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Holdout: return "holdout";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  for (auto v : {Split::Train, Split::Holdout, Split::Val, Split::Test})
    if (to_string(v) == s) return v;
  throw DataError("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(TaskKind t) { return t == TaskKind::Binary ? "binary" : "identity"; }

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

bool Dataset::has_split(Split s) const { return std::find(split.begin(), split.end(), s) != split.end(); }

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.task = task;
  out.num_tasks = num_tasks;
  out.x = x.gather_rows(rows);
  for (auto r : rows) {
    out.a.push_back(a[r]);
    if (has_g()) out.g.push_back(g[r]);
    for (std::size_t t = 0; t < num_tasks; ++t) out.y.push_back(y[r * num_tasks + t]);
    out.split.push_back(split[r]);
  }
  return out;
}

std::vector<int> Dataset::identities(Split s) const {
  std::set<int> ids;
  for (std::size_t i = 0; i < size(); ++i)
    if (split[i] == s) ids.insert(y[i]);
  return {ids.begin(), ids.end()};
}

void Dataset::validate() const {
  const std::size_t n = a.size();
  if (x.rows() != n) throw DataError("dataset: feature rows do not match attribute count");
  if (has_g() && g.size() != n) throw DataError("dataset: secondary attribute length mismatch");
  if (split.size() != n) throw DataError("dataset: split tag length mismatch");
  if (num_tasks == 0) throw DataError("dataset: at least one task is required");
  if (task == TaskKind::Identity && num_tasks != 1) throw DataError("dataset: identity tasks carry one label per sample");
  if (y.size() != n * num_tasks) throw DataError("dataset: label length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != 0 && a[i] != 1) throw DataError("dataset: attribute a must be binary (row " + std::to_string(i) + ")");
    if (has_g() && g[i] != 0 && g[i] != 1) throw DataError("dataset: attribute g must be binary (row " + std::to_string(i) + ")");
  }
  if (task == TaskKind::Binary) {
    for (int v : y)
      if (v != 0 && v != 1) throw DataError("dataset: binary labels must be 0 or 1");
  } else {
    for (int v : y)
      if (v < 0) throw DataError("dataset: identity labels must be non-negative");
    // Retrieval data must keep train and test identities apart.
    const auto train_ids = identities(Split::Train);
    const auto test_ids = identities(Split::Test);
    std::vector<int> both;
    std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(), std::back_inserter(both));
    if (!both.empty()) throw DataError("dataset: identity " + std::to_string(both.front()) + " appears in train and test");
  }
  require_finite(x, "dataset features");
}

// --- synthetic classification ---------------------------------------------------

namespace {

// Lower-triangular factor; throws when the matrix is not positive definite.
Matrix cholesky(const Matrix& c) {
  const std::size_t n = c.rows();
  if (c.cols() != n) throw DataError("covariance must be square");
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = c(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0)) throw DataError("covariance is not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

bool is_symmetric(const Matrix& c) {
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (c(i, j) != c(j, i)) return false;
  return true;
}

}  // namespace

void SynthSpec::validate() const {
  if (dim == 0) throw DataError("synthetic spec: dim must be positive");
  if (group_proportions[0] < 0 || group_proportions[1] < 0 ||
      std::abs(group_proportions[0] + group_proportions[1] - 1.0) > 1e-12) {
    throw DataError("synthetic spec: group proportions must be non-negative and sum to 1");
  }
  for (double p : {p_g1, p_y1, label_noise[0], label_noise[1]})
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("synthetic spec: probabilities must lie in [0, 1]");
  for (std::size_t k = 0; k < 8; ++k) {
    if (means[k].size() != dim) throw DataError("synthetic spec: component " + std::to_string(k) + " mean has wrong length");
    if (covariances[k].rows() != dim || covariances[k].cols() != dim) {
      throw DataError("synthetic spec: component " + std::to_string(k) + " covariance has wrong shape");
    }
    if (!is_symmetric(covariances[k])) throw DataError("synthetic spec: covariance " + std::to_string(k) + " is not symmetric");
    try {
      cholesky(covariances[k]);
    } catch (const DataError&) {
      throw DataError("synthetic spec: covariance " + std::to_string(k) + " is not positive definite");
    }
  }
}

SynthSpec default_classification_spec(std::size_t dim, double separation, double group_shift, double sigma) {
  if (dim < 3) throw DataError("default classification spec needs dim >= 3");
  SynthSpec s;
  s.dim = dim;
  Matrix cov = scaled(Matrix::identity(dim), sigma * sigma);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t g = 0; g < 2; ++g) {
        std::vector<double> m(dim, 0.0);
        m[0] = (y == 1 ? 0.5 : -0.5) * separation;
        m[1] = a == 1 ? group_shift : 0.0;
        m[2] = g == 1 ? group_shift : 0.0;
        s.means[SynthSpec::cell(y, a, g)] = std::move(m);
        s.covariances[SynthSpec::cell(y, a, g)] = cov;
      }
  return s;
}

Dataset generate_classification(const SynthSpec& spec) {
  spec.validate();
  std::array<Matrix, 8> factors;
  for (std::size_t k = 0; k < 8; ++k) factors[k] = cholesky(spec.covariances[k]);

  Rng rng = make_stream(spec.seed, Stream::kData);
  Dataset d;
  d.task = TaskKind::Binary;
  d.num_tasks = 1;
  const std::size_t n = spec.n_train + spec.n_holdout + spec.n_val + spec.n_test;
  d.x = Matrix(n, spec.dim);
  std::vector<double> z(spec.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = rng.bernoulli(spec.group_proportions[1]) ? 1 : 0;
    const std::size_t g = rng.bernoulli(spec.p_g1) ? 1 : 0;
    const std::size_t y = rng.bernoulli(spec.p_y1) ? 1 : 0;
    const std::size_t k = SynthSpec::cell(y, a, g);
    for (auto& v : z) v = rng.normal();
    auto row = d.x.row(i);
    for (std::size_t r = 0; r < spec.dim; ++r) {
      double s = spec.means[k][r];
      for (std::size_t c = 0; c <= r; ++c) s += factors[k](r, c) * z[c];
      row[r] = s;
    }
    const bool flip = rng.bernoulli(spec.label_noise[a]);
    d.a.push_back(static_cast<int>(a));
    d.g.push_back(static_cast<int>(g));
    d.y.push_back(static_cast<int>(flip ? 1 - y : y));
    Split tag = Split::Test;
    if (i < spec.n_train)
      tag = Split::Train;
    else if (i < spec.n_train + spec.n_holdout)
      tag = Split::Holdout;
    else if (i < spec.n_train + spec.n_holdout + spec.n_val)
      tag = Split::Val;
    d.split.push_back(tag);
  }
  d.validate();
  return d;
}

// --- synthetic retrieval ---------------------------------------------------------

Dataset generate_retrieval(const RetrievalSpec& spec) {
  if (spec.identities < 2) throw DataError("retrieval spec: need at least 2 identities");
  if (spec.images_per_identity < 2) throw DataError("retrieval spec: need at least 2 images per identity");
  if (spec.dim == 0) throw DataError("retrieval spec: dim must be positive");
  if (!(spec.p_a1 >= 0.0 && spec.p_a1 <= 1.0)) throw DataError("retrieval spec: p_a1 must lie in [0, 1]");
  if (!(spec.test_identity_fraction > 0.0 && spec.test_identity_fraction < 1.0)) {
    throw DataError("retrieval spec: test identity fraction must lie in (0, 1)");
  }
  const auto n_test_ids = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(spec.test_identity_fraction * static_cast<double>(spec.identities))));
  if (n_test_ids >= spec.identities) throw DataError("retrieval spec: no identities left for training");
  if (spec.val_per_identity > 0 && spec.images_per_identity - spec.val_per_identity < 1) {
    throw DataError("retrieval spec: too few images per identity for the requested validation images");
  }

  Rng rng = make_stream(spec.seed, Stream::kData);
  Dataset d;
  d.task = TaskKind::Identity;
  d.num_tasks = 1;
  d.x = Matrix(spec.identities * spec.images_per_identity, spec.dim);
  const std::size_t n_train_ids = spec.identities - n_test_ids;
  // Exactly round(p_a1 * n) identities of each identity set carry a = 1.
  std::vector<int> group_of(spec.identities, 0);
  const auto assign = [&](std::size_t lo, std::size_t hi) {
    const auto ones = static_cast<std::size_t>(std::llround(spec.p_a1 * static_cast<double>(hi - lo)));
    std::fill(group_of.begin() + static_cast<std::ptrdiff_t>(lo), group_of.begin() + static_cast<std::ptrdiff_t>(lo + ones), 1);
    rng.shuffle(std::span<int>(group_of.data() + lo, hi - lo));
  };
  assign(0, n_train_ids);
  assign(n_train_ids, spec.identities);
  std::size_t row = 0;
  std::vector<double> centre(spec.dim);
  for (std::size_t id = 0; id < spec.identities; ++id) {
    const int a = group_of[id];
    for (auto& v : centre) v = spec.center_scale * rng.normal();
    if (a == 1) centre[0] += spec.group_shift;
    const bool is_test = id >= n_train_ids;
    const bool has_val = !is_test && spec.val_per_identity > 0 && spec.images_per_identity > 2 * spec.val_per_identity;
    const double noise = spec.spread[static_cast<std::size_t>(a)] / std::sqrt(static_cast<double>(spec.dim));
    for (std::size_t k = 0; k < spec.images_per_identity; ++k, ++row) {
      auto r = d.x.row(row);
      for (std::size_t c = 0; c < spec.dim; ++c) r[c] = centre[c] + noise * rng.normal();
      d.a.push_back(a);
      d.y.push_back(static_cast<int>(id));
      Split tag = Split::Train;
      if (is_test)
        tag = Split::Test;
      else if (has_val && k >= spec.images_per_identity - spec.val_per_identity)
        tag = Split::Val;
      d.split.push_back(tag);
    }
  }
  d.validate();
  return d;
}

// --- gerrymandering scenario -------------------------------------------------------

Dataset generate_gerrymander_scenario(std::uint64_t seed) {
  // Every (a, g) cell holds 100 points per split along axis 0 (axis 1 is noise):
  //   a=1,g=0: positives U[1,3], negatives U[-3,-1]
  //   a=1,g=1: positives U[1,3], negatives U[-1,0] next to the boundary
  //   a=0,g:   35 positives U[-1.8,-0.6] on the wrong side, 15 positives U[1,3], 50 negatives U[-3,-1]
  // A baseline boundary near 0 fails the stranded a=0 positives; moving it left
  // to rescue them pushes the a=1,g=1 negatives across.
  constexpr std::size_t kHalf = 50;
  constexpr std::size_t kStranded = 35;
  Dataset d;
  d.task = TaskKind::Binary;
  d.num_tasks = 1;
  std::vector<double> feats;
  const auto add = [&](Rng& rng, std::size_t count, double lo, double hi, int y, int a, int g, Split s) {
    for (std::size_t i = 0; i < count; ++i) {
      feats.push_back(rng.uniform(lo, hi));
      feats.push_back(0.5 * rng.normal());
      d.a.push_back(a);
      d.g.push_back(g);
      d.y.push_back(y);
      d.split.push_back(s);
    }
  };
  const std::array<Split, 3> splits{Split::Train, Split::Val, Split::Test};
  for (std::size_t k = 0; k < splits.size(); ++k) {
    Rng rng = Rng::stream(seed, 0x6765727279ULL + k);
    add(rng, kHalf, 1.0, 3.0, 1, 1, 0, splits[k]);
    add(rng, kHalf, -3.0, -1.0, 0, 1, 0, splits[k]);
    add(rng, kHalf, 1.0, 3.0, 1, 1, 1, splits[k]);
    add(rng, kHalf, -1.0, 0.0, 0, 1, 1, splits[k]);
    for (int g = 0; g < 2; ++g) {
      add(rng, kStranded, -1.8, -0.6, 1, 0, g, splits[k]);
      add(rng, kHalf - kStranded, 1.0, 3.0, 1, 0, g, splits[k]);
      add(rng, kHalf, -3.0, -1.0, 0, 0, g, splits[k]);
    }
  }
  d.x = Matrix(d.a.size(), 2, std::move(feats));
  d.validate();
  return d;
}

// --- holdout carving -------------------------------------------------------------------

Dataset carve_holdout(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DataError("holdout fraction must lie in (0, 1); the penalty split would be empty");
  Dataset out = data;
  Rng rng = make_stream(seed, Stream::kHoldout);
  for (int grp = 0; grp < 2; ++grp) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.split[i] == Split::Train && data.a[i] == grp) members.push_back(i);
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size())));
    if (take == 0) throw DataError("holdout fraction leaves group a=" + std::to_string(grp) + " without holdout samples");
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < take; ++k) out.split[members[k]] = Split::Holdout;
  }
  return out;
}

// --- CSV -------------------------------------------------------------------------------

void write_csv(const Dataset& data, std::ostream& out) {
  data.validate();
  for (std::size_t c = 0; c < data.dim(); ++c) out << 'f' << c << ',';
  out << 'a';
  if (data.has_g()) out << ",g";
  if (data.task == TaskKind::Identity) {
    out << ",id";
  } else if (data.num_tasks == 1) {
    out << ",y";
  } else {
    for (std::size_t t = 0; t < data.num_tasks; ++t) out << ",y" << t;
  }
  out << ",split\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < data.dim(); ++c) out << text::format_double(data.x(i, c)) << ',';
    out << data.a[i];
    if (data.has_g()) out << ',' << data.g[i];
    for (std::size_t t = 0; t < data.num_tasks; ++t) out << ',' << data.label(i, t);
    out << ',' << to_string(data.split[i]) << '\n';
  }
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(data, out);
  if (!out) throw DataError("failed writing " + path.string());
}

namespace {

enum class ColumnRole { Feature, A, G, Label, Split };

struct Column {
  ColumnRole role;
  std::size_t index = 0;  // feature or task index
};

std::optional<std::size_t> numbered(std::string_view name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return std::nullopt;
  std::size_t v = 0;
  for (char c : name.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  if (name.size() > 2 && name[1] == '0') return std::nullopt;
  return v;
}

}  // namespace

Dataset read_csv(std::istream& in, const CsvSchema& schema, std::string_view source) {
  const std::string src(source);
  std::string line;
  if (!std::getline(in, line)) throw DataError(src + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  std::vector<std::string> header;
  for (auto field : text::split(text::trim(line), ',')) header.emplace_back(text::trim(field));

  std::vector<Column> cols;
  std::size_t n_features = 0, n_label_cols = 0;
  bool has_a = false, has_g = false, has_split = false, identity = false, plain_y = false;
  std::set<std::string> seen;
  for (auto raw : header) {
    const std::string name(text::trim(raw));
    if (name.find('"') != std::string::npos) throw DataError(src + ": quoted header fields are not supported");
    if (!seen.insert(name).second) throw DataError(src + ": duplicate column '" + name + "'");
    if (auto f = numbered(name, 'f')) {
      cols.push_back({ColumnRole::Feature, *f});
      ++n_features;
    } else if (name == "a") {
      cols.push_back({ColumnRole::A});
      has_a = true;
    } else if (name == "g") {
      cols.push_back({ColumnRole::G});
      has_g = true;
    } else if (name == "y") {
      cols.push_back({ColumnRole::Label, 0});
      plain_y = true;
      ++n_label_cols;
    } else if (name == "id") {
      cols.push_back({ColumnRole::Label, 0});
      identity = true;
      ++n_label_cols;
    } else if (auto t = numbered(name, 'y')) {
      cols.push_back({ColumnRole::Label, *t});
      ++n_label_cols;
    } else if (name == "split") {
      cols.push_back({ColumnRole::Split});
      has_split = true;
    } else {
      throw DataError(src + ": unknown column '" + name + "'");
    }
  }
  if (!has_a) throw DataError(src + ": required column 'a' is missing");
  if (n_label_cols == 0) throw DataError(src + ": a label column (y, y0.., or id) is required");
  if (identity && n_label_cols != 1) throw DataError(src + ": 'id' cannot be combined with other label columns");
  if (plain_y && n_label_cols != 1) throw DataError(src + ": 'y' cannot be combined with numbered label columns");
  for (const auto& c : cols) {
    if (c.role == ColumnRole::Feature && c.index >= n_features) {
      throw DataError(src + ": feature columns must be numbered f0..f" + std::to_string(n_features - 1));
    }
    if (c.role == ColumnRole::Label && c.index >= n_label_cols) {
      throw DataError(src + ": label columns must be numbered y0..y" + std::to_string(n_label_cols - 1));
    }
  }
  if (schema.feature_count && *schema.feature_count != n_features) {
    throw DataError(src + ": expected " + std::to_string(*schema.feature_count) + " feature columns, found " +
                    std::to_string(n_features));
  }
  const TaskKind task = identity ? TaskKind::Identity : TaskKind::Binary;
  if (schema.task && *schema.task != task) throw DataError(src + ": label columns do not match the expected task");
  if (schema.require_g && !has_g) throw DataError(src + ": required column 'g' is missing");

  Dataset d;
  d.task = task;
  d.num_tasks = n_label_cols;
  std::vector<double> feats;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = text::split(trimmed, ',');
    const std::string where = src + " row " + std::to_string(row_no);
    if (fields.size() != cols.size()) {
      throw DataError(where + ": expected " + std::to_string(cols.size()) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> f(n_features);
    std::vector<int> labels(n_label_cols);
    int a = 0, g = 0;
    Split s = Split::Train;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::string& col_name = header[k];
      const auto field = text::trim(fields[k]);
      if (field.empty()) throw DataError(where + ", column '" + col_name + "': missing value");
      try {
        switch (cols[k].role) {
          case ColumnRole::Feature: f[cols[k].index] = text::parse_double(field, col_name); break;
          case ColumnRole::A:
          case ColumnRole::G: {
            const auto v = text::parse_int(field, col_name);
            if (v != 0 && v != 1) throw DataError("value '" + std::string(field) + "' is not binary");
            (cols[k].role == ColumnRole::A ? a : g) = static_cast<int>(v);
            break;
          }
          case ColumnRole::Label: {
            const auto v = text::parse_int(field, col_name);
            if (task == TaskKind::Binary && v != 0 && v != 1) throw DataError("value '" + std::string(field) + "' is not binary");
            if (v < 0) throw DataError("identity labels must be non-negative");
            labels[cols[k].index] = static_cast<int>(v);
            break;
          }
          case ColumnRole::Split: s = parse_split(field); break;
        }
      } catch (const DataError& e) {
        throw DataError(where + ", column '" + col_name + "': " + e.what());
      }
    }
    for (double v : f)
      if (!std::isfinite(v)) throw DataError(where + ": non-finite feature value");
    feats.insert(feats.end(), f.begin(), f.end());
    d.a.push_back(a);
    if (has_g) d.g.push_back(g);
    d.y.insert(d.y.end(), labels.begin(), labels.end());
    d.split.push_back(s);
  }
  (void)has_split;
  d.x = Matrix(d.a.size(), n_features, std::move(feats));
  try {
    d.validate();
  } catch (const DataError& e) {
    throw DataError(src + ": " + e.what());
  }
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in, schema, path.string());
}

}  // namespace fairlab::data

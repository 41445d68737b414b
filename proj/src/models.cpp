#include "fairlab/models.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "fairlab/rng.hpp"
#include "fairlab/text.hpp"

namespace fairlab::models {

std::string_view to_string(OutputKind k) {
  switch (k) {
    case OutputKind::Linear: return "linear";
    case OutputKind::Sigmoid: return "sigmoid";
    case OutputKind::Softmax: return "softmax";
  }
  return "?";
}

OutputKind parse_output_kind(std::string_view s) {
  if (s == "linear") return OutputKind::Linear;
  if (s == "sigmoid") return OutputKind::Sigmoid;
  if (s == "softmax") return OutputKind::Softmax;
  throw DataError("unknown output kind '" + std::string(s) + "'");
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
  for (auto w : layer_sizes)
    if (w == 0) throw ConfigError("MLP layer widths must be positive");
}

Mlp::Mlp(MlpSpec spec, ParamList params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  const std::size_t layers = spec_.layer_sizes.size() - 1;
  if (params_.size() != 2 * layers) throw ShapeError("MLP parameter list has the wrong number of blocks");
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = spec_.layer_sizes[l];
    const auto out = spec_.layer_sizes[l + 1];
    if (params_[2 * l].rows() != in || params_[2 * l].cols() != out || params_[2 * l + 1].rows() != 1 ||
        params_[2 * l + 1].cols() != out) {
      throw ShapeError("MLP layer " + std::to_string(l) + " parameters do not match the spec");
    }
  }
}

Mlp Mlp::init(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_stream(seed, Stream::kInit);
  ParamList params;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const auto in = spec.layer_sizes[l];
    const auto out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out);
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    Matrix b(1, out);
    for (auto& v : b.data()) v = rng.uniform(-bound, bound);
    params.push_back(std::move(w));
    params.push_back(std::move(b));
  }
  return Mlp(spec, std::move(params));
}

Matrix Mlp::forward(const Matrix& x) const {
  Cache unused;
  return forward(x, unused);
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("MLP input width " + std::to_string(x.cols()) + " does not match " + std::to_string(input_dim()));
  }
  cache.inputs.clear();
  cache.pre.clear();
  Matrix h = x;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix z = matmul(h, params_[2 * l]);
    add_row_broadcast(z, params_[2 * l + 1]);
    cache.inputs.push_back(std::move(h));
    if (l + 1 < num_layers()) {
      h = z;
      for (auto& v : h.data()) v = v > 0.0 ? v : 0.0;
    }
    cache.pre.push_back(std::move(z));
  }
  return cache.pre.back();
}

Gradient Mlp::backward(const Cache& cache, const Matrix& d_out, Matrix* d_input) const {
  if (cache.pre.size() != num_layers()) throw ShapeError("MLP backward called without a matching forward cache");
  Gradient g(params_.size());
  Matrix d = d_out;
  for (std::size_t l = num_layers(); l-- > 0;) {
    g[2 * l] = matmul_tn(cache.inputs[l], d);
    g[2 * l + 1] = column_sums(d);
    if (l == 0 && d_input == nullptr) break;
    Matrix d_in = matmul_nt(d, params_[2 * l]);
    if (l > 0) {
      const Matrix& pre = cache.pre[l - 1];
      for (std::size_t i = 0; i < d_in.size(); ++i)
        if (!(pre.data()[i] > 0.0)) d_in.data()[i] = 0.0;
      d = std::move(d_in);
    } else {
      *d_input = std::move(d_in);
    }
  }
  return g;
}

Matrix output_probabilities(const Mlp& model, const Matrix& logits) {
  switch (model.spec().output) {
    case OutputKind::Softmax: return rowwise_softmax(logits);
    case OutputKind::Sigmoid: {
      Matrix p = logits;
      for (auto& v : p.data()) v = sigmoid(v);
      return p;
    }
    case OutputKind::Linear: return logits;
  }
  return logits;
}

EmbeddingModel EmbeddingModel::init(std::size_t input_dim, std::span<const std::size_t> hidden,
                                    std::size_t feature_dim, std::vector<int> head_ids, std::uint64_t seed) {
  if (head_ids.empty()) throw ConfigError("embedding model needs at least one training identity");
  MlpSpec spec;
  spec.layer_sizes.push_back(input_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(feature_dim);
  EmbeddingModel m;
  m.backbone = Mlp::init(spec, seed);
  Rng rng = make_stream(seed ^ 0x68656164ULL, Stream::kInit);
  m.head = Matrix(feature_dim, head_ids.size());
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (auto& v : m.head.data()) v = rng.uniform(-bound, bound);
  m.head_ids = std::move(head_ids);
  return m;
}

std::vector<int> EmbeddingModel::head_columns(std::span<const int> ids) const {
  std::vector<int> cols(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int found = -1;
    for (std::size_t c = 0; c < head_ids.size(); ++c) {
      if (head_ids[c] == ids[i]) {
        found = static_cast<int>(c);
        break;
      }
    }
    if (found < 0) throw DataError("identity " + std::to_string(ids[i]) + " has no head column");
    cols[i] = found;
  }
  return cols;
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double n = l2_norm(out.row(r));
    if (n == 0.0 || !std::isfinite(n)) throw DomainError("cannot normalise a zero feature vector");
    for (auto& v : out.row(r)) v /= n;
  }
  return out;
}

Matrix embed(const EmbeddingModel& model, const Matrix& x) { return normalize_rows(model.backbone.forward(x)); }

SensitiveRemovalPair SensitiveRemovalPair::init(std::size_t feature_dim, std::size_t hidden, std::size_t disc_hidden,
                                                bool identity_init, std::uint64_t seed) {
  SensitiveRemovalPair pair;
  const MlpSpec proj_spec{{feature_dim, hidden, hidden, hidden, feature_dim}, OutputKind::Linear};
  const MlpSpec disc_spec{{feature_dim, disc_hidden, disc_hidden, 2}, OutputKind::Softmax};
  pair.discriminator = Mlp::init(disc_spec, seed ^ 0x64697363ULL);
  if (!identity_init) {
    pair.projection = Mlp::init(proj_spec, seed);
    return pair;
  }
  if (hidden < 2 * feature_dim) throw ConfigError("identity-initialised projection needs hidden >= 2 * feature_dim");
  // relu(x) - relu(-x) = x through the positive and negative halves of the hidden layers.
  ParamList p;
  Matrix w0(feature_dim, hidden);
  for (std::size_t i = 0; i < feature_dim; ++i) {
    w0(i, i) = 1.0;
    w0(i, feature_dim + i) = -1.0;
  }
  p.push_back(std::move(w0));
  p.emplace_back(1, hidden);
  for (int k = 0; k < 2; ++k) {
    p.push_back(Matrix::identity(hidden));
    p.emplace_back(1, hidden);
  }
  Matrix w3(hidden, feature_dim);
  for (std::size_t i = 0; i < feature_dim; ++i) {
    w3(i, i) = 1.0;
    w3(feature_dim + i, i) = -1.0;
  }
  p.push_back(std::move(w3));
  p.emplace_back(1, feature_dim);
  pair.projection = Mlp(proj_spec, std::move(p));
  return pair;
}

Matrix embed(const DebiasedEmbedding& model, const Matrix& x) {
  return normalize_rows(model.removal.projection.forward(model.base.backbone.forward(x)));
}

// --- checkpoint container ------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "fairlab-checkpoint";
constexpr int kVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m) {
  out << "matrix " << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << text::format_double(m(r, c));
    }
    out << '\n';
  }
}

void write_mlp(std::ostream& out, std::string_view name, const Mlp& mlp) {
  out << "mlp " << name << '\n';
  out << "output " << to_string(mlp.spec().output) << '\n';
  out << "layers";
  for (auto w : mlp.spec().layer_sizes) out << ' ' << w;
  out << '\n';
  for (const auto& p : mlp.params()) write_matrix(out, p);
}

void write_embedding(std::ostream& out, const EmbeddingModel& m) {
  write_mlp(out, "backbone", m.backbone);
  out << "head\n";
  write_matrix(out, m.head);
  out << "head_ids";
  for (int id : m.head_ids) out << ' ' << id;
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::vector<std::string> tokens(std::string_view expect_first) {
    std::string line;
    if (!std::getline(in_, line)) throw DataError("checkpoint truncated; expected '" + std::string(expect_first) + "'");
    ++line_no_;
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) out.push_back(t);
    if (out.empty() || out[0] != expect_first) {
      throw DataError("checkpoint line " + std::to_string(line_no_) + ": expected '" + std::string(expect_first) + "'");
    }
    return out;
  }

  Matrix matrix() {
    const auto head = tokens("matrix");
    if (head.size() != 3) throw DataError("checkpoint line " + std::to_string(line_no_) + ": bad matrix header");
    const auto rows = static_cast<std::size_t>(text::parse_int(head[1], "matrix rows"));
    const auto cols = static_cast<std::size_t>(text::parse_int(head[2], "matrix cols"));
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::string line;
      if (!std::getline(in_, line)) throw DataError("checkpoint truncated inside a matrix");
      ++line_no_;
      const auto fields = text::split(text::trim(line), ' ');
      if (cols > 0 && fields.size() != cols) {
        throw DataError("checkpoint line " + std::to_string(line_no_) + ": expected " + std::to_string(cols) + " values");
      }
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = text::parse_double(fields[c], "checkpoint value");
    }
    return m;
  }

  Mlp mlp(std::string_view name) {
    const auto head = tokens("mlp");
    if (head.size() != 2 || head[1] != name) throw DataError("checkpoint: expected network '" + std::string(name) + "'");
    MlpSpec spec;
    spec.output = parse_output_kind(tokens("output").at(1));
    const auto layers = tokens("layers");
    for (std::size_t i = 1; i < layers.size(); ++i)
      spec.layer_sizes.push_back(static_cast<std::size_t>(text::parse_int(layers[i], "layer width")));
    spec.validate();
    ParamList params;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
      params.push_back(matrix());
      params.push_back(matrix());
    }
    return Mlp(spec, std::move(params));
  }

  EmbeddingModel embedding() {
    EmbeddingModel m;
    m.backbone = mlp("backbone");
    tokens("head");
    m.head = matrix();
    const auto ids = tokens("head_ids");
    for (std::size_t i = 1; i < ids.size(); ++i) m.head_ids.push_back(static_cast<int>(text::parse_int(ids[i], "head id")));
    if (m.head.cols() != m.head_ids.size() || m.head.rows() != m.backbone.output_dim()) {
      throw ShapeError("checkpoint: head shape does not match backbone or identity list");
    }
    return m;
  }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

}  // namespace

void save_checkpoint(const AnyModel& model, std::ostream& out) {
  out << kMagic << ' ' << kVersion << '\n';
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Mlp>) {
          out << "model mlp\n";
          write_mlp(out, "classifier", m);
        } else if constexpr (std::is_same_v<T, EmbeddingModel>) {
          out << "model embedding\n";
          write_embedding(out, m);
        } else {
          out << "model debiased\n";
          write_embedding(out, m.base);
          write_mlp(out, "projection", m.removal.projection);
          write_mlp(out, "discriminator", m.removal.discriminator);
        }
      },
      model);
  out << "end\n";
}

AnyModel load_checkpoint(std::istream& in) {
  Reader r(in);
  const auto magic = r.tokens(kMagic);
  if (magic.size() != 2 || text::parse_int(magic[1], "checkpoint version") != kVersion) {
    throw DataError("unsupported checkpoint version");
  }
  const auto kind = r.tokens("model");
  if (kind.size() != 2) throw DataError("checkpoint: malformed model line");
  AnyModel result;
  if (kind[1] == "mlp") {
    result = r.mlp("classifier");
  } else if (kind[1] == "embedding") {
    result = r.embedding();
  } else if (kind[1] == "debiased") {
    DebiasedEmbedding d;
    d.base = r.embedding();
    d.removal.projection = r.mlp("projection");
    d.removal.discriminator = r.mlp("discriminator");
    result = std::move(d);
  } else {
    throw DataError("checkpoint: unknown model kind '" + kind[1] + "'");
  }
  r.tokens("end");
  return result;
}

void save_checkpoint(const AnyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  save_checkpoint(model, out);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

AnyModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    return load_checkpoint(in);
  } catch (const Error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace fairlab::models

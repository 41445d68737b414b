#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "fairlab/matrix.hpp"

namespace fairlab::models {

enum class OutputKind { Linear, Sigmoid, Softmax };

std::string_view to_string(OutputKind k);
OutputKind parse_output_kind(std::string_view s);

struct MlpSpec {
  // Input width first, output width last; hidden layers use a rectifier.
  std::vector<std::size_t> layer_sizes;
  // How the logits are read by callers; forward() always returns raw logits.
  OutputKind output = OutputKind::Linear;

  void validate() const;
  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Affine layers with rectifiers between them. Parameters are stored as
// [W0, b0, W1, b1, ...] with W_l of shape in x out and b_l of shape 1 x out.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, ParamList params);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static Mlp init(const MlpSpec& spec, std::uint64_t seed);

  const MlpSpec& spec() const { return spec_; }
  const ParamList& params() const { return params_; }
  ParamList& params() { return params_; }
  std::size_t num_layers() const { return params_.size() / 2; }
  std::size_t input_dim() const { return spec_.layer_sizes.front(); }
  std::size_t output_dim() const { return spec_.layer_sizes.back(); }
  std::size_t parameter_count() const { return fairlab::parameter_count(params_); }

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer (post-rectifier for l > 0)
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;
  // Gradient of a scalar loss w.r.t. every parameter given d loss / d logits.
  // When d_input is non-null it receives d loss / d x.
  Gradient backward(const Cache& cache, const Matrix& d_out, Matrix* d_input = nullptr) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  MlpSpec spec_;
  ParamList params_;
};

// Probabilities read from logits according to the output kind.
Matrix output_probabilities(const Mlp& model, const Matrix& logits);

// Feature backbone plus a margin head with one column per training identity.
// The head is only used while training; inference uses features alone.
struct EmbeddingModel {
  Mlp backbone;
  Matrix head;                // feature_dim x num_ids
  std::vector<int> head_ids;  // identity label carried by each head column

  static EmbeddingModel init(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t feature_dim,
                             std::vector<int> head_ids, std::uint64_t seed);

  std::size_t feature_dim() const { return backbone.output_dim(); }
  // Head column for each identity label; throws DataError for unknown identities.
  std::vector<int> head_columns(std::span<const int> ids) const;
  std::size_t parameter_count() const { return backbone.parameter_count() + head.size(); }

  friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;
};

// Rows scaled to unit L2 norm. Throws DomainError for a zero row.
Matrix normalize_rows(const Matrix& m);
Matrix embed(const EmbeddingModel& model, const Matrix& x);

// Projection network over backbone features and a two-way discriminator on
// its output.
struct SensitiveRemovalPair {
  Mlp projection;     // 4 affine layers, feature_dim -> feature_dim
  Mlp discriminator;  // 3 affine layers, feature_dim -> 2 (softmax)

  // With identity_init the projection initially reproduces its input exactly
  // (requires hidden >= 2 * feature_dim).
  static SensitiveRemovalPair init(std::size_t feature_dim, std::size_t hidden, std::size_t disc_hidden,
                                   bool identity_init, std::uint64_t seed);

  friend bool operator==(const SensitiveRemovalPair&, const SensitiveRemovalPair&) = default;
};

// A pretrained embedding model whose features pass through a removal projection.
struct DebiasedEmbedding {
  EmbeddingModel base;
  SensitiveRemovalPair removal;

  friend bool operator==(const DebiasedEmbedding&, const DebiasedEmbedding&) = default;
};

// Unit-norm projected features of a debiased model.
Matrix embed(const DebiasedEmbedding& model, const Matrix& x);

using AnyModel = std::variant<Mlp, EmbeddingModel, DebiasedEmbedding>;

// Text container: a version line, then each network's spec and parameter
// matrices. Doubles use shortest round-trip formatting so load(save(m)) == m.
void save_checkpoint(const AnyModel& model, std::ostream& out);
AnyModel load_checkpoint(std::istream& in);
void save_checkpoint(const AnyModel& model, const std::filesystem::path& path);
AnyModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fairlab::models

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "fairlab/matrix.hpp"

namespace fairlab::data {

enum class Split { Train, Holdout, Val, Test };
enum class TaskKind { Binary, Identity };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);
std::string_view to_string(TaskKind t);

struct Dataset {
  Matrix x;                      // N x d
  std::vector<int> a;            // sensitive attribute, 0/1
  std::vector<int> g;            // secondary attribute, 0/1; empty when absent
  TaskKind task = TaskKind::Binary;
  std::size_t num_tasks = 1;     // K binary tasks; 1 for identity labels
  std::vector<int> y;            // N*K row-major binary labels, or N identity ids
  std::vector<Split> split;

  std::size_t size() const { return a.size(); }
  std::size_t dim() const { return x.cols(); }
  bool has_g() const { return !g.empty(); }

  int label(std::size_t i, std::size_t task_index = 0) const { return y[i * num_tasks + task_index]; }
  std::vector<std::size_t> indices(Split s) const;
  bool has_split(Split s) const;
  // Rows in the given order, keeping every per-sample field aligned.
  Dataset subset(std::span<const std::size_t> rows) const;
  // Identity labels present in a split, ascending.
  std::vector<int> identities(Split s) const;

  // Throws DataError when the per-sample arrays disagree or values are out of range.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

using Component = std::array<std::size_t, 3>;  // (y, a, g)

// Mixture over (y, a, g) cells. x | (y, a, g) ~ N(mean, cov); the observed
// label is then flipped with the per-group noise rate.
struct SynthSpec {
  std::size_t dim = 20;
  std::array<double, 2> group_proportions{0.4, 0.6};  // pi_a, indexed by a
  double p_g1 = 0.5;
  double p_y1 = 0.5;
  std::array<double, 2> label_noise{0.0, 0.0};  // indexed by a
  // Indexed by y * 4 + a * 2 + g.
  std::array<std::vector<double>, 8> means;
  std::array<Matrix, 8> covariances;
  std::size_t n_train = 0;
  std::size_t n_holdout = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;

  static std::size_t cell(std::size_t y, std::size_t a, std::size_t g) { return y * 4 + a * 2 + g; }
  // Throws DataError for proportions off the simplex or non-PD covariances.
  void validate() const;
};

// Class means at +-separation/2 along axis 0, group offsets along axes 1 and 2,
// isotropic covariance sigma^2 I.
SynthSpec default_classification_spec(std::size_t dim, double separation, double group_shift, double sigma);

Dataset generate_classification(const SynthSpec& spec);

struct RetrievalSpec {
  std::size_t dim = 32;
  std::size_t identities = 100;
  std::size_t images_per_identity = 10;
  double p_a1 = 0.6;  // share of a = 1 identities, applied within train and test identity sets
  double center_scale = 1.0;               // std-dev of identity centres per coordinate
  std::array<double, 2> spread{0.5, 0.4};  // per-image noise, indexed by a
  double group_shift = 0.0;                // offset along axis 0 for a = 1
  double test_identity_fraction = 0.3;
  std::size_t val_per_identity = 3;        // taken from identities with > 2x this many images
  std::uint64_t seed = 0;

  friend bool operator==(const RetrievalSpec&, const RetrievalSpec&) = default;
};

// Identity-disjoint train/test; val images come from train identities.
Dataset generate_retrieval(const RetrievalSpec& spec);

// Two-dimensional scenario where equalising errors across `a` moves the
// boundary through a cluster of (a = 1, g = 1) negatives.
Dataset generate_gerrymander_scenario(std::uint64_t seed);

// Moves a stratified fraction of each group's training samples to Holdout.
// Throws DataError when the fraction leaves the holdout empty.
Dataset carve_holdout(const Dataset& data, double fraction, std::uint64_t seed);

// CSV with columns f0..f{d-1}, a, [g], y | y0..y{K-1} | id, split.
// No quoting; every field is numeric except split.
struct CsvSchema {
  std::optional<std::size_t> feature_count;
  std::optional<TaskKind> task;
  bool require_g = false;
};

void write_csv(const Dataset& data, std::ostream& out);
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_csv(std::istream& in, const CsvSchema& schema = {}, std::string_view source = "<stream>");
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

}  // namespace fairlab::data

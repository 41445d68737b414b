#pragma once

// Shared helpers for the test binaries: seeded random instances and small
// synthetic datasets.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairlab/dataio.hpp"
#include "fairlab/matrix.hpp"
#include "fairlab/rng.hpp"

namespace fairlab::testing {

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::vector<int> random_ints(Rng& rng, std::size_t n, int k) {
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  return v;
}

// Binary attribute with both groups present (n >= 2).
inline std::vector<int> random_groups(Rng& rng, std::size_t n) {
  auto a = random_ints(rng, n, 2);
  a[0] = 0;
  a[1] = 1;
  rng.shuffle(std::span<int>(a));
  return a;
}

// Binary labels with both classes present inside each group; a group of one gets a new member.
inline std::vector<int> random_labels_per_group(Rng& rng, std::vector<int>& a) {
  for (int k = 0; k < 2; ++k)
    if (std::count(a.begin(), a.end(), k) < 2) {
      for (auto& v : a)
        if (v != k && std::count(a.begin(), a.end(), 1 - k) > 2) {
          v = k;
          break;
        }
    }
  std::vector<int> y;
  for (;;) {
    y = random_ints(rng, a.size(), 2);
    int seen[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < a.size(); ++i) seen[a[i]][y[i]] = 1;
    if (seen[0][0] && seen[0][1] && seen[1][0] && seen[1][1]) return y;
  }
}

// Small two-group binary classification set with train and test splits.
inline data::Dataset small_classification(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                                          std::size_t dim = 5) {
  auto spec = data::default_classification_spec(dim, 2.0, 1.0, 1.0);
  spec.label_noise = {0.05, 0.15};
  spec.n_train = n_train;
  spec.n_test = n_test;
  spec.seed = seed;
  return data::generate_classification(spec);
}

inline data::RetrievalSpec small_retrieval_spec(std::uint64_t seed) {
  data::RetrievalSpec s;
  s.dim = 8;
  s.identities = 12;
  s.images_per_identity = 8;
  s.spread = {0.5, 0.4};
  s.val_per_identity = 2;
  s.seed = seed;
  return s;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fairlab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fairlab::testing

#include <cmath>
#include <sstream>

#include <doctest.h>

#include "fairlab/error.hpp"
#include "fairlab/models.hpp"
#include "support.hpp"

using namespace fairlab;
using namespace fairlab::models;
using testing::random_matrix;

namespace {

// Loop-by-loop forward pass straight from the parameter blocks.
std::vector<double> scripted_forward(const Mlp& m, std::vector<double> h) {
  const auto& p = m.params();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const Matrix& w = p[2 * l];
    const Matrix& b = p[2 * l + 1];
    std::vector<double> z(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = 0;
      for (std::size_t i = 0; i < w.rows(); ++i) s += h[i] * w(i, j);
      z[j] = s + b(0, j);
      if (l + 1 < m.num_layers()) z[j] = std::max(0.0, z[j]);
    }
    h = z;
  }
  return h;
}

MlpSpec spec_of(std::vector<std::size_t> sizes) {
  MlpSpec s;
  s.layer_sizes = std::move(sizes);
  return s;
}

}  // namespace

TEST_CASE("zero-weight model outputs its bias") {
  Mlp m = Mlp::init(spec_of({3, 2}), 1);
  m.params()[0] = Matrix(3, 2);
  m.params()[1] = Matrix{{0.25, -1.5}};
  const Matrix out = m.forward(Matrix{{1, 2, 3}, {-4, 5, 6}});
  CHECK(out == Matrix{{0.25, -1.5}, {0.25, -1.5}});
}

TEST_CASE("identity one-layer model passes its input through") {
  const Mlp m(spec_of({3, 3}), {Matrix::identity(3), Matrix(1, 3)});
  const Matrix x{{0.5, -2.0, 7.0}};
  CHECK(m.forward(x) == x);
}

TEST_CASE("seed-42 two-layer model matches a scripted forward pass") {
  const Mlp m = Mlp::init(spec_of({4, 6, 3}), 42);
  const std::vector<double> x{0.3, -1.1, 2.0, 0.7};
  const Matrix out = m.forward(Matrix::row_vector(x));
  const auto ref = scripted_forward(m, x);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(out(0, j) - ref[j]) < 1e-14);
}

TEST_CASE("forward rejects a width mismatch") {
  const Mlp m = Mlp::init(spec_of({4, 2}), 1);
  CHECK_THROWS_AS(m.forward(Matrix(1, 3)), ShapeError);
  CHECK_THROWS_AS(Mlp(spec_of({4, 2}), {Matrix(4, 3), Matrix(1, 2)}), ShapeError);
  CHECK_THROWS_AS(Mlp::init(spec_of({4}), 1), ConfigError);
}

TEST_CASE("initialisation is reproducible and bounded by 1/sqrt(fan_in)") {
  const auto spec = spec_of({16, 64, 9, 2});
  const Mlp a = Mlp::init(spec, 5), b = Mlp::init(spec, 5), c = Mlp::init(spec, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    for (double v : a.params()[2 * l].data()) CHECK(std::fabs(v) <= bound);
  }
}

TEST_CASE("doubling hidden width strictly increases the parameter count") {
  std::size_t prev = 0;
  for (std::size_t w = 4; w <= 1024; w *= 2) {
    const auto n = Mlp::init(spec_of({20, w, 1}), 0).parameter_count();
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("forward is a pure function of parameters and input") {
  const Mlp m = Mlp::init(spec_of({5, 8, 2}), 3);
  Rng rng(1);
  const Matrix x = random_matrix(rng, 7, 5);
  CHECK(m.forward(x) == m.forward(x));
  Mlp copy = m;
  CHECK(copy.forward(x) == m.forward(x));
}

TEST_CASE("embed returns unit-norm, deterministic features matching the backbone") {
  const auto m = EmbeddingModel::init(6, std::vector<std::size_t>{10}, 4, {3, 5, 9}, 11);
  Rng rng(2);
  const Matrix x = random_matrix(rng, 20, 6);
  const Matrix e = embed(m, x);
  for (std::size_t i = 0; i < e.rows(); ++i) CHECK(std::fabs(l2_norm(e.row(i)) - 1.0) < 1e-12);

  Matrix twice(2, 6);
  for (std::size_t k = 0; k < 6; ++k) twice(0, k) = twice(1, k) = x(0, k);
  const Matrix et = embed(m, twice);
  CHECK(std::vector<double>(et.row(0).begin(), et.row(0).end()) == std::vector<double>(et.row(1).begin(), et.row(1).end()));

  const auto ref = scripted_forward(m.backbone, std::vector<double>(x.row(3).begin(), x.row(3).end()));
  double n = 0;
  for (double v : ref) n += v * v;
  n = std::sqrt(n);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::fabs(e(3, k) - ref[k] / n) < 1e-13);
}

TEST_CASE("embed and normalize reject zero features") {
  auto m = EmbeddingModel::init(3, std::vector<std::size_t>{}, 2, {0, 1}, 1);
  m.backbone.params()[0] = Matrix(3, 2);
  m.backbone.params()[1] = Matrix(1, 2);
  CHECK_THROWS_AS(embed(m, Matrix(1, 3)), DomainError);
  CHECK_THROWS_AS(normalize_rows(Matrix{{0.0, 0.0}}), DomainError);
}

TEST_CASE("head columns map identity labels") {
  const auto m = EmbeddingModel::init(3, std::vector<std::size_t>{}, 2, {4, 7, 9}, 1);
  CHECK(m.head_columns(std::vector<int>{9, 4, 7}) == std::vector<int>{2, 0, 1});
  CHECK_THROWS_AS(m.head_columns(std::vector<int>{5}), DataError);
  CHECK(m.head.rows() == 2);
  CHECK(m.head.cols() == 3);
}

TEST_CASE("removal pair shapes and identity initialisation") {
  const auto pair = SensitiveRemovalPair::init(8, 16, 32, true, 4);
  CHECK(pair.projection.num_layers() == 4);
  CHECK(pair.discriminator.num_layers() == 3);
  CHECK(pair.projection.input_dim() == 8);
  CHECK(pair.projection.output_dim() == 8);
  CHECK(pair.discriminator.output_dim() == 2);
  CHECK(pair.discriminator.spec().output == OutputKind::Softmax);
  Rng rng(3);
  const Matrix h = random_matrix(rng, 10, 8, -3, 3);
  CHECK(pair.projection.forward(h) == h);
  const Matrix p = output_probabilities(pair.discriminator, pair.discriminator.forward(h));
  for (std::size_t i = 0; i < p.rows(); ++i) CHECK(std::fabs(p(i, 0) + p(i, 1) - 1.0) < 1e-12);

  const auto random_init = SensitiveRemovalPair::init(8, 16, 32, false, 4);
  CHECK_FALSE(random_init.projection.forward(h) == h);
}

TEST_CASE("debiased embedding with identity projection keeps the base features") {
  const auto base = EmbeddingModel::init(5, std::vector<std::size_t>{7}, 4, {0, 1, 2}, 9);
  const DebiasedEmbedding d{base, SensitiveRemovalPair::init(4, 8, 6, true, 1)};
  Rng rng(5);
  const Matrix x = random_matrix(rng, 6, 5);
  const Matrix a = embed(base, x), b = embed(d, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a.data()[i] - b.data()[i]) < 1e-15);
}

TEST_CASE("checkpoints round-trip bit-exactly for every model kind") {
  const Mlp mlp = Mlp::init(spec_of({3, 5, 2}), 8);
  const auto emb = EmbeddingModel::init(4, std::vector<std::size_t>{6}, 3, {2, 5}, 8);
  const DebiasedEmbedding deb{emb, SensitiveRemovalPair::init(3, 6, 4, false, 2)};
  for (const AnyModel& m : {AnyModel(mlp), AnyModel(emb), AnyModel(deb)}) {
    std::stringstream s;
    save_checkpoint(m, s);
    const AnyModel back = load_checkpoint(s);
    CHECK(back == m);
    std::stringstream s2;
    save_checkpoint(back, s2);
    CHECK(s2.str() == s.str());
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  std::stringstream empty;
  CHECK_THROWS_AS(load_checkpoint(empty), DataError);
  std::stringstream s;
  save_checkpoint(Mlp::init(spec_of({2, 2}), 1), s);
  std::string text = s.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(truncated), DataError);
  std::stringstream wrong_version("fairlab-checkpoint 999\n");
  CHECK_THROWS_AS(load_checkpoint(wrong_version), DataError);
}

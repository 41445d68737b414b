#include <cmath>
#include <numbers>

#include <doctest.h>

#include "fairlab/error.hpp"
#include "fairlab/kernels.hpp"
#include "fairlab/matrix.hpp"
#include "support.hpp"

using namespace fairlab;
using testing::random_matrix;

namespace {

double max_rel_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::fabs(a.data()[i]), std::fabs(b.data()[i]), 1e-300});
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(a, Matrix::identity(2)) == a);
  CHECK(matmul(Matrix{{1, 0}, {0, 1}}, Matrix{{5}, {7}}) == Matrix{{5}, {7}});
  CHECK(matmul(a, Matrix{{5}, {6}}) == Matrix{{17}, {39}});
}

TEST_CASE("matmul rejects a dimension mismatch") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(matmul_tn(Matrix(2, 3), Matrix(3, 3)), ShapeError);
  CHECK_THROWS_AS(matmul_nt(Matrix(2, 3), Matrix(2, 2)), ShapeError);
  CHECK_THROWS_AS(add(Matrix(2, 3), Matrix(3, 2)), ShapeError);
}

TEST_CASE("matmul sums left to right over the inner index") {
  // 1e16 + 1 - 1e16 is 0 left to right but 1 in other orders.
  const Matrix a{{1e16, 1.0, -1e16}};
  const Matrix b{{1}, {1}, {1}};
  CHECK(matmul(a, b)(0, 0) == 0.0);
}

TEST_CASE("transposed products match explicit transposes") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(rng, 1 + rng.below(6), 1 + rng.below(6));
    const Matrix b = random_matrix(rng, a.rows(), 1 + rng.below(6));
    const Matrix c = random_matrix(rng, 1 + rng.below(6), a.cols());
    CHECK(matmul_tn(a, b) == matmul(a.transposed(), b));
    CHECK(matmul_nt(a, c) == matmul(a, c.transposed()));
  }
}

TEST_CASE("matmul is associative on random triples") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), l = 1 + rng.below(8), n = 1 + rng.below(8);
    const Matrix a = random_matrix(rng, m, k, 0.5, 2.0), b = random_matrix(rng, k, l, 0.5, 2.0),
                 c = random_matrix(rng, l, n, 0.5, 2.0);
    CHECK(max_rel_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("rowwise_softmax examples") {
  const Matrix s = rowwise_softmax(Matrix{{0, 0}, {1000, 1000}, {1, 0}});
  CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s(2, 0) == doctest::Approx(0.7310586).epsilon(1e-7));
  CHECK(s(2, 1) == doctest::Approx(0.2689414).epsilon(1e-6));
  CHECK(std::exp(1.0) / (std::exp(1.0) + 1.0) - s(2, 0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("rowwise_softmax rows sum to one and ignore per-row shifts") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    Matrix z = random_matrix(rng, 1 + rng.below(5), 1 + rng.below(6), -20, 20);
    const Matrix s = rowwise_softmax(z);
    Matrix shifted = z;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      const double c = rng.uniform(-500, 500);
      for (auto& v : shifted.row(r)) v += c;
    }
    const Matrix s2 = rowwise_softmax(shifted);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      double sum = 0;
      for (double v : s.row(r)) sum += v;
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::fabs(s.data()[i] - s2.data()[i]) < 1e-12);
    CHECK(s.all_finite());
  }
}

TEST_CASE("finite_diff_grad examples") {
  const ParamList theta{Matrix{{3.0}}};
  const auto g = finite_diff_grad([](const ParamList& p) { return p[0](0, 0) * p[0](0, 0); }, theta, 1e-5);
  CHECK(std::fabs(g[0](0, 0) - 6.0) < 1e-6);

  const auto c = finite_diff_grad([](const ParamList&) { return 4.2; }, theta, 1e-5);
  CHECK(c[0](0, 0) == 0.0);

  const auto s = finite_diff_grad([](const ParamList& p) { return std::sin(p[0](0, 0)); }, {Matrix{{0.0}}}, 1e-5);
  CHECK(std::fabs(s[0](0, 0) - 1.0) < 1e-9);
}

TEST_CASE("finite_diff_grad rejects non-finite objectives and bad epsilon") {
  const ParamList theta{Matrix{{0.0}}};
  CHECK_THROWS_AS(finite_diff_grad([](const ParamList& p) { return std::log(p[0](0, 0) - 1.0); }, theta, 1e-5),
                  NumericError);
  CHECK_THROWS_AS(finite_diff_grad([](const ParamList&) { return 0.0; }, theta, 0.0), DomainError);
}

TEST_CASE("finite_diff_grad covers every block and coordinate") {
  Rng rng(5);
  const ParamList p{random_matrix(rng, 2, 3), random_matrix(rng, 1, 4)};
  // f = sum_k c_k x_k has gradient c exactly (up to rounding).
  const ParamList coeff{random_matrix(rng, 2, 3), random_matrix(rng, 1, 4)};
  const auto f = [&](const ParamList& q) {
    double s = 0;
    for (std::size_t b = 0; b < q.size(); ++b)
      for (std::size_t i = 0; i < q[b].size(); ++i) s += coeff[b].data()[i] * q[b].data()[i];
    return s;
  };
  CHECK(relative_error(finite_diff_grad(f, p), coeff) < 1e-8);
}

TEST_CASE("cosine angles") {
  const std::vector<double> v{0.3, -1.2, 2.0};
  CHECK(cosine_angle_deg(v, v) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(cosine_angle_deg(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == doctest::Approx(90.0));
  CHECK(cosine_angle_deg(std::vector<double>{1, 0}, std::vector<double>{1, 1}) == doctest::Approx(45.0).epsilon(1e-12));
  CHECK(cosine_angle_deg(std::vector<double>{1, 0}, std::vector<double>{-2, 0}) == doctest::Approx(180.0));
  CHECK_THROWS_AS(cosine_angle_deg(std::vector<double>{0, 0}, std::vector<double>{1, 1}), DomainError);
}

TEST_CASE("relative_error and congruence helpers") {
  const Gradient a{Matrix{{1, 2}}}, b{Matrix{{1, 2}}};
  CHECK(relative_error(a, b) == 0.0);
  CHECK_THROWS_AS(require_congruent(ParamList{Matrix(1, 2)}, ParamList{Matrix(2, 1)}), ShapeError);
  CHECK_THROWS_AS(require_congruent(ParamList{Matrix(1, 2)}, ParamList{}), ShapeError);
  CHECK_THROWS_AS(require_finite(Matrix{{std::nan("")}}, "x"), NumericError);
  CHECK(parameter_count(ParamList{Matrix(2, 3), Matrix(1, 3)}) == 9);
}

TEST_CASE("matrix construction checks its data length") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2).gather_rows(std::vector<std::size_t>{2}), ShapeError);
}

// --- serial and parallel kernels ---------------------------------------------

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  Rng rng(99);
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 50 + rng.below(150), k = 20 + rng.below(60), n = 10 + rng.below(80);
    const Matrix a = random_matrix(rng, m, k), b = random_matrix(rng, k, n), bt = random_matrix(rng, n, k),
                 at = random_matrix(rng, k, m);
    Matrix s(m, n), p(m, n);
    kernels::serial::gemm(a.data(), b.data(), s.data(), {m, k, n});
    kernels::parallel::gemm(a.data(), b.data(), p.data(), {m, k, n});
    CHECK(s == p);
    kernels::serial::gemm_nt(a.data(), bt.data(), s.data(), {m, k, n});
    kernels::parallel::gemm_nt(a.data(), bt.data(), p.data(), {m, k, n});
    CHECK(s == p);
    kernels::serial::gemm_tn(at.data(), b.data(), s.data(), {m, k, n});
    kernels::parallel::gemm_tn(at.data(), b.data(), p.data(), {m, k, n});
    CHECK(s == p);

    Matrix sm(m, k), pm(m, k);
    kernels::serial::softmax_rows(a.data(), sm.data(), m, k);
    kernels::parallel::softmax_rows(a.data(), pm.data(), m, k);
    CHECK(sm == pm);

    Matrix sd(m, n), pd(m, n);
    kernels::serial::sq_distances(a.data(), bt.data(), sd.data(), m, n, k);
    kernels::parallel::sq_distances(a.data(), bt.data(), pd.data(), m, n, k);
    CHECK(sd == pd);
  }
}

TEST_CASE("dispatching matmul agrees with the serial kernel above the threshold") {
  Rng rng(1);
  const Matrix a = random_matrix(rng, 128, 64), b = random_matrix(rng, 64, 96);
  Matrix s(128, 96);
  kernels::serial::gemm(a.data(), b.data(), s.data(), {128, 64, 96});
  CHECK(128 * 64 * 96 > kernels::kParallelThreshold);
  CHECK(matmul(a, b) == s);
  CHECK(kernels::max_threads() >= 1);
}

TEST_CASE("matrix operations keep entries finite") {
  Rng rng(2);
  const Matrix a = random_matrix(rng, 4, 5, -1e3, 1e3);
  CHECK(matmul(a, a.transposed()).all_finite());
  CHECK(rowwise_softmax(a).all_finite());
  CHECK(column_sums(a).all_finite());
  CHECK(scaled(a, 2.0).all_finite());
}

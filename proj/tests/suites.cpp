#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fairlab/evaluation.hpp"
#include "fairlab/models.hpp"
#include "fairlab/objectives.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fairlab::suites {

namespace ob = objectives;
using testing::random_groups;
using testing::random_ints;
using testing::random_matrix;

namespace {

constexpr double kEps = 1e-6;

std::vector<double> uniform_coeff(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

Matrix as_column(const std::vector<double>& v) { return Matrix::column_vector(v); }

std::vector<double> to_vec(const Matrix& m) { return m.data(); }

// Runs `make` until it returns true (an instance away from kinks), then checks.
void run_checks(CheckResult& res, std::size_t instances, Rng& rng,
                const std::function<bool(Rng&, ParamList&, ScalarFunction&, Gradient&)>& make) {
  res.instances = 0;
  while (res.instances < instances) {
    ParamList params;
    ScalarFunction f;
    Gradient analytic;
    if (!make(rng, params, f, analytic)) continue;
    const Gradient fd = finite_diff_grad(f, params, kEps);
    res.worst = std::max(res.worst, relative_error(analytic, fd));
    ++res.instances;
  }
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed);
  std::vector<CheckResult> out;

  {
    CheckResult r{"cross_entropy"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(6), c = 2 + g.below(4);
      const auto y = random_ints(g, n, static_cast<int>(c));
      p = {random_matrix(g, n, c, -3, 3)};
      f = [y](const ParamList& q) { return ob::cross_entropy(q[0], y); };
      const auto ps = ob::cross_entropy_per_sample(p[0], y);
      an = {ob::combine_rows(ps.grad, uniform_coeff(n))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"weighted_bce"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(6), k = 1 + g.below(3);
      const auto y = random_ints(g, n * k, 2);
      const double w = g.uniform(0.5, 3.0);
      p = {random_matrix(g, n, k, 0.05, 0.95)};
      f = [y, w](const ParamList& q) { return ob::weighted_bce(q[0], y, w); };
      const auto ps = ob::weighted_bce_per_sample(p[0], y, w);
      an = {ob::combine_rows(ps.grad, uniform_coeff(n))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"weighted_bce_logits"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(6), k = 1 + g.below(3);
      const auto y = random_ints(g, n * k, 2);
      const double w = g.uniform(0.5, 3.0);
      p = {random_matrix(g, n, k, -3, 3)};
      f = [y, w](const ParamList& q) { return ob::weighted_bce_logits_per_sample(q[0], y, w).mean(); };
      const auto ps = ob::weighted_bce_logits_per_sample(p[0], y, w);
      an = {ob::combine_rows(ps.grad, uniform_coeff(n))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"focal"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(6), c = 2 + g.below(4);
      const auto y = random_ints(g, n, static_cast<int>(c));
      const double gamma = g.uniform(0.0, 4.0);
      p = {random_matrix(g, n, c, -3, 3)};
      f = [y, gamma](const ParamList& q) { return ob::focal_loss(q[0], y, gamma); };
      const auto ps = ob::focal_per_sample(p[0], y, gamma);
      an = {ob::combine_rows(ps.grad, uniform_coeff(n))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"binary_focal"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(6), k = 1 + g.below(3);
      const auto y = random_ints(g, n * k, 2);
      eval::LossSpec loss;
      loss.base = eval::BaseLoss::Focal;
      loss.focal_gamma = g.uniform(0.0, 4.0);
      p = {random_matrix(g, n, k, -3, 3)};
      f = [y, loss](const ParamList& q) { return eval::binary_loss_per_sample(q[0], y, loss).mean(); };
      const auto ps = eval::binary_loss_per_sample(p[0], y, loss);
      an = {ob::combine_rows(ps.grad, uniform_coeff(n))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"cosface"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(6), d = 2 + g.below(4), c = 2 + g.below(4);
      const auto y = random_ints(g, n, static_cast<int>(c));
      const auto a = random_groups(g, n);
      ob::MarginSpec m;
      m.scale = g.uniform(1.0, 8.0);
      m.margin_per_group = {g.uniform(0.0, 0.8), g.uniform(0.0, 0.8)};
      p = {random_matrix(g, n, d), random_matrix(g, d, c)};
      f = [y, a, m](const ParamList& q) { return ob::cosface_loss(q[0], q[1], y, a, m); };
      const auto cache = ob::cosface_logits(p[0], p[1], y, a, m);
      const auto ce = ob::cross_entropy_per_sample(cache.logits, y);
      const auto mg = ob::cosface_backward(cache, ob::combine_rows(ce.grad, uniform_coeff(n)), m.scale);
      an = {mg.d_features, mg.d_weights};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"equal_loss_objective"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 4 + g.below(6), c = 2 + g.below(3);
      const auto y = random_ints(g, n, static_cast<int>(c));
      const auto a = random_groups(g, n);
      const double alpha = g.uniform(0.1, 3.0);
      p = {random_matrix(g, n, c, -3, 3)};
      const auto ps = ob::cross_entropy_per_sample(p[0], y);
      const auto gl = ob::group_losses(ps.values, a);
      if (std::fabs(gl.pos - gl.neg) < 1e-3) return false;
      f = [y, a, alpha](const ParamList& q) {
        const auto v = ob::cross_entropy_per_sample(q[0], y);
        const auto l = ob::group_losses(v.values, a);
        return ob::equal_loss_objective(v.mean(), l.pos, l.neg, alpha);
      };
      an = {ob::combine_rows(ps.grad, ob::equal_loss_coefficients(a, gl, alpha))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"eq_odds_penalty"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 4 + g.below(10);
      auto a = random_groups(g, n);
      const auto y = testing::random_labels_per_group(g, a);
      const auto probs = testing::random_vector(g, n, 0.02, 0.98);
      // Stay away from the kinks of the absolute values.
      double fp[2] = {0, 0}, fn[2] = {0, 0}, cnt[2] = {0, 0};
      for (std::size_t i = 0; i < n; ++i) {
        fp[a[i]] += probs[i] * (1 - y[i]);
        fn[a[i]] += (1 - probs[i]) * y[i];
        cnt[a[i]] += 1;
      }
      if (std::fabs(fp[1] / cnt[1] - fp[0] / cnt[0]) < 1e-3 || std::fabs(fn[1] / cnt[1] - fn[0] / cnt[0]) < 1e-3)
        return false;
      p = {as_column(probs)};
      f = [y, a](const ParamList& q) {
        const auto v = to_vec(q[0]);
        return ob::eq_odds_penalty({v, y, a});
      };
      an = {as_column(ob::eq_odds_penalty_grad({probs, y, a}))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"disparate_impact_penalty"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 2 + g.below(10);
      const auto a = random_groups(g, n);
      const auto probs = testing::random_vector(g, n, 0.02, 0.98);
      double m[2] = {0, 0}, cnt[2] = {0, 0};
      for (std::size_t i = 0; i < n; ++i) {
        m[a[i]] += probs[i];
        cnt[a[i]] += 1;
      }
      if (std::fabs(m[1] / cnt[1] - m[0] / cnt[0]) < 1e-3) return false;
      p = {as_column(probs)};
      f = [a](const ParamList& q) { return ob::disparate_impact_penalty(to_vec(q[0]), a); };
      an = {as_column(ob::disparate_impact_penalty_grad(probs, a))};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"adversarial_term"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 1 + g.below(10);
      const auto probs = testing::random_vector(g, n, 0.0, 1.0);
      for (double v : probs)
        if (std::fabs(v - ob::kAdversarialTarget) < 1e-3) return false;
      const double alpha = g.uniform(0.0, 5.0), fr = g.uniform(0.0, 2.0);
      p = {as_column(probs)};
      f = [alpha, fr](const ParamList& q) { return ob::adversarial_removal_terms(fr, to_vec(q[0]), alpha); };
      an = {as_column(ob::adversarial_penalty_grad(probs, alpha))};
      return true;
    });
    out.push_back(r);
  }
  {
    // The adversarial term pulled back through a discriminator softmax to its logits.
    CheckResult r{"adversarial_term_logits"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      const std::size_t n = 1 + g.below(8);
      const int target = static_cast<int>(g.below(2));
      const double alpha = g.uniform(0.1, 5.0);
      p = {random_matrix(g, n, 2, -3, 3)};
      const Matrix prob = rowwise_softmax(p[0]);
      std::vector<double> ps(n);
      for (std::size_t i = 0; i < n; ++i) {
        ps[i] = prob(i, static_cast<std::size_t>(target));
        if (std::fabs(ps[i] - ob::kAdversarialTarget) < 1e-3) return false;
      }
      f = [alpha, target, n](const ParamList& q) {
        const Matrix pr = rowwise_softmax(q[0]);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = pr(i, static_cast<std::size_t>(target));
        return ob::adversarial_removal_terms(0.0, v, alpha);
      };
      const auto dps = ob::adversarial_penalty_grad(ps, alpha);
      Matrix d(n, 2);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k)
          d(i, k) = dps[i] * ps[i] * ((static_cast<int>(k) == target ? 1.0 : 0.0) - prob(i, k));
      an = {d};
      return true;
    });
    out.push_back(r);
  }
  {
    CheckResult r{"mlp_backward"};
    run_checks(r, instances, rng, [](Rng& g, ParamList& p, ScalarFunction& f, Gradient& an) {
      models::MlpSpec spec;
      spec.layer_sizes = {2 + g.below(4), 2 + g.below(5), 2 + g.below(5), 1 + g.below(3)};
      const auto base = models::Mlp::init(spec, g.next_u64());
      const std::size_t n = 2 + g.below(5);
      const Matrix x = random_matrix(g, n, spec.layer_sizes.front(), -2, 2);
      const auto y = random_ints(g, n * spec.layer_sizes.back(), 2);
      // Rectifier kinks: skip instances with a pre-activation near zero.
      models::Mlp::Cache cache;
      const Matrix logits = base.forward(x, cache);
      for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
        for (double v : cache.pre[l].data())
          if (std::fabs(v) < 1e-4) return false;
      p = base.params();
      f = [spec, x, y](const ParamList& q) {
        const models::Mlp m(spec, q);
        return ob::weighted_bce_logits_per_sample(m.forward(x), y, 1.0).mean();
      };
      const auto ps = ob::weighted_bce_logits_per_sample(logits, y, 1.0);
      an = base.backward(cache, ob::combine_rows(ps.grad, uniform_coeff(n)));
      return true;
    });
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> penalty_oracle_suite(std::uint64_t seed, std::size_t batches) {
  Rng rng(seed);
  CheckResult eo{"eq_odds_penalty", batches, 0.0}, di{"disparate_impact_penalty", batches, 0.0};
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t n = 2 + rng.below(200);
    const auto a = random_groups(rng, n);
    const auto y = random_ints(rng, n, 2);
    const auto p = testing::random_vector(rng, n, 0.0, 1.0);
    eo.worst = std::max(eo.worst, std::fabs(ob::eq_odds_penalty({p, y, a}) - oracle::eq_odds(p, y, a)));
    di.worst = std::max(di.worst, std::fabs(ob::disparate_impact_penalty(p, a) - oracle::disparate_impact(p, a)));
  }
  return {eo, di};
}

}  // namespace fairlab::suites

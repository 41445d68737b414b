#include <cmath>
#include <set>
#include <sstream>

#include <doctest.h>

#include "fairlab/dataio.hpp"
#include "fairlab/error.hpp"
#include "fairlab/metrics.hpp"
#include "support.hpp"

using namespace fairlab;
using namespace fairlab::data;

namespace {

std::string message_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    read_csv(in, {}, "bad.csv");
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

std::set<int> ids_in(const Dataset& d, Split s) {
  const auto v = d.identities(s);
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("empty splits give an empty valid dataset") {
  auto spec = default_classification_spec(5, 2, 1, 1);
  const Dataset d = generate_classification(spec);
  CHECK(d.size() == 0);
  CHECK(d.dim() == 5);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("classification generator is a pure function of spec and seed") {
  const Dataset a = testing::small_classification(100, 50, 3), b = testing::small_classification(100, 50, 3);
  const Dataset c = testing::small_classification(100, 50, 4);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.indices(Split::Train).size() == 100);
  CHECK(a.indices(Split::Test).size() == 50);
  CHECK(a.has_g());
}

TEST_CASE("symmetric spec gives group means within 3 sigma / sqrt(N)") {
  auto spec = default_classification_spec(4, 2.0, 0.0, 1.0);
  spec.group_proportions = {0.5, 0.5};
  spec.n_train = 4000;
  spec.seed = 17;
  const Dataset d = generate_classification(spec);
  for (std::size_t k = 0; k < d.dim(); ++k) {
    double s[2] = {0, 0}, n[2] = {0, 0};
    for (std::size_t i = 0; i < d.size(); ++i) {
      s[d.a[i]] += d.x(i, k);
      n[d.a[i]] += 1;
    }
    // The difference of two means has sd sigma * sqrt(1/n0 + 1/n1); per-component spread adds the class term.
    const double sd = std::sqrt(1.0 + 1.0) * std::sqrt(1.0 / n[0] + 1.0 / n[1]);
    CHECK(std::fabs(s[0] / n[0] - s[1] / n[1]) < 3 * sd);
  }
}

TEST_CASE("label noise makes the noisier group's labels disagree more with the clean class") {
  auto spec = default_classification_spec(3, 6.0, 0.0, 0.5);
  spec.label_noise = {0.0, 0.3};
  spec.n_train = 4000;
  spec.seed = 2;
  const Dataset d = generate_classification(spec);
  double wrong[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int clean = d.x(i, 0) > 0 ? 1 : 0;
    wrong[d.a[i]] += clean != d.label(i);
    n[d.a[i]] += 1;
  }
  CHECK(wrong[0] / n[0] < 0.01);
  CHECK(std::fabs(wrong[1] / n[1] - 0.3) < 0.04);
}

TEST_CASE("synthetic spec validation") {
  auto spec = default_classification_spec(4, 2, 1, 1);
  spec.group_proportions = {0.5, 0.6};
  CHECK_THROWS_AS(generate_classification(spec), DataError);
  spec = default_classification_spec(4, 2, 1, 1);
  spec.covariances[3](0, 0) = -1.0;
  CHECK_THROWS_AS(generate_classification(spec), DataError);
  CHECK_THROWS_AS(default_classification_spec(2, 2, 1, 1), DataError);
}

TEST_CASE("retrieval train and test identities are always disjoint") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto spec = testing::small_retrieval_spec(seed);
    spec.identities = 2 + seed % 40;
    spec.images_per_identity = 5 + seed % 4;
    const Dataset d = generate_retrieval(spec);
    const auto tr = ids_in(d, Split::Train), te = ids_in(d, Split::Test), va = ids_in(d, Split::Val);
    for (int id : te) CHECK_FALSE(tr.contains(id));
    for (int id : va) CHECK(tr.contains(id));
    CHECK_FALSE(tr.empty());
    CHECK_FALSE(te.empty());
  }
}

TEST_CASE("retrieval with two far-apart identities gives perfect rank-1") {
  RetrievalSpec spec;
  spec.dim = 4;
  spec.identities = 2;
  spec.images_per_identity = 6;
  spec.center_scale = 100.0;
  spec.spread = {0.01, 0.01};
  spec.test_identity_fraction = 0.5;
  spec.val_per_identity = 0;
  spec.seed = 1;
  const Dataset d = generate_retrieval(spec);
  // Gallery: the first image of every identity in the whole set; probes the rest.
  std::vector<std::size_t> gal, pro;
  std::set<int> seen;
  for (std::size_t i = 0; i < d.size(); ++i) (seen.insert(d.y[i]).second ? gal : pro).push_back(i);
  std::vector<int> gid, pid, pa;
  for (auto i : gal) gid.push_back(d.y[i]);
  for (auto i : pro) {
    pid.push_back(d.y[i]);
    pa.push_back(d.a[i]);
  }
  const auto r = metrics::rank1_accuracy(d.x.gather_rows(gal), gid, d.x.gather_rows(pro), pid, pa);
  CHECK(r.overall == 1.0);
}

TEST_CASE("retrieval split membership is reproducible") {
  auto spec = testing::small_retrieval_spec(5);
  spec.identities = 50;
  CHECK(generate_retrieval(spec) == generate_retrieval(spec));
}

TEST_CASE("retrieval assigns the requested share of a = 1 identities") {
  auto spec = testing::small_retrieval_spec(6);
  spec.identities = 100;
  spec.p_a1 = 0.6;
  spec.test_identity_fraction = 0.3;
  const Dataset d = generate_retrieval(spec);
  for (Split s : {Split::Train, Split::Test}) {
    std::set<int> all, ones;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.split[i] == s) {
        all.insert(d.y[i]);
        if (d.a[i] == 1) ones.insert(d.y[i]);
      }
    CHECK(ones.size() == static_cast<std::size_t>(std::lround(0.6 * static_cast<double>(all.size()))));
  }
}

TEST_CASE("retrieval spec errors") {
  auto spec = testing::small_retrieval_spec(1);
  spec.identities = 1;
  CHECK_THROWS_AS(generate_retrieval(spec), DataError);
  spec = testing::small_retrieval_spec(1);
  spec.images_per_identity = 1;
  CHECK_THROWS_AS(generate_retrieval(spec), DataError);
  spec = testing::small_retrieval_spec(1);
  spec.images_per_identity = 4;
  spec.val_per_identity = 4;
  CHECK_THROWS_AS(generate_retrieval(spec), DataError);
}

TEST_CASE("gerrymander scenario marginals are balanced") {
  const Dataset d = generate_gerrymander_scenario(1);
  CHECK(d == generate_gerrymander_scenario(1));
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    long sa = 0, sg = 0, n = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.split[i] == s) {
        sa += d.a[i] ? 1 : -1;
        sg += d.g[i] ? 1 : -1;
        ++n;
      }
    CHECK(n == 400);
    CHECK(std::abs(sa) <= 1);
    CHECK(std::abs(sg) <= 1);
  }
}

TEST_CASE("holdout carving is stratified and deterministic") {
  const Dataset d = testing::small_classification(200, 50, 1);
  const Dataset h = carve_holdout(d, 0.1, 9);
  CHECK(h == carve_holdout(d, 0.1, 9));
  std::size_t per[2] = {0, 0}, train_per[2] = {0, 0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.split[i] == Split::Train) ++train_per[d.a[i]];
    if (h.split[i] == Split::Holdout) {
      ++per[h.a[i]];
      CHECK(d.split[i] == Split::Train);
    }
    if (d.split[i] != Split::Train) CHECK(h.split[i] == d.split[i]);
  }
  for (int g = 0; g < 2; ++g) CHECK(per[g] == train_per[g] / 10);
  CHECK_THROWS_AS(carve_holdout(d, 0.0, 1), DataError);
  CHECK_THROWS_AS(carve_holdout(d, 0.001, 1), DataError);
}

TEST_CASE("CSV round-trip is exact for every dataset kind") {
  auto multi = testing::small_classification(30, 10, 2);
  multi.num_tasks = 2;
  multi.y.clear();
  Rng rng(3);
  for (std::size_t i = 0; i < multi.size() * 2; ++i) multi.y.push_back(static_cast<int>(rng.below(2)));
  auto no_g = testing::small_classification(20, 0, 3);
  no_g.g.clear();
  for (const Dataset& d : {testing::small_classification(40, 20, 1), multi, no_g,
                           generate_retrieval(testing::small_retrieval_spec(2)), generate_gerrymander_scenario(4)}) {
    std::stringstream s;
    write_csv(d, s);
    const Dataset back = read_csv(s);
    CHECK(back == d);
    std::stringstream s2;
    write_csv(back, s2);
    CHECK(s2.str() == s.str());
  }
}

TEST_CASE("CSV with a header and no rows is an empty dataset") {
  std::istringstream in("f0,f1,a,g,y,split\n");
  const Dataset d = read_csv(in);
  CHECK(d.size() == 0);
  CHECK(d.dim() == 2);
}

TEST_CASE("CSV errors name the file, row and column") {
  const std::string bad_a = message_of("f0,a,y,split\n0.5,0,1,train\n0.1,2,0,train\n");
  CHECK(bad_a.find("bad.csv") != std::string::npos);
  CHECK(bad_a.find("row 2") != std::string::npos);
  CHECK(bad_a.find("'a'") != std::string::npos);

  CHECK(message_of("f0,a,y,color\n").find("unknown column 'color'") != std::string::npos);
  CHECK(message_of("f0,y\n").find("'a'") != std::string::npos);
  CHECK(message_of("f0,a,y\n1,0\n").find("expected 3 fields") != std::string::npos);
  CHECK(message_of("f0,a,y\n,0,1\n").find("missing value") != std::string::npos);
  CHECK(message_of("f0,a,y\nabc,0,1\n").find("'f0'") != std::string::npos);
  CHECK(message_of("f0,a,y,split\n1,0,1,later\n").find("split") != std::string::npos);
  CHECK(message_of("").find("header") != std::string::npos);
}

TEST_CASE("CSV schema checks") {
  std::stringstream s;
  write_csv(testing::small_classification(5, 0, 1, 3), s);
  const std::string text = s.str();
  {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_csv(in, {4, std::nullopt, false}), DataError);
  }
  {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_csv(in, {std::nullopt, TaskKind::Identity, false}), DataError);
  }
  {
    std::istringstream in("f0,a,y\n1,0,1\n");
    CHECK_THROWS_AS(read_csv(in, {std::nullopt, std::nullopt, true}), DataError);
  }
}

TEST_CASE("dataset validation catches train/test identity overlap") {
  Dataset d = generate_retrieval(testing::small_retrieval_spec(1));
  const auto test_rows = d.indices(Split::Test);
  const auto train_rows = d.indices(Split::Train);
  d.y[test_rows[0]] = d.y[train_rows[0]];
  CHECK_THROWS_AS(d.validate(), DataError);
}

TEST_CASE("split names round-trip") {
  for (Split s : {Split::Train, Split::Holdout, Split::Val, Split::Test}) CHECK(parse_split(to_string(s)) == s);
  CHECK_THROWS_AS(parse_split("dev"), DataError);
}

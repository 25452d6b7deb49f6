#include <doctest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "twoweight/explorer.hpp"
#include "twoweight/haar.hpp"

using namespace tw;

namespace {

Weight two_atoms(double ml, double mr) {
  return make_weight({{kPosDen / 6, ml}, {kPosDen / 6 * 4, mr}}, 1);
}

WeightedFunction random_f(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  WeightedFunction f(n);
  for (auto& v : f) v = N(rng);
  return f;
}

double coeff_norm2(const HaarCoefficients& c, double root_mass) {
  double s = c.root_mean * c.root_mean * root_mass;
  for (const auto& [I, v] : c.coeffs) s += v * v;
  return s;
}

}  // namespace

TEST_CASE("haar function examples") {
  const auto sym = two_atoms(0.5, 0.5);
  const auto h = haar_function(sym, root_interval());
  CHECK(h[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(h[1] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(norm(sym, h) == doctest::Approx(1.0).epsilon(1e-15));

  const auto asym = two_atoms(1.0, 3.0);
  const auto g = haar_function(asym, root_interval());
  CHECK(std::abs(g[0] - std::sqrt(3.0) / 2.0) < 1e-15);
  CHECK(std::abs(g[1] + 1.0 / (2.0 * std::sqrt(3.0))) < 1e-15);
  CHECK(std::abs(1.0 * g[0] * g[0] + 3.0 * g[1] * g[1] - 1.0) < 1e-15);

  CHECK_THROWS_AS(haar_function(make_weight({{kPosDen / 6, 1.0}}, 1), root_interval()), UndefinedHaar);
}

TEST_CASE("haar functions are orthonormal with zero mean") {
  std::mt19937_64 rng(5);
  for (int D : {3, 6, 8}) {
    const auto w = oracle::random_multi_atoms(D, 3, 0, rng);
    const MeasureIndex idx(w, D);
    std::vector<std::pair<DyadicInterval, WeightedFunction>> hs;
    for (const auto& I : build_tree(D).intervals())
      if (I.level < D && idx.haar_defined(I)) hs.emplace_back(I, haar_function(w, I));
    const WeightedFunction one(w.size(), 1.0);
    for (std::size_t a = 0; a < hs.size(); ++a) {
      CHECK(std::abs(inner(w, hs[a].second, one)) <= 1e-12);
      for (std::size_t b = a; b < hs.size(); ++b) {
        const double ip = inner(w, hs[a].second, hs[b].second);
        CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("analysis of constants and of a single haar function") {
  const auto tree = build_tree(5);
  const auto w = generate_weight(WeightFamilySpec::parse("random_masses", Side::sigma), tree, 2);
  const auto c = analyze(w, WeightedFunction(w.size(), 2.5), tree);
  CHECK(c.root_mean == doctest::Approx(2.5).epsilon(1e-15));
  for (const auto& [I, v] : c.coeffs) CHECK(std::abs(v) < 1e-13);

  const MeasureIndex idx(w, 5);
  for (const auto& I : tree.intervals()) {
    if (I.level == 5 || !idx.haar_defined(I)) continue;
    const auto h = haar_function(w, I);
    const auto ch = analyze(w, h, tree);
    CHECK(std::abs(ch.root_mean) < 1e-13);
    for (const auto& [K, v] : ch.coeffs) CHECK(std::abs(v - (K == I ? 1.0 : 0.0)) < 1e-12);
  }
}

TEST_CASE("parseval and reconstruction on random weights") {
  std::mt19937_64 rng(17);
  for (int D : {2, 4, 7, 10, 12}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto w = oracle::random_multi_atoms(D, 1, trial % 2, rng, 0.4);
      const auto f = random_f(w.size(), rng);
      const auto tree = build_tree(D);
      const auto c = analyze(w, f, tree);
      double f2 = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) f2 += w.atoms[i].mass * f[i] * f[i];
      CHECK(std::abs(coeff_norm2(c, oracle::mass_in(w, root_interval())) - f2) <= 1e-10 * f2);
      const auto g = synthesize(w, c, tree);
      double e2 = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) e2 += w.atoms[i].mass * (f[i] - g[i]) * (f[i] - g[i]);
      CHECK(std::sqrt(e2) <= 1e-10 * std::sqrt(f2));
    }
  }
}

TEST_CASE("martingale differences telescope and have zero mean") {
  std::mt19937_64 rng(23);
  const int D = 6;
  const auto tree = build_tree(D);
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = oracle::random_multi_atoms(D, 1, 1, rng, 0.5);
    const auto f = random_f(w.size(), rng);
    for (const auto& v : martingale_difference(w, WeightedFunction(w.size(), -3.0), root_interval())) CHECK(std::abs(v) <= 1e-14);
    double total = 0.0, avg = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      total += w.atoms[i].mass;
      avg += w.atoms[i].mass * f[i];
    }
    avg /= total;
    WeightedFunction sum(w.size(), avg);
    const auto c = analyze(w, f, tree);
    const MeasureIndex idx(w, D);
    for (const auto& I : tree.intervals()) {
      if (I.level == D) continue;
      const auto d = martingale_difference(w, f, I);
      double mean = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        sum[i] += d[i];
        mean += w.atoms[i].mass * d[i];
      }
      CHECK(std::abs(mean) <= 1e-12);
      if (idx.haar_defined(I)) {
        const auto h = haar_function(w, I);
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(d[i] - c.coeffs.at(I) * h[i]) <= 1e-11);
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(sum[i] - f[i]) <= 1e-11);
  }
}

TEST_CASE("haar child averages obey the Cauchy-Schwarz bound") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int D = 3 + trial % 6;
    const auto w = oracle::random_multi_atoms(D, 3, 0, rng, 0.3);
    const MeasureIndex idx(w, D);
    for (const auto& I : build_tree(D).intervals()) {
      if (I.level == D || !idx.haar_defined(I)) continue;
      const auto h = haar_function(w, I);
      for (bool right : {false, true}) {
        const auto C = I.child(right);
        double m = 0.0, s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i)
          if (C.contains(w.atoms[i].pos)) {
            m += w.atoms[i].mass;
            s += w.atoms[i].mass * h[i];
          }
        CHECK(std::abs(s / m) * std::sqrt(m) <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("good projection") {
  std::mt19937_64 rng(41);
  const int D = 8;
  const auto tree = build_tree(D);
  const auto w = generate_weight(WeightFamilySpec::parse("random_masses", Side::sigma), tree, 4);
  const double root_mass = oracle::mass_in(w, root_interval());
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = analyze(w, random_f(w.size(), rng), tree);
    // r = D leaves no interval with a qualifying ancestor, so every interval is good
    const auto all = project_good(c, {0.45, D}, tree);
    CHECK(all.coeffs.size() == c.coeffs.size());
    const auto p = project_good(c, {0.2, 2}, tree);
    const auto pp = project_good(p, {0.2, 2}, tree);
    CHECK(pp.coeffs == p.coeffs);
    CHECK(coeff_norm2(p, root_mass) <= coeff_norm2(c, root_mass) * (1 + 1e-14));
    for (const auto& [I, v] : p.coeffs)
      if (v != 0.0) CHECK(oracle::good(I, 0.2, 2));
  }
}

TEST_CASE("haar axioms helper") {
  std::mt19937_64 rng(3);
  for (int D = 2; D <= 10; ++D) {
    const auto w = oracle::random_multi_atoms(D, 1, 0, rng);
    const auto ax = haar_axioms(w, D, random_f(w.size(), rng));
    CHECK(ax.orthonormality <= 1e-12);
    CHECK(ax.parseval <= 1e-10);
    CHECK(ax.reconstruction <= 1e-10);
    CHECK(ax.haar_bound <= 1.0 + 1e-12);
  }
}

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracle.hpp"
#include "twoweight/explorer.hpp"

using namespace tw;

namespace {

WeightPair random_pair(int D, std::uint64_t seed, const char* sf = "random_masses", const char* wf = "random_masses") {
  return generate_pair(WeightFamilySpec::parse(sf, Side::sigma), WeightFamilySpec::parse(wf, Side::w), build_tree(D),
                       seed);
}

WeightPair multi_pair(int D, std::mt19937_64& rng) {
  return {oracle::random_multi_atoms(D, 2, 0, rng, 0.1), oracle::random_multi_atoms(D, 4, 1, rng, 0.1)};
}

}  // namespace

TEST_CASE("Dini profile") {
  const auto p = DiniProfile::from_epsilon(0.2, 0);
  double s = 0.0;
  for (int k = 1; k < 4000; ++k) {
    CHECK(p.psi(k + 1) < p.psi(k));
    s += p.psi(k);
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(DiniProfile::from_epsilon(0.0, 0), ConfigError);
}

TEST_CASE("energy constant: exhaustive partitions") {
  std::mt19937_64 rng(31);
  for (int D = 1; D <= 4; ++D)
    for (int k = 0; k < 3; ++k) {
      const auto p = multi_pair(D, rng);
      const PairContext ctx(p, D, {0.2, 2});
      CHECK(energy_constant(ctx) == doctest::Approx(oracle::energy_oracle(p, D)).epsilon(1e-12));
    }
  // one atom per leaf: leaf cells carry no energy
  const auto p = random_pair(3, 2);
  CHECK(energy_constant(PairContext(p, 3, {0.2, 2})) == doctest::Approx(oracle::energy_oracle(p, 3)).epsilon(1e-12));
  CHECK(energy_constant(PairContext({Weight{}, p.w}, 3, {0.2, 2})) == 0.0);
}

TEST_CASE("energy constant dominates random partitions") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const int D = 6;
  const auto p = multi_pair(D, rng);
  const double E = energy_constant(PairContext(p, D, {0.2, 2}));
  const double m = p.sigma.total_mass();
  for (int k = 0; k < 100; ++k) {
    std::vector<DyadicInterval> part;
    std::function<void(const DyadicInterval&)> split = [&](const DyadicInterval& I) {
      if (I.level == D || U(rng) < 0.3) {
        part.push_back(I);
        return;
      }
      split(I.left_child());
      split(I.right_child());
    };
    split(root_interval());
    double s = 0.0;
    for (const auto& K : part) s += oracle::cell(p, root_interval(), nullptr, K);
    CHECK(s / m <= E * E * (1 + 1e-12));
  }
}

TEST_CASE("Dini functional: exhaustive oracle at depth 5") {
  // depth 5 is the first depth with a nonzero functional at eps = 0.45, r = 2; S = [0,1) is left to the DP
  std::mt19937_64 rng(33);
  const double eps = 0.45;
  const int r = 2, D = 5;
  const auto prof = DiniProfile::from_epsilon(eps, 0);
  int nonzero = 0;
  for (int k = 0; k < 2; ++k) {
    const auto p = multi_pair(D, rng);
    const PairContext ctx(p, D, {eps, r});
    double best = 0.0;
    for (const auto& I0 : build_tree(1).intervals()) {
      const auto table = dini_table(ctx, I0, prof);
      for (const auto& S : build_tree(D).intervals()) {
        if (!I0.contains(S) || S.level == 0) continue;
        const double o = oracle::dini_oracle(p, D, eps, r, I0, S);
        CHECK(table[S.id()] == doctest::Approx(o).epsilon(1e-12));
        CHECK(dini_functional(ctx, I0, S, prof) == table[S.id()]);
        nonzero += o > 0;
      }
      const double m = oracle::mass_in(p.sigma, I0);
      if (m > 0) best = std::max(best, table[I0.id()] / m);
    }
    CHECK(dini_constant(ctx, prof) >= std::sqrt(best) * (1 - 1e-12));
  }
  MESSAGE("Dini oracle: " << nonzero << " nonzero (I0, S) values");
  CHECK(nonzero > 0);
}

TEST_CASE("Dini functional: zero cases, monotonicity in S, homogeneity") {
  std::mt19937_64 rng(34);
  const auto prof = DiniProfile::from_epsilon(0.45, 0);
  const int D = 6;
  const auto p = multi_pair(D, rng);
  const PairContext ctx(p, D, {0.45, 2});
  CHECK(dini_functional(ctx, root_interval(), {5, 3}, prof) == 0.0);
  CHECK(dini_constant(PairContext({p.sigma, make_weight({{5 * (kPosDen >> D) + 1, 2.0}}, D)}, D, {0.45, 2}),
                      prof) == 0.0);
  CHECK(dini_constant(PairContext({p.sigma, Weight{}}, D, {0.45, 2}), prof) == 0.0);
  CHECK_THROWS_AS(dini_functional(ctx, {1, 0}, {2, 3}, prof), DomainError);

  for (const auto& I0 : build_tree(2).intervals()) {
    const auto t = dini_table(ctx, I0, prof);
    for (const auto& S : build_tree(D).intervals())
      if (I0.contains(S) && S != I0) CHECK(t[S.id()] <= t[S.parent().id()] * (1 + 1e-12));
  }
  const double base = dini_constant(ctx, prof);
  CHECK(base > 0.0);
  const PairContext w3({p.sigma, p.w.scaled(3.0)}, D, {0.45, 2});
  CHECK(dini_constant(w3, prof) == doctest::Approx(std::sqrt(3.0) * base).epsilon(1e-12));
  const PairContext s5({p.sigma.scaled(5.0), p.w}, D, {0.45, 2});
  CHECK(dini_constant(s5, prof) == doctest::Approx(std::sqrt(5.0) * base).epsilon(1e-12));
}

TEST_CASE("homogeneity of the constants") {
  const auto p = random_pair(5, 7);
  const WeightPair q{p.sigma.scaled(2.0), p.w.scaled(2.0)};
  const PairContext a(p, 5, {0.2, 2}), b(q, 5, {0.2, 2});
  CHECK(a2_constant(q, {.depth = 5}) == doctest::Approx(4.0 * a2_constant(p, {.depth = 5})).epsilon(1e-12));
  const auto ha = testing_constants(p), hb = testing_constants(q);
  CHECK(hb.H == doctest::Approx(2.0 * ha.H).epsilon(1e-12));
  CHECK(hb.H_star == doctest::Approx(2.0 * ha.H_star).epsilon(1e-12));
  CHECK(weak_boundedness(b) == doctest::Approx(2.0 * weak_boundedness(a)).epsilon(1e-12));
  CHECK(energy_constant(b) == doctest::Approx(2.0 * energy_constant(a)).epsilon(1e-12));
}

TEST_CASE("functional energy: tiny closed form") {
  // r = 4, eps = 0.45 is the smallest setting where goodness is not vacuous
  const int D = 9;
  const GoodnessParams gp{0.45, 4};
  const DyadicInterval F{1, 0};
  std::vector<Atom> s_atoms{{leaf_atom_pos(100, D, Side::sigma), 2.0}, {leaf_atom_pos(400, D, Side::sigma), 1.5},
                            {leaf_atom_pos(3, D, Side::sigma), 0.7}};
  const Weight sigma = make_weight(s_atoms, D);
  StoppingForest forest(root_interval());
  forest.add(F, 0, 0.0);
  // find a J* of F with an empty w and place two atoms in it
  const PairContext probe({sigma, Weight{}}, D, gp);
  const auto stars = j_star(probe, forest, 1);
  REQUIRE_FALSE(stars.empty());
  const auto J = stars.front();
  CHECK(oracle::good(J, gp.epsilon, gp.r));
  const Pos third = (J.right() - J.left()) / 3;
  const double m1 = 0.8, m2 = 2.5;
  const Weight w = make_weight({{J.left() + third, m1}, {J.left() + 2 * third, m2}}, D);
  const PairContext ctx({sigma, w}, D, gp);
  const std::vector<double> f{1.0, 3.0, 2.0};
  const double P = oracle::poisson(sigma, oracle::lo_of(J), oracle::hi_of(J), [&](double x) { return x >= 0.5; });
  // atoms sort by position, so f = 2 on the one atom outside F
  const double Pf = 2.0 * P;
  const double expect = Pf * (1.0 / 3.0) * std::sqrt(m1 * m2 / (m1 + m2)) / norm(sigma, f);
  CHECK(functional_energy(ctx, f, forest) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(functional_energy(ctx, {0, 0, 0}, forest), DomainError);
  // nothing good below any node
  const PairContext flat({sigma, w}, D, {0.2, 2});
  CHECK(functional_energy(flat, f, forest) == 0.0);
}

TEST_CASE("functional energy dominates sampled admissible g") {
  const int D = 9;
  const GoodnessParams gp{0.45, 4};
  const DyadicInterval F{1, 1};
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> U(0.1, 2.0);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<Atom> sa;
  for (std::int64_t k = 0; k < 512; k += 9) sa.push_back({leaf_atom_pos(k, D, Side::sigma), U(rng)});
  const Weight sigma = make_weight(sa, D);
  StoppingForest forest(root_interval());
  const int node = forest.add(F, 0, 0.0);
  const PairContext probe({sigma, Weight{}}, D, gp);
  const auto stars = j_star(probe, forest, node);
  REQUIRE(stars.size() >= 2);
  std::vector<Atom> wa;
  for (const auto& J : {stars[0], stars[1]}) {
    const Pos step = (J.right() - J.left()) / 24;
    for (int k = 1; k < 24; k += 4) wa.push_back({J.left() + k * step + step / 3, U(rng)});
  }
  const Weight w = make_weight(wa, D);
  const PairContext ctx({sigma, w}, D, gp);
  std::vector<double> f(sigma.size());
  for (auto& x : f) x = U(rng);
  const double val = functional_energy(ctx, f, forest) * norm(sigma, f);
  CHECK(val > 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> g(w.size(), 0.0);
    double lhs = 0.0;
    for (const auto& J : {stars[0], stars[1]}) {
      double m = 0.0, s = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j)
        if (J.contains(w.atoms[j].pos)) {
          g[j] = N(rng);
          m += w.atoms[j].mass;
          s += w.atoms[j].mass * g[j];
        }
      for (std::size_t j = 0; j < w.size(); ++j)
        if (J.contains(w.atoms[j].pos)) g[j] -= s / m;
      double Pf = 0.0;
      for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double x = oracle::x_of(sigma.atoms[i]);
        if (x >= oracle::lo_of(F) && x < oracle::hi_of(F)) continue;
        const double d = oracle::dist_pt(x, oracle::lo_of(J), oracle::hi_of(J)), L = J.length();
        Pf += sigma.atoms[i].mass * f[i] * L / ((L + d) * (L + d));
      }
      for (std::size_t j = 0; j < w.size(); ++j)
        if (J.contains(w.atoms[j].pos)) lhs += w.atoms[j].mass * g[j] * Pf * (oracle::x_of(w.atoms[j]) - oracle::lo_of(J)) / J.length();
    }
    CHECK(std::abs(lhs) <= val * norm(w, g) * (1 + 1e-10));
  }
}

TEST_CASE("bounded fluctuation: budget, empty w, sampling") {
  const int D = 3;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto p = random_pair(D, seed);
    const PairContext ctx(p, D, {0.2, 2});
    const StoppingForest forest(root_interval());
    double prev = 0.0;
    for (int budget : {10, 50, 200, 800}) {
      const double v = bounded_fluctuation_constant(ctx, 0, forest, {.budget = budget, .restarts = 4, .seed = seed});
      CHECK(v >= prev * (1 - 1e-12));
      prev = v;
    }
    std::mt19937_64 rng(seed);
    double sampled = 0.0;
    for (int k = 0; k < 200000; ++k) {
      const auto f = sample_bounded_fluctuation(ctx.sigma(), root_interval(), forest, rng,
                                                k % 2 ? BfShape::vertex : BfShape::uniform);
      sampled = std::max(sampled, bounded_fluctuation_ratio(ctx, 0, forest, f));
    }
    MESSAGE("BF seed " << seed << ": search " << prev << ", best of 2e5 samples " << sampled);
    CHECK(prev >= sampled * (1 - 1e-6));
    CHECK(bounded_fluctuation_constant(PairContext({p.sigma, Weight{}}, D, {0.2, 2}), 0, forest) == 0.0);
  }
}

TEST_CASE("doubling energy floor") {
  const auto tree = build_tree(8);
  const auto u = generate_weight(WeightFamilySpec::parse("uniform", Side::sigma), tree, 1);
  CHECK(doubling_energy_floor(u, 8) > 0.0);
  const Weight one = make_weight({{leaf_atom_pos(3, 8, Side::sigma), 1.0}}, 8);
  CHECK(doubling_energy_floor(one, 8) == 0.0);
  const auto c = generate_weight(WeightFamilySpec::parse("cantor", Side::sigma), tree, 1);
  CHECK(doubling_energy_floor(c, 8) > 0.0);
  CHECK(doubling_energy_floor(Weight{}, 8) == -1.0);
  for (double cc : {0.05, 0.1, 0.2, 0.25})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto d = generate_weight(WeightFamilySpec::parse("doubling(" + std::to_string(cc) + ")", Side::sigma),
                                     tree, seed);
      double scan = 1e300;
      for (const auto& I : tree.intervals())
        if (I.level < 8 && oracle::mass_in(d, I) > 0)
          scan = std::min(scan, std::sqrt(oracle::energy2(d, oracle::lo_of(I), oracle::hi_of(I))));
      CHECK(doubling_energy_floor(d, 8) == doctest::Approx(scan).epsilon(1e-12));
      CHECK(scan >= cc / 4.0);
    }
}

TEST_CASE("inequality suite") {
  const WeightPair p{make_weight({{kPosDen / 3, 4.0}}, 1), make_weight({{2 * kPosDen / 3, 9.0}}, 1)};
  const PairContext ctx(p, 1, {0.2, 2});
  const auto [c, ratios] = theorem_inequality_suite(ctx, {.samples = 4, .bf_budget = 20, .seed = 1});
  CHECK(c.B_norm == doctest::Approx(18.0).epsilon(1e-13));
  for (const auto& [name, v] : c.fields()) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(c.provenance.count(name) == 1);
  }
  for (const auto& [name, v] : ratios.fields()) CHECK(std::isfinite(v));

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const PairContext cx(random_pair(5, seed), 5, {0.2, 2});
    const auto [cc, rr] = theorem_inequality_suite(cx, {.samples = 4, .bf_budget = 40, .seed = seed});
    for (const auto& [name, v] : cc.fields()) CHECK(std::isfinite(v));
    for (const auto& [name, v] : rr.fields()) CHECK(std::isfinite(v));
    CHECK(cc.B_sub_norm <= cc.B_norm * 10);
  }
}

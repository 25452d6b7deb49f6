#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "oracle.hpp"
#include "twoweight/constants.hpp"
#include "twoweight/explorer.hpp"

using namespace tw;

namespace {

Weight leaf_weight(const std::vector<double>& masses, int D, Side side) {
  std::vector<Atom> atoms;
  for (std::size_t k = 0; k < masses.size(); ++k)
    if (masses[k] > 0) atoms.push_back({leaf_atom_pos(static_cast<std::int64_t>(k), D, side), masses[k]});
  return make_weight(atoms, D);
}

WeightPair random_pair(int D, std::uint64_t seed, const char* sf = "random_masses", const char* wf = "random_masses") {
  return generate_pair(WeightFamilySpec::parse(sf, Side::sigma), WeightFamilySpec::parse(wf, Side::w), build_tree(D),
                       seed);
}

std::set<DyadicInterval> as_set(const StoppingForest& F) {
  const auto v = F.intervals();
  return {v.begin(), v.end()};
}

std::vector<double> spiky(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> E(1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> f(n);
  for (auto& x : f) x = U(rng) < 0.15 ? 30.0 * E(rng) : E(rng);
  return f;
}

// Smallest forest interval containing J, by scanning.
DyadicInterval parent_scan(const StoppingForest& forest, const DyadicInterval& J) {
  DyadicInterval best = forest.root();
  for (const auto& F : forest.intervals())
    if (F.contains(J) && F.level > best.level) best = F;
  return best;
}

}  // namespace

TEST_CASE("CZ stopping examples") {
  const int D = 2;
  const auto s = leaf_weight({0.7, 0.1, 0.1, 0.1}, D, Side::sigma);
  const MeasureIndex idx(s, D);
  const std::vector<double> f{0, 0, 0, 10};
  const auto forest = f_stopping_tree(idx, f, root_interval());
  CHECK(as_set(forest) == std::set<DyadicInterval>{{0, 0}, {1, 1}});
  CHECK(as_set(forest) == oracle::cz_forest(s, f, root_interval(), D));
  CHECK(forest.node(0).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(forest.node(1).value == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(forest.node(1).generation == 1);
  CHECK(quasi_orthogonality(forest, idx, f) == doctest::Approx(0.6).epsilon(1e-14));

  const auto u = leaf_weight({1, 1, 1, 1}, D, Side::sigma);
  const std::vector<double> g{1, 1, 1, 9};
  const MeasureIndex ui(u, D);
  CHECK(as_set(f_stopping_tree(ui, g, root_interval())) == std::set<DyadicInterval>{{0, 0}});
  CHECK(as_set(f_stopping_tree(ui, g, root_interval())) == oracle::cz_forest(u, g, root_interval(), D));

  const std::vector<double> c(4, 2.5);
  const auto flat = f_stopping_tree(ui, c, root_interval());
  CHECK(flat.size() == 1u);
  CHECK(quasi_orthogonality(flat, ui, c) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("CZ stopping against the brute-force scan") {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const int D = 3 + static_cast<int>(seed % 5);
    const auto s = generate_weight(WeightFamilySpec::parse(seed % 3 ? "random_masses" : "uniform", Side::sigma),
                                   build_tree(D), seed);
    const MeasureIndex idx(s, D);
    auto f = spiky(s.size(), rng);
    if (seed % 4 == 0)
      for (auto& x : f) x = -x;
    const auto forest = f_stopping_tree(idx, f, root_interval());
    CHECK(forest.is_grid());
    CHECK(as_set(forest) == oracle::cz_forest(s, f, root_interval(), D));
    for (std::size_t k = 1; k < forest.size(); ++k) {
      const auto& n = forest.node(static_cast<int>(k));
      const auto G = forest.node(n.parent).interval;
      CHECK(oracle::avg_abs(s, f, n.interval) > 4.0 * oracle::avg_abs(s, f, G));
      if (n.interval.parent() != G) CHECK_FALSE(oracle::avg_abs(s, f, n.interval.parent()) > 4.0 * oracle::avg_abs(s, f, G));
      CHECK(n.generation == forest.node(n.parent).generation + 1);
    }
    worst = std::max(worst, quasi_orthogonality(forest, idx, f));
  }
  MESSAGE("quasi-orthogonality max over the sweep: " << worst);
  CHECK(worst <= 64.0);
}

TEST_CASE("corona classification") {
  const auto tree = build_tree(6);
  StoppingForest single(root_interval());
  CHECK(classify_pair(single, {0, 0}, {5, 3}) == CoronaClass::C_o);
  CHECK(classify_pair(single, {2, 1}, {6, 20}) == CoronaClass::C_o);

  StoppingForest two(root_interval());
  const int a = two.add({2, 1}, 0, 0.0);
  two.add({4, 5}, a, 0.0);
  two.add({3, 6}, 0, 0.0);
  // J sits in [5/16, 3/8); I_J = [0, 1/2) and [1/4, 3/8) both have a coarser stopping parent
  CHECK(classify_pair(two, {0, 0}, {5, 11}) == CoronaClass::C_sup);
  CHECK(classify_pair(two, {2, 1}, {5, 11}) == CoronaClass::C_sup);
  CHECK(classify_pair(two, {3, 2}, {5, 11}) == CoronaClass::C_o);
  CHECK(parent_scan(two, {5, 11}) == DyadicInterval{4, 5});

  StoppingForest half(DyadicInterval{1, 0});
  CHECK_THROWS_AS(classify_pair(half, {0, 0}, {3, 6}), DomainError);

  for (const auto& I : tree.intervals())
    for (const auto& J : tree.intervals()) {
      if (!compactly_inside(J, I, 3)) continue;
      const auto F = parent_scan(two, J);
      const auto FI = parent_scan(two, J.ancestor(I.level + 1));
      CHECK(two.node(two.parent_of(J)).interval == F);
      CHECK((classify_pair(two, I, J) == CoronaClass::C_o) == (F == FI));
    }
}

TEST_CASE("sub form against the term-by-term oracle") {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> N(0.0, 1.0);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const int D = 4 + static_cast<int>(seed % 2);
    const auto pair = random_pair(D, seed);
    const PairContext ctx(pair, D, {0.2, 2});
    std::vector<double> f(pair.sigma.size()), phi(pair.w.size());
    for (auto& x : f) x = N(rng);
    for (auto& x : phi) x = N(rng);
    double o = 0.0;
    for (const auto& I : build_tree(D).intervals())
      for (const auto& J : build_tree(D).intervals()) {
        if (!(I.contains(J) && J.level >= I.level + 2) || J.level == D) continue;
        const auto IJ = J.ancestor(I.level + 1);
        const auto dI = oracle::delta(pair.sigma, f, I);
        double e = 0.0;
        std::vector<double> in(pair.sigma.size(), 0.0);
        for (std::size_t i = 0; i < in.size(); ++i)
          if (IJ.contains(pair.sigma.atoms[i].pos)) {
            in[i] = 1.0;
            e = dI[i];
          }
        o += e * oracle::pairing(pair.sigma, in, pair.w, oracle::delta(pair.w, phi, J));
      }
    CHECK(std::abs(sub_form(ctx, f, phi) - o) <= 1e-10 * (1 + std::abs(o)));
  }
}

TEST_CASE("CZ corona split") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> N(0.0, 1.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int D = 5 + static_cast<int>(seed % 3);
    const auto pair = random_pair(D, seed);
    const PairContext ctx(pair, D, {0.2, 2});
    const auto f = spiky(pair.sigma.size(), rng);
    std::vector<double> phi(pair.w.size());
    for (auto& x : phi) x = N(rng);

    const auto flat = cz_corona_split(ctx, f, phi, StoppingForest(root_interval()));
    CHECK(flat.c_sup_pairs == 0u);
    REQUIRE(flat.parts.size() == 1u);
    CHECK(flat.parts[0].B1 == 0.0);
    CHECK(flat.parts[0].B2 == 0.0);
    CHECK(std::abs(flat.parts[0].B3 - flat.B_sub) <= 1e-9 * (1 + std::abs(flat.B_sub)));

    const auto forest = f_stopping_tree(ctx.sigma(), f, root_interval());
    for (bool filter : {false, true}) {
      const auto rep = cz_corona_split(ctx, f, phi, forest, {filter});
      CHECK(rep.residual <= 1e-9);
      CHECK(rep.projection_energy <= rep.phi_norm2 * (1 + 1e-12));
      CHECK(rep.projection_cross <= 1e-9);
      CHECK(rep.max_sigma_projections <= 2);
    }
  }
}

TEST_CASE("Dini stopping tree: degenerate cases") {
  const int D = 5;
  const auto pair = random_pair(D, 3);
  const PairContext ctx(pair, D, {0.45, 2});
  const auto prof = DiniProfile::from_epsilon(0.45, 0);
  CHECK_THROWS_AS(dini_stopping_tree(ctx, root_interval(), prof, -1.0), ConfigError);
  CHECK(dini_stopping_tree(ctx, root_interval(), prof, 0.0).size() == 1u);

  // w lives in the left half only
  std::vector<Atom> left;
  for (const auto& a : pair.w.atoms)
    if (a.pos < kPosDen / 2) left.push_back(a);
  const PairContext lctx({pair.sigma, make_weight(left, D)}, D, {0.45, 2});
  const auto t = dini_stopping_tree(lctx, {1, 1}, prof, 1e-9);
  CHECK(t.size() == 1u);
  CHECK(t.root() == DyadicInterval{1, 1});
}

TEST_CASE("Dini stopping tree: packing and the exhaustive oracle") {
  const auto prof = DiniProfile::from_epsilon(0.45, 0);
  int nontrivial = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const int D = seed % 2 ? 5 : 6;
    auto pair = random_pair(D, seed);
    pair.sigma = damp(pair.sigma, {1, static_cast<std::int64_t>(seed % 2)}, 1e-2);
    const PairContext ctx(pair, D, {0.45, 2});
    const double Psi = dini_constant(ctx, prof);
    DiniTreeReport rep;
    const auto tree = dini_stopping_tree(ctx, root_interval(), prof, Psi, &rep);
    CHECK(tree.is_grid());
    CHECK(rep.packing_ok);
    for (const auto& g : rep.generations) CHECK(g.children_mass <= g.bound + 1e-12);
    if (tree.size() > 1) ++nontrivial;
    // every S strictly inside a node, selected when maximal among those over the bar
    std::set<DyadicInterval> expect;
    std::function<void(const DyadicInterval&)> grow = [&](const DyadicInterval& I0) {
      expect.insert(I0);
      std::vector<DyadicInterval> hits;
      for (const auto& S : build_tree(D).intervals()) {
        if (!I0.contains(S) || S == I0) continue;
        const double m = oracle::mass_in(pair.sigma, S);
        if (m > 0 && dini_functional(ctx, I0, S, prof) > 4.0 * Psi * Psi * m) hits.push_back(S);
      }
      for (const auto& S : hits) {
        bool maximal = true;
        for (const auto& K : hits)
          if (K != S && K.contains(S)) maximal = false;
        if (maximal) grow(S);
      }
    };
    grow(root_interval());
    CHECK(as_set(tree) == expect);
  }
  MESSAGE("Dini trees with more than one node: " << nontrivial << " of 24");
  CHECK(nontrivial > 0);
}

TEST_CASE("stop-form split") {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> N(0.0, 1.0);
  const auto prof = DiniProfile::from_epsilon(0.45, 0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const int D = 6;
    auto pair = random_pair(D, seed);
    pair.sigma = damp(pair.sigma, {1, static_cast<std::int64_t>(seed % 2)}, 1e-2);
    const PairContext ctx(pair, D, {0.45, 2});
    const StoppingForest cz(root_interval());
    const double Psi = dini_constant(ctx, prof);
    const auto dini = dini_stopping_tree(ctx, root_interval(), prof, Psi);
    std::vector<double> phi(pair.w.size());
    for (auto& x : phi) x = N(rng);
    for (auto shape : {BfShape::uniform, BfShape::vertex}) {
      const auto f = sample_bounded_fluctuation(ctx.sigma(), root_interval(), cz, rng, shape);
      CHECK(fluctuation(ctx.sigma(), f, fluctuation_intervals(ctx.sigma(), root_interval(), cz)) <= 1.0 + 1e-12);
      const auto rep = stop_form_split(ctx, f, phi, root_interval(), cz, dini);
      CHECK(rep.residual <= 1e-9);
      CHECK(rep.max_bJ <= 2.0 + 1e-12);
      const auto flat = stop_form_split(ctx, f, phi, root_interval(), cz, StoppingForest(root_interval()));
      CHECK(flat.residual <= 1e-9);
      CHECK(flat.B_stop == doctest::Approx(rep.B_stop).epsilon(1e-12));
    }
  }
}

TEST_CASE("bounded-fluctuation reduction") {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> N(0.0, 1.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int D = 5;
    const auto pair = random_pair(D, seed);
    const PairContext ctx(pair, D, {0.2, 2});
    auto g0 = spiky(pair.sigma.size(), rng);
    const auto cz = f_stopping_tree(ctx.sigma(), g0, root_interval());
    std::vector<double> phi(pair.w.size());
    for (auto& x : phi) x = N(rng);
    for (const auto& F : cz.intervals()) {
      if (!ctx.sigma().massive(F)) continue;
      std::vector<double> f(pair.sigma.size(), 0.0);
      for (std::size_t i = 0; i < f.size(); ++i)
        if (F.contains(pair.sigma.atoms[i].pos)) f[i] = N(rng);
      const auto rep = bf_reduction_check(ctx, F, cz, f, phi);
      CHECK(rep.identity_residual <= 1e-9);
      CHECK(rep.telescoping_residual <= 1e-12 * (1 + rep.tail_sup));
      // zero sigma-mean on F; a single atom leaves z = 0 exactly
      double s = 0.0;
      int atoms = 0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        s += pair.sigma.atoms[i].mass * f[i];
        atoms += F.contains(pair.sigma.atoms[i].pos);
      }
      auto z = f;
      for (std::size_t i = 0; i < z.size(); ++i)
        if (F.contains(pair.sigma.atoms[i].pos)) z[i] = atoms == 1 ? 0.0 : z[i] - s / oracle::mass_in(pair.sigma, F);
      const auto zr = bf_reduction_check(ctx, F, cz, z, phi);
      CHECK(zr.mean_zero);
      CHECK(std::abs(zr.boundary_term) <= 1e-12 * (1 + std::abs(zr.B_sub)));
      CHECK(zr.identity_residual <= 1e-9);
    }
    std::vector<double> outside(pair.sigma.size(), 1.0);
    if (cz.size() > 1) CHECK_THROWS_AS(bf_reduction_check(ctx, cz.node(1).interval, cz, outside, phi), PreconditionError);
  }
}

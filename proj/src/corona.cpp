#include "twoweight/corona.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <nlohmann/json.hpp>

#include "twoweight/constants.hpp"

namespace tw {

StoppingForest::StoppingForest(const DyadicInterval& root, double value) {
  nodes_.push_back({root, -1, value, 0, {}});
  index_[root] = 0;
}

int StoppingForest::add(const DyadicInterval& I, int parent, double value) {
  if (index_.count(I)) throw DomainError("interval " + I.str() + " already in forest");
  const int k = static_cast<int>(nodes_.size());
  nodes_.push_back({I, parent, value, nodes_[parent].generation + 1, {}});
  nodes_[parent].children.push_back(k);
  index_[I] = k;
  return k;
}

int StoppingForest::find(const DyadicInterval& I) const {
  auto it = index_.find(I);
  return it == index_.end() ? -1 : it->second;
}

int StoppingForest::parent_of(const DyadicInterval& J) const {
  if (nodes_.empty() || !root().contains(J)) return -1;
  for (int l = J.level; l >= root().level; --l) {
    int k = find(J.ancestor(l));
    if (k >= 0) return k;
  }
  return -1;
}

bool StoppingForest::is_grid() const {
  for (std::size_t a = 0; a < nodes_.size(); ++a)
    for (std::size_t b = a + 1; b < nodes_.size(); ++b) {
      const auto &A = nodes_[a].interval, &B = nodes_[b].interval;
      if (!(A.contains(B) || B.contains(A) || A.disjoint(B))) return false;
    }
  return true;
}

std::vector<DyadicInterval> StoppingForest::intervals() const {
  std::vector<DyadicInterval> out;
  for (const auto& n : nodes_) out.push_back(n.interval);
  return out;
}

std::string StoppingForest::to_json() const {
  std::function<nlohmann::ordered_json(int)> rec = [&](int k) {
    const auto& n = nodes_[k];
    nlohmann::ordered_json j{{"level", n.interval.level}, {"index", n.interval.index}, {"value", n.value}};
    auto kids = nlohmann::ordered_json::array();
    for (int c : n.children) kids.push_back(rec(c));
    j["children"] = kids;
    return j;
  };
  return nodes_.empty() ? "null" : rec(0).dump();
}

StoppingForest f_stopping_tree(const MeasureIndex& sigma, const WeightedFunction& f, const DyadicInterval& I0,
                               double threshold) {
  if (!sigma.massive(I0)) throw DomainError("stopping tree root " + I0.str() + " has no sigma mass");
  std::vector<double> absf(f.size());
  std::transform(f.begin(), f.end(), absf.begin(), [](double v) { return std::abs(v); });
  const auto ints = sigma.integrals(absf);
  auto avg = [&](const DyadicInterval& I) { return ints[I.id()] / sigma.mass(I); };
  const int D = sigma.depth();

  StoppingForest forest(I0, avg(I0));
  std::function<void(int)> grow = [&](int node) {
    const auto G = forest.node(node).interval;
    const double bar = threshold * forest.node(node).value;
    std::vector<DyadicInterval> stack;
    if (G.level < D) stack = {G.right_child(), G.left_child()};
    std::vector<DyadicInterval> picked;
    while (!stack.empty()) {
      auto K = stack.back();
      stack.pop_back();
      if (sigma.massive(K) && avg(K) > bar) {
        picked.push_back(K);
        continue;
      }
      if (K.level < D) {
        stack.push_back(K.right_child());
        stack.push_back(K.left_child());
      }
    }
    for (const auto& K : picked) grow(forest.add(K, node, avg(K)));
  };
  grow(0);
  return forest;
}

double quasi_orthogonality(const StoppingForest& forest, const MeasureIndex& sigma, const WeightedFunction& f) {
  const double n2 = inner(sigma.weight(), f, f);
  if (!(n2 > 0.0)) return 0.0;
  double s = 0.0;
  for (const auto& n : forest.nodes()) s += n.value * n.value * sigma.mass(n.interval);
  return s / n2;
}

const char* to_string(CoronaClass c) { return c == CoronaClass::C_o ? "C_o" : "C_sup"; }

CoronaClass classify_pair(const StoppingForest& forest, const DyadicInterval& I, const DyadicInterval& J) {
  const int F = forest.parent_of(J);
  if (F < 0) throw DomainError("J = " + J.str() + " lies outside the forest root");
  if (!(I.contains(J) && J.level > I.level)) throw DomainError("J must lie strictly inside I");
  return forest.parent_of(I.child_containing(J)) == F ? CoronaClass::C_o : CoronaClass::C_sup;
}

namespace {

std::vector<DyadicInterval> haar_intervals(const MeasureIndex& idx, const PairContext& ctx, bool filter) {
  std::vector<DyadicInterval> out;
  for (int l = 0; l < idx.depth(); ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval I{l, k};
      if (idx.haar_defined(I) && (!filter || ctx.goodness().good(I))) out.push_back(I);
    }
  return out;
}

double haar_energy(const MeasureIndex& idx, const MartingaleJumps& j, const DyadicInterval& J) {
  const double a = j.minus[J.id()], b = j.plus[J.id()];
  return idx.mass(J.left_child()) * a * a + idx.mass(J.right_child()) * b * b;
}

double pair_w(const PairContext& ctx, const DyadicInterval& A, const DyadicInterval& J, const MartingaleJumps& jb) {
  return jb.minus[J.id()] * ctx.q(A, J.left_child()) + jb.plus[J.id()] * ctx.q(A, J.right_child());
}

}  // namespace

CzCoronaReport cz_corona_split(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                               const StoppingForest& forest, const SplitOptions& opt) {
  if (forest.root() != root_interval()) throw ConfigError("corona split needs a forest rooted at [0,1)");
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const auto jb = martingale_jumps(ctx.w(), phi);
  const int r = ctx.params().r;
  CzCoronaReport rep;
  rep.parts.resize(forest.size());
  for (std::size_t k = 0; k < forest.size(); ++k) rep.parts[k].F = forest.node(k).interval;

  const auto Is = haar_intervals(ctx.sigma(), ctx, opt.goodness_filter);
  const auto Js = haar_intervals(ctx.w(), ctx, opt.goodness_filter);
  for (const auto& I : Is)
    for (const auto& J : Js) {
      if (!compactly_inside(J, I, r)) continue;
      const auto IJ = I.child_containing(J);
      const double a = ja.at(I, IJ.index & 1);
      const int F = forest.parent_of(J);
      auto& part = rep.parts[F];
      if (classify_pair(forest, I, J) == CoronaClass::C_o) {
        part.B3 += a * pair_w(ctx, IJ, J, jb);
        ++rep.c_o_pairs;
      } else {
        const auto& FI = forest.node(F).interval;
        part.B1 += a * (pair_w(ctx, IJ, J, jb) - pair_w(ctx, FI, J, jb));
        part.B2 += a * pair_w(ctx, FI, J, jb);
        ++rep.c_sup_pairs;
      }
    }
  for (const auto& p : rep.parts) rep.total += p.B1 + p.B2 + p.B3;
  rep.B_sub = sub_form(ctx, f, phi, opt);
  rep.residual = std::abs(rep.total - rep.B_sub) / (std::abs(rep.B_sub) + 1.0);

  // w-side projections P_F phi = sum of Delta_J phi over J with stopping parent F.
  const auto& W = ctx.pair().w;
  std::vector<WeightedFunction> proj(forest.size(), WeightedFunction(W.size(), 0.0));
  for (const auto& J : haar_intervals(ctx.w(), ctx, false)) {
    const int F = forest.parent_of(J);
    rep.projection_energy += haar_energy(ctx.w(), jb, J);
    auto& P = proj[F];
    const Pos mid = J.mid();
    for (auto i = ctx.w().lo(J); i < ctx.w().hi(J); ++i) P[i] += W.atoms[i].pos < mid ? jb.minus[J.id()] : jb.plus[J.id()];
  }
  rep.phi_norm2 = inner(W, phi, phi);
  for (std::size_t a = 0; a < proj.size(); ++a)
    for (std::size_t b = a + 1; b < proj.size(); ++b) {
      const double na = norm(W, proj[a]), nb = norm(W, proj[b]);
      if (na > 0.0 && nb > 0.0) rep.projection_cross = std::max(rep.projection_cross, std::abs(inner(W, proj[a], proj[b])) / (na * nb));
    }
  for (const auto& I : haar_intervals(ctx.sigma(), ctx, false)) {
    const int a = forest.parent_of(I.left_child()), b = forest.parent_of(I.right_child());
    rep.max_sigma_projections = std::max(rep.max_sigma_projections, a == b ? 1 : 2);
  }
  return rep;
}

StoppingForest dini_stopping_tree(const PairContext& ctx, const DyadicInterval& F, const DiniProfile& profile,
                                  double Psi, DiniTreeReport* report, double threshold) {
  if (!(Psi >= 0.0)) throw ConfigError("Dini tree needs Psi >= 0");
  StoppingForest forest(F, 0.0);
  if (Psi == 0.0) return forest;
  const int D = ctx.depth();
  const double bar = threshold * Psi * Psi;
  std::function<void(int)> grow = [&](int node) {
    const auto I0 = forest.node(node).interval;
    const auto table = dini_table(ctx, I0, profile);
    std::vector<DyadicInterval> stack;
    if (I0.level < D) stack = {I0.right_child(), I0.left_child()};
    std::vector<std::pair<DyadicInterval, double>> picked;
    double kids = 0.0;
    while (!stack.empty()) {
      auto S = stack.back();
      stack.pop_back();
      const double ms = ctx.sigma().mass(S);
      if (ms > 0.0 && table[S.id()] > bar * ms) {
        picked.push_back({S, table[S.id()]});
        kids += ms;
        continue;
      }
      if (S.level < D) {
        stack.push_back(S.right_child());
        stack.push_back(S.left_child());
      }
    }
    if (report && !picked.empty()) {
      const double m0 = ctx.sigma().mass(I0);
      PackingRecord rec{I0, kids, 0.25 * m0, kids <= 0.25 * m0 + 1e-12};
      report->generations.push_back(rec);
      report->packing_ok = report->packing_ok && rec.ok;
      if (m0 > 0.0) report->max_packing_ratio = std::max(report->max_packing_ratio, kids / m0);
    }
    for (const auto& [S, v] : picked) grow(forest.add(S, node, std::sqrt(v)));
  };
  grow(0);
  return forest;
}

StopFormReport stop_form_split(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                               const DyadicInterval& F, const StoppingForest& cz_forest,
                               const StoppingForest& dini_forest) {
  const int Fnode = cz_forest.find(F);
  if (Fnode < 0) throw ConfigError("F is not a node of the stopping forest");
  if (dini_forest.root() != F) throw ConfigError("the Dini forest must be rooted at F");
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const auto jb = martingale_jumps(ctx.w(), phi);
  const int r = ctx.params().r;
  StopFormReport rep;
  rep.parts.resize(dini_forest.size());
  for (std::size_t k = 0; k < dini_forest.size(); ++k) rep.parts[k].S = dini_forest.node(k).interval;

  auto inside = [&](const MeasureIndex& idx, const DyadicInterval& I) {
    return idx.haar_defined(I) && F.contains(I) && cz_forest.parent_of(I) == Fnode;
  };
  std::vector<DyadicInterval> Is, Js;
  for (const auto& I : haar_intervals(ctx.sigma(), ctx, false))
    if (inside(ctx.sigma(), I)) Is.push_back(I);
  for (const auto& J : haar_intervals(ctx.w(), ctx, false))
    if (inside(ctx.w(), J)) Js.push_back(J);

  const auto lo = ctx.sigma().lo(F), hi = ctx.sigma().hi(F);
  std::vector<double> bJ(hi - lo);
  for (const auto& J : Js) {
    std::fill(bJ.begin(), bJ.end(), 0.0);
    const int Sk = dini_forest.parent_of(J);
    const auto& S = dini_forest.node(Sk).interval;
    auto& part = rep.parts[Sk];
    for (const auto& I : Is) {
      if (!compactly_inside(J, I, r)) continue;
      const auto IJ = I.child_containing(J);
      const double a = ja.at(I, IJ.index & 1);
      const double qIJ = pair_w(ctx, IJ, J, jb), qS = pair_w(ctx, S, J, jb);
      rep.B_stop += a * qIJ;
      part.B1 += a * qS;
      if (S.contains(IJ) && IJ != S)
        part.B3 += a * (qS - qIJ);
      else
        part.B2 += a * (qIJ - qS);
      ++rep.pairs;
      for (auto i = ctx.sigma().lo(IJ); i < ctx.sigma().hi(IJ); ++i) bJ[i - lo] += a;
    }
    for (double v : bJ) rep.max_bJ = std::max(rep.max_bJ, std::abs(v));
  }
  for (const auto& p : rep.parts) rep.regrouped += p.B1 + p.B2 - p.B3;
  rep.residual = std::abs(rep.B_stop - rep.regrouped) / (std::abs(rep.B_stop) + 1.0);
  return rep;
}

BfReductionReport bf_reduction_check(const PairContext& ctx, const DyadicInterval& F, const StoppingForest& cz_forest,
                                     const WeightedFunction& f, const WeightedFunction& phi, double tol) {
  const int Fnode = cz_forest.find(F);
  if (Fnode < 0) throw ConfigError("F is not a node of the stopping forest");
  const auto& sigma = ctx.pair().sigma;
  const auto lo = ctx.sigma().lo(F), hi = ctx.sigma().hi(F);
  double abs_int = 0.0, intF = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if ((i < lo || i >= hi) && f[i] != 0.0) throw PreconditionError("f is not supported on " + F.str());
    abs_int += sigma.atoms[i].mass * std::abs(f[i]);
    intF += sigma.atoms[i].mass * f[i];
  }
  if (!ctx.sigma().massive(F)) throw PreconditionError("F has no sigma mass");
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const auto jb = martingale_jumps(ctx.w(), phi);
  const int r = ctx.params().r;

  std::vector<DyadicInterval> gJ;
  for (const auto& J : haar_intervals(ctx.w(), ctx, false))
    if (compactly_inside(J, F, r) && cz_forest.parent_of(J) == Fnode) gJ.push_back(J);
  auto pair_g = [&](const DyadicInterval& A) {
    double s = 0.0;
    for (const auto& J : gJ) s += pair_w(ctx, A, J, jb);
    return s;
  };

  BfReductionReport rep;
  for (const auto& I : haar_intervals(ctx.sigma(), ctx, false))
    for (const auto& J : gJ) {
      if (!compactly_inside(J, I, r)) continue;
      const auto IJ = I.child_containing(J);
      const double t = ja.at(I, IJ.index & 1) * pair_w(ctx, IJ, J, jb);
      rep.B_sub += t;
      if (F.contains(I) && cz_forest.parent_of(I) == Fnode) rep.B_stop += t;
    }
  rep.difference = rep.B_sub - rep.B_stop;

  // T = sum over I strictly above F of E_F Delta_I f (1_{I_F} - 1_F).
  std::vector<double> T(sigma.size(), 0.0);
  double jump_sum = 0.0, tail = 0.0;
  const double qF = pair_g(F);
  for (int l = 0; l < F.level; ++l) {
    const auto I = F.ancestor(l);
    const auto IF = F.ancestor(l + 1);
    const double a = ja.at(I, IF.index & 1);
    jump_sum += a;
    tail += a * (pair_g(IF) - qF);
    for (auto i = ctx.sigma().lo(IF); i < ctx.sigma().hi(IF); ++i)
      if (i < lo || i >= hi) T[i] += a;
  }
  const double EF = ctx.sigma().integrals(f)[F.id()] / ctx.sigma().mass(F);
  const double jump_target = EF - ja.root_mean;
  rep.tail_term = tail;
  rep.boundary_term = jump_target * qF;
  rep.identity_residual = std::abs(rep.difference - rep.tail_term - rep.boundary_term) / (std::abs(rep.difference) + 1.0);
  rep.telescoping_residual = std::abs(jump_sum - jump_target);
  for (double v : T) rep.tail_sup = std::max(rep.tail_sup, std::abs(v));
  rep.claimed_gap = std::abs(std::abs(rep.difference) - std::abs(EF * qF));
  rep.mean_zero = std::abs(intF) <= 1e-12 * (abs_int + 1e-300);
  rep.ok = rep.identity_residual <= tol && rep.telescoping_residual <= tol * (1.0 + std::abs(jump_target));
  if (rep.mean_zero) rep.ok = rep.ok && rep.tail_sup <= tol && std::abs(rep.difference) <= tol * (std::abs(rep.B_sub) + 1.0);
  return rep;
}

ChildCoordinates child_coordinates(const MeasureIndex& index, const DyadicInterval& F, const StoppingForest& forest) {
  ChildCoordinates c;
  const int node = forest.find(F);
  if (node < 0) throw ConfigError("F is not a node of the stopping forest");
  for (int k : forest.node(node).children) c.children.push_back(forest.node(k).interval);
  const auto& atoms = index.weight().atoms;
  for (auto i = index.lo(F); i < index.hi(F); ++i) {
    bool in_child = false;
    for (const auto& C : c.children) in_child = in_child || C.contains(atoms[i].pos);
    if (!in_child) c.free_atoms.push_back(i);
  }
  return c;
}

std::vector<DyadicInterval> fluctuation_intervals(const MeasureIndex& index, const DyadicInterval& F,
                                                  const StoppingForest& forest) {
  const int node = forest.find(F);
  if (node < 0) throw ConfigError("F is not a node of the stopping forest");
  std::vector<DyadicInterval> out;
  std::vector<DyadicInterval> stack{F};
  while (!stack.empty()) {
    auto I = stack.back();
    stack.pop_back();
    if (I != F && forest.find(I) >= 0) continue;
    if (!index.massive(I)) continue;
    out.push_back(I);
    if (I.level < index.depth()) {
      stack.push_back(I.right_child());
      stack.push_back(I.left_child());
    }
  }
  return out;
}

double fluctuation(const MeasureIndex& index, const WeightedFunction& f, const std::vector<DyadicInterval>& ints) {
  const auto s = index.integrals(f);
  double m = 0.0;
  for (const auto& I : ints) m = std::max(m, std::abs(s[I.id()] / index.mass(I)));
  return m;
}

WeightedFunction sample_bounded_fluctuation(const MeasureIndex& index, const DyadicInterval& F,
                                            const StoppingForest& forest, std::mt19937_64& rng, BfShape shape) {
  const auto coords = child_coordinates(index, F, forest);
  const auto ints = fluctuation_intervals(index, F, forest);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  auto draw = [&] { return shape == BfShape::vertex ? (coin(rng) ? 1.0 : -1.0) : U(rng); };
  const auto& atoms = index.weight().atoms;
  WeightedFunction f(atoms.size(), 0.0);
  for (auto i : coords.free_atoms) f[i] = draw();
  for (const auto& C : coords.children) {
    const double v = draw();
    for (auto i = index.lo(C); i < index.hi(C); ++i) f[i] = v;
  }
  const double m = fluctuation(index, f, ints);
  if (m > 0.0)
    for (auto& v : f) v /= m;
  return f;
}

}  // namespace tw

#include "twoweight/constants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tw {

DiniProfile DiniProfile::from_epsilon(double epsilon, int max_s) {
  if (!(epsilon > 0.0)) throw ConfigError("Dini profile needs epsilon > 0");
  DiniProfile p;
  p.epsilon = epsilon;
  const double q = std::exp2(-epsilon / 2.0);
  p.Z = q / (1.0 - q);
  p.max_s = max_s;
  return p;
}

double DiniProfile::psi(int s) const { return std::exp2(-epsilon * s / 2.0) / Z; }

PoissonTable::PoissonTable(const MeasureIndex& sigma) : depth_(sigma.depth()) {
  const auto& atoms = sigma.weight().atoms;
  const std::size_t n = (std::size_t{2} << depth_) - 1;
  table_.assign(n * (depth_ + 1), 0.0);
  std::vector<double> prefix(atoms.size() + 1, 0.0);
  for (int l = 0; l <= depth_; ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval K{l, k};
      const double len = K.length();
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double d = to_double(dist_point_interval(atoms[i].pos, K));
        prefix[i + 1] = prefix[i] + atoms[i].mass * len / ((len + d) * (len + d));
      }
      for (int a = 0; a <= l; ++a) {
        const auto A = K.ancestor(a);
        table_[K.id() * (depth_ + 1) + a] = prefix[sigma.hi(A)] - prefix[sigma.lo(A)];
      }
    }
}

namespace {

// E(w, K)^2 w(K) for every K.
std::vector<double> energy_terms(const MeasureIndex& w) {
  const std::size_t n = (std::size_t{2} << w.depth()) - 1;
  std::vector<double> out(n, 0.0);
  for (std::size_t id = 0; id < n; ++id) {
    const auto K = DyadicInterval::from_id(id);
    if (w.hi(K) - w.lo(K) < 2) continue;
    const double e = energy(w.weight(), K);
    out[id] = e * e * w.mass(K);
  }
  return out;
}

template <class Fn>
void for_subtree_bottom_up(const DyadicInterval& top, int depth, Fn fn) {
  for (int l = depth; l >= top.level; --l) {
    const std::int64_t span = std::int64_t{1} << (l - top.level);
    for (std::int64_t k = top.index * span; k < (top.index + 1) * span; ++k) fn(DyadicInterval{l, k});
  }
}

struct DiniEngine {
  const PairContext& ctx;
  PoissonTable P;
  std::vector<double> ew;

  explicit DiniEngine(const PairContext& c) : ctx(c), P(c.sigma()), ew(energy_terms(c.w())) {}

  std::vector<double> table(const DyadicInterval& I0, const DiniProfile& profile, DiniGoodness goodness) const {
    const int D = ctx.depth(), r = ctx.params().r, l0 = I0.level;
    const std::size_t n = ctx.tree().size();
    int s_max = D - l0 - 1;
    if (profile.max_s > 0) s_max = std::min(s_max, profile.max_s);
    std::vector<double> out(n, 0.0);
    if (s_max < r) return out;
    const int ns = s_max - r + 1;
    std::vector<std::vector<double>> V(ns, std::vector<double>(n, 0.0));
    std::vector<double> term(n), val(n);
    for_subtree_bottom_up(I0, D, [&](const DyadicInterval& Ij) {
      const int lj = Ij.level;
      if (lj + r + 1 > D) return;
      for_subtree_bottom_up(Ij, D, [&](const DyadicInterval& K) {
        double t = -1.0;
        if (K.level > lj + r) {
          const bool good = goodness == DiniGoodness::global ? ctx.goodness().good(K) : is_pair_good(Ij, K, ctx.params());
          if (good) {
            const double p = P.at(K, l0) - P.at(K, lj);
            t = p * p * ew[K.id()];
          }
        }
        term[K.id()] = t;
      });
      for (int s = r; s <= std::min(s_max, D - lj - 1); ++s) {
        for_subtree_bottom_up(Ij, D, [&](const DyadicInterval& K) {
          double below = K.level < D ? val[K.left_child().id()] + val[K.right_child().id()] : 0.0;
          const double t = K.level > lj + s ? term[K.id()] : -1.0;
          val[K.id()] = std::max(below, t);
        });
        V[s - r][Ij.id()] = val[Ij.id()];
      }
    });
    std::vector<double> outer(n);
    for (int s = r; s <= s_max; ++s) {
      const double scale = 1.0 / (profile.psi(s) * profile.psi(s));
      for_subtree_bottom_up(I0, D, [&](const DyadicInterval& T) {
        const double below = T.level < D ? outer[T.left_child().id()] + outer[T.right_child().id()] : 0.0;
        outer[T.id()] = std::max(V[s - r][T.id()], below);
        out[T.id()] = std::max(out[T.id()], scale * outer[T.id()]);
      });
    }
    return out;
  }
};

}  // namespace

double energy_constant(const PairContext& ctx) {
  const int D = ctx.depth();
  const PoissonTable P(ctx.sigma());
  const auto ew = energy_terms(ctx.w());
  std::vector<double> best(ctx.tree().size());
  double ratio = 0.0;
  for (const auto& I0 : ctx.tree().intervals()) {
    const double m0 = ctx.sigma().mass(I0);
    if (!(m0 > 0.0)) continue;
    for_subtree_bottom_up(I0, D, [&](const DyadicInterval& K) {
      const double p = P.at(K, I0.level);
      const double below = K.level < D ? best[K.left_child().id()] + best[K.right_child().id()] : 0.0;
      best[K.id()] = std::max(p * p * ew[K.id()], below);
    });
    ratio = std::max(ratio, best[I0.id()] / m0);
  }
  return std::sqrt(ratio);
}

std::vector<double> dini_table(const PairContext& ctx, const DyadicInterval& I0, const DiniProfile& profile,
                               DiniGoodness goodness) {
  return DiniEngine(ctx).table(I0, profile, goodness);
}

double dini_functional(const PairContext& ctx, const DyadicInterval& I0, const DyadicInterval& S,
                       const DiniProfile& profile, DiniGoodness goodness) {
  if (!I0.contains(S)) throw DomainError("S must lie inside I0");
  return dini_table(ctx, I0, profile, goodness)[S.id()];
}

double dini_constant(const PairContext& ctx, const DiniProfile& profile) {
  const DiniEngine engine(ctx);
  double best = 0.0;
  for (const auto& I0 : ctx.tree().intervals()) {
    const double m0 = ctx.sigma().mass(I0);
    if (!(m0 > 0.0)) continue;
    best = std::max(best, engine.table(I0, profile, DiniGoodness::pair)[I0.id()] / m0);
  }
  return std::sqrt(best);
}

std::vector<DyadicInterval> j_star(const PairContext& ctx, const StoppingForest& forest, int node) {
  const auto F = forest.node(node).interval;
  const int D = ctx.depth(), r = ctx.params().r;
  std::vector<DyadicInterval> out, stack{F};
  while (!stack.empty()) {
    auto J = stack.back();
    stack.pop_back();
    if (forest.parent_of(J) != node) continue;
    if (compactly_inside(J, F, r) && J != F && ctx.goodness().good(J)) {
      out.push_back(J);
      continue;
    }
    if (J.level < D) {
      stack.push_back(J.right_child());
      stack.push_back(J.left_child());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double functional_energy(const PairContext& ctx, const WeightedFunction& f, const StoppingForest& forest) {
  const auto& sigma = ctx.pair().sigma;
  const auto& W = ctx.pair().w.atoms;
  const double fn = norm(sigma, f);
  if (!(fn > 0.0)) throw DomainError("functional energy is undefined for f = 0");
  double total = 0.0;
  for (std::size_t node = 0; node < forest.size(); ++node) {
    const auto F = forest.node(node).interval;
    const auto stars = j_star(ctx, forest, static_cast<int>(node));
    if (stars.empty()) continue;
    SignedDensity outside{&sigma, f};
    const auto [flo, fhi] = sigma.range(F);
    for (auto i = flo; i < fhi; ++i) outside.multiplier[i] = 0.0;
    std::vector<DyadicInterval> kids;
    for (int c : forest.node(node).children) kids.push_back(forest.node(c).interval);
    for (const auto& Js : stars) {
      const double wJ = ctx.w().mass(Js);
      if (!(wJ > 0.0)) continue;
      const double Pv = poisson(outside, Js);
      const double len = Js.length();
      auto x = [&](std::size_t j) { return pos_diff(W[j].pos, Js.left()) / len; };
      double uu = 0.0, uv = 0.0, vv = 0.0;
      for (auto j = ctx.w().lo(Js); j < ctx.w().hi(Js); ++j) {
        bool in_kid = false;
        for (const auto& C : kids) in_kid = in_kid || C.contains(W[j].pos);
        if (in_kid) continue;
        const double u = std::sqrt(W[j].mass) * Pv * x(j), v = std::sqrt(W[j].mass);
        uu += u * u;
        uv += u * v;
        vv += v * v;
      }
      for (const auto& C : kids) {
        if (!Js.contains(C)) continue;
        const double wc = ctx.w().mass(C);
        if (!(wc > 0.0)) continue;
        double mx = 0.0;
        for (auto j = ctx.w().lo(C); j < ctx.w().hi(C); ++j) mx += W[j].mass * x(j);
        const double u = Pv * mx / std::sqrt(wc), v = std::sqrt(wc);
        uu += u * u;
        uv += u * v;
        vv += v * v;
      }
      total += std::max(0.0, uu - uv * uv / vv);
    }
  }
  return std::sqrt(total) / fn;
}

namespace {

// Linear data of the bounded-fluctuation problem at one forest node, in child coordinates.
struct BfProblem {
  Eigen::MatrixXd M;     // w-Haar rows x coordinates
  Eigen::MatrixXd E;     // fluctuation averages x coordinates
  Eigen::VectorXd wt;    // sigma mass per coordinate
  double root_mass = 0;  // sigma(F)

  double ratio(const Eigen::VectorXd& p) const {
    const double fl = E.rows() ? (E * p).cwiseAbs().maxCoeff() : 0.0;
    if (!(fl > 0.0)) return 0.0;
    const Eigen::VectorXd q = p / fl;
    const double fn = std::sqrt((wt.array() * q.array().square()).sum());
    return (M * q).norm() / (std::sqrt(root_mass) + fn);
  }
};

struct HaarPairs {
  std::vector<DyadicInterval> Is, Js;
};

HaarPairs stop_pairs(const PairContext& ctx, int node, const StoppingForest& forest) {
  const auto F = forest.node(node).interval;
  HaarPairs hp;
  for (int l = F.level; l < ctx.depth(); ++l) {
    const std::int64_t span = std::int64_t{1} << (l - F.level);
    for (std::int64_t k = F.index * span; k < (F.index + 1) * span; ++k) {
      DyadicInterval I{l, k};
      if (forest.parent_of(I) != node) continue;
      if (ctx.sigma().haar_defined(I)) hp.Is.push_back(I);
      if (ctx.w().haar_defined(I)) hp.Js.push_back(I);
    }
  }
  return hp;
}

Eigen::VectorXd haar_response(const PairContext& ctx, const HaarPairs& hp, const WeightedFunction& f) {
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const int r = ctx.params().r;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(hp.Js.size());
  for (std::size_t row = 0; row < hp.Js.size(); ++row) {
    const auto& J = hp.Js[row];
    auto [hm, hpl] = haar_child_averages(ctx.w().mass(J.left_child()), ctx.w().mass(J.right_child()));
    for (const auto& I : hp.Is) {
      if (!compactly_inside(J, I, r)) continue;
      const auto IJ = I.child_containing(J);
      out(row) += ja.at(I, IJ.index & 1) * (hm * ctx.q(IJ, J.left_child()) + hpl * ctx.q(IJ, J.right_child()));
    }
  }
  return out;
}

BfProblem bf_problem(const PairContext& ctx, int node, const StoppingForest& forest, ChildCoordinates* coords_out) {
  const auto F = forest.node(node).interval;
  const auto coords = child_coordinates(ctx.sigma(), F, forest);
  const auto ints = fluctuation_intervals(ctx.sigma(), F, forest);
  const auto hp = stop_pairs(ctx, node, forest);
  const auto& atoms = ctx.pair().sigma.atoms;
  const std::size_t nc = coords.free_atoms.size() + coords.children.size();
  BfProblem pb;
  pb.root_mass = ctx.sigma().mass(F);
  pb.M.resize(hp.Js.size(), nc);
  pb.E.resize(ints.size(), nc);
  pb.wt.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    WeightedFunction e(atoms.size(), 0.0);
    if (c < coords.free_atoms.size()) {
      e[coords.free_atoms[c]] = 1.0;
    } else {
      const auto& C = coords.children[c - coords.free_atoms.size()];
      for (auto i = ctx.sigma().lo(C); i < ctx.sigma().hi(C); ++i) e[i] = 1.0;
    }
    pb.wt(c) = inner(ctx.pair().sigma, e, e);
    pb.M.col(c) = haar_response(ctx, hp, e);
    const auto s = ctx.sigma().integrals(e);
    for (std::size_t k = 0; k < ints.size(); ++k) pb.E(k, c) = s[ints[k].id()] / ctx.sigma().mass(ints[k]);
  }
  if (coords_out) *coords_out = coords;
  return pb;
}

}  // namespace

double bounded_fluctuation_ratio(const PairContext& ctx, int node, const StoppingForest& forest,
                                 const WeightedFunction& f) {
  const auto F = forest.node(node).interval;
  const auto hp = stop_pairs(ctx, node, forest);
  const auto ints = fluctuation_intervals(ctx.sigma(), F, forest);
  const double fl = fluctuation(ctx.sigma(), f, ints);
  if (!(fl > 0.0) || hp.Js.empty()) return 0.0;
  WeightedFunction q(f);
  for (auto& v : q) v /= fl;
  return haar_response(ctx, hp, q).norm() / (std::sqrt(ctx.sigma().mass(F)) + norm(ctx.pair().sigma, q));
}

double bounded_fluctuation_constant(const PairContext& ctx, int node, const StoppingForest& forest,
                                    const BfOptions& opt) {
  const auto F = forest.node(node).interval;
  if (!ctx.sigma().massive(F)) return 0.0;
  const auto pb = bf_problem(ctx, node, forest, nullptr);
  const Eigen::Index n = pb.M.cols();
  if (n == 0 || pb.M.rows() == 0) return 0.0;

  std::vector<Eigen::VectorXd> starts;
  std::mt19937_64 seeder(opt.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(node));
  if (n <= 12) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      Eigen::VectorXd p(n);
      for (Eigen::Index c = 0; c < n; ++c) p(c) = (mask >> c) & 1 ? 1.0 : -1.0;
      starts.push_back(p);
    }
  } else {
    std::bernoulli_distribution coin(0.5);
    for (int k = 0; k < 256; ++k) {
      Eigen::VectorXd p(n);
      for (Eigen::Index c = 0; c < n; ++c) p(c) = coin(seeder) ? 1.0 : -1.0;
      starts.push_back(p);
    }
  }
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t k = 0; k < starts.size(); ++k) scored.push_back({pb.ratio(starts[k]), k});
  std::stable_sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
  double best = scored.front().first;

  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int rs = 0; rs < opt.restarts; ++rs) {
    std::mt19937_64 rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(rs) * 7919ULL + static_cast<std::uint64_t>(node));
    Eigen::VectorXd p(n);
    if (static_cast<std::size_t>(rs) < scored.size() && rs % 2 == 0) {
      p = starts[scored[rs / 2].second];
    } else {
      for (Eigen::Index c = 0; c < n; ++c) p(c) = U(rng);
    }
    double cur = pb.ratio(p), step = 0.5;
    best = std::max(best, cur);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (int it = 0; it < opt.budget; ++it) {
      Eigen::VectorXd q = p;
      q(pick(rng)) += step * U(rng);
      const double v = pb.ratio(q);
      if (v > cur) {
        p = q;
        cur = v;
        step = std::min(step * 1.2, 2.0);
      } else {
        step = std::max(step * 0.95, 1e-6);
      }
      best = std::max(best, cur);
    }
  }
  return best;
}

double doubling_energy_floor(const Weight& sigma, int depth) {
  const MeasureIndex idx(sigma, depth);
  double best = std::numeric_limits<double>::infinity();
  for (int l = 0; l < depth; ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval I{l, k};
      if (!idx.massive(I)) continue;
      best = std::min(best, energy(sigma, I));
    }
  return std::isinf(best) ? -1.0 : best;
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::dp_exact: return "dp_exact";
    case Provenance::lower_bound_heuristic: return "lower_bound_heuristic";
  }
  return "?";
}

std::vector<std::pair<std::string, double>> ConstantsReport::fields() const {
  return {{"A2", A2},         {"H", H},         {"H_star", H_star},         {"W", W},
          {"E_energy", E_energy}, {"E_energy_star", E_energy_star}, {"Psi", Psi}, {"Psi_star", Psi_star},
          {"F_func", F_func}, {"F_func_star", F_func_star}, {"BF", BF}, {"BF_star", BF_star},
          {"B_norm", B_norm}, {"B_sub_norm", B_sub_norm}, {"B_sup_norm", B_sup_norm}};
}

std::vector<std::pair<std::string, double>> RatioRow::fields() const {
  return {{"sub_vs_testing", sub_vs_testing},
          {"functional_vs_dini", functional_vs_dini},
          {"fluct_vs_a2", fluct_vs_a2},
          {"split_vs_full", split_vs_full},
          {"split_remainder", split_remainder},
          {"F_vs_B", F_vs_B},
          {"F_vs_a2_testing", F_vs_a2_testing},
          {"BF_vs_B", BF_vs_B},
          {"BF_vs_a2_testing", BF_vs_a2_testing}};
}

std::vector<WeightedFunction> sample_functions(const MeasureIndex& index, int per_family, std::mt19937_64& rng) {
  const std::size_t n = index.weight().size();
  std::vector<WeightedFunction> out;
  if (n == 0) return out;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> atom(0, n - 1);
  std::uniform_int_distribution<int> level(1, std::max(1, index.depth()));
  for (int k = 0; k < per_family; ++k) {
    WeightedFunction f(n);
    for (auto& v : f) v = U(rng);
    out.push_back(f);
  }
  for (int k = 0; k < per_family; ++k) {
    WeightedFunction f(n, 0.0);
    f[atom(rng)] = 1.0;
    out.push_back(f);
  }
  for (int k = 0; k < per_family; ++k) {
    const int l = level(rng);
    const DyadicInterval I = DyadicTree(index.depth()).leaf_of(index.weight().atoms[atom(rng)].pos).ancestor(l);
    WeightedFunction f(n, 1.0);
    for (auto i = index.lo(I); i < index.hi(I); ++i) f[i] = 1.0 + 15.0 * U(rng);
    out.push_back(f);
  }
  return out;
}

namespace {

double ratio_or_zero(double num, double den) {
  if (den > 0.0) return num / den;
  return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

struct SideConstants {
  double F = 0.0, BF = 0.0;
};

SideConstants side_constants(const PairContext& ctx, const SuiteOptions& opt, std::uint64_t salt) {
  SideConstants out;
  if (!ctx.sigma().massive(root_interval()) || ctx.pair().w.empty()) return out;
  std::mt19937_64 rng(opt.seed * 0x2545f4914f6cdd1dULL + salt);
  const auto fs = sample_functions(ctx.sigma(), opt.samples, rng);
  std::vector<StoppingForest> forests{StoppingForest(root_interval())};
  for (const auto& f : fs) {
    const auto forest = f_stopping_tree(ctx.sigma(), f, root_interval());
    if (norm(ctx.pair().sigma, f) > 0.0) out.F = std::max(out.F, functional_energy(ctx, f, forest));
    if (forests.size() < 4 && forest.size() > 1) forests.push_back(forest);
  }
  BfOptions bo;
  bo.budget = opt.bf_budget;
  bo.seed = opt.seed + salt;
  for (const auto& forest : forests)
    for (std::size_t k = 0; k < forest.size(); ++k)
      out.BF = std::max(out.BF, bounded_fluctuation_constant(ctx, static_cast<int>(k), forest, bo));
  return out;
}

}  // namespace

std::pair<ConstantsReport, RatioRow> theorem_inequality_suite(const PairContext& ctx, const SuiteOptions& opt) {
  const int D = ctx.depth();
  const PairContext dual(ctx.pair().swapped(), D, ctx.params());
  ConstantsReport c;
  c.A2 = a2_constant(ctx.pair(), {D, 0});
  const auto tc = testing_constants(ctx.pair());
  c.H = tc.H;
  c.H_star = tc.H_star;
  c.W = weak_boundedness(ctx);
  c.E_energy = energy_constant(ctx);
  c.E_energy_star = energy_constant(dual);
  const auto profile = DiniProfile::from_epsilon(ctx.params().epsilon, D);
  c.Psi = dini_constant(ctx, profile);
  c.Psi_star = dini_constant(dual, profile);
  const auto s1 = side_constants(ctx, opt, 1), s2 = side_constants(dual, opt, 2);
  c.F_func = s1.F;
  c.BF = s1.BF;
  c.F_func_star = s2.F;
  c.BF_star = s2.BF;
  NormOptions no;
  no.goodness_filter = false;
  c.B_norm = form_norm(ctx, FormSelection::full(), no).value;
  c.B_sub_norm = form_norm(ctx, FormSelection::sub()).value;
  c.B_sup_norm = form_norm(ctx, FormSelection::sup()).value;
  c.provenance = {{"A2", Provenance::lower_bound_heuristic},
                  {"H", Provenance::exact},
                  {"H_star", Provenance::exact},
                  {"W", Provenance::lower_bound_heuristic},
                  {"E_energy", Provenance::dp_exact},
                  {"E_energy_star", Provenance::dp_exact},
                  {"Psi", Provenance::dp_exact},
                  {"Psi_star", Provenance::dp_exact},
                  {"F_func", Provenance::lower_bound_heuristic},
                  {"F_func_star", Provenance::lower_bound_heuristic},
                  {"BF", Provenance::lower_bound_heuristic},
                  {"BF_star", Provenance::lower_bound_heuristic},
                  {"B_norm", Provenance::exact},
                  {"B_sub_norm", Provenance::exact},
                  {"B_sup_norm", Provenance::exact}};

  RatioRow r;
  r.sub_vs_testing = ratio_or_zero(c.B_sub_norm, c.H + c.F_func + c.BF);
  r.functional_vs_dini = ratio_or_zero(c.F_func, c.Psi);
  r.fluct_vs_a2 = ratio_or_zero(c.F_func + c.BF, std::sqrt(c.A2) + c.W + c.B_sub_norm);
  r.split_vs_full = ratio_or_zero(c.B_sub_norm + c.B_sup_norm, c.B_norm);
  r.F_vs_B = ratio_or_zero(c.F_func, c.B_norm);
  r.F_vs_a2_testing = ratio_or_zero(c.F_func, std::sqrt(c.A2) + c.H);
  r.BF_vs_B = ratio_or_zero(c.BF, c.B_norm);
  r.BF_vs_a2_testing = ratio_or_zero(c.BF, std::sqrt(c.A2) + c.H);
  std::mt19937_64 rng(opt.seed * 0x9e3779b97f4a7c15ULL + 3);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int k = 0; k < opt.samples; ++k) {
    WeightedFunction f(ctx.pair().sigma.size()), phi(ctx.pair().w.size());
    for (auto& v : f) v = N(rng);
    for (auto& v : phi) v = N(rng);
    r.split_remainder = std::max(r.split_remainder, split_remainder_ratio(ctx, f, phi, c.A2, c.W));
  }
  return {c, r};
}

}  // namespace tw

#include "twoweight/forms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace tw {

const char* to_string(PairClass c) {
  switch (c) {
    case PairClass::P11: return "P11";
    case PairClass::P12: return "P12";
    case PairClass::P13: return "P13";
    case PairClass::P21: return "P21";
    case PairClass::P22: return "P22";
    case PairClass::P23: return "P23";
    case PairClass::B31: return "B31";
    case PairClass::B32: return "B32";
  }
  return "?";
}

PairClass classify(const DyadicInterval& I, const DyadicInterval& J, const GoodnessParams& params) {
  const int r = params.r;
  // |J| < 2^-r |I|  <=>  level(J) > level(I) + r
  if (J.level > I.level + r) {
    if (I.contains(J)) return PairClass::P23;
    const Pos len = kPosDen >> I.level;
    const Pos lo3 = I.left() - len, hi3 = I.right() + len;
    if (J.right() <= lo3 || J.left() >= hi3) return PairClass::P21;
    if (J.left() >= lo3 && J.right() <= hi3) return PairClass::P22;
    throw DomainError("pair " + I.str() + ", " + J.str() + " escapes the P13 case analysis");
  }
  if (I.level > J.level + r) return PairClass::P11;
  return PairClass::P12;
}

PairClass top_class(PairClass c) {
  switch (c) {
    case PairClass::P21:
    case PairClass::P22:
    case PairClass::P23:
    case PairClass::B31:
    case PairClass::B32:
    case PairClass::P13: return PairClass::P13;
    default: return c;
  }
}

PairContext::PairContext(WeightPair pair, int depth, GoodnessParams params)
    : pair_(std::move(pair)),
      tree_(depth),
      params_(params),
      sigma_(pair_.sigma, depth),
      w_(pair_.w, depth),
      good_(tree_, params) {
  params_.validate();
  pair_.validate(depth);
  const auto& S = pair_.sigma.atoms;
  const auto& W = pair_.w.atoms;
  const std::size_t ns = S.size() + 1, nw = W.size() + 1;
  prefix_.assign(ns * nw, 0.0);
  for (std::size_t j = 0; j < W.size(); ++j) {
    double row = 0.0;
    for (std::size_t i = 0; i < S.size(); ++i) {
      row += W[j].mass * S[i].mass * hilbert_kernel(W[j].pos, S[i].pos);
      prefix_[(j + 1) * ns + (i + 1)] = prefix_[j * ns + (i + 1)] + row;
    }
  }
}

double PairContext::q_range(std::size_t s0, std::size_t s1, std::size_t w0, std::size_t w1) const {
  if (s0 >= s1 || w0 >= w1) return 0.0;
  const std::size_t ns = pair_.sigma.size() + 1;
  return prefix_[w1 * ns + s1] - prefix_[w0 * ns + s1] - prefix_[w1 * ns + s0] + prefix_[w0 * ns + s0];
}

double full_form(const WeightPair& pair, const WeightedFunction& f, const WeightedFunction& phi, double delta) {
  const auto Hf = hilbert_apply(density(pair.sigma, f), [&] {
    std::vector<Pos> p;
    for (const auto& a : pair.w.atoms) p.push_back(a.pos);
    return p;
  }(), delta);
  double s = 0.0;
  for (std::size_t j = 0; j < pair.w.size(); ++j) s += pair.w.atoms[j].mass * phi[j] * Hf[j];
  return s;
}

double SplitReport::max_scaled_residual() const {
  const double scale = std::abs(B) + 1.0;
  return std::max({std::abs(res_top), std::abs(res_13), std::abs(res_23), std::abs(res_sub)}) / scale;
}

namespace {

std::vector<unsigned char> keep_mask(const PairContext& ctx, const MeasureIndex& idx, bool filter) {
  std::vector<unsigned char> keep(ctx.tree().size(), 0);
  for (int l = 0; l < ctx.depth(); ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval I{l, k};
      keep[I.id()] = idx.haar_defined(I) && (!filter || ctx.goodness().good(I));
    }
  return keep;
}

std::vector<DyadicInterval> kept(const PairContext& ctx, const std::vector<unsigned char>& keep) {
  std::vector<DyadicInterval> out;
  for (int l = 0; l < ctx.depth(); ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k)
      if (keep[DyadicInterval{l, k}.id()]) out.push_back({l, k});
  return out;
}

// <H(sigma 1_A), b_-(J) 1_{J-} + b_+(J) 1_{J+}>_w
double against_w(const PairContext& ctx, const DyadicInterval& A, const DyadicInterval& J, double bm, double bp) {
  return bm * ctx.q(A, J.left_child()) + bp * ctx.q(A, J.right_child());
}
double against_w_minus(const PairContext& ctx, const DyadicInterval& A, const DyadicInterval& C,
                       const DyadicInterval& J, double bm, double bp) {
  return bm * ctx.q_minus(A, C, J.left_child()) + bp * ctx.q_minus(A, C, J.right_child());
}
// <H(sigma (a_- 1_{I-} + a_+ 1_{I+})), 1_B>_w
double against_sigma(const PairContext& ctx, const DyadicInterval& I, const DyadicInterval& B, double am,
                     double ap) {
  return am * ctx.q(I.left_child(), B) + ap * ctx.q(I.right_child(), B);
}

}  // namespace

SplitReport split_form(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                       const SplitOptions& opt) {
  const auto keepS = keep_mask(ctx, ctx.sigma(), opt.goodness_filter);
  const auto keepW = keep_mask(ctx, ctx.w(), opt.goodness_filter);
  const auto fs = haar_part(ctx.sigma(), f, &keepS);
  const auto ps = haar_part(ctx.w(), phi, &keepW);
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const auto jb = martingale_jumps(ctx.w(), phi);
  const int r = ctx.params().r;

  SplitReport rep;
  rep.B = full_form(ctx.pair(), fs, ps);
  const auto Is = kept(ctx, keepS), Js = kept(ctx, keepW);
  for (const auto& I : Is) {
    const double am = ja.minus[I.id()], ap = ja.plus[I.id()];
    for (const auto& J : Js) {
      const double bm = jb.minus[J.id()], bp = jb.plus[J.id()];
      const double t = against_w(ctx, I.left_child(), J, bm, bp) * am + against_w(ctx, I.right_child(), J, bm, bp) * ap;
      switch (classify(I, J, ctx.params())) {
        case PairClass::P11: rep.B11 += t; break;
        case PairClass::P12: rep.B12 += t; break;
        case PairClass::P21: rep.B13 += t; rep.B21 += t; break;
        case PairClass::P22: rep.B13 += t; rep.B22 += t; break;
        case PairClass::P23: {
          rep.B13 += t;
          rep.B23 += t;
          const auto IJ = I.child_containing(J);
          const bool right = IJ.index & 1;
          const double a_in = right ? ap : am, a_out = right ? am : ap;
          rep.B31 += a_out * against_w_minus(ctx, I, IJ, J, bm, bp);
          rep.B32 += a_in * against_w(ctx, IJ, J, bm, bp);
          break;
        }
        default: break;
      }
      if (J.level == I.level + r && I.contains(J)) {
        const auto IJ = I.child_containing(J);
        rep.B_sub_edge += ((IJ.index & 1) ? ap : am) * against_w(ctx, IJ, J, bm, bp);
      }
    }
  }
  rep.B_sub = sub_form(ctx, f, phi, opt);
  rep.B_sup = sup_form(ctx, f, phi, opt);
  rep.res_top = rep.B - (rep.B11 + rep.B12 + rep.B13);
  rep.res_13 = rep.B13 - (rep.B21 + rep.B22 + rep.B23);
  rep.res_23 = rep.B23 - (rep.B31 + rep.B32);
  rep.res_sub = rep.B_sub - (rep.B32 + rep.B_sub_edge);
  return rep;
}

double sub_form(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                const SplitOptions& opt) {
  const auto keepS = keep_mask(ctx, ctx.sigma(), opt.goodness_filter);
  const auto keepW = keep_mask(ctx, ctx.w(), opt.goodness_filter);
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const auto jb = martingale_jumps(ctx.w(), phi);
  const int r = ctx.params().r, D = ctx.depth();
  double s = 0.0;
  for (const auto& I : kept(ctx, keepS))
    for (int l = I.level + r; l < D; ++l) {
      const std::int64_t span = std::int64_t{1} << (l - I.level);
      for (std::int64_t k = I.index * span; k < (I.index + 1) * span; ++k) {
        DyadicInterval J{l, k};
        if (!keepW[J.id()]) continue;
        const auto IJ = I.child_containing(J);
        s += ja.at(I, IJ.index & 1) * against_w(ctx, IJ, J, jb.minus[J.id()], jb.plus[J.id()]);
      }
    }
  return s;
}

double sup_form(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                const SplitOptions& opt) {
  const auto keepS = keep_mask(ctx, ctx.sigma(), opt.goodness_filter);
  const auto keepW = keep_mask(ctx, ctx.w(), opt.goodness_filter);
  const auto ja = martingale_jumps(ctx.sigma(), f);
  const auto jb = martingale_jumps(ctx.w(), phi);
  const int r = ctx.params().r, D = ctx.depth();
  double s = 0.0;
  for (const auto& J : kept(ctx, keepW))
    for (int l = J.level + r; l < D; ++l) {
      const std::int64_t span = std::int64_t{1} << (l - J.level);
      for (std::int64_t k = J.index * span; k < (J.index + 1) * span; ++k) {
        DyadicInterval I{l, k};
        if (!keepS[I.id()]) continue;
        const auto JI = J.child_containing(I);
        s += jb.at(J, JI.index & 1) * against_sigma(ctx, I, JI, ja.minus[I.id()], ja.plus[I.id()]);
      }
    }
  return s;
}

unsigned FormSelection::bit(PairClass c) {
  switch (c) {
    case PairClass::P11: return 1u;
    case PairClass::P12: return 2u;
    case PairClass::P21: return 4u;
    case PairClass::P22: return 8u;
    case PairClass::B31: return 16u;
    case PairClass::B32: return 32u;
    case PairClass::P23: return 16u | 32u;
    case PairClass::P13: return 4u | 8u | 16u | 32u;
  }
  return 0;
}

FormSelection FormSelection::classes(std::initializer_list<PairClass> cs) {
  FormSelection s{Kind::classes, 0};
  for (auto c : cs) s.mask |= bit(c);
  return s;
}

Eigen::MatrixXd form_matrix(const PairContext& ctx, const FormSelection& sel, bool goodness_filter) {
  if (sel.kind == FormSelection::Kind::kernel) {
    const auto& S = ctx.pair().sigma.atoms;
    const auto& W = ctx.pair().w.atoms;
    Eigen::MatrixXd K(W.size(), S.size());
    for (std::size_t j = 0; j < W.size(); ++j)
      for (std::size_t i = 0; i < S.size(); ++i)
        K(j, i) = std::sqrt(W[j].mass * S[i].mass) * hilbert_kernel(W[j].pos, S[i].pos);
    return K;
  }
  const auto Is = kept(ctx, keep_mask(ctx, ctx.sigma(), goodness_filter));
  const auto Js = kept(ctx, keep_mask(ctx, ctx.w(), goodness_filter));
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(Js.size(), Is.size());
  if (sel.kind == FormSelection::Kind::classes && sel.mask == 0) return M;
  const int r = ctx.params().r;
  for (std::size_t c = 0; c < Is.size(); ++c) {
    const auto& I = Is[c];
    auto [am, ap] = haar_child_averages(ctx.sigma().mass(I.left_child()), ctx.sigma().mass(I.right_child()));
    for (std::size_t row = 0; row < Js.size(); ++row) {
      const auto& J = Js[row];
      auto [bm, bp] = haar_child_averages(ctx.w().mass(J.left_child()), ctx.w().mass(J.right_child()));
      double v = 0.0;
      switch (sel.kind) {
        case FormSelection::Kind::sub:
          if (compactly_inside(J, I, r)) {
            const auto IJ = I.child_containing(J);
            v = ((IJ.index & 1) ? ap : am) * against_w(ctx, IJ, J, bm, bp);
          }
          break;
        case FormSelection::Kind::sup:
          if (compactly_inside(I, J, r)) {
            const auto JI = J.child_containing(I);
            v = ((JI.index & 1) ? bp : bm) * against_sigma(ctx, I, JI, am, ap);
          }
          break;
        case FormSelection::Kind::classes: {
          const auto cls = classify(I, J, ctx.params());
          if (cls == PairClass::P23) {
            const auto IJ = I.child_containing(J);
            const bool right = IJ.index & 1;
            if (sel.mask & FormSelection::bit(PairClass::B31))
              v += (right ? am : ap) * against_w_minus(ctx, I, IJ, J, bm, bp);
            if (sel.mask & FormSelection::bit(PairClass::B32)) v += (right ? ap : am) * against_w(ctx, IJ, J, bm, bp);
          } else if (sel.mask & FormSelection::bit(cls)) {
            v = am * against_w(ctx, I.left_child(), J, bm, bp) + ap * against_w(ctx, I.right_child(), J, bm, bp);
          }
          break;
        }
        default: break;
      }
      M(row, c) = v;
    }
  }
  return M;
}

double svd_norm(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

double power_norm(const Eigen::MatrixXd& A, double tol, int max_iter, int* iterations) {
  if (A.size() == 0) return 0.0;
  const Eigen::Index n = A.cols();
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.01 * static_cast<double>(i % 7);
  v.normalize();
  double lambda = 0.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    Eigen::VectorXd u = A.transpose() * (A * v);
    lambda = v.dot(u);
    if (lambda <= 0.0) {
      lambda = 0.0;
      break;
    }
    const double resid = (u - lambda * v).norm();
    const double un = u.norm();
    v = u / un;
    if (resid <= tol * lambda) break;
  }
  if (iterations) *iterations = it;
  return std::sqrt(std::max(lambda, 0.0));
}

NormResult form_norm(const PairContext& ctx, const FormSelection& sel, const NormOptions& opt) {
  if (ctx.depth() > 12) throw ConfigError("form_norm supports depth <= 12");
  const Eigen::MatrixXd A = form_matrix(ctx, sel, opt.goodness_filter);
  NormResult res;
  res.rows = static_cast<std::size_t>(A.rows());
  res.cols = static_cast<std::size_t>(A.cols());
  const bool small = static_cast<std::size_t>(std::max(A.rows(), A.cols())) <= opt.svd_max_dim;
  if (small || opt.cross_check) res.svd = svd_norm(A);
  if (!small || opt.cross_check) res.power = power_norm(A, opt.power_tol, opt.power_max_iter, &res.iterations);
  res.value = small ? res.svd : res.power;
  return res;
}

double weak_boundedness(const PairContext& ctx) {
  const int D = ctx.depth(), r = ctx.params().r;
  double best = 0.0;
  for (int li = 0; li <= D; ++li)
    for (int lj = std::max(0, li - r); lj <= std::min(D, li + r); ++lj)
      for (std::int64_t a = 0; a < (std::int64_t{1} << li); ++a) {
        DyadicInterval I{li, a};
        const double ms = ctx.sigma().mass(I);
        if (!(ms > 0.0)) continue;
        for (std::int64_t b = 0; b < (std::int64_t{1} << lj); ++b) {
          DyadicInterval J{lj, b};
          const double mw = ctx.w().mass(J);
          if (!(mw > 0.0)) continue;
          best = std::max(best, std::abs(ctx.q(I, J)) / std::sqrt(ms * mw));
        }
      }
  return best;
}

double testing_constant(const Weight& sigma, const Weight& w) {
  struct Tagged {
    Pos pos;
    bool is_sigma;
    std::size_t idx;
  };
  std::vector<Tagged> merged;
  for (std::size_t i = 0; i < sigma.size(); ++i) merged.push_back({sigma.atoms[i].pos, true, i});
  for (std::size_t j = 0; j < w.size(); ++j) merged.push_back({w.atoms[j].pos, false, j});
  std::sort(merged.begin(), merged.end(), [](const Tagged& a, const Tagged& b) { return a.pos < b.pos; });
  double best = 0.0;
  std::vector<std::size_t> srun, wrun;
  std::vector<double> hval;
  for (std::size_t s = 0; s < merged.size(); ++s) {
    srun.clear();
    wrun.clear();
    hval.clear();
    double smass = 0.0;
    for (std::size_t e = s; e < merged.size(); ++e) {
      const auto& t = merged[e];
      if (t.is_sigma) {
        if (t.pos == merged[s].pos && e != s) continue;
        const auto& a = sigma.atoms[t.idx];
        smass += a.mass;
        srun.push_back(t.idx);
        for (std::size_t k = 0; k < wrun.size(); ++k) hval[k] += a.mass * hilbert_kernel(w.atoms[wrun[k]].pos, a.pos);
      } else {
        double h = 0.0;
        for (auto i : srun) h += sigma.atoms[i].mass * hilbert_kernel(w.atoms[t.idx].pos, sigma.atoms[i].pos);
        wrun.push_back(t.idx);
        hval.push_back(h);
      }
      if (!(smass > 0.0)) continue;
      double val = 0.0;
      for (std::size_t k = 0; k < wrun.size(); ++k) val += w.atoms[wrun[k]].mass * hval[k] * hval[k];
      best = std::max(best, val / smass);
    }
  }
  return std::sqrt(best);
}

TestingConstants testing_constants(const WeightPair& pair) {
  return {testing_constant(pair.sigma, pair.w), testing_constant(pair.w, pair.sigma)};
}

namespace {

double a2_at(const WeightPair& pair, double a, double b) {
  if (!(b > a)) return 0.0;
  return poisson_interval(density(pair.w), a, b) * poisson_interval(density(pair.sigma), a, b);
}

}  // namespace

double a2_constant(const WeightPair& pair, const A2Options& opt) {
  if (pair.sigma.empty() || pair.w.empty()) return 0.0;
  std::vector<double> xs;
  for (const auto& a : pair.sigma.atoms) xs.push_back(to_double(a.pos));
  for (const auto& a : pair.w.atoms) xs.push_back(to_double(a.pos));
  std::sort(xs.begin(), xs.end());
  double best = 0.0;
  if (opt.depth > 0) {
    DyadicTree tree(opt.depth);
    for (const auto& I : tree.intervals())
      best = std::max(best, poisson(density(pair.w), I) * poisson(density(pair.sigma), I));
  }
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) best = std::max(best, a2_at(pair, xs[i], xs[j]));
  std::vector<double> centers = xs;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) centers.push_back(0.5 * (xs[i] + xs[i + 1]));
  std::vector<double> scales;
  for (double c : centers) {
    scales.clear();
    for (double a : xs)
      if (a != c) scales.push_back(std::abs(a - c));
    for (int l = 0; l <= std::max(opt.depth, 1) + 1; ++l) scales.push_back(std::ldexp(1.0, -l));
    if (opt.refine > 0) {
      std::sort(scales.begin(), scales.end());
      const std::size_t n = scales.size();
      for (std::size_t k = 0; k + 1 < n; ++k)
        for (int q = 1; q <= opt.refine; ++q)
          scales.push_back(scales[k] * std::pow(scales[k + 1] / scales[k], double(q) / (opt.refine + 1)));
    }
    for (double t : scales) best = std::max(best, a2_at(pair, c - t, c + t));
  }
  return best;
}

SchurReport schur_sum(const PairContext& ctx, const DyadicInterval& I, int s, double a2) {
  SchurReport rep;
  if (s < ctx.params().r) throw ConfigError("schur_sum needs s >= r");
  const int lj = I.level + s;
  if (lj > ctx.depth()) return rep;
  const double ms = ctx.sigma().mass(I);
  const Pos li = kPosDen >> I.level, lenJ = kPosDen >> lj;
  const Pos lo3 = I.left() - li, hi3 = I.right() + li;
  const double jlen = std::ldexp(1.0, -lj);
  for (std::int64_t k = 0; k < (std::int64_t{1} << lj); ++k) {
    DyadicInterval J{lj, k};
    if (!(J.right() + lenJ <= lo3 || J.left() - lenJ >= hi3)) continue;
    const double d = to_double(dist_intervals(I, J));
    const double den = (jlen + d) * (jlen + d);
    const double mw = ctx.w().mass(J);
    rep.sum += std::sqrt(ms * mw) * jlen / den;
    rep.factor1 += jlen / den;
    rep.factor2 += ms * mw * jlen / den;
    ++rep.terms;
  }
  rep.cauchy_schwarz_ok = rep.sum * rep.sum <= rep.factor1 * rep.factor2 * (1.0 + 1e-12) + 1e-300;
  if (a2 > 0.0) rep.a2_ratio = rep.sum * rep.sum / (a2 * a2);
  return rep;
}

DecayReport poisson_decay_check(const Weight& sigma, const GoodnessParams& params, const DyadicInterval& J,
                                const DyadicInterval& I, const DyadicInterval& I_prime, double constant) {
  if (!(I.contains(J) && I_prime.contains(I))) throw PreconditionError("need J inside I inside I'");
  DecayReport rep;
  rep.s = J.level - I.level;
  if (rep.s < params.r) throw PreconditionError("need |J| = 2^-s |I| with s >= r");
  if (!is_pair_good(I, J, params)) throw PreconditionError("J must be good relative to I");
  SignedDensity ring{&sigma, std::vector<double>(sigma.size(), 0.0)};
  SignedDensity whole{&sigma, std::vector<double>(sigma.size(), 0.0)};
  const auto [lo, hi] = sigma.range(I_prime);
  for (auto i = lo; i < hi; ++i) {
    whole.multiplier[i] = 1.0;
    if (!I.contains(sigma.atoms[i].pos)) ring.multiplier[i] = 1.0;
  }
  const double num = poisson(ring, J);
  const double den = poisson(whole, I);
  rep.ratio = num == 0.0 ? 0.0 : num / den;
  rep.bound = constant * std::pow(2.0, -rep.s * (1.0 - 2.0 * params.epsilon));
  rep.observed_exponent = rep.ratio > 0.0 ? -std::log2(rep.ratio) / rep.s : std::numeric_limits<double>::infinity();
  rep.ok = rep.ratio <= rep.bound * (1.0 + 1e-12);
  return rep;
}

double split_remainder_ratio(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi, double a2,
                       double W) {
  SplitOptions opt;
  const auto keepS = keep_mask(ctx, ctx.sigma(), false);
  const auto keepW = keep_mask(ctx, ctx.w(), false);
  const auto fs = haar_part(ctx.sigma(), f, &keepS);
  const auto ps = haar_part(ctx.w(), phi, &keepW);
  const double B = full_form(ctx.pair(), fs, ps);
  const double diff = std::abs(B - sub_form(ctx, f, phi, opt) - sup_form(ctx, f, phi, opt));
  const double scale = (std::sqrt(a2) + W) * norm(ctx.pair().sigma, fs) * norm(ctx.pair().w, ps);
  return scale > 0.0 ? diff / scale : 0.0;
}

}  // namespace tw

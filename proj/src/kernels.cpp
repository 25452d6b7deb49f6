#include "twoweight/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace tw {

namespace {
std::atomic<bool> g_flip{false};
}

void set_kernel_sign_flip(bool on) { g_flip.store(on); }
bool kernel_sign_flipped() { return g_flip.load(); }

double hilbert_kernel(Pos y, Pos x) {
  const double k = static_cast<double>(kPosDen) / static_cast<double>(y - x);
  return g_flip.load(std::memory_order_relaxed) ? -k : k;
}

SignedDensity density(const Weight& weight) { return {&weight, std::vector<double>(weight.size(), 1.0)}; }

SignedDensity density(const Weight& weight, const WeightedFunction& f) { return {&weight, f}; }

SignedDensity indicator_density(const Weight& weight, const DyadicInterval& I) {
  SignedDensity d{&weight, std::vector<double>(weight.size(), 0.0)};
  auto [lo, hi] = weight.range(I);
  for (auto i = lo; i < hi; ++i) d.multiplier[i] = 1.0;
  return d;
}

SignedDensity outside_density(const Weight& weight, const DyadicInterval& I) {
  SignedDensity d{&weight, std::vector<double>(weight.size(), 1.0)};
  auto [lo, hi] = weight.range(I);
  for (auto i = lo; i < hi; ++i) d.multiplier[i] = 0.0;
  return d;
}

double poisson(const SignedDensity& nu, const DyadicInterval& I) {
  const double len = I.length();
  double s = 0.0;
  for (std::size_t i = 0; i < nu.weight->size(); ++i) {
    if (nu.multiplier[i] == 0.0) continue;
    const double d = to_double(dist_point_interval(nu.weight->atoms[i].pos, I));
    s += nu.signed_mass(i) * len / ((len + d) * (len + d));
  }
  return s;
}

double poisson_interval(const SignedDensity& nu, double a, double b) {
  const double len = b - a;
  double s = 0.0;
  for (std::size_t i = 0; i < nu.weight->size(); ++i) {
    if (nu.multiplier[i] == 0.0) continue;
    const double x = to_double(nu.weight->atoms[i].pos);
    const double d = std::max({0.0, a - x, x - b});
    s += nu.signed_mass(i) * len / ((len + d) * (len + d));
  }
  return s;
}

double energy(const Weight& weight, const DyadicInterval& I) {
  auto [lo, hi] = weight.range(I);
  if (hi - lo < 2) return 0.0;
  double m = 0.0, s1 = 0.0;
  const Pos base = I.left();
  for (auto i = lo; i < hi; ++i) {
    m += weight.atoms[i].mass;
    s1 += weight.atoms[i].mass * pos_diff(weight.atoms[i].pos, base);
  }
  const double mean = s1 / m;
  double var = 0.0;
  for (auto i = lo; i < hi; ++i) {
    const double d = pos_diff(weight.atoms[i].pos, base) - mean;
    var += weight.atoms[i].mass * d * d;
  }
  var /= m;
  const double len = I.length();
  return std::sqrt(2.0 * var) / len;
}

std::vector<double> hilbert_apply(const SignedDensity& nu, const std::vector<Pos>& points, double delta) {
  std::vector<double> out(points.size(), 0.0);
  const auto& atoms = nu.weight->atoms;
  for (std::size_t p = 0; p < points.size(); ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (atoms[i].pos == points[p])
        throw SingularityError("evaluation point " + format_pos(points[p]) + " collides with an atom");
      if (nu.multiplier[i] == 0.0) continue;
      if (delta > 0.0 && std::abs(pos_diff(points[p], atoms[i].pos)) < delta) continue;
      s += nu.signed_mass(i) * hilbert_kernel(points[p], atoms[i].pos);
    }
    out[p] = s;
  }
  return out;
}

double pairing(const SignedDensity& nu, const Weight& w, const WeightedFunction& g, double delta) {
  std::vector<Pos> pts;
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < w.size(); ++j)
    if (g[j] != 0.0) {
      pts.push_back(w.atoms[j].pos);
      idx.push_back(j);
    }
  auto h = hilbert_apply(nu, pts, delta);
  double s = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) s += w.atoms[idx[k]].mass * g[idx[k]] * h[k];
  return s;
}

namespace {

void require_outside(const SignedDensity& d, const DyadicInterval& I, const char* what) {
  auto [lo, hi] = d.weight->range(I);
  for (auto i = lo; i < hi; ++i)
    if (d.multiplier[i] != 0.0) throw PreconditionError(std::string(what) + " has mass inside " + I.str());
}

}  // namespace

MonotonicityReport monotonicity_check(const SignedDensity& nu, const SignedDensity& mu, const DyadicInterval& J,
                                      const DyadicInterval& I, const Weight& w, double tol) {
  if (nu.weight->size() != mu.weight->size()) throw PreconditionError("nu and mu live on different atom sets");
  for (std::size_t i = 0; i < nu.multiplier.size(); ++i) {
    if (nu.weight->atoms[i].pos != mu.weight->atoms[i].pos) throw PreconditionError("nu and mu atoms differ");
    if (std::abs(nu.signed_mass(i)) > mu.signed_mass(i)) throw PreconditionError("|nu| exceeds mu");
  }
  if (!(I.contains(J) && J.level > I.level)) throw PreconditionError("J must lie strictly inside I");
  require_outside(nu, I, "nu");
  require_outside(mu, I, "mu");
  const auto h = haar_function(w, J);
  MonotonicityReport r;
  r.lhs = std::abs(pairing(nu, w, h));
  r.rhs = pairing(mu, w, h);
  const double slack = tol * (1.0 + std::abs(r.rhs));
  r.ok = r.lhs <= r.rhs + slack && r.rhs >= -slack;
  return r;
}

TaylorReport taylor_refinement(const SignedDensity& mu, const DyadicInterval& J, const DyadicInterval& J_star,
                               const DyadicInterval& I, const Weight& w, const GoodnessParams& params,
                               double calibration) {
  if (!(J_star.contains(J) && I.contains(J_star) && J_star.level >= I.level + params.r))
    throw PreconditionError("need J inside J* and J* compactly inside I");
  for (std::size_t i = 0; i < mu.multiplier.size(); ++i)
    if (mu.multiplier[i] < 0.0) throw PreconditionError("mu must be non-negative");
  require_outside(mu, I, "mu");
  if (!is_good_relative(J, I, params)) throw PreconditionError("J is not good relative to I");
  const auto h = haar_function(w, J);
  TaylorReport t;
  double xh = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    if (h[j] != 0.0) xh += w.atoms[j].mass * to_double(w.atoms[j].pos) * h[j];
  t.lhs = poisson(mu, J_star) * std::abs(xh / J_star.length());
  t.rhs1 = pairing(mu, w, h);
  t.rhs2 = std::pow(J.length() / I.length(), 1.0 - params.epsilon) * poisson(mu, J) * std::sqrt(mass(w, J));
  const double denom = t.rhs1 + calibration * t.rhs2;
  t.ratio = t.lhs == 0.0 ? 0.0 : t.lhs / denom;
  return t;
}

}  // namespace tw

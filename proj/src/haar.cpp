#include "twoweight/haar.hpp"

#include <cmath>
#include <ostream>

namespace tw {

double inner(const Weight& weight, const WeightedFunction& a, const WeightedFunction& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) s += weight.atoms[i].mass * a[i] * b[i];
  return s;
}

double norm(const Weight& weight, const WeightedFunction& f) { return std::sqrt(inner(weight, f, f)); }

std::pair<double, double> haar_child_averages(double m_left, double m_right) {
  const double m = m_left + m_right;
  const double scale = std::sqrt(m_left * m_right / m);
  return {scale / m_left, -scale / m_right};
}

WeightedFunction haar_function(const Weight& weight, const DyadicInterval& I) {
  const double ml = mass(weight, I.left_child()), mr = mass(weight, I.right_child());
  if (!(ml > 0.0) || !(mr > 0.0)) throw UndefinedHaar("Haar function undefined at " + I.str() + ": massless child");
  auto [vl, vr] = haar_child_averages(ml, mr);
  WeightedFunction h(weight.size(), 0.0);
  const Pos mid = I.mid();
  auto [lo, hi] = weight.range(I);
  for (auto i = lo; i < hi; ++i) h[i] = weight.atoms[i].pos < mid ? vl : vr;
  return h;
}

HaarCoefficients analyze(const Weight& weight, const WeightedFunction& f, const DyadicTree& tree) {
  MeasureIndex idx(weight, tree.depth());
  auto ints = idx.integrals(f);
  HaarCoefficients c;
  const auto root = root_interval();
  c.root_mean = idx.massive(root) ? ints[root.id()] / idx.mass(root) : 0.0;
  for (int l = 0; l < tree.depth(); ++l)
    for (const auto& I : tree.level(l)) {
      if (!idx.haar_defined(I)) continue;
      const auto L = I.left_child(), R = I.right_child();
      const double ml = idx.mass(L), mr = idx.mass(R);
      c.coeffs[I] = std::sqrt(ml * mr / (ml + mr)) * (ints[L.id()] / ml - ints[R.id()] / mr);
    }
  return c;
}

WeightedFunction synthesize(const Weight& weight, const HaarCoefficients& c, const DyadicTree& tree) {
  MeasureIndex idx(weight, tree.depth());
  WeightedFunction f(weight.size(), c.root_mean);
  for (const auto& [I, coeff] : c.coeffs) {
    if (!idx.haar_defined(I)) continue;
    auto [vl, vr] = haar_child_averages(idx.mass(I.left_child()), idx.mass(I.right_child()));
    const Pos mid = I.mid();
    for (auto i = idx.lo(I); i < idx.hi(I); ++i) f[i] += coeff * (weight.atoms[i].pos < mid ? vl : vr);
  }
  return f;
}

WeightedFunction martingale_difference(const Weight& weight, const WeightedFunction& f, const DyadicInterval& I) {
  WeightedFunction d(weight.size(), 0.0);
  auto [lo, hi] = weight.range(I);
  const Pos mid = I.mid();
  double m = 0, s = 0, ml = 0, sl = 0;
  for (auto i = lo; i < hi; ++i) {
    const auto& a = weight.atoms[i];
    m += a.mass;
    s += a.mass * f[i];
    if (a.pos < mid) {
      ml += a.mass;
      sl += a.mass * f[i];
    }
  }
  if (!(m > 0.0)) return d;
  const double mr = m - ml, sr = s - sl, avg = s / m;
  for (auto i = lo; i < hi; ++i) {
    bool left = weight.atoms[i].pos < mid;
    d[i] = (left ? sl / ml : sr / mr) - avg;
  }
  return d;
}

HaarCoefficients project_good(const HaarCoefficients& c, const GoodnessParams& params, const DyadicTree& tree) {
  HaarCoefficients out;
  out.root_mean = c.root_mean;
  for (const auto& [I, v] : c.coeffs)
    if (is_good(I, params, tree)) out.coeffs[I] = v;
  return out;
}

MartingaleJumps martingale_jumps(const MeasureIndex& index, const WeightedFunction& f) {
  const int D = index.depth();
  auto ints = index.integrals(f);
  MartingaleJumps j;
  j.minus.assign(ints.size(), 0.0);
  j.plus.assign(ints.size(), 0.0);
  const auto root = root_interval();
  j.root_mean = index.massive(root) ? ints[root.id()] / index.mass(root) : 0.0;
  for (int l = 0; l < D; ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval I{l, k};
      if (!index.haar_defined(I)) continue;
      const auto L = I.left_child(), R = I.right_child();
      const double avg = ints[I.id()] / index.mass(I);
      j.minus[I.id()] = ints[L.id()] / index.mass(L) - avg;
      j.plus[I.id()] = ints[R.id()] / index.mass(R) - avg;
    }
  return j;
}

WeightedFunction haar_part(const MeasureIndex& index, const WeightedFunction& f,
                           const std::vector<unsigned char>* keep) {
  const auto jumps = martingale_jumps(index, f);
  const auto& atoms = index.weight().atoms;
  const int D = index.depth();
  WeightedFunction out(atoms.size(), 0.0);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    DyadicInterval leaf{D, atoms[i].pos / (kPosDen >> D)};
    double s = 0.0;
    for (int l = 0; l < D; ++l) {
      auto I = leaf.ancestor(l);
      if (keep && !(*keep)[I.id()]) continue;
      bool right = (leaf.ancestor(l + 1).index & 1) != 0;
      s += jumps.at(I, right);
    }
    out[i] = s;
  }
  return out;
}

void write_coefficients_csv(std::ostream& os, const HaarCoefficients& c) {
  os << "level,index,value\n";
  os.precision(17);
  os << "-1,0," << c.root_mean << "\n";
  for (const auto& [I, v] : c.coeffs) os << I.level << "," << I.index << "," << v << "\n";
}

}  // namespace tw

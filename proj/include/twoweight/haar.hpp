#pragma once

#include <iosfwd>
#include <map>
#include <vector>

#include "twoweight/dyadic.hpp"

namespace tw {

// Values of a function at the atoms of its weight, in atom order.
using WeightedFunction = std::vector<double>;

struct UndefinedHaar : DomainError {
  using DomainError::DomainError;
};

struct HaarCoefficients {
  double root_mean = 0.0;
  std::map<DyadicInterval, double> coeffs;
};

double inner(const Weight& weight, const WeightedFunction& a, const WeightedFunction& b);
double norm(const Weight& weight, const WeightedFunction& f);

WeightedFunction haar_function(const Weight& weight, const DyadicInterval& I);
// Averages of h_I on the left and right child.
std::pair<double, double> haar_child_averages(double m_left, double m_right);

HaarCoefficients analyze(const Weight& weight, const WeightedFunction& f, const DyadicTree& tree);
WeightedFunction synthesize(const Weight& weight, const HaarCoefficients& c, const DyadicTree& tree);

WeightedFunction martingale_difference(const Weight& weight, const WeightedFunction& f, const DyadicInterval& I);

HaarCoefficients project_good(const HaarCoefficients& c, const GoodnessParams& params, const DyadicTree& tree);

// Per-interval martingale jumps a_-(I) = E_{I-}f - E_I f and a_+(I) = E_{I+}f - E_I f,
// zero when a child or I itself carries no mass. Indexed by interval id.
struct MartingaleJumps {
  std::vector<double> minus, plus;
  double root_mean = 0.0;
  double at(const DyadicInterval& I, bool right) const { return right ? plus[I.id()] : minus[I.id()]; }
};
MartingaleJumps martingale_jumps(const MeasureIndex& index, const WeightedFunction& f);

// sum over non-leaf I (selected by keep) of Delta_I f, evaluated at the atoms.
WeightedFunction haar_part(const MeasureIndex& index, const WeightedFunction& f,
                           const std::vector<unsigned char>* keep = nullptr);

void write_coefficients_csv(std::ostream& os, const HaarCoefficients& c);

}  // namespace tw

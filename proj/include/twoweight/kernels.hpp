#pragma once

#include <vector>

#include "twoweight/dyadic.hpp"
#include "twoweight/haar.hpp"

namespace tw {

struct SingularityError : DomainError {
  using DomainError::DomainError;
};
struct PreconditionError : DomainError {
  using DomainError::DomainError;
};

// The measure sum_i m_i * multiplier_i * delta_{x_i}.
struct SignedDensity {
  const Weight* weight = nullptr;
  std::vector<double> multiplier;

  double signed_mass(std::size_t i) const { return weight->atoms[i].mass * multiplier[i]; }
};

SignedDensity density(const Weight& weight);                                     // multiplier 1
SignedDensity density(const Weight& weight, const WeightedFunction& f);          // f dweight
SignedDensity indicator_density(const Weight& weight, const DyadicInterval& I);  // 1_I dweight
SignedDensity outside_density(const Weight& weight, const DyadicInterval& I);    // 1_{R \ I} dweight

double poisson(const SignedDensity& nu, const DyadicInterval& I);
// Poisson integral over an arbitrary interval [a, b] given as reals.
double poisson_interval(const SignedDensity& nu, double a, double b);

double energy(const Weight& weight, const DyadicInterval& I);

// Test hook: flips the Hilbert kernel sign everywhere when set.
void set_kernel_sign_flip(bool on);
bool kernel_sign_flipped();
// 1 / (y - x) computed from the exact lattice difference (with the test-hook sign).
double hilbert_kernel(Pos y, Pos x);

std::vector<double> hilbert_apply(const SignedDensity& nu, const std::vector<Pos>& points, double delta = 0.0);
double pairing(const SignedDensity& nu, const Weight& w, const WeightedFunction& g, double delta = 0.0);

struct MonotonicityReport {
  double lhs = 0.0;  // |<H nu, h_J>_w|
  double rhs = 0.0;  // <H mu, h_J>_w
  bool ok = false;
};
MonotonicityReport monotonicity_check(const SignedDensity& nu, const SignedDensity& mu, const DyadicInterval& J,
                                      const DyadicInterval& I, const Weight& w, double tol = 1e-12);

struct TaylorReport {
  double lhs = 0.0;   // P(mu, J*) |<x/|J*|, h_J>_w|
  double rhs1 = 0.0;  // <H mu, h_J>_w
  double rhs2 = 0.0;  // (|J|/|I|)^(1-eps) P(mu, J) sqrt(w(J))
  double ratio = 0.0; // lhs / (rhs1 + C rhs2)
};
TaylorReport taylor_refinement(const SignedDensity& mu, const DyadicInterval& J, const DyadicInterval& J_star,
                               const DyadicInterval& I, const Weight& w, const GoodnessParams& params,
                               double calibration = 16.0);

}  // namespace tw

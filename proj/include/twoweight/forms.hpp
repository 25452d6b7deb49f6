#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoweight/dyadic.hpp"
#include "twoweight/haar.hpp"
#include "twoweight/kernels.hpp"

namespace tw {

enum class PairClass { P11, P12, P13, P21, P22, P23, B31, B32 };
const char* to_string(PairClass c);

// Finest pair class: one of P11, P12, P21, P22, P23.
PairClass classify(const DyadicInterval& I, const DyadicInterval& J, const GoodnessParams& params);
// P11, P12 or P13.
PairClass top_class(PairClass c);
// J inside I with |J| <= 2^-r |I|.
inline bool compactly_inside(const DyadicInterval& J, const DyadicInterval& I, int r) {
  return J.level >= I.level + r && I.contains(J);
}

// Shared per-instance data: measure indices, goodness flags, and a 2D prefix
// table of the kernel so that <H(sigma 1_A), 1_B>_w costs O(1).
class PairContext {
 public:
  PairContext(WeightPair pair, int depth, GoodnessParams params = {});

  const WeightPair& pair() const { return pair_; }
  const DyadicTree& tree() const { return tree_; }
  int depth() const { return tree_.depth(); }
  const GoodnessParams& params() const { return params_; }
  const MeasureIndex& sigma() const { return sigma_; }
  const MeasureIndex& w() const { return w_; }
  const GoodnessTable& goodness() const { return good_; }

  // <H(sigma 1_A), 1_B>_w over atom index ranges [s0,s1) of sigma and [w0,w1) of w.
  double q_range(std::size_t s0, std::size_t s1, std::size_t w0, std::size_t w1) const;
  double q(const DyadicInterval& A, const DyadicInterval& B) const {
    return q_range(sigma_.lo(A), sigma_.hi(A), w_.lo(B), w_.hi(B));
  }
  // <H(sigma 1_{A \ C}), 1_B>_w for C inside A.
  double q_minus(const DyadicInterval& A, const DyadicInterval& C, const DyadicInterval& B) const {
    return q(A, B) - q(C, B);
  }

 private:
  WeightPair pair_;
  DyadicTree tree_;
  GoodnessParams params_;
  MeasureIndex sigma_, w_;
  GoodnessTable good_;
  std::vector<double> prefix_;  // (Mw+1) x (Ms+1)
};

double full_form(const WeightPair& pair, const WeightedFunction& f, const WeightedFunction& phi, double delta = 0.0);

struct SplitReport {
  double B = 0, B11 = 0, B12 = 0, B13 = 0, B21 = 0, B22 = 0, B23 = 0, B31 = 0, B32 = 0;
  double B_sub = 0, B_sub_edge = 0, B_sup = 0;
  double res_top = 0, res_13 = 0, res_23 = 0, res_sub = 0;
  double max_scaled_residual() const;  // max residual / (|B| + 1)
};

struct SplitOptions {
  bool goodness_filter = false;
};

SplitReport split_form(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                       const SplitOptions& opt = {});
// The forms B_sub (J compactly inside I) and B_sup (the w/sigma swap), evaluated directly.
double sub_form(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                const SplitOptions& opt = {});
double sup_form(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                const SplitOptions& opt = {});

struct FormSelection {
  enum class Kind { kernel, classes, sub, sup };
  Kind kind = Kind::kernel;
  unsigned mask = 0;  // Haar class bits, used with Kind::classes

  static unsigned bit(PairClass c);
  static FormSelection full() { return {Kind::kernel, 0}; }
  static FormSelection sub() { return {Kind::sub, 0}; }
  static FormSelection sup() { return {Kind::sup, 0}; }
  static FormSelection classes(std::initializer_list<PairClass> cs);
};

struct NormOptions {
  bool goodness_filter = true;
  bool cross_check = false;  // also run the other algorithm
  std::size_t svd_max_dim = 1024;
  double power_tol = 1e-10;
  int power_max_iter = 10000;
};

struct NormResult {
  double value = 0.0;
  double svd = -1.0;    // -1 when not computed
  double power = -1.0;  // -1 when not computed
  int iterations = 0;
  std::size_t rows = 0, cols = 0;
};

Eigen::MatrixXd form_matrix(const PairContext& ctx, const FormSelection& sel, bool goodness_filter);
double svd_norm(const Eigen::MatrixXd& A);
double power_norm(const Eigen::MatrixXd& A, double tol, int max_iter, int* iterations = nullptr);
NormResult form_norm(const PairContext& ctx, const FormSelection& sel, const NormOptions& opt = {});

double weak_boundedness(const PairContext& ctx);

struct TestingConstants {
  double H = 0.0, H_star = 0.0;
};
// Square root of the sup over intervals of sigma(I)^-1 int_I |H(sigma 1_I)|^2 dw, exact for atomic weights.
double testing_constant(const Weight& sigma, const Weight& w);
TestingConstants testing_constants(const WeightPair& pair);

struct A2Options {
  int depth = 0;    // dyadic candidates are taken from this tree depth
  int refine = 0;   // extra geometric scales between consecutive candidate scales
};
double a2_constant(const WeightPair& pair, const A2Options& opt);

struct SchurReport {
  double sum = 0.0;      // sum of alpha(I, J)
  double factor1 = 0.0;  // sum |J| / (|J| + dist)^2
  double factor2 = 0.0;  // sum sigma(I) w(J) |J| / (|J| + dist)^2
  std::size_t terms = 0;
  bool cauchy_schwarz_ok = true;
  double a2_ratio = 0.0;  // sum^2 / A2^2 when A2 > 0
};
SchurReport schur_sum(const PairContext& ctx, const DyadicInterval& I, int s, double a2 = 0.0);

struct DecayReport {
  double ratio = 0.0;
  double bound = 0.0;
  int s = 0;
  double observed_exponent = 0.0;  // -log2(ratio)/s, +inf when ratio = 0
  bool ok = true;
};
// Needs J good relative to I in the pair form (distance to the ends of I). Takes no PairContext,
// so it runs at depths where the kernel table would be too large.
DecayReport poisson_decay_check(const Weight& sigma, const GoodnessParams& params, const DyadicInterval& J,
                                const DyadicInterval& I, const DyadicInterval& I_prime, double constant = 8.0);

// |B - B_sub - B_sup|(f, phi) / ((sqrt(A2) + W) |f| |phi|).
double split_remainder_ratio(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi, double a2,
                       double W);

}  // namespace tw

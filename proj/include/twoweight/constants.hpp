#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "twoweight/corona.hpp"
#include "twoweight/forms.hpp"

namespace tw {

// psi(s) = 2^(-eps s / 2) / Z, normalized so that sum_{s>=1} psi(s) = 1.
struct DiniProfile {
  double epsilon = 0.2;
  double Z = 0.0;
  int max_s = 0;

  static DiniProfile from_epsilon(double epsilon, int max_s);
  double psi(int s) const;
};

// P(sigma 1_A, K) for every interval K and every ancestor A of K.
class PoissonTable {
 public:
  PoissonTable(const MeasureIndex& sigma);
  double at(const DyadicInterval& K, int ancestor_level) const {
    return table_[K.id() * static_cast<std::size_t>(depth_ + 1) + ancestor_level];
  }

 private:
  int depth_;
  std::vector<double> table_;
};

// sup over dyadic partitions; square root of max_I0 best(I0) / sigma(I0).
double energy_constant(const PairContext& ctx);

enum class DiniGoodness {
  pair,   // (I_j, I_jk) good in the pair form
  global  // I_jk good in the whole tree
};

// Psi_w(I0, S)^2 for every S inside I0, indexed by S.id() (0 outside I0).
std::vector<double> dini_table(const PairContext& ctx, const DyadicInterval& I0, const DiniProfile& profile,
                               DiniGoodness goodness = DiniGoodness::pair);
double dini_functional(const PairContext& ctx, const DyadicInterval& I0, const DyadicInterval& S,
                       const DiniProfile& profile, DiniGoodness goodness = DiniGoodness::pair);
double dini_constant(const PairContext& ctx, const DiniProfile& profile);

// Maximal good J compactly inside F whose stopping parent is F.
std::vector<DyadicInterval> j_star(const PairContext& ctx, const StoppingForest& forest, int node);
double functional_energy(const PairContext& ctx, const WeightedFunction& f, const StoppingForest& forest);

struct BfOptions {
  int budget = 400;         // hill-climbing steps
  int restarts = 8;
  std::uint64_t seed = 0;
};
// Lower bound for the bounded-fluctuation constant at node F of forest.
double bounded_fluctuation_constant(const PairContext& ctx, int node, const StoppingForest& forest,
                                    const BfOptions& opt = {});
// The objective maximized above, evaluated at one f.
double bounded_fluctuation_ratio(const PairContext& ctx, int node, const StoppingForest& forest,
                                 const WeightedFunction& f);

// min over non-leaf I with sigma(I) > 0 of E(sigma, I); -1 when no such I exists.
double doubling_energy_floor(const Weight& sigma, int depth);

enum class Provenance { exact, dp_exact, lower_bound_heuristic };
const char* to_string(Provenance p);

struct ConstantsReport {
  double A2 = 0, H = 0, H_star = 0, W = 0, E_energy = 0, E_energy_star = 0, Psi = 0, Psi_star = 0;
  double F_func = 0, F_func_star = 0, BF = 0, BF_star = 0, B_norm = 0, B_sub_norm = 0, B_sup_norm = 0;
  std::map<std::string, Provenance> provenance;
  std::vector<std::pair<std::string, double>> fields() const;
};

struct RatioRow {
  double sub_vs_testing = 0;     // B_sub / (H + F + BF)
  double functional_vs_dini = 0; // F / Psi
  double fluct_vs_a2 = 0;        // (F + BF) / (sqrt(A2) + W + B_sub)
  double split_vs_full = 0;      // (B_sub + B_sup) / B
  double split_remainder = 0;    // max over sampled (f, phi)
  double F_vs_B = 0, F_vs_a2_testing = 0;    // F / B, F / (sqrt(A2) + H)
  double BF_vs_B = 0, BF_vs_a2_testing = 0;  // BF / B, BF / (sqrt(A2) + H)
  std::vector<std::pair<std::string, double>> fields() const;
};

struct SuiteOptions {
  int samples = 20;  // sampled f per family
  int bf_budget = 400;
  std::uint64_t seed = 0;
};
// Every constant of the pair and the ratio columns; no assertions.
std::pair<ConstantsReport, RatioRow> theorem_inequality_suite(const PairContext& ctx, const SuiteOptions& opt = {});

// Test families for f: random nonnegative, single spike, two-level.
std::vector<WeightedFunction> sample_functions(const MeasureIndex& index, int per_family, std::mt19937_64& rng);

}  // namespace tw

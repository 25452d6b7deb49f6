#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "twoweight/forms.hpp"

namespace tw {

struct DiniProfile;

struct StoppingNode {
  DyadicInterval interval;
  int parent = -1;  // -1 for the root
  double value = 0.0;
  int generation = 0;
  std::vector<int> children;
};

// Nested family of stopping intervals. Node 0 is the root.
class StoppingForest {
 public:
  StoppingForest() = default;
  explicit StoppingForest(const DyadicInterval& root, double value = 0.0);

  int add(const DyadicInterval& I, int parent, double value);
  const DyadicInterval& root() const { return nodes_.front().interval; }
  const std::vector<StoppingNode>& nodes() const { return nodes_; }
  const StoppingNode& node(int k) const { return nodes_[k]; }
  std::size_t size() const { return nodes_.size(); }
  int find(const DyadicInterval& I) const;
  // Smallest node containing J (the stopping parent), -1 when J is outside the root.
  int parent_of(const DyadicInterval& J) const;
  // Every pair of nodes is nested or disjoint.
  bool is_grid() const;
  std::vector<DyadicInterval> intervals() const;
  std::string to_json() const;

 private:
  std::vector<StoppingNode> nodes_;
  std::map<DyadicInterval, int> index_;
};

// Recursive maximal intervals with E|f| > threshold * E|f| of the stopping parent.
StoppingForest f_stopping_tree(const MeasureIndex& sigma, const WeightedFunction& f, const DyadicInterval& I0,
                               double threshold = 4.0);
// sum_F gamma(F)^2 sigma(F) / |f|^2.
double quasi_orthogonality(const StoppingForest& forest, const MeasureIndex& sigma, const WeightedFunction& f);

enum class CoronaClass { C_o, C_sup };
const char* to_string(CoronaClass c);
CoronaClass classify_pair(const StoppingForest& forest, const DyadicInterval& I, const DyadicInterval& J);

struct CzCoronaReport {
  struct Part {
    DyadicInterval F;
    double B1 = 0, B2 = 0, B3 = 0;
  };
  std::vector<Part> parts;
  double total = 0.0;     // sum_F (B1 + B2 + B3)
  double B_sub = 0.0;     // evaluated directly
  double residual = 0.0;  // |total - B_sub| / (|B_sub| + 1)
  double projection_energy = 0.0;  // sum_F |P^w_F phi|^2
  double phi_norm2 = 0.0;
  double projection_cross = 0.0;   // max |<P_F phi, P_F' phi>| / (|P_F phi| |P_F' phi|), F != F'
  int max_sigma_projections = 0;   // per Haar index
  std::size_t c_o_pairs = 0, c_sup_pairs = 0;
};
CzCoronaReport cz_corona_split(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                               const StoppingForest& forest, const SplitOptions& opt = {});

struct PackingRecord {
  DyadicInterval I0;
  double children_mass = 0.0;
  double bound = 0.0;  // sigma(I0) / 4
  bool ok = true;
};
struct DiniTreeReport {
  std::vector<PackingRecord> generations;
  bool packing_ok = true;
  double max_packing_ratio = 0.0;  // children_mass / sigma(I0)
};
// Maximal S with Psi_w(I0, S)^2 > threshold Psi^2 sigma(S), built recursively from F.
StoppingForest dini_stopping_tree(const PairContext& ctx, const DyadicInterval& F, const DiniProfile& profile,
                                  double Psi, DiniTreeReport* report = nullptr, double threshold = 4.0);

struct StopFormReport {
  struct Part {
    DyadicInterval S;
    double B1 = 0, B2 = 0, B3 = 0;
  };
  std::vector<Part> parts;
  double B_stop = 0.0;
  double regrouped = 0.0;  // sum_S (B1 + B2 - B3)
  double residual = 0.0;   // |B_stop - regrouped| / (|B_stop| + 1)
  double max_bJ = 0.0;     // max_J sup |b_J|
  std::size_t pairs = 0;
};
// Pairs J compactly inside I with both stopping parents equal to F in cz_forest;
// S is the stopping parent of J in dini_forest (rooted at F).
StopFormReport stop_form_split(const PairContext& ctx, const WeightedFunction& f, const WeightedFunction& phi,
                               const DyadicInterval& F, const StoppingForest& cz_forest,
                               const StoppingForest& dini_forest);

struct BfReductionReport {
  double B_sub = 0.0, B_stop = 0.0, difference = 0.0;  // difference = B_sub - B_stop
  double tail_term = 0.0;      // <H(sigma T), g>_w
  double boundary_term = 0.0;  // (E_F f - E_root f) <H(sigma 1_F), g>_w
  double identity_residual = 0.0;     // |difference - tail - boundary| / (|difference| + 1)
  double telescoping_residual = 0.0;  // |sum_{I > F} E_F Delta_I f - (E_F f - E_root f)|
  double tail_sup = 0.0;              // sup_x |T(x)|
  double claimed_gap = 0.0;           // ||difference| - |E_F f <H(sigma 1_F), g>_w||
  bool mean_zero = false;
  bool ok = false;
};
// f supported on F; g = sum of Delta_J phi over J compactly inside F with stopping parent F.
BfReductionReport bf_reduction_check(const PairContext& ctx, const DyadicInterval& F, const StoppingForest& cz_forest,
                                     const WeightedFunction& f, const WeightedFunction& phi, double tol = 1e-9);

// Coordinates of a function on F that is constant on each forest child of F.
struct ChildCoordinates {
  std::vector<std::size_t> free_atoms;                  // atoms of F outside every child
  std::vector<DyadicInterval> children;                 // forest children of F
};
ChildCoordinates child_coordinates(const MeasureIndex& index, const DyadicInterval& F, const StoppingForest& forest);
// Intervals I inside F, not inside a child, with positive mass.
std::vector<DyadicInterval> fluctuation_intervals(const MeasureIndex& index, const DyadicInterval& F,
                                                  const StoppingForest& forest);
// max |E_I f| over fluctuation_intervals.
double fluctuation(const MeasureIndex& index, const WeightedFunction& f, const std::vector<DyadicInterval>& ints);

enum class BfShape { uniform, vertex };
// Random f supported on F, constant on the children of F in forest, scaled to fluctuation 1.
WeightedFunction sample_bounded_fluctuation(const MeasureIndex& index, const DyadicInterval& F,
                                            const StoppingForest& forest, std::mt19937_64& rng,
                                            BfShape shape = BfShape::uniform);

}  // namespace tw

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tw {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Positions are integers over kPosDen = 3 * 2^40. Dyadic endpoints down to
// level 40 and the 1/3, 2/3 leaf offsets are both exact on this lattice.
using Pos = std::int64_t;
inline constexpr int kPosBits = 40;
inline constexpr Pos kPosDen = Pos{3} << kPosBits;
inline constexpr int kMaxDepth = 24;

inline double to_double(Pos p) { return static_cast<double>(p) / static_cast<double>(kPosDen); }
// Signed difference a - b as a real number, rounded once.
inline double pos_diff(Pos a, Pos b) { return static_cast<double>(a - b) / static_cast<double>(kPosDen); }

Pos parse_pos(const std::string& s);  // "num/2^k" or "num/(3*2^k)"
std::string format_pos(Pos p);
Pos dyadic_pos(std::int64_t num, int k);  // num / 2^k

struct DyadicInterval {
  int level = 0;
  std::int64_t index = 0;

  Pos left() const { return index * (kPosDen >> level); }
  Pos right() const { return (index + 1) * (kPosDen >> level); }
  Pos mid() const { return left() + (kPosDen >> (level + 1)); }
  double length() const;
  bool contains(Pos p) const { return left() <= p && p < right(); }
  bool contains(const DyadicInterval& J) const;  // J subset of *this
  bool disjoint(const DyadicInterval& J) const { return !contains(J) && !J.contains(*this); }

  DyadicInterval parent() const { return {level - 1, index >> 1}; }
  DyadicInterval left_child() const { return {level + 1, 2 * index}; }
  DyadicInterval right_child() const { return {level + 1, 2 * index + 1}; }
  DyadicInterval child(bool right) const { return right ? right_child() : left_child(); }
  DyadicInterval ancestor(int lvl) const { return {lvl, index >> (level - lvl)}; }
  // Child of *this containing J; requires J strictly inside.
  DyadicInterval child_containing(const DyadicInterval& J) const {
    return ancestor_of(J, level + 1);
  }
  static DyadicInterval ancestor_of(const DyadicInterval& J, int lvl) { return J.ancestor(lvl); }

  std::size_t id() const { return (std::size_t{1} << level) - 1 + static_cast<std::size_t>(index); }
  static DyadicInterval from_id(std::size_t id);

  auto operator<=>(const DyadicInterval&) const = default;
  std::string str() const;
};

inline DyadicInterval root_interval() { return {0, 0}; }

// dist from J to the point p, exact numerator over kPosDen.
Pos dist_to_point(const DyadicInterval& J, Pos p);
// dist(x, I) with 0 inside I (closed distance to the half-open interval).
Pos dist_point_interval(Pos x, const DyadicInterval& I);
Pos dist_intervals(const DyadicInterval& A, const DyadicInterval& B);

class DyadicTree {
 public:
  explicit DyadicTree(int depth);
  int depth() const { return depth_; }
  std::size_t size() const { return (std::size_t{1} << (depth_ + 1)) - 1; }
  bool in_tree(const DyadicInterval& I) const;
  std::vector<DyadicInterval> intervals() const;      // level order
  std::vector<DyadicInterval> level(int lvl) const;
  DyadicInterval leaf_of(Pos p) const;
  bool is_leaf(const DyadicInterval& I) const { return I.level == depth_; }

 private:
  int depth_;
};

DyadicTree build_tree(int depth);

struct Atom {
  Pos pos = 0;
  double mass = 0.0;
};

// Sorted, strictly increasing positions, positive masses.
struct Weight {
  std::vector<Atom> atoms;

  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
  double total_mass() const;
  // Throws DomainError when invariants fail; depth checks endpoint avoidance.
  void validate(int depth) const;
  // [lo, hi) atom index range inside I.
  std::pair<std::size_t, std::size_t> range(const DyadicInterval& I) const;
  Weight scaled(double lambda) const;
};

Weight make_weight(std::vector<Atom> atoms, int depth);
double mass(const Weight& weight, const DyadicInterval& I);

struct WeightPair {
  Weight sigma;
  Weight w;
  void validate(int depth) const;
  WeightPair swapped() const { return {w, sigma}; }
};

enum class BoundaryMode { children, parent };

struct GoodnessParams {
  double epsilon = 0.2;
  int r = 2;
  BoundaryMode boundary = BoundaryMode::children;
  void validate() const;
};

bool is_good(const DyadicInterval& J, const GoodnessParams& params, const DyadicTree& tree);
// Goodness of J measured only against the single larger interval I.
bool is_good_relative(const DyadicInterval& J, const DyadicInterval& I, const GoodnessParams& params);
// Pair form: for J inside I with |J| <= 2^-r |I|, dist(J, boundary of I) >= |J|^eps |I|^(1-eps).
bool is_pair_good(const DyadicInterval& I, const DyadicInterval& J, const GoodnessParams& params);

// Precomputed goodness flags for every interval of a tree.
class GoodnessTable {
 public:
  GoodnessTable(const DyadicTree& tree, const GoodnessParams& params);
  bool good(const DyadicInterval& I) const { return flags_[I.id()] != 0; }
  const GoodnessParams& params() const { return params_; }

 private:
  std::vector<unsigned char> flags_;
  GoodnessParams params_;
};

enum class Side { sigma, w };

struct WeightFamilySpec {
  enum class Kind { uniform, power, cantor, random_masses, explicit_atoms, doubling };
  Kind kind = Kind::uniform;
  Side side = Side::sigma;
  double alpha = 0.0;     // power
  int levels = 2;         // cantor
  double density = 0.8;   // random_masses: probability that a leaf carries an atom
  double c = 0.1;         // doubling: every grandchild keeps at least c of its grandparent
  std::vector<Atom> atoms;  // explicit_atoms

  static WeightFamilySpec parse(const std::string& name, Side side);
  std::string name() const;
};

// Offset of the atom inside leaf k: 1/3 for the sigma side, 2/3 for the w side.
Pos leaf_atom_pos(std::int64_t leaf, int depth, Side side);
Weight generate_weight(const WeightFamilySpec& family, const DyadicTree& tree, std::uint64_t seed);
WeightPair generate_pair(const WeightFamilySpec& sigma_family, const WeightFamilySpec& w_family,
                         const DyadicTree& tree, std::uint64_t seed);
// Shift every atom by a dyadic amount modulo 1 (grid translation surrogate).
Weight translate(const Weight& weight, Pos shift, int depth);

std::string weight_to_json(const Weight& weight, const std::string& family, int depth, std::uint64_t seed);
Weight weight_from_json(const std::string& text, int* depth_out = nullptr);

// Atom ranges and node masses of one weight over every interval of a tree.
// Node masses are summed leaf-up, so mass(I) = mass(I-) + mass(I+) exactly.
class MeasureIndex {
 public:
  MeasureIndex(Weight weight, int depth);
  const Weight& weight() const { return weight_; }
  int depth() const { return depth_; }
  std::size_t lo(const DyadicInterval& I) const { return lo_[I.id()]; }
  std::size_t hi(const DyadicInterval& I) const { return hi_[I.id()]; }
  double mass(const DyadicInterval& I) const { return mass_[I.id()]; }
  bool massive(const DyadicInterval& I) const { return mass_[I.id()] > 0.0; }
  // Both children carry mass, so the Haar function at I exists.
  bool haar_defined(const DyadicInterval& I) const;
  std::vector<double> integrals(const std::vector<double>& values) const;

 private:
  Weight weight_;
  int depth_;
  std::vector<std::uint32_t> lo_, hi_;
  std::vector<double> mass_;
};

}  // namespace tw

#include "twoweight/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace tw {

namespace {

int trailing_zeros(std::uint64_t v) {
  int n = 0;
  while (v != 0 && (v & 1u) == 0) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

Pos dyadic_pos(std::int64_t num, int k) {
  if (k < 0 || k > kPosBits) throw ConfigError("position exponent out of range: " + std::to_string(k));
  return num * (kPosDen >> k);
}

Pos parse_pos(const std::string& s) {
  static const std::regex dyadic(R"(\s*(-?\d+)\s*/\s*2\^(\d+)\s*)");
  static const std::regex triadic(R"(\s*(-?\d+)\s*/\s*\(\s*3\s*\*\s*2\^(\d+)\s*\)\s*)");
  std::smatch m;
  if (std::regex_match(s, m, dyadic)) return dyadic_pos(std::stoll(m[1]), std::stoi(m[2]));
  if (std::regex_match(s, m, triadic)) {
    int k = std::stoi(m[2]);
    if (k < 0 || k > kPosBits) throw ConfigError("position exponent out of range in '" + s + "'");
    return std::stoll(m[1]) * (Pos{1} << (kPosBits - k));
  }
  throw ConfigError("cannot parse position '" + s + "'");
}

std::string format_pos(Pos p) {
  if (p == 0) return "0/2^0";
  bool third = p % 3 != 0;
  std::int64_t num = third ? p : p / 3;
  int k = kPosBits;
  int tz = std::min(trailing_zeros(static_cast<std::uint64_t>(num < 0 ? -num : num)), kPosBits);
  num >>= tz;
  k -= tz;
  if (third) return std::to_string(num) + "/(3*2^" + std::to_string(k) + ")";
  return std::to_string(num) + "/2^" + std::to_string(k);
}

double DyadicInterval::length() const { return std::ldexp(1.0, -level); }

bool DyadicInterval::contains(const DyadicInterval& J) const {
  return J.level >= level && (J.index >> (J.level - level)) == index;
}

DyadicInterval DyadicInterval::from_id(std::size_t id) {
  int lvl = 0;
  while ((std::size_t{2} << lvl) - 1 <= id) ++lvl;
  return {lvl, static_cast<std::int64_t>(id - ((std::size_t{1} << lvl) - 1))};
}

std::string DyadicInterval::str() const {
  return "[" + format_pos(left()) + ", " + format_pos(right()) + ")";
}

Pos dist_to_point(const DyadicInterval& J, Pos p) {
  if (p < J.left()) return J.left() - p;
  if (p > J.right()) return p - J.right();
  return 0;
}

Pos dist_point_interval(Pos x, const DyadicInterval& I) { return dist_to_point(I, x); }

Pos dist_intervals(const DyadicInterval& A, const DyadicInterval& B) {
  if (A.right() <= B.left()) return B.left() - A.right();
  if (B.right() <= A.left()) return A.left() - B.right();
  return 0;
}

DyadicTree::DyadicTree(int depth) : depth_(depth) {
  if (depth < 1 || depth > kMaxDepth)
    throw ConfigError("tree depth must be in [1, " + std::to_string(kMaxDepth) + "], got " + std::to_string(depth));
}

DyadicTree build_tree(int depth) { return DyadicTree(depth); }

bool DyadicTree::in_tree(const DyadicInterval& I) const {
  return I.level >= 0 && I.level <= depth_ && I.index >= 0 && I.index < (std::int64_t{1} << I.level);
}

std::vector<DyadicInterval> DyadicTree::level(int lvl) const {
  std::vector<DyadicInterval> out;
  out.reserve(std::size_t{1} << lvl);
  for (std::int64_t k = 0; k < (std::int64_t{1} << lvl); ++k) out.push_back({lvl, k});
  return out;
}

std::vector<DyadicInterval> DyadicTree::intervals() const {
  std::vector<DyadicInterval> out;
  out.reserve(size());
  for (int l = 0; l <= depth_; ++l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) out.push_back({l, k});
  return out;
}

DyadicInterval DyadicTree::leaf_of(Pos p) const {
  if (p < 0 || p >= kPosDen) throw DomainError("position outside [0,1)");
  return {depth_, p / (kPosDen >> depth_)};
}

double Weight::total_mass() const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.mass;
  return s;
}

void Weight::validate(int depth) const {
  const Pos step = kPosDen >> depth;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& a = atoms[i];
    if (!(a.mass > 0.0) || !std::isfinite(a.mass))
      throw DomainError("atom " + std::to_string(i) + " has non-positive or non-finite mass");
    if (a.pos < 0 || a.pos >= kPosDen) throw DomainError("atom " + std::to_string(i) + " outside [0,1)");
    if (a.pos % step == 0)
      throw DomainError("atom at " + format_pos(a.pos) + " sits on a dyadic endpoint of level <= " +
                        std::to_string(depth));
    if (i > 0 && atoms[i - 1].pos >= a.pos) throw DomainError("atom positions not strictly increasing");
  }
}

std::pair<std::size_t, std::size_t> Weight::range(const DyadicInterval& I) const {
  auto cmp = [](const Atom& a, Pos p) { return a.pos < p; };
  auto lo = std::lower_bound(atoms.begin(), atoms.end(), I.left(), cmp);
  auto hi = std::lower_bound(lo, atoms.end(), I.right(), cmp);
  return {static_cast<std::size_t>(lo - atoms.begin()), static_cast<std::size_t>(hi - atoms.begin())};
}

Weight Weight::scaled(double lambda) const {
  Weight out = *this;
  for (auto& a : out.atoms) a.mass *= lambda;
  return out;
}

Weight make_weight(std::vector<Atom> atoms, int depth) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.pos < b.pos; });
  Weight w{std::move(atoms)};
  w.validate(depth);
  return w;
}

double mass(const Weight& weight, const DyadicInterval& I) {
  auto [lo, hi] = weight.range(I);
  double s = 0.0;
  for (auto i = lo; i < hi; ++i) s += weight.atoms[i].mass;
  return s;
}

void WeightPair::validate(int depth) const {
  sigma.validate(depth);
  w.validate(depth);
  std::size_t i = 0, j = 0;
  while (i < sigma.size() && j < w.size()) {
    if (sigma.atoms[i].pos == w.atoms[j].pos)
      throw DomainError("sigma and w share the point mass at " + format_pos(w.atoms[j].pos));
    if (sigma.atoms[i].pos < w.atoms[j].pos)
      ++i;
    else
      ++j;
  }
}

void GoodnessParams::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw ConfigError("epsilon must lie in (0, 1/2), got " + std::to_string(epsilon));
  if (r < 2) throw ConfigError("r must be >= 2, got " + std::to_string(r));
}

namespace {

constexpr double kGoodGuard = 1e-12;

// Is J far enough from the boundary points of I (per the boundary mode)?
bool far_from(const DyadicInterval& J, const DyadicInterval& I, const GoodnessParams& p) {
  Pos pts[3] = {I.left(), I.mid(), I.right()};
  Pos d = kPosDen;
  for (int k = 0; k < 3; ++k) {
    if (k == 1 && p.boundary == BoundaryMode::parent) continue;
    d = std::min(d, dist_to_point(J, pts[k]));
  }
  if (d == 0) return false;
  const double log_req = -(p.epsilon * J.level + (1.0 - p.epsilon) * I.level) * std::log(2.0);
  return log_req <= std::log(to_double(d)) + kGoodGuard;
}

}  // namespace

bool is_good_relative(const DyadicInterval& J, const DyadicInterval& I, const GoodnessParams& params) {
  if (I.level > J.level - (params.r + 1)) return true;
  return far_from(J, I, params);
}

bool is_pair_good(const DyadicInterval& I, const DyadicInterval& J, const GoodnessParams& params) {
  if (!I.contains(J) || J.level < I.level + params.r) return true;
  GoodnessParams p = params;
  p.boundary = BoundaryMode::parent;
  return far_from(J, I, p);
}

bool is_good(const DyadicInterval& J, const GoodnessParams& params, const DyadicTree& tree) {
  if (!tree.in_tree(J)) throw DomainError("interval " + J.str() + " is not in the tree");
  // Only the ancestor at each qualifying level can carry the nearest boundary points.
  for (int l = 0; l <= J.level - (params.r + 1); ++l)
    if (!far_from(J, J.ancestor(l), params)) return false;
  return true;
}

GoodnessTable::GoodnessTable(const DyadicTree& tree, const GoodnessParams& params)
    : flags_(tree.size(), 0), params_(params) {
  for (const auto& I : tree.intervals()) flags_[I.id()] = is_good(I, params, tree) ? 1 : 0;
}

MeasureIndex::MeasureIndex(Weight weight, int depth)
    : weight_(std::move(weight)), depth_(depth) {
  const std::size_t n = (std::size_t{1} << (depth + 1)) - 1;
  lo_.assign(n, 0);
  hi_.assign(n, 0);
  mass_.assign(n, 0.0);
  const Pos step = kPosDen >> depth;
  std::size_t a = 0;
  const auto& atoms = weight_.atoms;
  for (std::int64_t k = 0; k < (std::int64_t{1} << depth); ++k) {
    DyadicInterval leaf{depth, k};
    std::size_t lo = a;
    double m = 0.0;
    while (a < atoms.size() && atoms[a].pos < (k + 1) * step) m += atoms[a++].mass;
    lo_[leaf.id()] = static_cast<std::uint32_t>(lo);
    hi_[leaf.id()] = static_cast<std::uint32_t>(a);
    mass_[leaf.id()] = m;
  }
  for (int l = depth - 1; l >= 0; --l) {
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval I{l, k};
      auto L = I.left_child().id(), R = I.right_child().id();
      lo_[I.id()] = lo_[L];
      hi_[I.id()] = hi_[R];
      mass_[I.id()] = mass_[L] + mass_[R];
    }
  }
}

bool MeasureIndex::haar_defined(const DyadicInterval& I) const {
  return I.level < depth_ && massive(I.left_child()) && massive(I.right_child());
}

std::vector<double> MeasureIndex::integrals(const std::vector<double>& values) const {
  std::vector<double> out(mass_.size(), 0.0);
  for (std::int64_t k = 0; k < (std::int64_t{1} << depth_); ++k) {
    DyadicInterval leaf{depth_, k};
    double s = 0.0;
    for (auto i = lo_[leaf.id()]; i < hi_[leaf.id()]; ++i) s += weight_.atoms[i].mass * values[i];
    out[leaf.id()] = s;
  }
  for (int l = depth_ - 1; l >= 0; --l)
    for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
      DyadicInterval I{l, k};
      out[I.id()] = out[I.left_child().id()] + out[I.right_child().id()];
    }
  return out;
}

// ---- weight families ----

Pos leaf_atom_pos(std::int64_t leaf, int depth, Side side) {
  const Pos unit = Pos{1} << (kPosBits - depth);  // one third of a leaf
  return (3 * leaf + (side == Side::sigma ? 1 : 2)) * unit;
}

WeightFamilySpec WeightFamilySpec::parse(const std::string& name, Side side) {
  static const std::regex re(R"(\s*([a-z_]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*)");
  std::smatch m;
  if (!std::regex_match(name, m, re)) throw ConfigError("unknown weight family '" + name + "'");
  WeightFamilySpec f;
  f.side = side;
  const std::string kind = m[1];
  const bool has_arg = m[2].matched;
  auto arg = [&]() { return std::stod(m[2]); };
  if (kind == "uniform") {
    f.kind = Kind::uniform;
  } else if (kind == "power") {
    f.kind = Kind::power;
    if (!has_arg) throw ConfigError("power family needs an exponent, e.g. power(0.5)");
    f.alpha = arg();
  } else if (kind == "cantor") {
    f.kind = Kind::cantor;
    f.levels = has_arg ? static_cast<int>(arg()) : 2;
    if (f.levels < 0) throw ConfigError("cantor levels must be >= 0");
  } else if (kind == "random_masses" || kind == "random") {
    f.kind = Kind::random_masses;
    if (has_arg) f.density = arg();
    if (!(f.density > 0.0 && f.density <= 1.0)) throw ConfigError("random_masses density must be in (0,1]");
  } else if (kind == "doubling") {
    f.kind = Kind::doubling;
    if (has_arg) f.c = arg();
    if (!(f.c > 0.0 && f.c <= 0.25)) throw ConfigError("doubling constant c must be in (0, 1/4]");
  } else if (kind == "explicit_atoms") {
    f.kind = Kind::explicit_atoms;
  } else {
    throw ConfigError("unknown weight family '" + name + "'");
  }
  return f;
}

std::string WeightFamilySpec::name() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::uniform: return "uniform";
    case Kind::power: os << "power(" << alpha << ")"; return os.str();
    case Kind::cantor: return "cantor(" + std::to_string(levels) + ")";
    case Kind::random_masses: os << "random_masses(" << density << ")"; return os.str();
    case Kind::doubling: os << "doubling(" << c << ")"; return os.str();
    case Kind::explicit_atoms: return "explicit_atoms";
  }
  return "?";
}

namespace {

bool cantor_kept(std::int64_t leaf, int depth, int levels) {
  const int L = std::min(levels, depth);
  // Each removal step keeps the outer quarters: binary digit pairs 00 or 11.
  for (int d = 0; d + 2 <= L; d += 2) {
    int b0 = static_cast<int>((leaf >> (depth - 1 - d)) & 1);
    int b1 = static_cast<int>((leaf >> (depth - 2 - d)) & 1);
    if (b0 != b1) return false;
  }
  return true;
}

}  // namespace

Weight generate_weight(const WeightFamilySpec& family, const DyadicTree& tree, std::uint64_t seed) {
  const int D = tree.depth();
  const std::int64_t n = std::int64_t{1} << D;
  const double leaf_len = std::ldexp(1.0, -D);
  std::mt19937_64 rng(seed * 2 + (family.side == Side::w ? 1 : 0) + 0x5bd1e995ULL);
  std::vector<Atom> atoms;
  using K = WeightFamilySpec::Kind;
  switch (family.kind) {
    case K::uniform:
      for (std::int64_t k = 0; k < n; ++k) atoms.push_back({leaf_atom_pos(k, D, family.side), leaf_len});
      break;
    case K::power:
      for (std::int64_t k = 0; k < n; ++k) {
        Pos p = leaf_atom_pos(k, D, family.side);
        double m = std::pow(to_double(p), family.alpha) * leaf_len;
        if (!std::isfinite(m) || !(m > 0.0))
          throw ConfigError("power(" + std::to_string(family.alpha) + ") produces a non-finite mass");
        atoms.push_back({p, m});
      }
      break;
    case K::cantor: {
      std::vector<std::int64_t> kept;
      for (std::int64_t k = 0; k < n; ++k)
        if (cantor_kept(k, D, family.levels)) kept.push_back(k);
      for (auto k : kept) atoms.push_back({leaf_atom_pos(k, D, family.side), 1.0 / kept.size()});
      break;
    }
    case K::random_masses: {
      std::uniform_real_distribution<double> u(0.0, 1.0), m(0.05, 1.0);
      for (std::int64_t k = 0; k < n; ++k) {
        double keep = u(rng), mass_draw = m(rng);
        if (keep < family.density) atoms.push_back({leaf_atom_pos(k, D, family.side), mass_draw});
      }
      if (atoms.empty()) {
        std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
        atoms.push_back({leaf_atom_pos(pick(rng), D, family.side), 1.0});
      }
      break;
    }
    case K::doubling: {
      const double s = std::sqrt(family.c);
      std::uniform_real_distribution<double> t(s, 1.0 - s);
      std::vector<double> node(2 * n - 1, 0.0);
      node[0] = 1.0;
      for (int l = 0; l < D; ++l)
        for (std::int64_t k = 0; k < (std::int64_t{1} << l); ++k) {
          DyadicInterval I{l, k};
          double frac = t(rng);
          node[I.left_child().id()] = node[I.id()] * frac;
          node[I.right_child().id()] = node[I.id()] * (1.0 - frac);
        }
      for (std::int64_t k = 0; k < n; ++k)
        atoms.push_back({leaf_atom_pos(k, D, family.side), node[DyadicInterval{D, k}.id()]});
      break;
    }
    case K::explicit_atoms:
      atoms = family.atoms;
      break;
  }
  return make_weight(std::move(atoms), D);
}

WeightPair generate_pair(const WeightFamilySpec& sigma_family, const WeightFamilySpec& w_family,
                         const DyadicTree& tree, std::uint64_t seed) {
  WeightFamilySpec s = sigma_family, w = w_family;
  s.side = Side::sigma;
  w.side = Side::w;
  WeightPair pair{generate_weight(s, tree, seed), generate_weight(w, tree, seed)};
  pair.validate(tree.depth());
  return pair;
}

Weight translate(const Weight& weight, Pos shift, int depth) {
  std::vector<Atom> atoms = weight.atoms;
  for (auto& a : atoms) a.pos = ((a.pos + shift) % kPosDen + kPosDen) % kPosDen;
  return make_weight(std::move(atoms), depth);
}

std::string weight_to_json(const Weight& weight, const std::string& family, int depth, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["family"] = family;
  j["depth"] = depth;
  j["seed"] = seed;
  auto& arr = j["atoms"] = nlohmann::ordered_json::array();
  for (const auto& a : weight.atoms) arr.push_back({{"pos", format_pos(a.pos)}, {"mass", a.mass}});
  return j.dump(2);
}

Weight weight_from_json(const std::string& text, int* depth_out) {
  auto j = nlohmann::json::parse(text);
  const int depth = j.at("depth").get<int>();
  if (depth_out) *depth_out = depth;
  DyadicTree tree(depth);
  if (j.contains("atoms")) {
    std::vector<Atom> atoms;
    for (const auto& a : j["atoms"]) atoms.push_back({parse_pos(a.at("pos").get<std::string>()), a.at("mass").get<double>()});
    return make_weight(std::move(atoms), depth);
  }
  Side side = j.value("side", std::string("sigma")) == "w" ? Side::w : Side::sigma;
  auto fam = WeightFamilySpec::parse(j.at("family").get<std::string>(), side);
  return generate_weight(fam, tree, j.value("seed", std::uint64_t{0}));
}

}  // namespace tw

#include "twoweight/explorer.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace tw {

using ojson = nlohmann::ordered_json;

namespace {

const std::pair<unsigned, const char*> kSuiteNames[] = {
    {kIdentities, "identities"}, {kLemmas, "lemmas"}, {kConstants, "constants"}, {kQuestions, "questions"}};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

const char* boundary_name(BoundaryMode m) { return m == BoundaryMode::parent ? "parent" : "children"; }

BoundaryMode parse_boundary(const std::string& s) {
  if (s == "children") return BoundaryMode::children;
  if (s == "parent") return BoundaryMode::parent;
  throw ConfigError("boundary must be 'children' or 'parent', got '" + s + "'");
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// JSON numbers cannot hold inf or nan.
ojson num(double v) {
  if (std::isfinite(v)) return v;
  return fmt17(v);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

unsigned parse_suites(const std::string& text) {
  unsigned bits = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "all") {
      bits |= kAllSuites;
      continue;
    }
    bool found = false;
    for (const auto& [b, name] : kSuiteNames)
      if (item == name) {
        bits |= b;
        found = true;
      }
    if (!found) throw ConfigError("unknown suite '" + item + "' (identities, lemmas, constants, questions, all)");
  }
  if (bits == 0) throw ConfigError("no suite selected");
  return bits;
}

std::string suites_name(unsigned bits) {
  if (bits == kAllSuites) return "all";
  std::string out;
  for (const auto& [b, name] : kSuiteNames)
    if (bits & b) out += (out.empty() ? "" : ",") + std::string(name);
  return out;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  auto parse_one = [&](const std::string& s) {
    const auto t = trim(s);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("seeds must look like 'a..b' or 'a', got '" + text + "'");
    return static_cast<std::uint64_t>(std::stoull(t));
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const auto a = parse_one(text);
    return {a, a};
  }
  return {parse_one(text.substr(0, dots)), parse_one(text.substr(dots + 2))};
}

std::vector<std::string> split_families(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); };
  if (depth < 1 || depth > 16) fail("depth", "must lie in [1, 16], got " + std::to_string(depth));
  if ((suites & (kLemmas | kConstants | kQuestions)) && depth > 12)
    fail("depth", "norm suites need depth <= 12, got " + std::to_string(depth));
  if (!(epsilon > 0.0 && epsilon < 0.5)) fail("eps", "epsilon must lie in (0, 1/2), got " + short_num(epsilon));
  if (r < 2 || r > depth) fail("r", "must lie in [2, depth], got " + std::to_string(r));
  if (seed_first > seed_last) fail("seeds", "empty range");
  if (seed_last - seed_first >= 100000) fail("seeds", "at most 100000 seeds per run");
  if (!(delta >= 0.0) || !std::isfinite(delta)) fail("delta", "must be a finite number >= 0");
  if (budget < 1) fail("budget", "must be positive");
  if (samples < 1) fail("samples", "must be positive");
  if (suites == 0 || (suites & ~unsigned{kAllSuites})) fail("suite", "invalid suite selection");
  if (sigma_families.empty()) fail("sigma-family", "at least one family needed");
  if (w_families.empty()) fail("w-family", "at least one family needed");
  for (const auto& f : sigma_families) {
    try {
      WeightFamilySpec::parse(f, Side::sigma);
    } catch (const ConfigError& e) {
      fail("sigma-family", e.what());
    }
  }
  for (const auto& f : w_families) {
    try {
      WeightFamilySpec::parse(f, Side::w);
    } catch (const ConfigError& e) {
      fail("w-family", e.what());
    }
  }
}

namespace {

ojson config_json(const ExperimentConfig& c) {
  ojson j;
  j["depth"] = c.depth;
  j["eps"] = c.epsilon;
  j["r"] = c.r;
  j["boundary"] = boundary_name(c.boundary);
  j["seeds"] = std::to_string(c.seed_first) + ".." + std::to_string(c.seed_last);
  j["sigma_family"] = c.sigma_families;
  j["w_family"] = c.w_families;
  j["suite"] = suites_name(c.suites);
  j["delta"] = c.delta;
  j["budget"] = c.budget;
  j["samples"] = c.samples;
  j["inject_sign_flip"] = c.inject_sign_flip;
  return j;
}

std::string families_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  std::string out;
  for (const auto& e : v) out += (out.empty() ? "" : ",") + e.get<std::string>();
  return out;
}

int line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(std::min(byte, text.size())), '\n'));
}

int key_line(const std::string& text, const std::string& key) {
  const auto p = text.find("\"" + key + "\"");
  return p == std::string::npos ? 0 : line_of(text, p);
}

}  // namespace

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(2); }

ExperimentConfig config_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ":1: config must be a JSON object");
  ExperimentConfig c;
  std::string current;
  auto where = [&](const std::string& key) { return origin + ":" + std::to_string(key_line(text, key)) + ": "; };
  try {
    for (const auto& [key, v] : j.items()) {
      current = key;
      if (key == "depth") c.depth = v.get<int>();
      else if (key == "eps" || key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "r") c.r = v.get<int>();
      else if (key == "boundary") c.boundary = parse_boundary(v.get<std::string>());
      else if (key == "seeds") {
        const auto [a, b] = parse_seed_range(v.is_string() ? v.get<std::string>() : std::to_string(v.get<std::uint64_t>()));
        c.seed_first = a;
        c.seed_last = b;
      } else if (key == "sigma_family") c.sigma_families = split_families(families_text(v));
      else if (key == "w_family") c.w_families = split_families(families_text(v));
      else if (key == "suite") c.suites = parse_suites(v.get<std::string>());
      else if (key == "out") c.out_dir = v.get<std::string>();
      else if (key == "delta") c.delta = v.get<double>();
      else if (key == "budget") c.budget = v.get<int>();
      else if (key == "samples") c.samples = v.get<int>();
      else if (key == "inject_sign_flip") c.inject_sign_flip = v.get<bool>();
      else throw ConfigError("unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where(current) + current + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where(current) + e.what());
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    std::string field = msg.substr(0, msg.find(':'));
    std::replace(field.begin(), field.end(), '-', '_');
    if (field == "eps" && !j.contains("eps")) field = "epsilon";
    throw ConfigError(where(field) + msg);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), path);
}

// Samplers

Weight damp(const Weight& weight, const DyadicInterval& I, double factor) {
  Weight out = weight;
  for (auto& a : out.atoms)
    if (I.contains(a.pos)) a.mass *= factor;
  return out;
}

std::optional<MonotonicityInstance> sample_monotonicity(const WeightPair& pair, int depth, std::mt19937_64& rng) {
  if (depth < 2) return std::nullopt;
  const MeasureIndex w(pair.w, depth);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const int li = std::uniform_int_distribution<int>(0, depth - 2)(rng);
    const DyadicInterval I{li, std::uniform_int_distribution<std::int64_t>(0, (std::int64_t{1} << li) - 1)(rng)};
    const int lj = std::uniform_int_distribution<int>(li + 1, depth - 1)(rng);
    const std::int64_t span = std::int64_t{1} << (lj - li);
    const DyadicInterval J{lj, I.index * span + std::uniform_int_distribution<std::int64_t>(0, span - 1)(rng)};
    if (!w.haar_defined(J)) continue;
    MonotonicityInstance m{std::vector<double>(pair.sigma.size(), 0.0), std::vector<double>(pair.sigma.size(), 0.0), J, I};
    bool any = false;
    for (std::size_t i = 0; i < pair.sigma.size(); ++i) {
      if (I.contains(pair.sigma.atoms[i].pos)) continue;
      if (U(rng) < 0.2) continue;
      m.mu[i] = 2.0 * U(rng);
      m.nu[i] = m.mu[i] * (2.0 * U(rng) - 1.0);
      any = true;
    }
    if (any) return m;
  }
  return std::nullopt;
}

std::optional<DecayInstance> sample_decay(const MeasureIndex& sigma, const GoodnessParams& params, int s_max,
                                          std::mt19937_64& rng) {
  const int D = sigma.depth();
  s_max = std::min(s_max, D - 1);
  if (s_max < params.r) return std::nullopt;
  for (int attempt = 0; attempt < 500; ++attempt) {
    const int lp = std::uniform_int_distribution<int>(0, std::min(3, D - params.r - 1))(rng);
    const DyadicInterval Ip{lp, std::uniform_int_distribution<std::int64_t>(0, (std::int64_t{1} << lp) - 1)(rng)};
    if (!sigma.massive(Ip)) continue;
    const int li = std::uniform_int_distribution<int>(lp + 1, D - params.r)(rng);
    const DyadicInterval I{li, (Ip.index << (li - lp)) +
                                   std::uniform_int_distribution<std::int64_t>(0, (std::int64_t{1} << (li - lp)) - 1)(rng)};
    const int s = std::uniform_int_distribution<int>(params.r, std::min(s_max, D - li))(rng);
    std::vector<DyadicInterval> good;
    for (std::int64_t k = 0; k < (std::int64_t{1} << s); ++k) {
      const DyadicInterval J{li + s, (I.index << s) + k};
      if (is_pair_good(I, J, params)) good.push_back(J);
    }
    if (good.empty()) continue;
    return DecayInstance{good[std::uniform_int_distribution<std::size_t>(0, good.size() - 1)(rng)], I, Ip};
  }
  return std::nullopt;
}

HaarAxioms haar_axioms(const Weight& weight, int depth, const WeightedFunction& f) {
  HaarAxioms out;
  const DyadicTree tree(depth);
  const MeasureIndex idx(weight, depth);
  const double f2 = inner(weight, f, f);
  const auto c = analyze(weight, f, tree);
  double energy = c.root_mean * c.root_mean * idx.mass(root_interval());
  for (const auto& [I, v] : c.coeffs) energy += v * v;
  if (f2 > 0.0) out.parseval = std::abs(energy - f2) / f2;
  const auto g = synthesize(weight, c, tree);
  WeightedFunction diff(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) diff[i] = f[i] - g[i];
  if (f2 > 0.0) out.reconstruction = norm(weight, diff) / std::sqrt(f2);

  std::vector<DyadicInterval> defined;
  for (int l = 0; l < depth; ++l)
    for (const auto& I : tree.level(l))
      if (idx.haar_defined(I)) defined.push_back(I);
  // Values of h_I on its two children.
  std::map<DyadicInterval, std::pair<double, double>> vals;
  for (const auto& I : defined) {
    const double ml = idx.mass(I.left_child()), mr = idx.mass(I.right_child());
    const auto v = haar_child_averages(ml, mr);
    vals[I] = v;
    out.haar_bound = std::max({out.haar_bound, std::abs(v.first) * std::sqrt(ml), std::abs(v.second) * std::sqrt(mr)});
  }
  auto value_at = [&](const DyadicInterval& I, std::size_t i) {
    const auto& v = vals[I];
    return weight.atoms[i].pos < I.mid() ? v.first : v.second;
  };
  // Disjoint supports give exact zeros, so only nested pairs are summed.
  for (const auto& J : defined) {
    for (int l = 0; l <= J.level; ++l) {
      const auto I = J.ancestor(l);
      if (!vals.count(I)) continue;
      double s = 0.0;
      for (auto i = idx.lo(J); i < idx.hi(J); ++i) s += weight.atoms[i].mass * value_at(I, i) * value_at(J, i);
      out.orthonormality = std::max(out.orthonormality, std::abs(s - (I == J ? 1.0 : 0.0)));
    }
  }
  return out;
}

// Suites

namespace {

struct Instance {
  std::uint64_t seed = 0;
  std::string sigma_family, w_family;
  WeightPair pair;
};

class RowBuilder {
 public:
  explicit RowBuilder(InstanceRow& row) : row_(row) {}
  void metric(const std::string& name, double v) { row_.metrics.emplace_back(name, v); }
  void check(const std::string& suite, const std::string& name, double value, double limit, std::string detail = {}) {
    CheckResult c{suite, name, value, limit, std::isfinite(value) && value <= limit, std::move(detail)};
    row_.checks.push_back(std::move(c));
  }

 private:
  InstanceRow& row_;
};

WeightedFunction normal_function(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  WeightedFunction f(n);
  for (auto& v : f) v = N(rng);
  return f;
}

WeightedFunction heavy_positive(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.5);
  WeightedFunction f(n);
  for (auto& v : f) v = std::exp(N(rng));
  return f;
}

double packing_excess(const DiniTreeReport& rep) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& g : rep.generations) worst = std::max(worst, g.children_mass - g.bound);
  return rep.generations.empty() ? 0.0 : worst;
}

constexpr int kPairDepthLimit = 10;

void identities_suite(const Instance& in, const ExperimentConfig& cfg, std::mt19937_64& rng, RowBuilder& b) {
  const int D = cfg.depth;
  const char* S = "identities";
  for (int side = 0; side < 2; ++side) {
    const Weight& wt = side == 0 ? in.pair.sigma : in.pair.w;
    const std::string tag = side == 0 ? "sigma" : "w";
    const auto ax = haar_axioms(wt, D, normal_function(wt.size(), rng));
    b.metric("haar_orthonormality_" + tag, ax.orthonormality);
    b.metric("haar_parseval_" + tag, ax.parseval);
    b.metric("haar_reconstruction_" + tag, ax.reconstruction);
    b.metric("haar_bound_" + tag, ax.haar_bound);
    b.check(S, "haar_orthonormality_" + tag, ax.orthonormality, 1e-12);
    b.check(S, "haar_parseval_" + tag, ax.parseval, 1e-10);
    b.check(S, "haar_reconstruction_" + tag, ax.reconstruction, 1e-10);
    b.check(S, "haar_bound_" + tag, ax.haar_bound - 1.0, 1e-12);
  }
  {
    const MeasureIndex sigma(in.pair.sigma, D);
    if (sigma.massive(root_interval())) {
      const auto f = heavy_positive(in.pair.sigma.size(), rng);
      const auto forest = f_stopping_tree(sigma, f, root_interval());
      b.metric("f_forest_size", static_cast<double>(forest.size()));
      b.check(S, "f_forest_grid", forest.is_grid() ? 0.0 : 1.0, 0.0);
    }
  }
  if (D > kPairDepthLimit || in.pair.sigma.empty() || in.pair.w.empty()) return;

  const PairContext ctx(in.pair, D, cfg.goodness());
  const auto f = normal_function(in.pair.sigma.size(), rng);
  const auto phi = normal_function(in.pair.w.size(), rng);
  for (bool filtered : {false, true}) {
    const auto sp = split_form(ctx, f, phi, {filtered});
    const double scale = std::abs(sp.B) + 1.0;
    const std::string suffix = filtered ? "_good" : "";
    b.metric("B" + suffix, sp.B);
    b.metric("cascade_top" + suffix, std::abs(sp.res_top) / scale);
    b.metric("cascade_13" + suffix, std::abs(sp.res_13) / scale);
    b.metric("cascade_23" + suffix, std::abs(sp.res_23) / scale);
    b.metric("cascade_sub" + suffix, std::abs(sp.res_sub) / scale);
    b.check(S, "cascade_top" + suffix, std::abs(sp.res_top) / scale, 1e-9);
    b.check(S, "cascade_13" + suffix, std::abs(sp.res_13) / scale, 1e-9);
    b.check(S, "cascade_23" + suffix, std::abs(sp.res_23) / scale, 1e-9);
    b.check(S, "cascade_sub" + suffix, std::abs(sp.res_sub) / scale, 1e-9);
  }
  {
    const double Bt = full_form(in.pair, f, phi, cfg.delta);
    const double B0 = full_form(in.pair, f, phi, 0.0);
    b.metric("truncation_gap", std::abs(Bt - B0) / (std::abs(B0) + 1.0));
  }

  if (ctx.sigma().massive(root_interval())) {
    const auto fpos = heavy_positive(in.pair.sigma.size(), rng);
    const auto forest = f_stopping_tree(ctx.sigma(), fpos, root_interval());
    const auto cz = cz_corona_split(ctx, fpos, phi, forest);
    b.metric("cz_forest_size", static_cast<double>(forest.size()));
    b.metric("cz_residual", cz.residual);
    b.metric("cz_projection_cross", cz.projection_cross);
    b.check(S, "cz_residual", cz.residual, 1e-9);

    const auto bf = bf_reduction_check(ctx, root_interval(), forest, f, phi);
    b.metric("bf_identity_residual", bf.identity_residual);
    b.metric("bf_telescoping_residual", bf.telescoping_residual);
    b.check(S, "bf_identity_residual", bf.identity_residual, 1e-9);
    b.check(S, "bf_telescoping_residual", bf.telescoping_residual, 1e-9);
  }

  const auto profile = DiniProfile::from_epsilon(cfg.epsilon, D);
  for (int variant = 0; variant < 2; ++variant) {
    // variant 1 damps sigma on one half so that the Dini forest can branch
    WeightPair pair = in.pair;
    if (variant == 1) pair.sigma = damp(pair.sigma, root_interval().child(in.seed % 2 == 1), 1e-2);
    const PairContext c2(pair, D, cfg.goodness());
    if (!c2.sigma().massive(root_interval())) continue;
    const double Psi = dini_constant(c2, profile);
    DiniTreeReport rep;
    const auto dini = dini_stopping_tree(c2, root_interval(), profile, Psi, &rep);
    const auto stop = stop_form_split(c2, f, phi, root_interval(), StoppingForest(root_interval()), dini);
    const std::string tag = variant == 0 ? "" : "_damped";
    b.metric("Psi" + tag, Psi);
    b.metric("dini_forest_size" + tag, static_cast<double>(dini.size()));
    b.metric("dini_packing_ratio" + tag, rep.max_packing_ratio);
    b.metric("stop_residual" + tag, stop.residual);
    b.check(S, "stop_residual" + tag, stop.residual, 1e-9);
    b.check(S, "dini_packing" + tag, packing_excess(rep), 1e-12);
  }
}

void lemmas_suite(const Instance& in, const ExperimentConfig& cfg, std::mt19937_64& rng, RowBuilder& b) {
  const int D = cfg.depth;
  const char* S = "lemmas";
  {
    int violations = 0, tried = 0;
    double worst = -std::numeric_limits<double>::infinity();
    std::string first;
    for (int k = 0; k < 5 * cfg.samples; ++k) {
      const auto m = sample_monotonicity(in.pair, D, rng);
      if (!m) break;
      ++tried;
      SignedDensity nu{&in.pair.sigma, m->nu}, mu{&in.pair.sigma, m->mu};
      const auto rep = monotonicity_check(nu, mu, m->J, m->I, in.pair.w);
      worst = std::max(worst, (rep.lhs - rep.rhs) / (1.0 + std::abs(rep.rhs)));
      if (!rep.ok) {
        if (violations == 0)
          first = "sample " + std::to_string(k) + ": J=" + m->J.str() + " I=" + m->I.str() + " lhs=" + fmt17(rep.lhs) +
                  " rhs=" + fmt17(rep.rhs);
        ++violations;
      }
    }
    b.metric("monotonicity_samples", tried);
    b.metric("monotonicity_worst_gap", tried ? worst : 0.0);
    b.check(S, "monotonicity_violations", violations, 0.0, first);
  }
  const MeasureIndex sigma(in.pair.sigma, D);
  if (sigma.massive(root_interval())) {
    double worst = 0.0;
    for (int k = 0; k < cfg.samples; ++k) {
      const auto f = heavy_positive(in.pair.sigma.size(), rng);
      worst = std::max(worst, quasi_orthogonality(f_stopping_tree(sigma, f, root_interval()), sigma, f));
    }
    b.metric("quasi_orthogonality_max", worst);
  }
  {
    double worst = 0.0, min_exp = std::numeric_limits<double>::infinity();
    int n = 0;
    for (int k = 0; k < cfg.samples; ++k) {
      const auto d = sample_decay(sigma, cfg.goodness(), 8, rng);
      if (!d) break;
      const auto rep = poisson_decay_check(in.pair.sigma, cfg.goodness(), d->J, d->I, d->I_prime);
      ++n;
      worst = std::max(worst, rep.ratio / rep.bound);
      min_exp = std::min(min_exp, rep.observed_exponent);
    }
    b.metric("decay_samples", n);
    b.metric("decay_ratio_over_bound", worst);
    b.metric("decay_min_exponent", n ? min_exp : 0.0);
  }
  if (D <= kPairDepthLimit && !in.pair.sigma.empty() && !in.pair.w.empty()) {
    const PairContext ctx(in.pair, D, cfg.goodness());
    const double a2 = a2_constant(in.pair, {D, 0});
    double worst = 0.0;
    int bad = 0;
    for (int k = 0; k < cfg.samples; ++k) {
      const int li = std::uniform_int_distribution<int>(0, std::max(0, D - cfg.r))(rng);
      const DyadicInterval I{li, std::uniform_int_distribution<std::int64_t>(0, (std::int64_t{1} << li) - 1)(rng)};
      const int s = std::uniform_int_distribution<int>(cfg.r, std::max(cfg.r, D - li))(rng);
      const auto rep = schur_sum(ctx, I, s, a2);
      worst = std::max(worst, rep.a2_ratio);
      if (!rep.cauchy_schwarz_ok) ++bad;
    }
    b.metric("schur_a2_ratio_max", worst);
    b.check(S, "schur_cauchy_schwarz", bad, 0.0);
  }
}

double family_c(const std::string& name, Side side) {
  const auto spec = WeightFamilySpec::parse(name, side);
  return spec.kind == WeightFamilySpec::Kind::doubling ? spec.c : -1.0;
}

void constants_suite(const Instance& in, const ExperimentConfig& cfg, std::mt19937_64&, RowBuilder& b,
                     InstanceRow& row) {
  const int D = cfg.depth;
  for (int side = 0; side < 2; ++side) {
    const Weight& wt = side == 0 ? in.pair.sigma : in.pair.w;
    const std::string tag = side == 0 ? "sigma" : "w";
    const double floor = doubling_energy_floor(wt, D);
    b.metric("doubling_floor_" + tag, floor);
    const double c = family_c(side == 0 ? in.sigma_family : in.w_family, side == 0 ? Side::sigma : Side::w);
    if (c > 0.0 && floor >= 0.0) b.check("constants", "doubling_floor_" + tag, c / 4.0 - floor, 1e-12);
  }
  SuiteOptions so;
  so.samples = cfg.samples;
  so.bf_budget = cfg.budget;
  so.seed = in.seed;
  const PairContext ctx(in.pair, D, cfg.goodness());
  auto [c, r] = theorem_inequality_suite(ctx, so);
  row.has_constants = true;
  row.constants = c;
  row.ratios = r;
}

ojson weight_obj(const Weight& w, const std::string& family, int depth, std::uint64_t seed) {
  return ojson::parse(weight_to_json(w, family, depth, seed));
}

std::string instance_json(const Instance& in, const ExperimentConfig& cfg) {
  ojson j;
  j["config"] = config_json(cfg);
  j["seed"] = in.seed;
  j["sigma_family"] = in.sigma_family;
  j["w_family"] = in.w_family;
  j["sigma"] = weight_obj(in.pair.sigma, in.sigma_family, cfg.depth, in.seed);
  j["w"] = weight_obj(in.pair.w, in.w_family, cfg.depth, in.seed);
  return j.dump(2);
}

InstanceRow run_instance(const Instance& in, const ExperimentConfig& cfg) {
  InstanceRow row;
  row.seed = in.seed;
  row.sigma_family = in.sigma_family;
  row.w_family = in.w_family;
  row.instance_json = instance_json(in, cfg);
  RowBuilder b(row);
  const std::uint64_t base = in.seed * 0x9e3779b97f4a7c15ULL ^ fnv1a(in.sigma_family + "|" + in.w_family);
  const std::pair<unsigned, const char*> order[] = {
      {kIdentities, "identities"}, {kLemmas, "lemmas"}, {kConstants | kQuestions, "constants"}};
  for (const auto& [bits, name] : order) {
    if (!(cfg.suites & bits)) continue;
    std::mt19937_64 rng(base + fnv1a(name));
    try {
      if (bits == kIdentities) identities_suite(in, cfg, rng, b);
      else if (bits == kLemmas) lemmas_suite(in, cfg, rng, b);
      else constants_suite(in, cfg, rng, b, row);
    } catch (const std::exception& e) {
      row.error += std::string(name) + ": " + e.what() + "; ";
      b.check(name, "exception", 1.0, 0.0, e.what());
    }
  }
  return row;
}

int thread_count(std::size_t jobs, int depth) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TWOWEIGHT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
  }
  if (depth > kPairDepthLimit) n = std::min(n, 2u);
  return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

std::vector<InstanceRow> run_instances(const std::vector<Instance>& instances, const ExperimentConfig& cfg) {
  std::vector<InstanceRow> rows(instances.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < instances.size(); k = next++) rows[k] = run_instance(instances[k], cfg);
  };
  const int n = thread_count(instances.size(), cfg.depth);
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

struct SignFlipGuard {
  bool previous;
  explicit SignFlipGuard(bool on) : previous(kernel_sign_flipped()) { set_kernel_sign_flip(on); }
  ~SignFlipGuard() { set_kernel_sign_flip(previous); }
};

RunReport finish(const ExperimentConfig& cfg, std::vector<InstanceRow> rows,
                 std::chrono::steady_clock::time_point t0) {
  RunReport rep;
  rep.config = cfg;
  rep.rows = std::move(rows);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

RunReport replay(const ExperimentConfig& outer) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(outer.replay);
  if (!in) throw std::runtime_error("cannot open instance file " + outer.replay);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str());
  const auto& inst = j.contains("instance") ? j["instance"] : j;
  ExperimentConfig cfg = config_from_json(inst.at("config").dump(), outer.replay);
  cfg.out_dir = outer.out_dir;
  cfg.replay = outer.replay;
  Instance x;
  x.seed = inst.at("seed").get<std::uint64_t>();
  x.sigma_family = inst.at("sigma_family").get<std::string>();
  x.w_family = inst.at("w_family").get<std::string>();
  x.pair.sigma = weight_from_json(inst.at("sigma").dump());
  x.pair.w = weight_from_json(inst.at("w").dump());
  x.pair.validate(cfg.depth);
  SignFlipGuard guard(cfg.inject_sign_flip);
  return finish(cfg, {run_instance(x, cfg)}, t0);
}

}  // namespace

bool InstanceRow::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

bool RunReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const InstanceRow& r) { return r.passed(); });
}

RunReport run(const ExperimentConfig& config) {
  if (!config.replay.empty()) return replay(config);
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SignFlipGuard guard(config.inject_sign_flip);
  const auto tree = build_tree(config.depth);
  std::vector<Instance> instances;
  for (std::uint64_t seed = config.seed_first; seed <= config.seed_last; ++seed)
    for (const auto& sf : config.sigma_families)
      for (const auto& wf : config.w_families) {
        Instance in;
        in.seed = seed;
        in.sigma_family = sf;
        in.w_family = wf;
        in.pair = generate_pair(WeightFamilySpec::parse(sf, Side::sigma), WeightFamilySpec::parse(wf, Side::w), tree, seed);
        instances.push_back(std::move(in));
      }
  return finish(config, run_instances(instances, config), t0);
}

ExperimentConfig verify_defaults() {
  ExperimentConfig c;
  c.suites = kAllSuites;
  c.seed_first = 1;
  c.seed_last = 5;
  c.sigma_families = {"random_masses", "uniform", "doubling(0.1)", "power(0.5)"};
  c.w_families = {"random_masses", "uniform"};
  return c;
}

RunReport verify(ExperimentConfig config) {
  config.suites = kAllSuites;
  return run(config);
}

std::string RunReport::to_json() const {
  ojson j;
  j["version"] = kVersion;
  j["csv_version"] = kCsvVersion;
  ojson cj = config_json(config);
  cj["out"] = config.out_dir;
  if (!config.replay.empty()) cj["replay"] = config.replay;
  j["config"] = cj;
  j["goodness"] = {{"epsilon", config.epsilon}, {"r", config.r}, {"boundary", boundary_name(config.boundary)}};
  const auto prof = DiniProfile::from_epsilon(config.epsilon, config.depth);
  j["dini_profile"] = {{"kind", "2^(-eps s/2)/Z"}, {"epsilon", prof.epsilon}, {"Z", prof.Z}, {"max_s", prof.max_s}};
  j["wall_seconds"] = wall_seconds;
  j["passed"] = passed();
  ojson summary = ojson::object();
  for (const auto& row : rows)
    for (const auto& c : row.checks) {
      auto& s = summary[c.suite];
      if (s.is_null()) s = {{"checks", 0}, {"failed", 0}};
      s["checks"] = s["checks"].get<int>() + 1;
      if (!c.passed) s["failed"] = s["failed"].get<int>() + 1;
    }
  j["summary"] = summary;
  auto& arr = j["rows"] = ojson::array();
  for (const auto& row : rows) {
    ojson r;
    r["seed"] = row.seed;
    r["sigma_family"] = row.sigma_family;
    r["w_family"] = row.w_family;
    r["passed"] = row.passed();
    if (!row.error.empty()) r["error"] = row.error;
    ojson m = ojson::object();
    for (const auto& [k, v] : row.metrics) m[k] = num(v);
    r["metrics"] = m;
    auto& checks = r["checks"] = ojson::array();
    for (const auto& c : row.checks) {
      ojson cc{{"suite", c.suite}, {"name", c.name}, {"value", num(c.value)}, {"limit", c.limit}, {"passed", c.passed}};
      if (!c.detail.empty()) cc["detail"] = c.detail;
      checks.push_back(cc);
    }
    if (row.has_constants) {
      ojson cs = ojson::object(), prov = ojson::object(), rs = ojson::object();
      for (const auto& [k, v] : row.constants.fields()) cs[k] = num(v);
      for (const auto& [k, p] : row.constants.provenance) prov[k] = to_string(p);
      for (const auto& [k, v] : row.ratios.fields()) rs[k] = num(v);
      r["constants"] = cs;
      r["provenance"] = prov;
      r["ratios"] = rs;
    }
    arr.push_back(r);
  }
  return j.dump(2);
}

namespace {

std::string csv_table(const RunReport& rep, bool ratios) {
  std::ostringstream os;
  os << "seed,depth,epsilon,r,sigma_family,w_family";
  const auto names = ratios ? RatioRow{}.fields() : ConstantsReport{}.fields();
  for (const auto& [k, v] : names) os << ',' << k;
  os << '\n';
  for (const auto& row : rep.rows) {
    if (!row.has_constants) continue;
    os << row.seed << ',' << rep.config.depth << ',' << fmt17(rep.config.epsilon) << ',' << rep.config.r << ','
       << csv_field(row.sigma_family) << ',' << csv_field(row.w_family);
    const auto vals = ratios ? row.ratios.fields() : row.constants.fields();
    for (const auto& [k, v] : vals) os << ',' << fmt17(v);
    os << '\n';
  }
  return os.str();
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' ? c : '_';
  return out;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

std::string RunReport::constants_csv() const { return csv_table(*this, false); }
std::string RunReport::ratios_csv() const { return csv_table(*this, true); }

void write_outputs(const RunReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  write_file(root / "report.json", report.to_json() + "\n");
  write_file(root / "constants.csv", report.constants_csv());
  write_file(root / "ratios.csv", report.ratios_csv());
  const fs::path failures = root / "failures";
  fs::create_directories(failures);
  for (const auto& row : report.rows) {
    if (row.passed()) continue;
    ojson j;
    j["instance"] = ojson::parse(row.instance_json);
    auto& arr = j["failed"] = ojson::array();
    for (const auto& c : row.checks)
      if (!c.passed) {
        ojson cc{{"suite", c.suite}, {"name", c.name}, {"value", num(c.value)}, {"limit", c.limit}};
        if (!c.detail.empty()) cc["detail"] = c.detail;
        arr.push_back(cc);
      }
    const std::string name =
        "seed" + std::to_string(row.seed) + "_" + sanitize(row.sigma_family) + "_" + sanitize(row.w_family) + ".json";
    write_file(failures / name, j.dump(2) + "\n");
  }
}

}  // namespace tw

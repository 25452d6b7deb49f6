#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "twoweight/constants.hpp"

namespace tw {

enum SuiteBits : unsigned {
  kIdentities = 1,
  kLemmas = 2,
  kConstants = 4,
  kQuestions = 8,
  kAllSuites = 15,
};
// "identities", "lemmas", "constants", "questions", "all", or a comma list of them.
unsigned parse_suites(const std::string& text);
std::string suites_name(unsigned bits);

struct ExperimentConfig {
  int depth = 6;
  double epsilon = 0.2;
  int r = 2;
  BoundaryMode boundary = BoundaryMode::children;
  std::uint64_t seed_first = 1, seed_last = 10;
  std::vector<std::string> sigma_families{"random_masses"};
  std::vector<std::string> w_families{"random_masses"};
  unsigned suites = kIdentities;
  std::string out_dir = "twoweight_out";
  double delta = 0.0;       // kernel truncation for the reported full form
  int budget = 400;         // bounded-fluctuation search steps
  int samples = 20;         // sampled functions per family and per lemma
  bool inject_sign_flip = false;
  std::string replay;       // instance file to rerun alone

  GoodnessParams goodness() const { return {epsilon, r, boundary}; }
  // Throws ConfigError naming the offending field.
  void validate() const;
  // Everything except out_dir and replay, so instance files do not depend on where they were written.
  std::string to_json() const;
};

// "a..b" or "a".
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text);
// Comma-separated names; commas inside parentheses do not split.
std::vector<std::string> split_families(const std::string& text);
// JSON config file. Errors are reported as "path:line: message".
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const std::string& text, const std::string& origin = "<config>");

struct CheckResult {
  std::string suite, name;
  double value = 0.0, limit = 0.0;  // passes when value <= limit
  bool passed = true;
  std::string detail;
};

struct InstanceRow {
  std::uint64_t seed = 0;
  std::string sigma_family, w_family;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<CheckResult> checks;
  bool has_constants = false;
  ConstantsReport constants;
  RatioRow ratios;
  std::string error;
  std::string instance_json;
  bool passed() const;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<InstanceRow> rows;
  double wall_seconds = 0.0;
  bool passed() const;
  std::string to_json() const;
  std::string constants_csv() const;
  std::string ratios_csv() const;
};

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvVersion = 1;

RunReport run(const ExperimentConfig& config);
// Desk-scale battery: every suite on the default family grid unless the config names families.
ExperimentConfig verify_defaults();
RunReport verify(ExperimentConfig config);
// report.json, constants.csv, ratios.csv and failures/<instance>.json under dir.
void write_outputs(const RunReport& report, const std::string& dir);

// Instance samplers shared by the suites.
struct MonotonicityInstance {
  std::vector<double> nu, mu;  // multipliers on the sigma atoms
  DyadicInterval J, I;
};
std::optional<MonotonicityInstance> sample_monotonicity(const WeightPair& pair, int depth, std::mt19937_64& rng);

struct DecayInstance {
  DyadicInterval J, I, I_prime;
};
// J good relative to I with |J| = 2^-s |I|, r <= s <= s_max, and I strictly inside I_prime.
std::optional<DecayInstance> sample_decay(const MeasureIndex& sigma, const GoodnessParams& params, int s_max,
                                          std::mt19937_64& rng);

// Multiplies the masses inside I by factor.
Weight damp(const Weight& weight, const DyadicInterval& I, double factor);

struct HaarAxioms {
  double orthonormality = 0.0;  // max |<h_I, h_J> - [I == J]|
  double parseval = 0.0;        // relative
  double reconstruction = 0.0;  // relative
  double haar_bound = 0.0;      // max |E_{I+-} h_I| sigma(I+-)^(1/2)
};
HaarAxioms haar_axioms(const Weight& weight, int depth, const WeightedFunction& f);

}  // namespace tw

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "twoweight/explorer.hpp"

namespace {

struct Flags {
  std::string config, seeds, sigma_family, w_family, suite, boundary, out, replay;
  std::optional<int> depth, r, budget, samples;
  std::optional<double> eps, delta;
  bool flip = false;
};

void add_options(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags given on the command line override it");
  cmd->add_option("--depth", f.depth, "tree depth");
  cmd->add_option("--eps", f.eps, "goodness epsilon in (0, 1/2)");
  cmd->add_option("--r", f.r, "goodness scale gap r");
  cmd->add_option("--boundary", f.boundary, "goodness boundary points: children | parent");
  cmd->add_option("--seeds", f.seeds, "seed range a..b");
  cmd->add_option("--sigma-family", f.sigma_family, "sigma families, comma separated");
  cmd->add_option("--w-family", f.w_family, "w families, comma separated");
  cmd->add_option("--suite", f.suite, "identities | lemmas | constants | questions | all");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--delta", f.delta, "kernel truncation for the reported full form");
  cmd->add_option("--budget", f.budget, "bounded-fluctuation search steps");
  cmd->add_option("--samples", f.samples, "sampled functions per family and lemma");
  cmd->add_option("--replay", f.replay, "rerun one instance file from failures/");
  cmd->add_flag("--inject-sign-flip", f.flip)->group("");
}

tw::ExperimentConfig build_config(const Flags& f, tw::ExperimentConfig c, bool is_verify) {
  if (!f.config.empty()) c = tw::load_config(f.config);
  auto field = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const tw::ConfigError& e) {
      throw tw::ConfigError(std::string(name) + ": " + e.what());
    }
  };
  if (f.depth) c.depth = *f.depth;
  if (f.eps) c.epsilon = *f.eps;
  if (f.r) c.r = *f.r;
  if (!f.boundary.empty())
    field("boundary", [&] {
      if (f.boundary != "children" && f.boundary != "parent") throw tw::ConfigError("expected children or parent");
      c.boundary = f.boundary == "parent" ? tw::BoundaryMode::parent : tw::BoundaryMode::children;
    });
  if (!f.seeds.empty())
    field("seeds", [&] {
      auto [a, b] = tw::parse_seed_range(f.seeds);
      c.seed_first = a;
      c.seed_last = b;
    });
  if (!f.sigma_family.empty()) c.sigma_families = tw::split_families(f.sigma_family);
  if (!f.w_family.empty()) c.w_families = tw::split_families(f.w_family);
  if (!f.suite.empty()) field("suite", [&] { c.suites = tw::parse_suites(f.suite); });
  if (is_verify) c.suites = tw::kAllSuites;
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.delta) c.delta = *f.delta;
  if (f.budget) c.budget = *f.budget;
  if (f.samples) c.samples = *f.samples;
  if (f.flip) c.inject_sign_flip = true;
  c.replay = f.replay;
  if (c.replay.empty()) c.validate();
  return c;
}

void print_summary(const tw::RunReport& rep) {
  std::size_t checks = 0, failed = 0;
  for (const auto& row : rep.rows)
    for (const auto& c : row.checks) {
      ++checks;
      if (!c.passed) {
        ++failed;
        std::fprintf(stderr, "FAIL %s/%s seed=%llu sigma=%s w=%s value=%.17g limit=%.3g %s\n", c.suite.c_str(),
                     c.name.c_str(), static_cast<unsigned long long>(row.seed), row.sigma_family.c_str(),
                     row.w_family.c_str(), c.value, c.limit, c.detail.c_str());
      }
    }
  std::printf("%zu instances, %zu checks, %zu failed, %.2fs -> %s\n", rep.rows.size(), checks, failed,
              rep.wall_seconds, rep.config.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-weight dyadic laboratory"};
  app.require_subcommand(1);
  Flags run_flags, verify_flags;
  auto* run_cmd = app.add_subcommand("run", "run selected suites over the seed x family grid");
  auto* verify_cmd = app.add_subcommand("verify", "run the full assertable battery at desk scale");
  add_options(run_cmd, run_flags);
  add_options(verify_cmd, verify_flags);
  CLI11_PARSE(app, argc, argv);

  const bool is_verify = verify_cmd->parsed();
  tw::ExperimentConfig cfg;
  try {
    cfg = is_verify ? build_config(verify_flags, tw::verify_defaults(), true) : build_config(run_flags, {}, false);
  } catch (const tw::ConfigError& e) {
    std::fprintf(stderr, "twoweight: invalid config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "twoweight: %s\n", e.what());
    return 3;
  }
  try {
    const auto rep = is_verify ? tw::verify(cfg) : tw::run(cfg);
    tw::write_outputs(rep, cfg.out_dir);
    print_summary(rep);
    return rep.passed() ? 0 : 1;
  } catch (const tw::ConfigError& e) {
    std::fprintf(stderr, "twoweight: invalid config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "twoweight: %s\n", e.what());
    return 3;
  }
}

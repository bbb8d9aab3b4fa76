// Command-line front end: gen, run, verify, sweep, replay.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "costshare/costshare.hpp"

namespace ex = costshare::experiment;

namespace {

struct RawOptions {
  std::string mode = "eqp";
  std::string profile = "churn";
  std::string order = "lexicographic";
  std::string batch_order = "snapshot";
  std::string equilibrium_check = "every-epoch";
};

void add_run_options(CLI::App* app, ex::ExperimentConfig& c, RawOptions& raw) {
  app->add_option("--mode", raw.mode, "eqp or noneqp")->check(CLI::IsMember({"eqp", "noneqp"}));
  app->add_option("--gen", c.generator, "generator: gm, euclidean, steiner-gap")
      ->check(CLI::IsMember({"gm", "euclidean", "steiner-gap", "poa"}));
  app->add_option("--instance", c.instance_path, "instance JSON file");
  app->add_option("--schedule", c.schedule_path, "schedule JSON file (overrides a generated schedule)");
  app->add_option("--profile", raw.profile, "euclidean epoch profile")->check(CLI::IsMember({"online", "batch", "churn"}));
  app->add_option("--order", raw.order, "G_m round order")->check(CLI::IsMember({"lexicographic", "reverse", "shuffled"}));
  app->add_option("--denominator", c.denominator, "euclidean coordinate denominator");
  app->add_option("--batch-order", raw.batch_order, "arrival batch order")->check(CLI::IsMember({"snapshot", "sequential"}));
  app->add_option("--move-ceiling", c.move_ceiling, "move limit per run, 0 for 10 n^3");
  app->add_option("--equilibrium-check", raw.equilibrium_check, "full best-response sweep: every-epoch, final, off")
      ->check(CLI::IsMember({"every-epoch", "final", "off"}));
}

void apply(ex::ExperimentConfig& c, const RawOptions& raw) {
  c.mode = ex::parse_mode(raw.mode);
  c.profile = costshare::parse_profile(raw.profile);
  c.order = costshare::parse_sigma_order(raw.order);
  c.batch_order = ex::parse_batch_order(raw.batch_order);
  c.equilibrium_check = ex::parse_equilibrium_check(raw.equilibrium_check);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shapley cost-sharing broadcast games: simulation and experiments"};
  app.require_subcommand(1);

  ex::ExperimentConfig run_cfg;
  RawOptions run_raw;
  auto* run = app.add_subcommand("run", "run one simulation and write its reports");
  add_run_options(run, run_cfg, run_raw);
  run->add_option("--m", run_cfg.m, "G_m parameter");
  run->add_option("--n", run_cfg.n, "instance size");
  run->add_option("--seed", run_cfg.seed, "generator seed");
  run->add_option("--out", run_cfg.out_dir, "output directory")->default_val("run");
  run->add_flag("-v,--trace", run_cfg.trace, "print per-epoch progress to stderr");

  ex::ExperimentConfig gen_cfg;
  RawOptions gen_raw;
  std::uint64_t poa_agents = 0;
  auto* gen = app.add_subcommand("gen", "write a generated instance and schedule");
  gen->add_option("kind", gen_cfg.generator, "gm, euclidean, poa or steiner-gap")
      ->required()
      ->check(CLI::IsMember({"gm", "euclidean", "poa", "steiner-gap"}));
  gen->add_option("--m", gen_cfg.m, "G_m parameter");
  gen->add_option("--n", gen_cfg.n, "instance size");
  gen->add_option("--seed", gen_cfg.seed, "generator seed");
  gen->add_option("--profile", gen_raw.profile, "euclidean epoch profile")->check(CLI::IsMember({"online", "batch", "churn"}));
  gen->add_option("--order", gen_raw.order, "G_m round order")->check(CLI::IsMember({"lexicographic", "reverse", "shuffled"}));
  gen->add_option("--denominator", gen_cfg.denominator, "euclidean coordinate denominator");
  gen->add_option("--agents", poa_agents, "agents on the PoA detour, 0 for n+1");
  gen->add_option("--out", gen_cfg.out_dir, "output directory")->default_val(".");

  std::string snapshot_path;
  auto* verify = app.add_subcommand("verify", "re-check a state snapshot from scratch");
  verify->add_option("snapshot", snapshot_path, "snapshot JSON file")->required();

  std::string replay_dir;
  auto* replay = app.add_subcommand("replay", "replay and rerun a run directory");
  replay->add_option("dir", replay_dir, "directory written by 'run'")->required();

  ex::ExperimentConfig sweep_cfg;
  RawOptions sweep_raw;
  std::string grid_path;
  std::string sweep_out;
  std::vector<int> sweep_m;
  std::vector<std::uint64_t> sweep_n;
  std::vector<std::uint64_t> sweep_seeds;
  auto* sweep = app.add_subcommand("sweep", "run a grid of configurations in parallel and print a CSV table");
  add_run_options(sweep, sweep_cfg, sweep_raw);
  sweep->add_option("--grid", grid_path, "grid JSON file: {\"base\": {...}, \"runs\": [{...}]}");
  sweep->add_option("--m", sweep_m, "G_m parameters")->delimiter(',');
  sweep->add_option("--n", sweep_n, "instance sizes")->delimiter(',');
  sweep->add_option("--seed", sweep_seeds, "seeds")->delimiter(',');
  sweep->add_option("--out", sweep_out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ex::kConfigError;
  }

  try {
    if (*run) {
      apply(run_cfg, run_raw);
      return ex::cmd_run(run_cfg, std::cout, std::cerr);
    }
    if (*gen) {
      apply(gen_cfg, gen_raw);
      return ex::cmd_gen(gen_cfg, poa_agents, std::cout);
    }
    if (*verify) return ex::cmd_verify(snapshot_path, std::cout);
    if (*replay) return ex::cmd_replay(replay_dir, std::cout, std::cerr);
    if (*sweep) {
      apply(sweep_cfg, sweep_raw);
      std::vector<ex::ExperimentConfig> grid;
      if (!grid_path.empty()) {
        grid = ex::grid_from_json(costshare::io::parse_json(costshare::io::read_file(grid_path), "grid"), sweep_cfg);
      } else if (!sweep_cfg.generator.empty()) {
        if (sweep_m.empty()) sweep_m.push_back(sweep_cfg.m);
        if (sweep_n.empty()) sweep_n.push_back(sweep_cfg.n);
        if (sweep_seeds.empty()) sweep_seeds.push_back(sweep_cfg.seed);
        for (int m : sweep_m)
          for (std::uint64_t n : sweep_n)
            for (std::uint64_t seed : sweep_seeds) {
              ex::ExperimentConfig c = sweep_cfg;
              c.m = m;
              c.n = n;
              c.seed = seed;
              grid.push_back(c);
            }
      }
      if (sweep_out.empty()) return ex::cmd_sweep(grid, std::cout);
      std::ofstream out(sweep_out);
      if (!out) throw costshare::ConfigError("cannot write '" + sweep_out + "'");
      return ex::cmd_sweep(grid, out);
    }
  } catch (const costshare::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return ex::kInvariantError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ex::kConfigError;
  }
  return ex::kOk;
}

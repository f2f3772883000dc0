// tracelab: command-line front end for the traceback simulation library.
//
// Exit status: 0 success, 1 usage error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tracelab/tracelab.hpp"

namespace fs = std::filesystem;
using namespace tracelab;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// --out if given, otherwise <$TRACELAB_OUT_DIR or .>/<fallback>.
fs::path output_path(const std::string& out, const std::string& fallback) {
  if (!out.empty()) return out;
  const char* dir = std::getenv("TRACELAB_OUT_DIR");
  return fs::path(dir && *dir ? dir : ".") / fallback;
}

fs::path companion_path(const fs::path& summary) {
  fs::path p = summary;
  p.replace_extension();
  p += ".long.csv";
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IP traceback simulation laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("tracelab ") + kToolVersion);

  std::string out;
  std::uint64_t seed = 1;

  MarkProbOptions mark;
  auto* mark_cmd = app.add_subcommand("mark-prob", "survival probability of a mark d hops away");
  mark_cmd->add_option("-p,--p", mark.p, "marking probability")->check(CLI::Range(0.0, 1.0));
  mark_cmd->add_option("--max-d", mark.max_d, "largest distance")->check(CLI::PositiveNumber);
  mark_cmd->add_option("--packets", mark.packets, "Monte-Carlo packets")->check(CLI::PositiveNumber);
  mark_cmd->add_option("--seed", seed, "random seed");
  mark_cmd->add_option("--out", out, "output CSV");

  ThresholdOptions thr;
  auto* thr_cmd = app.add_subcommand("threshold", "threshold marking probability by hop count");
  thr_cmd->add_option("--n-max", thr.n_max, "largest hop count")->check(CLI::PositiveNumber);
  thr_cmd->add_option("--confidence", thr.confidence, "guarantee level")->check(CLI::Range(0.0, 1.0));
  thr_cmd->add_option("--out", out, "output CSV");

  SweepConfig sweep;
  sweep.hop_counts = {3, 6, 9, 12, 15, 18};
  sweep.p_grid = {0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5};
  auto* conv_cmd = app.add_subcommand("convergence", "convergence-time sweep");
  conv_cmd->add_option("--hops", sweep.hop_counts, "hop counts")->delimiter(',');
  conv_cmd->add_option("--p-grid", sweep.p_grid, "marking probabilities")->delimiter(',');
  conv_cmd->add_option("--trials", sweep.trials, "trials per cell");
  conv_cmd->add_option("--confidence", sweep.confidence, "interval level");
  conv_cmd->add_option("--max-packets", sweep.max_packets, "per-trial packet cutoff");
  conv_cmd->add_option("--threads", sweep.threads, "worker threads (0: all cores)");
  conv_cmd->add_option("--seed", seed, "base seed");
  conv_cmd->add_option("--out", out, "summary CSV; the long-format file goes next to it");

  std::string topology;
  auto* spie_cmd = app.add_subcommand("spie-trace", "cross-AS hash-based traceback of one attack packet");
  spie_cmd->add_option("--topology", topology, "scenario file")->required();
  spie_cmd->add_option("--seed", seed, "random seed");
  spie_cmd->add_option("--out", out, "transcript file");

  std::string strategy;
  auto* strat_cmd = app.add_subcommand("strategy", "run a link-testing or iTrace strategy");
  strat_cmd->add_option("name", strategy, "input-debugging | controlled-flooding | itrace")->required();
  strat_cmd->add_option("--topology", topology, "scenario file")->required();
  strat_cmd->add_option("--seed", seed, "random seed");
  strat_cmd->add_option("--out", out, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*mark_cmd) {
      mark.seed = seed;
      write_file_atomic(output_path(out, "mark_prob.csv"), run_mark_prob(mark));
    } else if (*thr_cmd) {
      write_file_atomic(output_path(out, "threshold.csv"), run_threshold(thr));
    } else if (*conv_cmd) {
      sweep.base_seed = seed;
      auto result = run_convergence(sweep);
      const auto path = output_path(out, "convergence.csv");
      write_file_atomic(path, result.summary_csv);
      write_file_atomic(companion_path(path), result.long_csv);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    } else if (*spie_cmd) {
      const auto scenario = load_scenario(topology);
      write_file_atomic(output_path(out, "spie_trace.txt"), run_spie_trace(scenario, seed).text);
    } else if (*strat_cmd) {
      const auto& names = strategy_names();
      if (std::find(names.begin(), names.end(), strategy) == names.end()) {
        std::cerr << "error: unknown strategy '" << strategy << "'; valid strategies:";
        for (const auto& n : names) std::cerr << ' ' << n;
        std::cerr << '\n';
        return kUsageError;
      }
      const auto scenario = load_scenario(topology);
      write_file_atomic(output_path(out, strategy + ".json"), run_strategy(strategy, scenario, seed).text);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidArgument ? kUsageError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

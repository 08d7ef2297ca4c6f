#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mflq/problem.hpp"

namespace mflq {

enum class Command { solve, simulate, verify, report };

enum ExitCode : int { exit_ok = 0, exit_solver = 2, exit_verification = 3, exit_io = 4 };

struct RunConfig {
    Command command = Command::solve;
    std::string input;
    std::string out = ".";
    int n_paths = 10000;
    std::uint64_t seed = 42;
    int refine = 1;
    std::vector<std::string> checks;  // empty = all
    Tolerances tol;
    // Constant added to both players' fluctuation gains before simulating.
    double perturb_gain = 0.0;
};

// Runs one command and writes its files into config.out:
//   solve     gains.csv, riccati.csv, eta.csv, summary.json
//   simulate  the above, plus Monte Carlo costs in summary.json
//   verify    the above, plus the verification report in summary.json
//   report    the above, plus report.txt (also printed to `log`)
// Diagnostics go to `log`. Returns an ExitCode.
int run(const RunConfig& config, std::ostream& log);

// Command-line entry point.
int cli_main(int argc, char** argv);

} // namespace mflq

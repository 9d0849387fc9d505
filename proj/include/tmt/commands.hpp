#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tmt/config.hpp"
#include "tmt/evalkit.hpp"
#include "tmt/trainer.hpp"

namespace tmt {

// Command bodies shared by the CLI and the acceptance suite: the binary only
// parses flags and maps exceptions to exit codes.

// trains, then writes out_dir/model.ckpt and out_dir/metrics.csv
TrainResult cmd_train(const RunConfig& cfg, std::ostream& out);

// rebuilds the model from the checkpoint's config echo, scores query cubes
// against gallery cubes, prints a JSON report
RankingReport cmd_eval(const RunConfig& cfg, std::ostream& out);

struct GradcheckRow {
    std::string block;
    double max_rel_error = 0.0;
    bool pass = false;
};

// fixed small shapes; corrupt_block (prefix match) perturbs that block's
// analytic gradient as a negative control
std::vector<GradcheckRow> cmd_gradcheck(double h, const std::string& corrupt_block,
                                        std::ostream& out);

struct BenchRow {
    std::string axis, value;
    std::size_t seeds = 0;
    double rank1_mean = 0.0, rank1_std = 0.0;
    double map_mean = 0.0, map_std = 0.0;
};

// one training per (value, seed); identical data seed across values so rows
// are comparable; writes out_dir/bench.csv
std::vector<BenchRow> cmd_bench(const RunConfig& base, const std::string& axis,
                                const std::vector<std::string>& values, std::size_t num_seeds,
                                std::ostream& out);

std::string bench_csv(const std::vector<BenchRow>& rows);

void cmd_inspect(const std::string& cube_path, std::ostream& out);

} // namespace tmt

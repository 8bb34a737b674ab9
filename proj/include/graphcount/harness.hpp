#pragma once

// Experiment drivers behind the CLI: training with gradient accumulation and
// deterministic artifacts, evaluation, the five-variant ablation matrix, the
// K sweep, and the inspection dump for one scene.

#include <iosfwd>
#include <string>
#include <vector>

#include "graphcount/config.hpp"

namespace graphcount {

struct SplitMetrics {
    double mae = 0.0;
    double mse = 0.0;  // crowd-counting convention: sqrt(mean squared error)
    double mean_density_rel_err = 0.0;  // |map sum - count| / count, averaged
    bool has_density = false;
};

struct TrainOutcome {
    SplitMetrics train;
    SplitMetrics eval;
    int epochs_run = 0;
    bool stopped_early = false;
    std::string checkpoint_path;
};

TrainOutcome train_run(const ExperimentConfig& cfg, const std::string& out_dir);

SplitMetrics eval_run(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                      const std::string& out_dir, const std::string& split);

struct AblationRow {
    std::string variant;
    AblationSwitches switches;
    std::size_t active_params = 0;
    std::vector<double> mae_per_seed;
    std::vector<double> mse_per_seed;
    double median_mae = 0.0;
    double median_mse = 0.0;
};

std::vector<AblationRow> ablate_run(const ExperimentConfig& cfg, const std::string& out_dir,
                                    int repetitions);

struct SweepRow {
    int k = 0;
    double mae = 0.0;
    double mse = 0.0;
};

std::vector<SweepRow> sweep_k_run(const ExperimentConfig& cfg, const std::string& out_dir,
                                  const std::vector<int>& ks);

void graph_dump_run(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                    const std::string& out_dir, unsigned long long scene_seed);

// prints one line per check; returns a process exit code (0 = all pass)
int gradcheck_run(std::ostream& os, int seeds, double tol);

// deterministic per-split scene seeds derived from the experiment seed
unsigned long long train_scene_seed(const ExperimentConfig& cfg, int index);
unsigned long long eval_scene_seed(const ExperimentConfig& cfg, int index);

}  // namespace graphcount

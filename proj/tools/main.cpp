#include <exception>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "graphcount/config.hpp"
#include "graphcount/error.hpp"
#include "graphcount/harness.hpp"

namespace gc = graphcount;

int main(int argc, char** argv) {
    CLI::App app{"point-based crowd counting with dual semantic-graph feature refinement"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string checkpoint_path;
    unsigned long long seed_override = 0;
    bool seed_set = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config JSON; built-in defaults when omitted")
            ->check(CLI::ExistingFile);
        cmd->add_option_function<unsigned long long>(
            "--seed", [&](const unsigned long long& v) {
                seed_override = v;
                seed_set = true;
            },
            "override the config seed");
        cmd->add_option("--out-dir", out_dir, "output directory");
    };

    CLI::App* train = app.add_subcommand("train", "train; writes checkpoint, CSV logs, reports");
    add_common(train);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a scene split");
    add_common(eval_cmd);
    std::string split = "eval";
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--split", split, "train or eval")
        ->check(CLI::IsMember({"train", "eval"}));

    CLI::App* ablate = app.add_subcommand("ablate", "train the five wiring variants, emit CSV");
    add_common(ablate);
    int reps = 3;
    ablate->add_option("--reps", reps, "training repetitions per variant");

    CLI::App* sweep = app.add_subcommand("sweep-k", "train/evaluate across graph neighbor counts");
    add_common(sweep);
    std::vector<int> k_list = {1, 2, 4, 8, 16};
    sweep->add_option("--k-list", k_list, "K values")->delimiter(',');

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    int gc_seeds = 10;
    double gc_tol = 1e-5;
    gradcheck->add_option("--seeds", gc_seeds, "seeds per check");
    gradcheck->add_option("--tol", gc_tol, "max relative error");

    CLI::App* dump =
        app.add_subcommand("graph-dump", "dump graphs, density map, and points for one scene");
    add_common(dump);
    unsigned long long scene_seed = 0;
    bool scene_seed_set = false;
    dump->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    dump->add_option_function<unsigned long long>(
        "--scene-seed", [&](const unsigned long long& v) {
            scene_seed = v;
            scene_seed_set = true;
        },
        "scene to render (default: first eval scene)");

    CLI::App* config_cmd = app.add_subcommand("config", "config helpers");
    config_cmd->require_subcommand(1);
    CLI::App* config_init = config_cmd->add_subcommand("init", "write a config with all defaults");
    std::string init_path = "config.json";
    config_init->add_option("path", init_path, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const auto resolve = [&] {
            gc::ExperimentConfig cfg;
            if (!config_path.empty()) cfg = gc::load_config(config_path);
            if (seed_set) cfg.seed = seed_override;
            cfg.validate();
            return cfg;
        };

        std::cout << std::setprecision(6);
        if (train->parsed()) {
            const gc::TrainOutcome out = gc::train_run(resolve(), out_dir);
            std::cout << "trained " << out.epochs_run << " epochs"
                      << (out.stopped_early ? " (early stop)" : "") << "\n"
                      << "train MAE " << out.train.mae << "  MSE(RMSE) " << out.train.mse << "\n"
                      << "eval  MAE " << out.eval.mae << "  MSE(RMSE) " << out.eval.mse << "\n"
                      << "checkpoint: " << out.checkpoint_path << "\n";
        } else if (eval_cmd->parsed()) {
            const gc::SplitMetrics m = gc::eval_run(resolve(), checkpoint_path, out_dir, split);
            std::cout << split << " MAE " << m.mae << "  MSE(RMSE) " << m.mse << "\n";
            if (m.has_density)
                std::cout << "mean density-sum relative error " << m.mean_density_rel_err << "\n";
        } else if (ablate->parsed()) {
            const std::vector<gc::AblationRow> rows = gc::ablate_run(resolve(), out_dir, reps);
            std::cout << std::left << std::setw(10) << "variant" << std::right << std::setw(10)
                      << "params" << std::setw(14) << "median MAE" << std::setw(20)
                      << "median MSE(RMSE)" << "\n";
            for (const gc::AblationRow& r : rows)
                std::cout << std::left << std::setw(10) << r.variant << std::right << std::setw(10)
                          << r.active_params << std::setw(14) << r.median_mae << std::setw(20)
                          << r.median_mse << "\n";
        } else if (sweep->parsed()) {
            for (const gc::SweepRow& r : gc::sweep_k_run(resolve(), out_dir, k_list))
                std::cout << "K=" << r.k << "  MAE " << r.mae << "  MSE(RMSE) " << r.mse << "\n";
        } else if (gradcheck->parsed()) {
            return gc::gradcheck_run(std::cout, gc_seeds, gc_tol);
        } else if (dump->parsed()) {
            const gc::ExperimentConfig cfg = resolve();
            if (!scene_seed_set) scene_seed = gc::eval_scene_seed(cfg, 0);
            gc::graph_dump_run(cfg, checkpoint_path, out_dir, scene_seed);
            std::cout << "wrote graph dump for scene " << scene_seed << " to " << out_dir << "\n";
        } else if (config_init->parsed()) {
            gc::save_config(init_path, gc::ExperimentConfig{});
            std::cout << "wrote " << init_path << "\n";
        }
    } catch (const gc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gc::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

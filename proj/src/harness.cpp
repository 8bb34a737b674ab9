#include "graphcount/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphcount/error.hpp"
#include "graphcount/gradcheck.hpp"
#include "graphcount/io.hpp"
#include "graphcount/losses.hpp"
#include "graphcount/model.hpp"
#include "graphcount/rng.hpp"
#include "graphcount/scenes.hpp"

namespace graphcount {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// disjoint seed streams per purpose
constexpr unsigned long long kTrainStream = 101;
constexpr unsigned long long kEvalStream = 202;
constexpr unsigned long long kAugmentStream = 303;

std::vector<Scene> make_scenes(const ExperimentConfig& cfg, unsigned long long stream, int n) {
    std::vector<Scene> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(generate_scene(cfg.scene, mix_seed(cfg.seed, stream, i)));
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path + " for writing");
    return os;
}

struct EvalRow {
    unsigned long long seed = 0;
    int gt = 0;
    int predicted = 0;
    double density_sum = 0.0;
};

SplitMetrics evaluate_scenes(CountingModel& model, const ExperimentConfig& cfg,
                             const std::vector<Scene>& scenes, std::vector<EvalRow>* rows) {
    std::vector<double> pred, gt;
    double rel_sum = 0.0;
    int rel_n = 0;
    bool has_density = false;
    for (const Scene& scene : scenes) {
        Tape tape;
        ForwardResult fr = model.forward(tape, scene.image, false);
        const CountResult cr = count_from_points(fr.preds, cfg.model.points.threshold);
        EvalRow row;
        row.seed = scene.seed;
        row.gt = static_cast<int>(scene.points.size());
        row.predicted = cr.count;
        if (fr.has_density) {
            has_density = true;
            double s = 0.0;
            for (double v : fr.density.values()) s += v;
            row.density_sum = s;
            if (row.gt > 0) {
                rel_sum += std::abs(s - row.gt) / row.gt;
                ++rel_n;
            }
        }
        pred.push_back(row.predicted);
        gt.push_back(row.gt);
        if (rows) rows->push_back(row);
    }
    SplitMetrics m;
    const auto [mae, mse] = mae_mse(pred, gt);
    m.mae = mae;
    m.mse = mse;
    m.has_density = has_density;
    m.mean_density_rel_err = rel_n > 0 ? rel_sum / rel_n : 0.0;
    return m;
}

void write_counts_csv(const std::string& path, const std::vector<EvalRow>& rows,
                      bool has_density) {
    std::ofstream os = open_out(path);
    os << "scene_seed,gt,predicted,density_sum\n" << std::setprecision(17);
    for (const EvalRow& r : rows) {
        os << r.seed << ',' << r.gt << ',' << r.predicted << ',';
        if (has_density) os << r.density_sum;
        os << '\n';
    }
}

struct EpochLoss {
    double density = 0.0;
    double cls = 0.0;
    double loc = 0.0;
    double joint = 0.0;
};

struct Probe {
    int epoch = 0;
    double mae = 0.0;
    double mse = 0.0;
};

struct FitResult {
    std::vector<EpochLoss> epochs;
    std::vector<Probe> probes;
    int epochs_run = 0;
    bool stopped_early = false;
};

// One full optimization run. Scenes come in pre-generated so callers control
// the data seeds independently of the model seed; the probe every eval_every
// epochs measures train-split MAE in eval mode and drives early stopping.
FitResult fit_model(CountingModel& model, const ExperimentConfig& cfg,
                    const std::vector<Scene>& train_scenes, unsigned long long aug_seed) {
    Adam opt;
    opt.add_group(model.backbone_param_group(), cfg.optim.lr * cfg.optim.backbone_lr_scale);
    opt.add_group(model.head_param_group(), cfg.optim.lr);

    Rng aug_rng(aug_seed);
    FitResult out;
    const int n = static_cast<int>(train_scenes.size());
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        // the tail of the budget optimizes against frozen normalization stats
        // (eval-mode batchnorm), closing the train/eval statistics gap
        const bool bn_train = epoch < cfg.train.epochs - cfg.train.freeze_bn_tail;
        EpochLoss acc;
        for (int start = 0; start < n; start += cfg.optim.batch_size) {
            const int group = std::min(cfg.optim.batch_size, n - start);
            opt.zero_grad();
            for (int b = 0; b < group; ++b) {
                Scene scene = train_scenes[static_cast<std::size_t>(start + b)];
                if (cfg.augment.enabled) scene = augment(scene, cfg.augment, aug_rng);
                Tape tape;
                ForwardResult fr = model.forward(tape, scene.image, bn_train);
                const Assignment xi =
                    hungarian_match(fr.preds, scene.points, cfg.model.points.match_tau);
                double cls = 0.0, loc = 0.0;
                Tensor l_point = point_loss(tape, fr.preds, scene.points, xi, cfg.loss, &cls, &loc);
                Tensor total = l_point;
                double l_density = 0.0;
                if (fr.has_density) {
                    const Tensor gt =
                        gt_density_map(scene.points, fr.density.dim(1), fr.density.dim(2),
                                       BackboneConfig::stride, cfg.model.gt_sigma);
                    Tensor l_d = density_loss(tape, fr.density, gt);
                    l_density = l_d.item();
                    total = joint_loss(tape, l_point, l_d);
                }
                acc.density += l_density;
                acc.cls += cls;
                acc.loc += loc;
                acc.joint += total.item();
                Tensor scaled = scale(tape, total, 1.0 / group);
                tape.backward(scaled);
            }
            opt.step();
        }
        acc.density /= n;
        acc.cls /= n;
        acc.loc /= n;
        acc.joint /= n;
        out.epochs.push_back(acc);
        out.epochs_run = epoch + 1;

        const bool last = epoch + 1 == cfg.train.epochs;
        if ((epoch + 1) % cfg.train.eval_every == 0 || last) {
            const SplitMetrics pm = evaluate_scenes(model, cfg, train_scenes, nullptr);
            out.probes.push_back({epoch + 1, pm.mae, pm.mse});
            if (cfg.train.stop_at_train_mae > 0.0 && pm.mae <= cfg.train.stop_at_train_mae) {
                out.stopped_early = !last;
                break;
            }
        }
    }
    return out;
}

std::vector<NamedTensor> model_state(const CountingModel& model) {
    std::vector<NamedTensor> state = model.parameters();
    const std::vector<NamedTensor> bufs = model.buffers();
    state.insert(state.end(), bufs.begin(), bufs.end());
    return state;
}

CountingModel restore_model(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::string hash = config_hash(cfg);
    if (ckpt.config_hash != hash)
        throw CheckpointError("checkpoint was written for config hash " + ckpt.config_hash +
                              " but the current config hashes to " + hash);
    CountingModel model(cfg.model, cfg.seed);
    apply_checkpoint(ckpt, model_state(model));
    return model;
}

void write_json_file(const std::string& path, const json& j, int indent) {
    std::ofstream os = open_out(path);
    os << j.dump(indent) << '\n';
}

json metrics_json(const SplitMetrics& m) {
    json j;
    j["mae"] = m.mae;
    j["mse_rmse"] = m.mse;
    if (m.has_density) j["mean_density_rel_err"] = m.mean_density_rel_err;
    return j;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_graph_json(const std::string& path, const SemanticGraph& g) {
    json j;
    j["kind"] = graph_kind_name(g.kind);
    j["n"] = g.n;
    j["k"] = g.k;
    j["rows"] = g.adj;
    write_json_file(path, j, -1);
}

}  // namespace

unsigned long long train_scene_seed(const ExperimentConfig& cfg, int index) {
    return mix_seed(cfg.seed, kTrainStream, static_cast<unsigned long long>(index));
}

unsigned long long eval_scene_seed(const ExperimentConfig& cfg, int index) {
    return mix_seed(cfg.seed, kEvalStream, static_cast<unsigned long long>(index));
}

TrainOutcome train_run(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    save_config(out_dir + "/config.json", cfg);

    const std::vector<Scene> train_scenes = make_scenes(cfg, kTrainStream, cfg.train.train_scenes);
    const std::vector<Scene> eval_scenes = make_scenes(cfg, kEvalStream, cfg.train.eval_scenes);
    {
        json man;
        man["train_seeds"] = json::array();
        for (const Scene& s : train_scenes) man["train_seeds"].push_back(s.seed);
        man["eval_seeds"] = json::array();
        for (const Scene& s : eval_scenes) man["eval_seeds"].push_back(s.seed);
        write_json_file(out_dir + "/manifest.json", man, 2);
    }

    CountingModel model(cfg.model, cfg.seed);
    const FitResult fit = fit_model(model, cfg, train_scenes, mix_seed(cfg.seed, kAugmentStream, 0));

    {
        std::ofstream os = open_out(out_dir + "/train_log.csv");
        os << "epoch,loss_density,loss_cls,loss_loc,loss_joint\n" << std::setprecision(17);
        for (std::size_t e = 0; e < fit.epochs.size(); ++e) {
            const EpochLoss& l = fit.epochs[e];
            os << e + 1 << ',' << l.density << ',' << l.cls << ',' << l.loc << ',' << l.joint
               << '\n';
        }
    }
    {
        std::ofstream os = open_out(out_dir + "/probes.csv");
        os << "epoch,train_mae,train_mse(rmse)\n" << std::setprecision(17);
        for (const Probe& p : fit.probes) os << p.epoch << ',' << p.mae << ',' << p.mse << '\n';
    }

    const std::string hash = config_hash(cfg);
    const std::string ckpt_path = out_dir + "/checkpoint.bin";
    save_checkpoint(ckpt_path, config_to_json(cfg), hash, model_state(model));

    TrainOutcome out;
    std::vector<EvalRow> train_rows, eval_rows;
    out.train = evaluate_scenes(model, cfg, train_scenes, &train_rows);
    out.eval = evaluate_scenes(model, cfg, eval_scenes, &eval_rows);
    out.epochs_run = fit.epochs_run;
    out.stopped_early = fit.stopped_early;
    out.checkpoint_path = ckpt_path;
    write_counts_csv(out_dir + "/train_counts.csv", train_rows, out.train.has_density);
    write_counts_csv(out_dir + "/eval_counts.csv", eval_rows, out.eval.has_density);

    {
        json rep;
        rep["config_hash"] = hash;
        rep["epochs_run"] = out.epochs_run;
        rep["stopped_early"] = out.stopped_early;
        rep["train"] = metrics_json(out.train);
        rep["eval"] = metrics_json(out.eval);
        json losses = json::array();
        for (std::size_t e = 0; e < fit.epochs.size(); ++e) {
            const EpochLoss& l = fit.epochs[e];
            losses.push_back({{"epoch", e + 1},
                              {"density", l.density},
                              {"cls", l.cls},
                              {"loc", l.loc},
                              {"joint", l.joint}});
        }
        rep["epoch_losses"] = losses;
        json probes = json::array();
        for (const Probe& p : fit.probes)
            probes.push_back({{"epoch", p.epoch}, {"train_mae", p.mae}, {"train_mse_rmse", p.mse}});
        rep["probes"] = probes;
        write_json_file(out_dir + "/report.json", rep, 2);
    }
    {
        // wall clock lives in a sidecar so report.json stays byte-reproducible
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        json t;
        t["train_seconds"] = dt.count();
        write_json_file(out_dir + "/timing.json", t, 2);
    }
    return out;
}

SplitMetrics eval_run(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                      const std::string& out_dir, const std::string& split) {
    cfg.validate();
    if (split != "train" && split != "eval")
        throw UsageError("eval: split must be 'train' or 'eval', got '" + split + "'");
    CountingModel model = restore_model(cfg, checkpoint_path);
    fs::create_directories(out_dir);

    const bool train_split = split == "train";
    const std::vector<Scene> scenes =
        make_scenes(cfg, train_split ? kTrainStream : kEvalStream,
                    train_split ? cfg.train.train_scenes : cfg.train.eval_scenes);
    std::vector<EvalRow> rows;
    const SplitMetrics m = evaluate_scenes(model, cfg, scenes, &rows);
    write_counts_csv(out_dir + "/" + split + "_counts.csv", rows, m.has_density);

    json rep = metrics_json(m);
    rep["config_hash"] = config_hash(cfg);
    rep["split"] = split;
    rep["scenes"] = scenes.size();
    write_json_file(out_dir + "/eval_report.json", rep, 2);
    return m;
}

std::vector<AblationRow> ablate_run(const ExperimentConfig& cfg, const std::string& out_dir,
                                    int repetitions) {
    cfg.validate();
    if (repetitions < 1) throw UsageError("ablate: repetitions must be >= 1");
    fs::create_directories(out_dir);

    // data is pinned to the base seed; only model init and augmentation vary per rep
    const std::vector<Scene> train_scenes = make_scenes(cfg, kTrainStream, cfg.train.train_scenes);
    const std::vector<Scene> bench_scenes = make_scenes(cfg, kEvalStream, cfg.train.eval_scenes);

    struct Variant {
        const char* name;
        AblationSwitches sw;
    };
    const std::array<Variant, 5> variants = {{
        {"baseline", {false, false, false}},
        {"dp", {true, false, false}},
        {"dp_da", {true, true, false}},
        {"ra", {false, false, true}},
        {"full", {true, true, true}},
    }};

    std::ofstream raw = open_out(out_dir + "/ablation_runs.csv");
    raw << "variant,use_dp,use_da,use_ra,rep,model_seed,active_params,mae,mse(rmse)\n"
        << std::setprecision(17);

    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        ExperimentConfig vcfg = cfg;
        vcfg.model.ablation = v.sw;
        vcfg.validate();

        AblationRow row;
        row.variant = v.name;
        row.switches = v.sw;
        for (int rep = 0; rep < repetitions; ++rep) {
            const unsigned long long model_seed = cfg.seed + static_cast<unsigned long long>(rep);
            CountingModel model(vcfg.model, model_seed);
            if (rep == 0)
                row.active_params = CountingModel::parameter_count(model.active_parameters());
            fit_model(model, vcfg, train_scenes, mix_seed(model_seed, kAugmentStream, 0));
            const SplitMetrics m = evaluate_scenes(model, vcfg, bench_scenes, nullptr);
            row.mae_per_seed.push_back(m.mae);
            row.mse_per_seed.push_back(m.mse);
            raw << v.name << ',' << int(v.sw.use_dp) << ',' << int(v.sw.use_da) << ','
                << int(v.sw.use_ra) << ',' << rep << ',' << model_seed << ',' << row.active_params
                << ',' << m.mae << ',' << m.mse << '\n';
        }
        row.median_mae = median(row.mae_per_seed);
        row.median_mse = median(row.mse_per_seed);
        rows.push_back(row);
    }

    std::ofstream sum = open_out(out_dir + "/ablation.csv");
    sum << "variant,use_dp,use_da,use_ra,active_params,median_mae,median_mse(rmse)\n"
        << std::setprecision(17);
    for (const AblationRow& r : rows)
        sum << r.variant << ',' << int(r.switches.use_dp) << ',' << int(r.switches.use_da) << ','
            << int(r.switches.use_ra) << ',' << r.active_params << ',' << r.median_mae << ','
            << r.median_mse << '\n';
    return rows;
}

std::vector<SweepRow> sweep_k_run(const ExperimentConfig& cfg, const std::string& out_dir,
                                  const std::vector<int>& ks) {
    cfg.validate();
    if (ks.empty()) throw UsageError("sweep-k: need at least one K");

    const int s = BackboneConfig::stride;
    int min_nodes = ((cfg.scene.height + s - 1) / s) * ((cfg.scene.width + s - 1) / s);
    if (cfg.augment.enabled)
        min_nodes = std::min(min_nodes,
                             ((cfg.augment.crop_h + s - 1) / s) * ((cfg.augment.crop_w + s - 1) / s));
    for (int k : ks)
        if (k >= min_nodes)
            throw ConfigError("sweep-k: K=" + std::to_string(k) +
                              " must be below the node count " + std::to_string(min_nodes));

    fs::create_directories(out_dir);
    const std::vector<Scene> train_scenes = make_scenes(cfg, kTrainStream, cfg.train.train_scenes);
    const std::vector<Scene> eval_scenes = make_scenes(cfg, kEvalStream, cfg.train.eval_scenes);

    std::vector<SweepRow> rows;
    for (int k : ks) {
        ExperimentConfig kcfg = cfg;
        kcfg.model.k = k;
        kcfg.validate();
        CountingModel model(kcfg.model, cfg.seed);
        fit_model(model, kcfg, train_scenes, mix_seed(cfg.seed, kAugmentStream, 0));
        const SplitMetrics m = evaluate_scenes(model, kcfg, eval_scenes, nullptr);
        rows.push_back({k, m.mae, m.mse});
    }

    std::ofstream os = open_out(out_dir + "/sweep_k.csv");
    os << "k,mae,mse(rmse)\n" << std::setprecision(17);
    for (const SweepRow& r : rows) os << r.k << ',' << r.mae << ',' << r.mse << '\n';
    return rows;
}

void graph_dump_run(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                    const std::string& out_dir, unsigned long long scene_seed) {
    cfg.validate();
    CountingModel model = restore_model(cfg, checkpoint_path);
    fs::create_directories(out_dir);

    const Scene scene = generate_scene(cfg.scene, scene_seed);
    Tape tape;
    ForwardResult fr = model.forward(tape, scene.image, false);

    write_ppm(out_dir + "/scene.ppm", scene.image);
    write_points_csv(out_dir + "/gt_points.csv", scene.points, {});
    const CountResult cr = count_from_points(fr.preds, cfg.model.points.threshold);
    write_points_csv(out_dir + "/points.csv", cr.kept, cr.kept_conf);

    // rebuild both graphs from the dumped quantities so the files can be
    // cross-checked offline against density_raw.csv and each other
    const Tensor nodes = chw_to_nc(tape, fr.fused_base);
    write_graph_json(out_dir + "/rsg.json", build_rsg(nodes, cfg.model.k));
    if (fr.has_density) {
        write_pgm(out_dir + "/density.pgm", fr.density);
        write_density_csv(out_dir + "/density_raw.csv", fr.density);
        write_graph_json(out_dir + "/dsg.json", build_dsg(nodes, fr.density, cfg.model.k));
    }
}

int gradcheck_run(std::ostream& os, int seeds, double tol) {
    const std::vector<GradCheck> checks = gradcheck_suite(seeds, tol);
    int failed = 0;
    for (const GradCheck& c : checks) {
        os << (c.pass ? "PASS" : "FAIL") << ' ' << c.name << "  max_rel_err=" << std::scientific
           << std::setprecision(3) << c.max_rel_err << std::defaultfloat
           << "  worst_seed=" << c.worst_seed << '\n';
        if (!c.pass) ++failed;
    }
    os << "gradcheck: " << checks.size() - failed << '/' << checks.size() << " passed (tol " << tol
       << ", " << seeds << " seeds)\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace graphcount

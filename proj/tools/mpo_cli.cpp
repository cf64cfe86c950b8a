// mpo: command-line driver for pattern fitting on weight-space planes.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mpo/config.hpp"
#include "mpo/experiment.hpp"
#include "mpo/gradcheck.hpp"
#include "mpo/landscape.hpp"
#include "mpo/snapshot.hpp"
#include "mpo/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mpo;

namespace {

/// Flags shared by commands that read a TOML config. Each optional is
/// applied only when given, so CLI > TOML > default.
struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations, batch_size, cells, log_every, max_examples;
    std::optional<double> lr;
    std::optional<std::string> output_dir, pattern_path;

    void add(CLI::App* app) {
        app->add_option("-c,--config", config, "TOML run configuration")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "Run seed");
        app->add_option("--iterations", iterations, "Optimizer steps");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--batch-size", batch_size, "Examples per step");
        app->add_option("--cells", cells, "Pattern cells sampled per step");
        app->add_option("--log-every", log_every, "Training log interval");
        app->add_option("--max-examples", max_examples, "Evaluation subsample size (0 = whole split)");
        app->add_option("--output-dir", output_dir, "Parent of the per-run output directory");
        app->add_option("--pattern", pattern_path, "Mask image (PGM or PNG), overrides the config pattern");
    }

    RunConfig resolve(int threads) const {
        RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
        if (seed) c.seed = *seed;
        if (iterations) c.train.iterations = *iterations;
        if (lr) c.train.lr = *lr;
        if (batch_size) c.train.batch_size = *batch_size;
        if (cells) c.train.cells_per_update = *cells;
        if (log_every) c.train.log_every = *log_every;
        if (max_examples) c.eval.max_examples = *max_examples;
        if (output_dir) c.output_dir = *output_dir;
        if (pattern_path) {
            c.pattern.kind = "file";
            c.pattern.path = *pattern_path;
        }
        c.train.seed = c.seed;
        c.train.threads = threads;
        c.validate();
        return c;
    }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << text;
}

fs::path make_run_dir(const RunConfig& cfg) {
    const fs::path dir = cfg.run_dir();
    fs::create_directories(dir);
    write_text(dir / "config.json", json::parse(cfg.to_json()).dump(2) + "\n");
    return dir;
}

json metrics_json(const BlackWhiteMetrics& m) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    return {{"mean_acc_black", num(m.mean_acc_black)},
            {"mean_acc_white", num(m.mean_acc_white)},
            {"diff", m.diff ? json(*m.diff) : json("undefined")}};
}

void save_plane_with_sidecar(const PlaneParams& plane, const nn::ModelSpec& spec, const RunConfig& cfg,
                             const fs::path& path) {
    save_plane(plane, path.string());
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(spec.hash()));
    const json side = {{"format", "MPO1"},
                       {"n", plane.dim()},
                       {"model_spec_hash", hash},
                       {"model_spec", json::parse(spec.to_json())},
                       {"config_hash", cfg.hash()},
                       {"seed", cfg.seed}};
    write_text(path.string() + ".json", side.dump(2) + "\n");
}

int cmd_fit_pattern(const Overrides& ov, int threads) {
    const RunConfig cfg = ov.resolve(threads);
    const auto [train_ds, test_ds] = load_datasets(cfg.dataset);
    const nn::ModelSpec spec = build_model(cfg.model, train_ds.shape(), train_ds.num_classes);
    const Mask mask = build_pattern(cfg.pattern, cfg.seed);
    const fs::path dir = make_run_dir(cfg);
    write_text(dir / "model.json", spec.to_json() + "\n");
    save_mask_pgm((dir / "mask.pgm").string(), mask);
    write_cell_sets_csv((dir / "cells.csv").string(), derive_cell_sets(mask));

    TrainResult fit;
    try {
        fit = train(spec, train_ds, mask, cfg.train);
    } catch (const TrainingAborted& e) {
        save_plane_with_sidecar(e.last_plane, spec, cfg, dir / "plane_last_valid.mpo");
        throw;
    }
    fit.report.write_csv((dir / "train_log.csv").string());
    for (const auto& w : fit.report.warnings) std::cerr << "warning: " << w << "\n";
    save_plane_with_sidecar(fit.plane, spec, cfg, dir / "plane.mpo");

    const EvalOptions eo{cfg.eval.max_examples, cfg.dataset.data_seed, threads};
    const Extent cells = Extent::integer_grid(mask.width, mask.height);
    const GridResult g_test = eval_grid(fit.plane, spec, test_ds, cells, eo);
    const GridResult g_train = eval_grid(fit.plane, spec, train_ds, cells, eo);
    write_grid_csv((dir / "grid_test.csv").string(), g_test);
    write_grid_csv((dir / "grid_train.csv").string(), g_train);
    const json metrics = {{"test", metrics_json(black_white_means(g_test, mask))},
                          {"train", metrics_json(black_white_means(g_train, mask))},
                          {"train_test_accuracy_pearson",
                           std::isnan(pearson(g_train.accuracy, g_test.accuracy))
                               ? json(nullptr)
                               : json(pearson(g_train.accuracy, g_test.accuracy))}};
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    if (cfg.eval.render) {
        const GridResult wide =
            eval_grid(fit.plane, spec, test_ds, Extent::render_default(mask.width, mask.height), eo);
        write_grid_csv((dir / "grid_render.csv").string(), wide);
        render_heatmap(wide, Channel::loss, (dir / "heatmap_loss.png").string(), cfg.eval.upscale);
        render_heatmap(wide, Channel::accuracy, (dir / "heatmap_accuracy.png").string(), cfg.eval.upscale);
    }
    std::cout << dir.string() << "\n" << metrics.dump() << "\n";
    return 0;
}

int cmd_eval_grid(const Overrides& ov, int threads, const std::string& plane_path, const std::string& split,
                  const std::string& extent_kind, const std::string& out) {
    const RunConfig cfg = ov.resolve(threads);
    const auto [train_ds, test_ds] = load_datasets(cfg.dataset);
    const Dataset& ds = split == "train" ? train_ds : test_ds;
    const nn::ModelSpec spec = build_model(cfg.model, ds.shape(), ds.num_classes);
    const PlaneParams plane = load_plane(plane_path);
    if (plane.dim() != spec.param_count())
        throw ConfigError("snapshot has n = " + std::to_string(plane.dim()) + " but the model has " +
                          std::to_string(spec.param_count()) + " parameters");
    const int w = cfg.pattern.width, h = cfg.pattern.height;
    const Extent ext = extent_kind == "render" ? Extent::render_default(w, h) : Extent::integer_grid(w, h);
    const GridResult g = eval_grid(plane, spec, ds, ext, {cfg.eval.max_examples, cfg.dataset.data_seed, threads});
    write_grid_csv(out, g);
    return 0;
}

int cmd_render(const std::string& grid_path, const std::string& channel, int upscale, const std::string& out) {
    const GridResult g = read_grid_csv(grid_path);
    render_heatmap(g, channel == "accuracy" ? Channel::accuracy : Channel::loss, out, upscale);
    return 0;
}

int cmd_gen_mask(const std::string& kind, int width, int height, double p, int tile, std::uint64_t seed,
                 const std::string& out, const std::string& cells_csv) {
    PatternConfig pc;
    pc.kind = kind;
    pc.width = width;
    pc.height = height;
    pc.p = p;
    pc.tile = tile;
    if (width < 1 || height < 1) throw ConfigError("mask dimensions must be positive");
    if (!(p >= 0 && p <= 1)) throw ConfigError("p must lie in [0, 1]");
    if (tile < 1) throw ConfigError("tile must be positive");
    const Mask m = build_pattern(pc, seed);
    save_mask_pgm(out, m);
    if (!cells_csv.empty()) write_cell_sets_csv(cells_csv, derive_cell_sets(m));
    std::cout << m.count_black() << " black of " << m.size() << "\n";
    return 0;
}

int cmd_bn_experiment(const Overrides& ov, int threads, const std::optional<int>& runs,
                      const std::vector<double>& probs, const std::optional<int>& mask_size) {
    RunConfig cfg = ov.resolve(threads);
    if (runs) cfg.bn.runs = *runs;
    if (!probs.empty()) cfg.bn.probs = probs;
    if (mask_size) cfg.bn.mask_size = *mask_size;
    cfg.validate();
    const auto [train_ds, test_ds] = load_datasets(cfg.dataset);
    const fs::path dir = make_run_dir(cfg);
    const auto res = run_bn_experiment(cfg, train_ds, test_ds, (dir / "bn_rows.csv").string(), [](const BnRow& r) {
        std::cerr << "p=" << r.p << " run=" << r.run << " arch=" << r.arch << " diff="
                  << (r.metrics.diff ? std::to_string(*r.metrics.diff) : "undefined") << "\n";
    });
    write_text(dir / "bn_summary.csv", bn_aggregate_csv(res.aggregates));
    std::cout << dir.string() << "\n";
    for (const auto& a : res.aggregates)
        std::printf("p=%-4g %-8s diff = %s\n", a.p, a.arch.c_str(),
                    a.defined ? (std::to_string(a.diff_mean) + " +- " + std::to_string(a.diff_std)).c_str()
                              : "undefined");
    return 0;
}

int cmd_check_grad(int instances, std::uint64_t seed, double tol) {
    const auto results = check_mpo_gradients(instances, seed);
    double worst = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        std::printf("instance %2zu  %-4s n=%-4zu max_rel_err=%.3e  redraws=%d\n", i, results[i].model.c_str(),
                    results[i].n, results[i].max_rel_err, results[i].redraws);
        worst = std::max(worst, results[i].max_rel_err);
    }
    std::printf("worst %.3e (tolerance %.1e)\n", worst, tol);
    return worst <= tol ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fit binary patterns onto planes in neural-network weight space"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads for per-cell work")->check(CLI::PositiveNumber);

    Overrides fit_ov, eval_ov, bn_ov;
    auto* fit = app.add_subcommand("fit-pattern", "Train a plane so its loss landscape draws a pattern");
    fit_ov.add(fit);

    auto* eval = app.add_subcommand("eval-grid", "Evaluate loss and accuracy over a lattice of the plane");
    eval_ov.add(eval);
    std::string plane_path, split = "test", extent_kind = "integer", eval_out;
    eval->add_option("--plane", plane_path, "Plane snapshot")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    eval->add_option("--extent", extent_kind, "integer (pattern cells) or render (margins, half-cell spacing)")
        ->check(CLI::IsMember({"integer", "render"}));
    eval->add_option("-o,--out", eval_out, "Grid CSV")->required();

    auto* render = app.add_subcommand("render", "Render a grid CSV as a heatmap image");
    std::string grid_path, channel = "loss", render_out;
    int upscale = 8;
    render->add_option("--grid", grid_path, "Grid CSV")->required()->check(CLI::ExistingFile);
    render->add_option("--channel", channel, "loss or accuracy")->check(CLI::IsMember({"loss", "accuracy"}));
    render->add_option("--upscale", upscale, "Pixels per cell")->check(CLI::PositiveNumber);
    render->add_option("-o,--out", render_out, "Output .png (or .ppm)")->required();

    auto* gen = app.add_subcommand("gen-mask", "Write a random or checkerboard mask");
    std::string mask_kind = "random", mask_out, cells_out;
    int mw = 30, mh = 30, tile = 1;
    double p = 0.5;
    std::uint64_t mask_seed = 0;
    gen->add_option("--kind", mask_kind, "random, checkerboard or checkerboard_border")
        ->check(CLI::IsMember({"random", "checkerboard", "checkerboard_border"}));
    gen->add_option("--width", mw, "Mask width");
    gen->add_option("--height", mh, "Mask height");
    gen->add_option("--p", p, "Black probability (random)");
    gen->add_option("--tile", tile, "Checker tile side");
    gen->add_option("--seed", mask_seed, "Seed (random)");
    gen->add_option("-o,--out", mask_out, "Output PGM")->required();
    gen->add_option("--cells-csv", cells_out, "Also write the cell sets as CSV");

    auto* bn = app.add_subcommand("bn-experiment", "Black-white accuracy gap with and without batch norm");
    bn_ov.add(bn);
    std::optional<int> runs, mask_size;
    std::vector<double> probs;
    bn->add_option("--runs", runs, "Runs per fill probability");
    bn->add_option("--probs", probs, "Fill probabilities");
    bn->add_option("--mask-size", mask_size, "Mask side");

    auto* grad = app.add_subcommand("check-grad", "Audit the objective gradient against finite differences");
    int instances = 20;
    std::uint64_t grad_seed = 0;
    double tol = 1e-4;
    grad->add_option("--instances", instances, "Random instances")->check(CLI::PositiveNumber);
    grad->add_option("--seed", grad_seed, "Seed");
    grad->add_option("--tol", tol, "Maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*fit) return cmd_fit_pattern(fit_ov, threads);
        if (*eval) return cmd_eval_grid(eval_ov, threads, plane_path, split, extent_kind, eval_out);
        if (*render) return cmd_render(grid_path, channel, upscale, render_out);
        if (*gen) return cmd_gen_mask(mask_kind, mw, mh, p, tile, mask_seed, mask_out, cells_out);
        if (*bn) return cmd_bn_experiment(bn_ov, threads, runs, probs, mask_size);
        if (*grad) return cmd_check_grad(instances, grad_seed, tol);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#include "mpo/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "mpo/train.hpp"

namespace mpo {

namespace {

// Shortest text that round-trips to the same double.
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace

std::vector<BnAggregate> aggregate_bn(const std::vector<BnRow>& rows) {
    // Keyed by first appearance so output order follows the experiment order.
    std::vector<BnAggregate> out;
    std::vector<std::vector<const BnRow*>> groups;
    for (const auto& r : rows) {
        std::size_t k = 0;
        while (k < out.size() && !(out[k].p == r.p && out[k].arch == r.arch)) ++k;
        if (k == out.size()) {
            out.push_back({r.p, r.arch});
            groups.emplace_back();
        }
        groups[k].push_back(&r);
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        BnAggregate& a = out[k];
        a.runs = static_cast<int>(groups[k].size());
        double sum = 0, sb = 0, sw = 0;
        for (const BnRow* r : groups[k]) {
            if (!r->metrics.diff) continue;
            ++a.defined;
            sum += *r->metrics.diff;
            sb += r->metrics.mean_acc_black;
            sw += r->metrics.mean_acc_white;
        }
        if (a.defined == 0) {
            a.diff_mean = a.diff_std = a.black_mean = a.white_mean = std::nan("");
            continue;
        }
        a.diff_mean = sum / a.defined;
        a.black_mean = sb / a.defined;
        a.white_mean = sw / a.defined;
        double ss = 0;
        for (const BnRow* r : groups[k])
            if (r->metrics.diff) ss += (*r->metrics.diff - a.diff_mean) * (*r->metrics.diff - a.diff_mean);
        a.diff_std = a.defined > 1 ? std::sqrt(ss / (a.defined - 1)) : 0.0;
    }
    return out;
}

std::string bn_rows_header() { return "p,run,arch,mean_black,mean_white,diff\n"; }

std::string bn_row_line(const BnRow& r) {
    return num(r.p) + "," + std::to_string(r.run) + "," + r.arch + "," + num(r.metrics.mean_acc_black) + "," +
           num(r.metrics.mean_acc_white) + "," + (r.metrics.diff ? num(*r.metrics.diff) : "undefined") + "\n";
}

std::string bn_aggregate_csv(const std::vector<BnAggregate>& agg) {
    std::string out = "p,arch,runs,defined,diff_mean,diff_std,mean_black,mean_white\n";
    for (const auto& a : agg)
        out += num(a.p) + "," + a.arch + "," + std::to_string(a.runs) + "," + std::to_string(a.defined) + "," +
               (a.defined ? num(a.diff_mean) : "undefined") + "," + (a.defined ? num(a.diff_std) : "undefined") +
               "," + num(a.black_mean) + "," + num(a.white_mean) + "\n";
    return out;
}

BnExperimentResult run_bn_experiment(const RunConfig& cfg, const Dataset& train_ds, const Dataset& test_ds,
                                     const std::string& rows_csv, const std::function<void(const BnRow&)>& on_row) {
    cfg.validate();
    std::ofstream csv;
    if (!rows_csv.empty()) {
        csv.open(rows_csv, std::ios::binary);
        if (!csv) throw DataError("cannot write '" + rows_csv + "'");
        csv << bn_rows_header() << std::flush;
    }
    BnExperimentResult res;
    const int side = cfg.bn.mask_size;
    for (double p : cfg.bn.probs)
        for (int run = 0; run < cfg.bn.runs; ++run) {
            const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(run);
            const Mask mask = gen_random_mask(side, side, p, seed);
            for (const auto& arch : cfg.bn.archs) {
                ModelConfig mc = cfg.model;
                mc.kind = arch;
                const nn::ModelSpec spec = build_model(mc, train_ds.shape(), train_ds.num_classes);
                TrainConfig tc = cfg.train;
                tc.seed = seed;
                BnRow row{p, run, arch, {}};
                const TrainResult fit = train(spec, train_ds, mask, tc);
                const GridResult grid = eval_grid(fit.plane, spec, test_ds, Extent::integer_grid(side, side),
                                                  {cfg.eval.max_examples, cfg.dataset.data_seed, tc.threads});
                row.metrics = black_white_means(grid, mask);
                if (csv.is_open()) csv << bn_row_line(row) << std::flush;
                if (on_row) on_row(row);
                res.rows.push_back(std::move(row));
            }
        }
    res.aggregates = aggregate_bn(res.rows);
    return res;
}

}  // namespace mpo

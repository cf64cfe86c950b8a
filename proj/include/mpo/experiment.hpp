#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mpo/config.hpp"
#include "mpo/landscape.hpp"

namespace mpo {

struct BnRow {
    double p = 0;
    int run = 0;
    std::string arch;
    BlackWhiteMetrics metrics;
};

/// Per (p, arch) statistics over the runs whose diff is defined. The
/// standard deviation is the sample one (n - 1), zero for a single run.
struct BnAggregate {
    double p = 0;
    std::string arch;
    int runs = 0;
    int defined = 0;
    double diff_mean = 0, diff_std = 0;
    double black_mean = 0, white_mean = 0;
};

std::vector<BnAggregate> aggregate_bn(const std::vector<BnRow>& rows);

/// p,run,arch,mean_black,mean_white,diff; a single-class mask writes
/// "undefined" in the diff column and "nan" for the absent class mean.
std::string bn_rows_header();
std::string bn_row_line(const BnRow& row);
/// p,arch,runs,defined,diff_mean,diff_std,mean_black,mean_white
std::string bn_aggregate_csv(const std::vector<BnAggregate>& agg);

struct BnExperimentResult {
    std::vector<BnRow> rows;
    std::vector<BnAggregate> aggregates;
};

/// For every p and run r (seed = cfg.seed + r): one random mask of side
/// bn.mask_size, then each arch is fitted and scored on the test split.
/// Rows are appended to `rows_csv` as they finish so an aborted experiment
/// leaves its completed runs on disk.
BnExperimentResult run_bn_experiment(const RunConfig& cfg, const Dataset& train, const Dataset& test,
                                     const std::string& rows_csv = "",
                                     const std::function<void(const BnRow&)>& on_row = {});

}  // namespace mpo

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mpo/datasets.hpp"
#include "mpo/error.hpp"
#include "mpo/image_io.hpp"
#include "mpo/manifold.hpp"
#include "mpo/model_spec.hpp"
#include "mpo/patterns.hpp"

namespace mpo {

/// Evenly spaced lattice over the plane. Row r maps to beta, column c to
/// alpha; a single row or column sits at the range minimum.
struct Extent {
    double alpha_min = 0, alpha_max = 0;
    double beta_min = 0, beta_max = 0;
    int rows = 1, cols = 1;

    CellCoord coord(int row, int col) const;
    void validate() const;

    /// Integer cells of a width x height pattern.
    static Extent integer_grid(int width, int height);
    /// [-2, width+1] x [-2, height+1] at half-cell spacing.
    static Extent render_default(int width, int height);
};

struct GridResult {
    int rows = 0, cols = 0;
    std::vector<CellCoord> coords;  // row-major
    std::vector<double> loss;
    std::vector<double> accuracy;
    Split split = Split::test;

    std::size_t size() const { return loss.size(); }
    void validate() const;
};

struct EvalOptions {
    int max_examples = 2048;  // seeded subsample above this; 0 evaluates the whole split
    std::uint64_t subsample_seed = 0;
    int threads = 1;
};

/// Mean loss and accuracy of the materialized model at every lattice point.
/// BN layers normalize with the statistics of the evaluation set itself.
GridResult eval_grid(const PlaneParams& plane, const nn::ModelSpec& spec, const Dataset& dataset,
                     const Extent& extent, const EvalOptions& options = {});

/// The examples eval_grid actually scores.
Dataset eval_subset(const Dataset& dataset, const EvalOptions& options);

enum class Channel { loss, accuracy };

/// Per-cell values in [0, 1] fed to the colormap. Loss: log10(loss + 1e-8)
/// min-max normalized, a constant grid maps to 0.5. Accuracy: clamped as is.
std::vector<double> heatmap_values(const GridResult& grid, Channel channel);

/// Index into the 256-entry colormap for v in [0, 1]; monotone.
int colormap_index(double v);
/// Viridis, 8-bit RGB.
std::array<std::uint8_t, 3> colormap_rgb(int index);

RgbImage heatmap_image(const GridResult& grid, Channel channel, int upscale = 1);
/// PNG unless the path ends in .ppm.
void render_heatmap(const GridResult& grid, Channel channel, const std::string& out_path, int upscale = 1);

struct BlackWhiteMetrics {
    double mean_acc_black = std::numeric_limits<double>::quiet_NaN();
    double mean_acc_white = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> diff;  // empty when the mask has a single class
};

/// Means over cells by mask class; never throws for single-class masks.
BlackWhiteMetrics black_white_means(const GridResult& grid, const Mask& mask);

/// Thrown by black_white_metrics when one class is absent.
class DiffUndefined : public DiffUndefinedError {
public:
    DiffUndefined(const std::string& what, BlackWhiteMetrics partial)
        : DiffUndefinedError(what), partial(partial) {}
    BlackWhiteMetrics partial;
};

/// Like black_white_means but a single-class mask raises DiffUndefined.
BlackWhiteMetrics black_white_metrics(const GridResult& grid, const Mask& mask);

/// Pearson correlation; NaN when either input has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// row,col,alpha,beta,loss,accuracy
std::string grid_to_csv(const GridResult& grid);
void write_grid_csv(const std::string& path, const GridResult& grid);
GridResult read_grid_csv(const std::string& path, Split split = Split::test);

}  // namespace mpo

#include "mpo/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpo/network.hpp"
#include "mpo/parallel.hpp"

namespace mpo {

namespace {

constexpr std::uint8_t kViridis[256][3] = {
#include "viridis.inc"
};

constexpr double kLogOffset = 1e-8;

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

CellCoord Extent::coord(int row, int col) const {
    const double a = cols > 1 ? alpha_min + (alpha_max - alpha_min) * col / (cols - 1) : alpha_min;
    const double b = rows > 1 ? beta_min + (beta_max - beta_min) * row / (rows - 1) : beta_min;
    return {a, b};
}

void Extent::validate() const {
    if (rows < 1 || cols < 1) throw InputError("extent must have at least one row and column");
    if (!std::isfinite(alpha_min) || !std::isfinite(alpha_max) || !std::isfinite(beta_min) ||
        !std::isfinite(beta_max))
        throw InputError("extent bounds must be finite");
    if (alpha_max < alpha_min || beta_max < beta_min) throw InputError("extent bounds are reversed");
}

Extent Extent::integer_grid(int width, int height) {
    return {0.0, static_cast<double>(width - 1), 0.0, static_cast<double>(height - 1), height, width};
}

Extent Extent::render_default(int width, int height) {
    return {-2.0, width + 1.0, -2.0, height + 1.0, 2 * (height + 3) + 1, 2 * (width + 3) + 1};
}

void GridResult::validate() const {
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (rows < 1 || cols < 1 || coords.size() != n || loss.size() != n || accuracy.size() != n)
        throw InputError("grid result is not a dense rows x cols grid");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(loss[i]) || loss[i] < 0) throw NumericError("grid loss is not finite and nonnegative");
        if (!(accuracy[i] >= 0 && accuracy[i] <= 1)) throw NumericError("grid accuracy outside [0, 1]");
    }
}

Dataset eval_subset(const Dataset& dataset, const EvalOptions& options) {
    if (options.max_examples > 0 && dataset.size() > options.max_examples)
        return take(dataset, options.max_examples, options.subsample_seed);
    return dataset;
}

GridResult eval_grid(const PlaneParams& plane, const nn::ModelSpec& spec, const Dataset& dataset,
                     const Extent& extent, const EvalOptions& options) {
    extent.validate();
    if (dataset.size() < 1) throw InputError("cannot evaluate on an empty dataset");
    if (plane.dim() != spec.param_count()) throw InputError("plane dimension does not match the model");
    const Dataset subset = eval_subset(dataset, options);
    const Batch batch = subset.all();
    nn::check_batch(spec, batch);
    const Vec w_right = orthogonalize(plane.w_up, plane.phi_right);

    GridResult g;
    g.rows = extent.rows;
    g.cols = extent.cols;
    g.split = dataset.split;
    const std::size_t n = static_cast<std::size_t>(g.rows) * g.cols;
    g.coords.resize(n);
    g.loss.resize(n);
    g.accuracy.resize(n);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) g.coords[static_cast<std::size_t>(r) * g.cols + c] = extent.coord(r, c);

    parallel_for(n, options.threads, [&](std::size_t i) {
        nn::FlatWeights w(plane.dim());
        materialize_into(plane, w_right, g.coords[i], w);
        const nn::Evaluation e = nn::evaluate(spec, w, batch, nn::Mode::train);
        if (!std::isfinite(e.loss)) throw NumericError("non-finite loss while evaluating the grid");
        g.loss[i] = e.loss;
        g.accuracy[i] = e.accuracy;
    });
    return g;
}

std::vector<double> heatmap_values(const GridResult& grid, Channel channel) {
    if (grid.size() == 0) throw InputError("cannot render an empty grid");
    std::vector<double> v(grid.size());
    if (channel == Channel::accuracy) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(grid.accuracy[i], 0.0, 1.0);
        return v;
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log10(grid.loss[i] + kLogOffset);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double a = *lo, span = *hi - *lo;
    for (double& x : v) x = span > 0 ? (x - a) / span : 0.5;
    return v;
}

int colormap_index(double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::array<std::uint8_t, 3> colormap_rgb(int index) {
    const auto& c = kViridis[std::clamp(index, 0, 255)];
    return {c[0], c[1], c[2]};
}

RgbImage heatmap_image(const GridResult& grid, Channel channel, int upscale) {
    if (upscale < 1) throw InputError("upscale factor must be at least 1");
    const std::vector<double> v = heatmap_values(grid, channel);
    RgbImage img;
    img.width = grid.cols * upscale;
    img.height = grid.rows * upscale;
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const auto rgb = colormap_rgb(colormap_index(v[static_cast<std::size_t>(y / upscale) * grid.cols + x / upscale]));
            std::copy(rgb.begin(), rgb.end(), img.rgb.begin() + (static_cast<std::size_t>(y) * img.width + x) * 3);
        }
    return img;
}

void render_heatmap(const GridResult& grid, Channel channel, const std::string& out_path, int upscale) {
    const RgbImage img = heatmap_image(grid, channel, upscale);
    if (ends_with(out_path, ".ppm"))
        write_ppm(out_path, img);
    else
        write_png(out_path, img);
}

BlackWhiteMetrics black_white_means(const GridResult& grid, const Mask& mask) {
    mask.validate();
    if (grid.rows != mask.height || grid.cols != mask.width)
        throw InputError("grid dimensions " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                         " differ from the mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width));
    // Deviations from a shared reference keep constant grids exactly equal.
    const double ref = grid.accuracy.at(0);
    double sb = 0, sw = 0;
    std::size_t nb = 0, nw = 0;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            const double a = grid.accuracy[static_cast<std::size_t>(r) * grid.cols + c] - ref;
            if (mask.black(r, c)) {
                sb += a;
                ++nb;
            } else {
                sw += a;
                ++nw;
            }
        }
    BlackWhiteMetrics m;
    if (nb) m.mean_acc_black = ref + sb / nb;
    if (nw) m.mean_acc_white = ref + sw / nw;
    if (nb && nw) m.diff = m.mean_acc_black - m.mean_acc_white;
    return m;
}

BlackWhiteMetrics black_white_metrics(const GridResult& grid, const Mask& mask) {
    const BlackWhiteMetrics m = black_white_means(grid, mask);
    if (!m.diff) throw DiffUndefined("mask has a single class; the black-white difference is undefined", m);
    return m;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw InputError("pearson needs two nonempty equal-length inputs");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

std::string grid_to_csv(const GridResult& grid) {
    std::string out = "row,col,alpha,beta,loss,accuracy\n";
    char line[256];
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * grid.cols + c;
            std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g,%.17g\n", r, c, grid.coords[i].alpha,
                          grid.coords[i].beta, grid.loss[i], grid.accuracy[i]);
            out += line;
        }
    return out;
}

void write_grid_csv(const std::string& path, const GridResult& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << grid_to_csv(grid);
}

GridResult read_grid_csv(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "row,col,alpha,beta,loss,accuracy")
        throw ParseError(ParseError::Kind::bad_header, path + ": unexpected grid CSV header");
    struct Row {
        int r, c;
        double a, b, loss, acc;
    };
    std::vector<Row> rows;
    int max_r = -1, max_c = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row row{};
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf", &row.r, &row.c, &row.a, &row.b, &row.loss,
                        &row.acc) != 6 ||
            row.r < 0 || row.c < 0)
            throw ParseError(ParseError::Kind::bad_length, path + ": malformed row '" + line + "'");
        max_r = std::max(max_r, row.r);
        max_c = std::max(max_c, row.c);
        rows.push_back(row);
    }
    GridResult g;
    g.rows = max_r + 1;
    g.cols = max_c + 1;
    g.split = split;
    const std::size_t n = static_cast<std::size_t>(g.rows) * g.cols;
    if (rows.size() != n || n == 0) throw ParseError(ParseError::Kind::count_mismatch, path + ": grid is not dense");
    g.coords.resize(n);
    g.loss.resize(n);
    g.accuracy.resize(n);
    std::vector<bool> seen(n, false);
    for (const Row& row : rows) {
        const std::size_t i = static_cast<std::size_t>(row.r) * g.cols + row.c;
        if (seen[i]) throw ParseError(ParseError::Kind::count_mismatch, path + ": duplicate cell");
        seen[i] = true;
        g.coords[i] = {row.a, row.b};
        g.loss[i] = row.loss;
        g.accuracy[i] = row.acc;
    }
    return g;
}

}  // namespace mpo

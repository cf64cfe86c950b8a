#include "mpo/config.hpp"

#include <json.hpp>
#include <toml.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mpo/error.hpp"

namespace mpo {

namespace {

using nlohmann::json;

class TomlReader {
public:
    TomlReader(const toml::table& t, std::string where) : t_(t), where_(std::move(where)) {}

    void allow(std::initializer_list<const char*> keys) {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, _] : t_)
            if (!ok.count(std::string(k.str())))
                throw ConfigError(where_ + ": unknown key '" + std::string(k.str()) + "'");
    }

    template <class Int>
    void integer(const char* key, Int& out) const {
        if (auto n = node(key)) {
            auto v = n->value_exact<std::int64_t>();
            if (!v) fail(key, "an integer");
            if constexpr (std::is_unsigned_v<Int>)
                if (*v < 0) fail(key, "a nonnegative integer");
            out = static_cast<Int>(*v);
        }
    }
    void real(const char* key, double& out) const {
        if (auto n = node(key)) {
            if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer()))
                out = *v;
            else
                fail(key, "a number");
        }
    }
    void string(const char* key, std::string& out) const {
        if (auto n = node(key)) {
            if (auto v = n->value_exact<std::string>())
                out = *v;
            else
                fail(key, "a string");
        }
    }
    void boolean(const char* key, bool& out) const {
        if (auto n = node(key)) {
            if (auto v = n->value_exact<bool>())
                out = *v;
            else
                fail(key, "a boolean");
        }
    }
    template <class T>
    void array(const char* key, std::vector<T>& out) const {
        auto n = node(key);
        if (!n) return;
        const toml::array* arr = n->as_array();
        if (!arr) fail(key, "an array");
        out.clear();
        for (const auto& e : *arr) {
            std::optional<T> v;
            if constexpr (std::is_same_v<T, double>)
                v = e.is_number() ? e.value<double>() : std::nullopt;
            else if constexpr (std::is_same_v<T, int>)
                v = e.is_integer() ? std::optional<int>(static_cast<int>(*e.value<std::int64_t>())) : std::nullopt;
            else
                v = e.value_exact<T>();
            if (!v) fail(key, "an array of the right element type");
            out.push_back(*v);
        }
    }
    const toml::table* sub(const char* key) const {
        auto n = node(key);
        if (!n) return nullptr;
        if (!n->is_table()) fail(key, "a table");
        return n->as_table();
    }

private:
    const toml::node* node(const char* key) const { return t_.get(key); }
    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError(where_ + ": '" + key + "' must be " + what);
    }

    const toml::table& t_;
    std::string where_;
};

Dataset to_grayscale(const Dataset& ds) {
    const Shape3 s = ds.shape();
    if (s.c == 1) return ds;
    Dataset out = ds;
    out.images = Tensor(ds.size(), {1, s.h, s.w});
    const int plane = s.h * s.w;
    for (int i = 0; i < ds.size(); ++i)
        for (int k = 0; k < plane; ++k) {
            double v = 0;
            for (int c = 0; c < s.c; ++c) v += ds.images.sample(i)[c * plane + k];
            out.images.sample(i)[k] = v / s.c;
        }
    return out;
}

Dataset prepare(Dataset ds, const DatasetConfig& cfg, int n, std::uint64_t seed) {
    if (!cfg.classes.empty()) ds = select_classes(ds, cfg.classes);
    if (n > 0) ds = take(ds, n, seed);
    if (cfg.grayscale) ds = to_grayscale(ds);
    if (cfg.resize > 0) ds = downsample(ds, cfg.resize, cfg.resize);
    return ds;
}

}  // namespace

void RunConfig::validate() const {
    if (config_version != 1) throw ConfigError("config_version must be 1");
    train.validate();
    static const std::set<std::string> kinds{"mlp", "conv", "conv_bn", "reference", "reference_bn", "json"};
    if (!kinds.count(model.kind)) throw ConfigError("unknown model kind '" + model.kind + "'");
    if (model.kind == "json" && model.spec_path.empty()) throw ConfigError("model.spec_path is required for kind json");
    static const std::set<std::string> sources{"synthetic", "idx", "cifar10"};
    if (!sources.count(dataset.source)) throw ConfigError("unknown dataset source '" + dataset.source + "'");
    if (dataset.n_train < 0 || dataset.n_test < 0 || dataset.resize < 0)
        throw ConfigError("dataset sizes must be nonnegative");
    if (dataset.source == "synthetic" && (dataset.n_train < 2 || dataset.n_test < 2))
        throw ConfigError("synthetic n_train and n_test must be at least 2");
    if (dataset.source == "idx" && (dataset.train_images.empty() || dataset.train_labels.empty() ||
                                    dataset.test_images.empty() || dataset.test_labels.empty()))
        throw ConfigError("idx source needs train/test image and label paths");
    if (dataset.source == "cifar10" && (dataset.train_files.empty() || dataset.test_files.empty()))
        throw ConfigError("cifar10 source needs train_files and test_files");
    static const std::set<std::string> patterns{"checkerboard", "checkerboard_border", "random", "file"};
    if (!patterns.count(pattern.kind)) throw ConfigError("unknown pattern kind '" + pattern.kind + "'");
    if (pattern.kind != "file" && (pattern.width < 1 || pattern.height < 1))
        throw ConfigError("pattern dimensions must be positive");
    if (pattern.kind == "file" && pattern.path.empty()) throw ConfigError("pattern.path is required for kind file");
    if (!(pattern.p >= 0 && pattern.p <= 1)) throw ConfigError("pattern.p must lie in [0, 1]");
    if (pattern.tile < 1) throw ConfigError("pattern.tile must be positive");
    if (eval.max_examples < 0 || eval.upscale < 1) throw ConfigError("bad eval settings");
    if (bn.runs < 1 || bn.mask_size < 1 || bn.probs.empty() || bn.archs.empty())
        throw ConfigError("bn_experiment needs runs, mask_size, probs and archs");
    for (double p : bn.probs)
        if (!(p >= 0 && p <= 1)) throw ConfigError("bn_experiment probs must lie in [0, 1]");
    for (const auto& a : bn.archs)
        if (!kinds.count(a) || a == "json") throw ConfigError("bn_experiment arch '" + a + "' is not a built-in model");
}

std::string RunConfig::to_json() const {
    const auto& t = train;
    json j = {
        {"config_version", config_version},
        {"seed", seed},
        {"output_dir", output_dir},
        {"model",
         {{"kind", model.kind},
          {"hidden", model.hidden},
          {"channels", model.channels},
          {"pooled", model.pooled},
          {"head", model.head},
          {"pool_every_second", model.pool_every_second},
          {"spec_path", model.spec_path}}},
        {"dataset",
         {{"source", dataset.source},
          {"train_images", dataset.train_images},
          {"train_labels", dataset.train_labels},
          {"test_images", dataset.test_images},
          {"test_labels", dataset.test_labels},
          {"train_files", dataset.train_files},
          {"test_files", dataset.test_files},
          {"classes", dataset.classes},
          {"n_train", dataset.n_train},
          {"n_test", dataset.n_test},
          {"resize", dataset.resize},
          {"grayscale", dataset.grayscale},
          {"synthetic_size", dataset.synthetic_size},
          {"data_seed", dataset.data_seed}}},
        {"pattern",
         {{"kind", pattern.kind},
          {"width", pattern.width},
          {"height", pattern.height},
          {"tile", pattern.tile},
          {"p", pattern.p},
          {"path", pattern.path}}},
        {"train",
         {{"lr", t.lr},
          {"lr_final_fraction", t.lr_final_fraction},
          {"batch_size", t.batch_size},
          {"cells_per_update", t.cells_per_update},
          {"white_ce_clamp", t.white_ce_clamp},
          {"s_init", t.s_init},
          {"iterations", t.iterations},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps},
          {"log_every", t.log_every}}},
        {"eval", {{"max_examples", eval.max_examples}, {"upscale", eval.upscale}, {"render", eval.render}}},
        {"bn_experiment",
         {{"probs", bn.probs}, {"runs", bn.runs}, {"mask_size", bn.mask_size}, {"archs", bn.archs}}},
    };
    return j.dump();
}

std::string RunConfig::hash() const {
    // Where results go does not change what is computed.
    nlohmann::json j = nlohmann::json::parse(to_json());
    j.erase("output_dir");
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string RunConfig::run_dir() const {
    return (std::filesystem::path(output_dir) / (hash() + "-s" + std::to_string(seed))).string();
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    toml::table root;
    try {
        root = toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << origin << ": " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
    RunConfig cfg;
    TomlReader top(root, origin);
    top.allow({"config_version", "seed", "output_dir", "model", "dataset", "pattern", "train", "eval", "bn_experiment"});
    if (!root.get("config_version")) throw ConfigError(origin + ": config_version is required");
    top.integer("config_version", cfg.config_version);
    if (cfg.config_version != 1)
        throw ConfigError(origin + ": unsupported config_version " + std::to_string(cfg.config_version));
    top.integer("seed", cfg.seed);
    top.string("output_dir", cfg.output_dir);

    if (auto t = top.sub("model")) {
        TomlReader r(*t, origin + " [model]");
        r.allow({"kind", "hidden", "channels", "pooled", "head", "pool_every_second", "spec_path"});
        r.string("kind", cfg.model.kind);
        r.array("hidden", cfg.model.hidden);
        r.array("channels", cfg.model.channels);
        r.integer("pooled", cfg.model.pooled);
        r.integer("head", cfg.model.head);
        r.boolean("pool_every_second", cfg.model.pool_every_second);
        r.string("spec_path", cfg.model.spec_path);
    }
    if (auto t = top.sub("dataset")) {
        auto& d = cfg.dataset;
        TomlReader r(*t, origin + " [dataset]");
        r.allow({"source", "train_images", "train_labels", "test_images", "test_labels", "train_files", "test_files",
                 "classes", "n_train", "n_test", "resize", "grayscale", "synthetic_size", "data_seed"});
        r.string("source", d.source);
        r.string("train_images", d.train_images);
        r.string("train_labels", d.train_labels);
        r.string("test_images", d.test_images);
        r.string("test_labels", d.test_labels);
        r.array("train_files", d.train_files);
        r.array("test_files", d.test_files);
        r.array("classes", d.classes);
        r.integer("n_train", d.n_train);
        r.integer("n_test", d.n_test);
        r.integer("resize", d.resize);
        r.boolean("grayscale", d.grayscale);
        r.integer("synthetic_size", d.synthetic_size);
        r.integer("data_seed", d.data_seed);
    }
    if (auto t = top.sub("pattern")) {
        auto& p = cfg.pattern;
        TomlReader r(*t, origin + " [pattern]");
        r.allow({"kind", "width", "height", "tile", "p", "path"});
        r.string("kind", p.kind);
        r.integer("width", p.width);
        r.integer("height", p.height);
        r.integer("tile", p.tile);
        r.real("p", p.p);
        r.string("path", p.path);
    }
    if (auto t = top.sub("train")) {
        auto& tr = cfg.train;
        TomlReader r(*t, origin + " [train]");
        r.allow({"lr", "lr_final_fraction", "batch_size", "cells_per_update", "white_ce_clamp", "s_init", "iterations", "adam_beta1",
                 "adam_beta2", "adam_eps", "log_every", "threads"});
        r.real("lr", tr.lr);
        r.real("lr_final_fraction", tr.lr_final_fraction);
        r.integer("batch_size", tr.batch_size);
        r.integer("cells_per_update", tr.cells_per_update);
        r.real("white_ce_clamp", tr.white_ce_clamp);
        r.real("s_init", tr.s_init);
        r.integer("iterations", tr.iterations);
        r.real("adam_beta1", tr.adam_beta1);
        r.real("adam_beta2", tr.adam_beta2);
        r.real("adam_eps", tr.adam_eps);
        r.integer("log_every", tr.log_every);
        r.integer("threads", tr.threads);
    }
    if (auto t = top.sub("eval")) {
        TomlReader r(*t, origin + " [eval]");
        r.allow({"max_examples", "upscale", "render"});
        r.integer("max_examples", cfg.eval.max_examples);
        r.integer("upscale", cfg.eval.upscale);
        r.boolean("render", cfg.eval.render);
    }
    if (auto t = top.sub("bn_experiment")) {
        TomlReader r(*t, origin + " [bn_experiment]");
        r.allow({"probs", "runs", "mask_size", "archs"});
        r.array("probs", cfg.bn.probs);
        r.integer("runs", cfg.bn.runs);
        r.integer("mask_size", cfg.bn.mask_size);
        r.array("archs", cfg.bn.archs);
    }
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path);
}

nn::ModelSpec build_model(const ModelConfig& m, Shape3 input, int num_classes) {
    if (m.kind == "mlp") return nn::make_mlp(input, num_classes, {m.hidden});
    if (m.kind == "conv" || m.kind == "conv_bn")
        return nn::make_conv_net(input, num_classes,
                                 {m.channels, m.kind == "conv_bn", m.pooled, m.head, m.pool_every_second});
    if (m.kind == "reference") return nn::reference_net(input, num_classes, false);
    if (m.kind == "reference_bn") return nn::reference_net(input, num_classes, true);
    if (m.kind == "json") {
        std::ifstream in(m.spec_path);
        if (!in) throw ConfigError("cannot open model spec '" + m.spec_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        nn::ModelSpec spec = nn::ModelSpec::from_json(ss.str());
        if (!(spec.input_shape() == input) || spec.num_classes() != num_classes)
            throw ConfigError("model spec '" + m.spec_path + "' does not match the dataset");
        return spec;
    }
    throw ConfigError("unknown model kind '" + m.kind + "'");
}

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg) {
    if (cfg.source == "synthetic") {
        Dataset tr = make_synthetic(std::max(1, cfg.n_train / 2), cfg.synthetic_size, cfg.data_seed, Split::train);
        Dataset te = make_synthetic(std::max(1, cfg.n_test / 2), cfg.synthetic_size, cfg.data_seed + 1, Split::test);
        if (cfg.resize > 0) {
            tr = downsample(tr, cfg.resize, cfg.resize);
            te = downsample(te, cfg.resize, cfg.resize);
        }
        return {std::move(tr), std::move(te)};
    }
    if (cfg.source == "idx")
        return {prepare(load_idx(cfg.train_images, cfg.train_labels, Split::train), cfg, cfg.n_train, cfg.data_seed),
                prepare(load_idx(cfg.test_images, cfg.test_labels, Split::test), cfg, cfg.n_test, cfg.data_seed + 1)};
    if (cfg.source == "cifar10")
        return {prepare(load_cifar10(cfg.train_files, Split::train), cfg, cfg.n_train, cfg.data_seed),
                prepare(load_cifar10(cfg.test_files, Split::test), cfg, cfg.n_test, cfg.data_seed + 1)};
    throw ConfigError("unknown dataset source '" + cfg.source + "'");
}

Mask build_pattern(const PatternConfig& cfg, std::uint64_t seed) {
    if (cfg.kind == "checkerboard") return checkerboard(cfg.width, cfg.height, cfg.tile);
    if (cfg.kind == "checkerboard_border") return checkerboard_with_border(cfg.width, cfg.height, cfg.tile);
    if (cfg.kind == "random") return gen_random_mask(cfg.width, cfg.height, cfg.p, seed);
    if (cfg.kind == "file") return load_mask(cfg.path, cfg.width, cfg.height);
    throw ConfigError("unknown pattern kind '" + cfg.kind + "'");
}

}  // namespace mpo

#include "mpo/model_spec.hpp"

#include <algorithm>

#include <json.hpp>

#include "mpo/error.hpp"

namespace mpo::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::string shape_str(Shape3 s) {
    return "(" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

Shape3 infer(const Layer& layer, Shape3 in, std::size_t index) {
    auto fail = [&](const std::string& msg) {
        throw InputError("layer " + std::to_string(index) + ": " + msg + " (input " + shape_str(in) + ")");
    };
    return std::visit(
        overloaded{
            [&](const Conv2D& l) {
                if (l.in_ch <= 0 || l.out_ch <= 0 || l.kernel <= 0 || l.stride <= 0 || l.padding < 0)
                    fail("conv2d parameters must be positive");
                if (l.in_ch != in.c) fail("conv2d expects " + std::to_string(l.in_ch) + " channels");
                const int oh = (in.h + 2 * l.padding - l.kernel) / l.stride + 1;
                const int ow = (in.w + 2 * l.padding - l.kernel) / l.stride + 1;
                if (in.h + 2 * l.padding < l.kernel || in.w + 2 * l.padding < l.kernel || oh <= 0 || ow <= 0)
                    fail("conv2d kernel larger than padded input");
                return Shape3{l.out_ch, oh, ow};
            },
            [&](const Dense& l) {
                if (l.in <= 0 || l.out <= 0) fail("dense sizes must be positive");
                if (in.h != 1 || in.w != 1) fail("dense needs a flattened input");
                if (in.c != l.in) fail("dense expects " + std::to_string(l.in) + " inputs");
                return Shape3{l.out, 1, 1};
            },
            [&](const ReLU&) { return in; },
            [&](const AdaptiveAvgPool& l) {
                if (l.out_h <= 0 || l.out_w <= 0) fail("pool output must be positive");
                if (l.out_h > in.h || l.out_w > in.w) fail("pool output larger than input");
                return Shape3{in.c, l.out_h, l.out_w};
            },
            [&](const BatchNorm& l) {
                if (l.channels != in.c) fail("batchnorm expects " + std::to_string(l.channels) + " channels");
                return in;
            },
            [&](const Flatten&) { return Shape3{static_cast<int>(in.size()), 1, 1}; },
        },
        layer);
}

nlohmann::json layer_to_json(const Layer& layer) {
    using nlohmann::json;
    return std::visit(
        overloaded{
            [](const Conv2D& l) {
                return json{{"type", "conv2d"}, {"in_ch", l.in_ch},   {"out_ch", l.out_ch}, {"kernel", l.kernel},
                            {"stride", l.stride}, {"padding", l.padding}, {"bias", l.bias}};
            },
            [](const Dense& l) { return json{{"type", "dense"}, {"in", l.in}, {"out", l.out}, {"bias", l.bias}}; },
            [](const ReLU&) { return json{{"type", "relu"}}; },
            [](const AdaptiveAvgPool& l) {
                return json{{"type", "adaptive_avg_pool"}, {"out_h", l.out_h}, {"out_w", l.out_w}};
            },
            [](const BatchNorm& l) { return json{{"type", "batchnorm"}, {"channels", l.channels}}; },
            [](const Flatten&) { return json{{"type", "flatten"}}; },
        },
        layer);
}

Layer layer_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv2d") {
        Conv2D l;
        l.in_ch = j.at("in_ch");
        l.out_ch = j.at("out_ch");
        l.kernel = j.value("kernel", 3);
        l.stride = j.value("stride", 1);
        l.padding = j.value("padding", 1);
        l.bias = j.value("bias", true);
        return l;
    }
    if (type == "dense") return Dense{j.at("in"), j.at("out"), j.value("bias", true)};
    if (type == "relu") return ReLU{};
    if (type == "adaptive_avg_pool") return AdaptiveAvgPool{j.at("out_h"), j.at("out_w")};
    if (type == "batchnorm") return BatchNorm{j.at("channels")};
    if (type == "flatten") return Flatten{};
    throw InputError("unknown layer type '" + type + "'");
}

}  // namespace

std::size_t layer_param_count(const Layer& layer) {
    return std::visit(
        overloaded{
            [](const Conv2D& l) {
                return static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel + (l.bias ? l.out_ch : 0);
            },
            [](const Dense& l) { return static_cast<std::size_t>(l.out) * l.in + (l.bias ? l.out : 0); },
            [](const BatchNorm& l) { return static_cast<std::size_t>(2 * l.channels); },
            [](const auto&) { return std::size_t{0}; },
        },
        layer);
}

ModelSpec::ModelSpec(std::vector<Layer> layers, Shape3 input_shape, int num_classes)
    : layers_(std::move(layers)), input_(input_shape), num_classes_(num_classes) {
    if (input_.c <= 0 || input_.h <= 0 || input_.w <= 0) throw InputError("input shape must be positive");
    if (num_classes_ <= 0) throw InputError("num_classes must be positive");
    if (layers_.empty()) throw InputError("model has no layers");
    Shape3 cur = input_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        LayerPlan p{layers_[i], cur, infer(layers_[i], cur, i), param_count_, layer_param_count(layers_[i])};
        param_count_ += p.count;
        cur = p.out;
        plan_.push_back(std::move(p));
    }
    if (!(cur == Shape3{num_classes_, 1, 1}))
        throw InputError("network output " + shape_str(cur) + " does not match num_classes " +
                         std::to_string(num_classes_));
}

bool ModelSpec::has_batchnorm() const {
    for (const auto& l : layers_)
        if (std::holds_alternative<BatchNorm>(l)) return true;
    return false;
}

std::string ModelSpec::to_json() const {
    nlohmann::json j;
    j["input_shape"] = {input_.c, input_.h, input_.w};
    j["num_classes"] = num_classes_;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : layers_) j["layers"].push_back(layer_to_json(l));
    return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        const auto& in = j.at("input_shape");
        if (!in.is_array() || in.size() != 3) throw InputError("input_shape must be [c, h, w]");
        std::vector<Layer> layers;
        for (const auto& lj : j.at("layers")) layers.push_back(layer_from_json(lj));
        return ModelSpec(std::move(layers), Shape3{in[0], in[1], in[2]}, j.at("num_classes"));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad model spec json: ") + e.what());
    }
}

std::uint64_t ModelSpec::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : to_json()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<Vec> unpack(const ModelSpec& spec, std::span<const double> flat) {
    if (flat.size() != spec.param_count()) throw InputError("flat vector length does not match model");
    std::vector<Vec> out;
    for (const auto& p : spec.plan()) out.emplace_back(flat.begin() + p.offset, flat.begin() + p.offset + p.count);
    return out;
}

Vec pack(const ModelSpec& spec, const std::vector<Vec>& per_layer) {
    if (per_layer.size() != spec.plan().size()) throw InputError("need one parameter block per layer");
    Vec flat;
    flat.reserve(spec.param_count());
    for (std::size_t i = 0; i < per_layer.size(); ++i) {
        if (per_layer[i].size() != spec.plan()[i].count)
            throw InputError("parameter block " + std::to_string(i) + " has wrong size");
        flat.insert(flat.end(), per_layer[i].begin(), per_layer[i].end());
    }
    return flat;
}

ModelSpec make_mlp(Shape3 input, int num_classes, const MlpOptions& opts) {
    std::vector<Layer> layers{Flatten{}};
    int width = static_cast<int>(input.size());
    for (int h : opts.hidden) {
        layers.push_back(Dense{width, h});
        layers.push_back(ReLU{});
        width = h;
    }
    layers.push_back(Dense{width, num_classes});
    return ModelSpec(std::move(layers), input, num_classes);
}

ModelSpec make_conv_net(Shape3 input, int num_classes, const ConvNetOptions& opts) {
    std::vector<Layer> layers;
    int ch = input.c;
    int h = input.h, w = input.w;
    for (std::size_t i = 0; i < opts.channels.size(); ++i) {
        const int out = opts.channels[i];
        layers.push_back(Conv2D{ch, out, 3, 1, 1, true});
        if (opts.batchnorm) layers.push_back(BatchNorm{out});
        layers.push_back(ReLU{});
        ch = out;
        const bool last = i + 1 == opts.channels.size();
        if (opts.pool_every_second && i % 2 == 1 && !last && h / 2 >= opts.pooled && w / 2 >= opts.pooled) {
            h /= 2;
            w /= 2;
            layers.push_back(AdaptiveAvgPool{h, w});
        }
    }
    const int ph = std::min(opts.pooled, h), pw = std::min(opts.pooled, w);
    layers.push_back(AdaptiveAvgPool{ph, pw});
    layers.push_back(Flatten{});
    layers.push_back(Dense{ch * ph * pw, opts.hidden});
    layers.push_back(ReLU{});
    layers.push_back(Dense{opts.hidden, num_classes});
    return ModelSpec(std::move(layers), input, num_classes);
}

ModelSpec reference_net(Shape3 input, int num_classes, bool batchnorm) {
    ConvNetOptions opts;
    if (batchnorm) {
        opts.channels = {8, 8, 32, 32, 64, 64};
        opts.batchnorm = true;
        opts.pool_every_second = true;
    }
    return make_conv_net(input, num_classes, opts);
}

}  // namespace mpo::nn

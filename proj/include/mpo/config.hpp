#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mpo/datasets.hpp"
#include "mpo/landscape.hpp"
#include "mpo/model_spec.hpp"
#include "mpo/patterns.hpp"
#include "mpo/train.hpp"

namespace mpo {

struct ModelConfig {
    std::string kind = "mlp";  // mlp | conv | conv_bn | reference | reference_bn | json
    std::vector<int> hidden{32};          // mlp
    std::vector<int> channels{8, 32, 64};  // conv, conv_bn
    int pooled = 4;
    int head = 128;
    bool pool_every_second = false;
    std::string spec_path;  // json
};

struct DatasetConfig {
    std::string source = "synthetic";  // synthetic | idx | cifar10
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::vector<std::string> train_files, test_files;                  // cifar10
    std::vector<int> classes;  // keep and relabel these; empty keeps all
    int n_train = 2048;        // seeded subset sizes; 0 keeps everything
    int n_test = 1024;
    int resize = 0;            // area-downsample to resize x resize; 0 keeps
    bool grayscale = false;    // average RGB channels
    int synthetic_size = 14;
    std::uint64_t data_seed = 1234;
};

struct PatternConfig {
    std::string kind = "checkerboard_border";  // checkerboard | checkerboard_border | random | file
    int width = 16, height = 16;
    int tile = 4;
    double p = 0.5;
    std::string path;
};

struct EvalConfig {
    int max_examples = 2048;
    int upscale = 8;
    bool render = true;
};

struct BnExperimentConfig {
    std::vector<double> probs{0.1, 0.3, 0.5, 0.7, 0.9};
    int runs = 5;
    int mask_size = 30;
    std::vector<std::string> archs{"conv", "conv_bn"};
};

/// Everything a command needs. Precedence: CLI flag > TOML > these defaults.
struct RunConfig {
    int config_version = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "runs";
    ModelConfig model;
    DatasetConfig dataset;
    PatternConfig pattern;
    TrainConfig train;
    EvalConfig eval;
    BnExperimentConfig bn;

    void validate() const;
    /// Canonical JSON of every field; hash() covers all but output_dir.
    std::string to_json() const;
    /// FNV-1a of to_json(), 16 hex digits.
    std::string hash() const;
    /// output_dir / "<hash>-s<seed>"
    std::string run_dir() const;
};

/// Parse a TOML file; unknown keys are a ConfigError, as is a
/// config_version other than 1.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& toml_text, const std::string& origin = "config");

nn::ModelSpec build_model(const ModelConfig& model, Shape3 input, int num_classes);

/// Train and test splits per the dataset section; the synthetic source
/// draws both from data_seed.
std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg);

Mask build_pattern(const PatternConfig& cfg, std::uint64_t seed);

}  // namespace mpo

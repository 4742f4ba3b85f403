#pragma once

#include "ftriage/data/cifar.hpp"
#include "ftriage/data/split.hpp"
#include "ftriage/distortion/distortion.hpp"
#include "ftriage/exemplar/exemplar.hpp"
#include "ftriage/finetune/finetune.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace ftriage::experiment {

struct DatasetSection {
    std::string id = "cifar10";  // cifar10 | cifar100
    std::string path;
    std::optional<std::size_t> records_per_file;
    // seeded subsamples for desk-scale runs; unset keeps everything
    std::optional<std::size_t> max_train_pool;
    std::optional<std::size_t> max_test;
    std::uint64_t subsample_seed = 0;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 0;
    bool stratified = true;

    bool operator==(const DatasetSection&) const = default;
};

struct TrainSection {
    std::size_t max_epochs = 200;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t patience = 15;
    std::uint64_t seed = 0;
    std::optional<std::size_t> max_steps;

    zoo::TrainConfig to_train_config() const;
    static TrainSection from(const zoo::TrainConfig& c);
    bool operator==(const TrainSection&) const = default;
};

struct BaselineSection {
    // both set: reuse a trained model; both unset: train one
    std::optional<std::string> checkpoint;
    std::optional<std::string> stats;
    std::uint64_t init_seed = 0;
    TrainSection train;

    bool operator==(const BaselineSection&) const = default;
};

struct DistortionSection {
    std::string kind = "awgn";
    double sigma = 15.0;
    std::uint64_t seed = 0;

    distortion::DistortionSpec to_spec() const;
    bool operator==(const DistortionSection&) const = default;
};

struct RankingSection {
    std::string method = "assoc";  // assoc | nonassoc
    std::size_t pairs = 2000;
    std::uint64_t pair_seed = 0;
    std::string emd_metric = "marginal";
    std::string capture = "post-relu";
    // nonassoc only
    std::string features = "pixels";
    bool binarize = false;
    std::string metric = "euclidean";
    std::string feature_layer;  // ftm features; empty means the ranked layer
    std::size_t max_points = 1000;
    std::uint64_t exemplar_seed = 0;

    bool operator==(const RankingSection&) const = default;
};

struct FinetuneSection {
    TrainSection train = TrainSection::from(finetune::FinetuneConfig::default_train());
    bool freeze_classifier = true;

    bool operator==(const FinetuneSection&) const = default;
};

struct InvarianceSection {
    std::size_t images = 20;
    std::uint64_t seed = 0;

    bool operator==(const InvarianceSection&) const = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSection dataset;
    std::string architecture = "cifar10-small";
    BaselineSection baseline;
    DistortionSection distortion;
    RankingSection ranking;
    std::vector<std::string> layers;
    double fraction = 0.25;
    std::vector<std::string> modes{"most", "least", "all"};
    std::vector<std::size_t> train_sizes;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    FinetuneSection finetune;
    InvarianceSection invariance;

    /// Checks names, ranges and cross references (not the file system).
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Strict parsing: unknown keys and wrong types are ConfigErrors naming the
/// offending path. Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

ExperimentConfig parse_config(const std::string& text);
std::string dump_config(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Module-level views of the config.
finetune::CurveConfig curve_config(const ExperimentConfig& c);
exemplar::NonAssocOptions nonassoc_options(const ExperimentConfig& c, const std::string& layer);
susceptibility::DistanceOptions distance_options(const ExperimentConfig& c);

} // namespace ftriage::experiment

#pragma once

#include "ftriage/experiment/config.hpp"

#include <functional>

namespace ftriage::experiment {

/// Version string baked in at configure time (git describe).
std::string build_version();

/// Collects what a command writes and records it in manifest.json: the
/// command, version, config hash and snapshot, seeds, per-stage wall clock and
/// a SHA-256 per artifact. A failing stage leaves a FAILED marker next to
/// whatever was already written.
class RunRecorder {
public:
    RunRecorder(std::filesystem::path out_dir, std::string command);

    const std::filesystem::path& out_dir() const noexcept { return out_dir_; }

    void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
    void set_config(const ExperimentConfig& config);

    /// Writes out_dir/relative and records its hash under the current stage.
    void emit(const std::string& relative, const std::string& bytes);
    /// Records a file something else already wrote under out_dir.
    void record(const std::string& relative);

    /// Runs fn as a named stage. Errors are rethrown as the same kind with
    /// "stage NAME: " prepended, after FAILED and the manifest are written.
    void stage(const std::string& name, const std::function<void()>& fn);

    /// Writes manifest.json with status ok.
    void finish();

private:
    void write_manifest(const std::string& status, const std::string& failed_stage, const std::string& error);

    std::filesystem::path out_dir_;
    std::string command_;
    std::string current_stage_ = "setup";
    nlohmann::json stages_ = nlohmann::json::array();
    nlohmann::json artifacts_ = nlohmann::json::array();
    nlohmann::json extra_ = nlohmann::json::object();
};

struct DataBundle {
    data::Dataset train;  // clean training split
    data::Dataset val;    // clean validation split
    data::Dataset test;
};

/// Loads the CIFAR binaries named by the config, applies the optional seeded
/// subsamples and splits the training pool.
DataBundle load_data(const ExperimentConfig& config);

/// Seeded subsample of `count` images (all of them if the set is smaller),
/// kept in dataset order.
data::Dataset sample_subset(const data::Dataset& dataset, std::size_t count, std::uint64_t seed);

/// Throws InputError before any compute if a referenced file or directory is
/// missing.
void preflight(const ExperimentConfig& config);

/// Full pipeline: data, baseline (trained or loaded), distortion, ranking per
/// layer, accuracy curve, invariance heatmaps. Everything lands in out_dir.
void run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

} // namespace ftriage::experiment

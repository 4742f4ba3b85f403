#include "ftriage/experiment/run.hpp"

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/csv.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/common/hash.hpp"
#include "ftriage/common/parallel.hpp"
#include "ftriage/common/random.hpp"
#include "ftriage/nn/checkpoint.hpp"
#include "ftriage/zoo/presets.hpp"

#include <algorithm>
#include <chrono>
#include <optional>

#ifndef FTRIAGE_VERSION
#define FTRIAGE_VERSION "unknown"
#endif

namespace ftriage::experiment {

using nlohmann::json;

std::string build_version() { return FTRIAGE_VERSION; }

RunRecorder::RunRecorder(std::filesystem::path out_dir, std::string command)
    : out_dir_(std::move(out_dir)), command_(std::move(command)) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec) throw InputError("cannot create output directory " + out_dir_.string() + ": " + ec.message());
    std::filesystem::remove(out_dir_ / "FAILED", ec);
}

void RunRecorder::set_config(const ExperimentConfig& config) {
    const std::string text = dump_config(config);
    extra_["config_sha256"] = sha256_hex(text);
    extra_["config"] = config_to_json(config);
    emit("config.json", text);
}

void RunRecorder::emit(const std::string& relative, const std::string& bytes) {
    write_file_bytes(out_dir_ / relative, bytes);
    artifacts_.push_back({{"file", relative}, {"stage", current_stage_}, {"sha256", sha256_hex(bytes)}});
}

void RunRecorder::record(const std::string& relative) {
    artifacts_.push_back({{"file", relative},
                          {"stage", current_stage_},
                          {"sha256", sha256_hex(read_file_bytes(out_dir_ / relative))}});
}

void RunRecorder::stage(const std::string& name, const std::function<void()>& fn) {
    current_stage_ = name;
    const auto start = std::chrono::steady_clock::now();
    auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    try {
        fn();
    } catch (const std::exception& e) {
        stages_.push_back({{"name", name}, {"seconds", seconds()}, {"status", "failed"}});
        try {
            write_file_bytes(out_dir_ / "FAILED", "stage " + name + ": " + e.what() + "\n");
            write_manifest("failed", name, e.what());
        } catch (...) {
            // the original error matters more than a failed marker
        }
        rethrow_with_context("stage " + name + ": ");
    }
    stages_.push_back({{"name", name}, {"seconds", seconds()}, {"status", "ok"}});
    current_stage_ = "setup";
}

void RunRecorder::finish() { write_manifest("ok", "", ""); }

void RunRecorder::write_manifest(const std::string& status, const std::string& failed_stage,
                                 const std::string& error) {
    json m = extra_;
    m["command"] = command_;
    m["version"] = build_version();
    m["threads"] = thread_count();
    m["status"] = status;
    if (!failed_stage.empty()) {
        m["failed_stage"] = failed_stage;
        m["error"] = error;
    }
    m["stages"] = stages_;
    m["artifacts"] = artifacts_;
    write_file_bytes(out_dir_ / "manifest.json", m.dump(2) + "\n");
}

data::Dataset sample_subset(const data::Dataset& dataset, std::size_t count, std::uint64_t seed) {
    if (count >= dataset.size()) return dataset;
    Rng rng(seed);
    auto idx = sample_indices(dataset.size(), count, rng);
    std::sort(idx.begin(), idx.end());
    return dataset.subset(idx);
}

DataBundle load_data(const ExperimentConfig& config) {
    const auto variant = data::cifar_variant_from_string(config.dataset.id);
    data::CifarLoadOptions opts;
    opts.records_per_file = config.dataset.records_per_file;
    auto pool = data::load_cifar(config.dataset.path, variant, data::SplitTag::train, opts);
    auto test = data::load_cifar(config.dataset.path, variant, data::SplitTag::test, opts);
    if (config.dataset.max_train_pool) {
        pool = sample_subset(pool, *config.dataset.max_train_pool, mix_seed(config.dataset.subsample_seed, 0));
    }
    if (config.dataset.max_test) {
        test = sample_subset(test, *config.dataset.max_test, mix_seed(config.dataset.subsample_seed, 1));
    }
    const data::SplitSpec spec{config.dataset.split_ratio, config.dataset.split_seed, config.dataset.stratified};
    auto [train, val] = data::split(pool, spec);
    return {std::move(train), std::move(val), std::move(test)};
}

void preflight(const ExperimentConfig& config) {
    config.validate();
    namespace fs = std::filesystem;
    if (!fs::is_directory(config.dataset.path)) {
        throw InputError("dataset directory " + config.dataset.path + " does not exist");
    }
    if (config.baseline.checkpoint && !fs::is_regular_file(*config.baseline.checkpoint)) {
        throw InputError("baseline checkpoint " + *config.baseline.checkpoint + " does not exist");
    }
    if (config.baseline.stats && !fs::is_regular_file(*config.baseline.stats)) {
        throw InputError("normalization stats " + *config.baseline.stats + " does not exist");
    }
}

namespace {

json seeds_json(const ExperimentConfig& c) {
    return {{"subsample", c.dataset.subsample_seed},   {"split", c.dataset.split_seed},
            {"init", c.baseline.init_seed},            {"baseline_train", c.baseline.train.seed},
            {"distortion", c.distortion.seed},         {"pairs", c.ranking.pair_seed},
            {"exemplar", c.ranking.exemplar_seed},     {"curve", c.seeds},
            {"invariance", c.invariance.seed}};
}

std::string eval_csv(const std::vector<std::tuple<std::string, std::string, zoo::EvalResult>>& rows) {
    CsvWriter csv({"model", "set", "accuracy", "loss", "correct", "total"});
    for (const auto& [model, set, r] : rows) {
        csv.field(model).field(set).field(r.accuracy).field(r.loss);
        csv.field(static_cast<std::uint64_t>(r.correct)).field(static_cast<std::uint64_t>(r.total));
        csv.end_row();
    }
    return csv.str();
}

} // namespace

void run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    preflight(config);
    RunRecorder rec(out_dir, "run");
    rec.set_config(config);
    rec.set("seeds", seeds_json(config));
    const auto spec = config.distortion.to_spec();
    rec.set("distortion", spec);
    // the whole test set is distorted for the noisy evaluations
    rec.set("test_distortion", "all test images");

    DataBundle d;
    data::NormalizationStats stats;
    nn::Network base;
    data::Dataset noisy_train, noisy_test;
    std::map<std::string, susceptibility::FilterRanking> rankings;
    std::optional<nn::Network> tuned_most;
    const auto curve = curve_config(config);

    rec.stage("load-data", [&] {
        d = load_data(config);
        rec.set("data", {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}});
    });

    rec.stage("baseline", [&] {
        if (config.baseline.checkpoint) {
            base = nn::load_checkpoint_file<float>(*config.baseline.checkpoint);
            stats = data::load_stats(*config.baseline.stats);
            if (base.architecture().name != config.architecture) {
                throw ConfigError("checkpoint holds '" + base.architecture().name + "', config asks for '" +
                                  config.architecture + "'");
            }
            if (base.architecture().num_classes != d.train.class_count) {
                throw ConfigError("checkpoint has " + std::to_string(base.architecture().num_classes) +
                                  " classes, dataset has " + std::to_string(d.train.class_count));
            }
            return;
        }
        stats = data::compute_stats(d.train);
        base = zoo::build_model(zoo::preset_architecture(config.architecture, d.train.class_count),
                                config.baseline.init_seed);
        const auto history = zoo::train(base, d.train, d.val, stats, config.baseline.train.to_train_config());
        rec.emit("baseline.ckpt", nn::save_checkpoint(base));
        rec.emit("stats.json", json(stats).dump(2) + "\n");
        rec.emit("baseline_history.csv", zoo::history_csv(history));
    });

    rec.stage("distort", [&] {
        noisy_train = distortion::distort_dataset(d.train, spec);
        noisy_test = distortion::distort_dataset(d.test, spec);
    });

    rec.stage("evaluate-baseline", [&] {
        rec.emit("baseline_eval.csv", eval_csv({{"baseline", "clean_test", zoo::evaluate(base, d.test, stats)},
                                                {"baseline", "noisy_test", zoo::evaluate(base, noisy_test, stats)}}));
    });

    rec.stage("rank", [&] {
        const std::size_t n = std::min(config.ranking.pairs, d.train.size());
        Rng rng(config.ranking.pair_seed);
        auto idx = sample_indices(d.train.size(), n, rng);
        for (const auto& layer : config.layers) {
            if (config.ranking.method == "assoc") {
                std::vector<std::size_t> sorted = idx;
                std::sort(sorted.begin(), sorted.end());
                const auto dm = susceptibility::compute_distance_matrix(base, d.train.subset(sorted),
                                                                        noisy_train.subset(sorted), stats, layer,
                                                                        distance_options(config));
                rankings[layer] = susceptibility::borda_rank(dm);
                rec.emit("distances_" + layer + ".csv", susceptibility::distance_matrix_csv(dm));
            } else {
                // independent clean and noisy collections: disjoint halves of the sample
                if (n < 2) throw InputError("non-associative ranking needs at least two sampled images");
                std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n / 2));
                std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n / 2), idx.end());
                std::sort(a.begin(), a.end());
                std::sort(b.begin(), b.end());
                const auto opts = nonassoc_options(config, layer);
                const auto r = exemplar::nonassoc_rank(base, d.train.subset(a), noisy_train.subset(b), stats, layer,
                                                       opts);
                rankings[layer] = r.ranking;
                rec.emit("exemplars_" + layer + ".json", exemplar::exemplar_report_json(r, opts));
            }
            rec.emit("ranking_" + layer + ".csv", susceptibility::ranking_csv(rankings[layer]));
        }
    });

    rec.stage("finetune-curve", [&] {
        const std::size_t largest = curve.train_sizes.back();
        const std::uint64_t first_seed = curve.seeds.front();
        const auto rows = finetune::accuracy_curve(
            base, rankings, curve, noisy_train, noisy_test, d.test, stats,
            [&](const finetune::CurveRow& row, const nn::Network& net) {
                if (row.mode == finetune::SelectionMode::most && row.train_size == largest && row.seed == first_seed) {
                    tuned_most = net;
                }
            });
        rec.emit("curve.csv", finetune::curve_csv(rows));
        rec.emit("curve_summary.csv", finetune::curve_summary_csv(rows));
        if (tuned_most) rec.emit("finetuned_most.ckpt", nn::save_checkpoint(*tuned_most));
    });

    rec.stage("invariance", [&] {
        if (config.invariance.images == 0) return;
        if (!tuned_most) {
            rec.set("invariance_skipped", "mode most is not part of the curve");
            return;
        }
        Rng rng(config.invariance.seed);
        auto picks = sample_indices(d.test.size(), std::min(config.invariance.images, d.test.size()), rng);
        std::sort(picks.begin(), picks.end());
        CsvWriter summary({"image_id", "layer", "baseline_total", "finetuned_total"});
        for (const auto& layer : config.layers) {
            for (const std::size_t i : picks) {
                const auto hb = finetune::invariance_heatmap(base, d.test, i, noisy_test, i, stats, layer);
                const auto hf = finetune::invariance_heatmap(*tuned_most, d.test, i, noisy_test, i, stats, layer);
                const std::string stem = layer + "_" + std::to_string(d.test.ids[i]);
                rec.emit("heatmaps/baseline_" + stem + ".csv", finetune::heatmap_csv(hb));
                rec.emit("heatmaps/finetuned_" + stem + ".csv", finetune::heatmap_csv(hf));
                summary.field(d.test.ids[i]).field(layer).field(hb.total).field(hf.total);
                summary.end_row();
            }
        }
        rec.emit("invariance.csv", summary.str());
    });

    rec.finish();
}

} // namespace ftriage::experiment

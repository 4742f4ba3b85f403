// filter-triage: command line front end for the library.

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/csv.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/common/hash.hpp"
#include "ftriage/common/parallel.hpp"
#include "ftriage/common/random.hpp"
#include "ftriage/experiment/run.hpp"
#include "ftriage/nn/checkpoint.hpp"
#include "ftriage/zoo/presets.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace ftriage;
using experiment::ExperimentConfig;
using experiment::RunRecorder;
using nlohmann::json;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::size_t threads = 0;
};

// Dataset flags shared by every data-consuming subcommand; each overrides
// the matching config field when given.
struct DataFlags {
    std::optional<std::string> path;
    std::optional<std::string> id;
    std::optional<std::size_t> records_per_file;
    std::optional<std::size_t> max_train_pool;
    std::optional<std::size_t> max_test;

    void add(CLI::App* app) {
        app->add_option("--data", path, "directory holding the CIFAR binaries");
        app->add_option("--dataset", id, "cifar10 or cifar100");
        app->add_option("--records-per-file", records_per_file, "records per batch file (fixtures)");
        app->add_option("--max-train-pool", max_train_pool, "seeded subsample of the 50000-image pool");
        app->add_option("--max-test", max_test, "seeded subsample of the test set");
    }
    void apply(ExperimentConfig& c) const {
        if (path) c.dataset.path = *path;
        if (id) c.dataset.id = *id;
        if (records_per_file) c.dataset.records_per_file = records_per_file;
        if (max_train_pool) c.dataset.max_train_pool = max_train_pool;
        if (max_test) c.dataset.max_test = max_test;
    }
};

struct DistortionFlags {
    std::optional<std::string> kind;
    std::optional<double> sigma;

    void add(CLI::App* app) {
        app->add_option("--kind", kind, "identity, awgn or blur");
        app->add_option("--sigma", sigma, "noise std (0-255 units) or blur sigma (pixels)");
    }
    void apply(ExperimentConfig& c) const {
        if (kind) c.distortion.kind = *kind;
        if (sigma) c.distortion.sigma = *sigma;
    }
};

struct ModelFlags {
    std::string checkpoint;
    std::string stats;

    void add(CLI::App* app) {
        app->add_option("--checkpoint", checkpoint, "baseline checkpoint")->required();
        app->add_option("--stats", stats, "normalization stats saved with the checkpoint")->required();
    }
    std::pair<nn::Network, data::NormalizationStats> load() const {
        if (!fs::is_regular_file(checkpoint)) throw InputError("checkpoint " + checkpoint + " does not exist");
        if (!fs::is_regular_file(stats)) throw InputError("stats file " + stats + " does not exist");
        return {nn::load_checkpoint_file<float>(checkpoint), data::load_stats(stats)};
    }
};

ExperimentConfig base_config(const Globals& g) {
    ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : experiment::load_config(g.config);
    if (g.seed) {
        // one seed for every single-valued stream; the curve seed list stays
        const std::uint64_t s = *g.seed;
        c.dataset.subsample_seed = s;
        c.dataset.split_seed = s;
        c.baseline.init_seed = s;
        c.baseline.train.seed = s;
        c.distortion.seed = s;
        c.ranking.pair_seed = s;
        c.ranking.exemplar_seed = s;
        c.invariance.seed = s;
    }
    return c;
}

void require_data(const ExperimentConfig& c) {
    if (c.dataset.path.empty()) throw UsageError("no dataset: pass --data or a config with dataset.path");
    if (!fs::is_directory(c.dataset.path)) throw InputError("dataset directory " + c.dataset.path + " does not exist");
    data::cifar_variant_from_string(c.dataset.id);
}

// "conv1=path/to/ranking.csv"
std::map<std::string, susceptibility::FilterRanking> read_rankings(const std::vector<std::string>& specs) {
    std::map<std::string, susceptibility::FilterRanking> out;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
            throw UsageError("--ranking expects LAYER=FILE, got '" + s + "'");
        }
        const std::string layer = s.substr(0, eq);
        out[layer] = susceptibility::read_ranking_csv(s.substr(eq + 1), layer);
    }
    if (out.empty()) throw UsageError("at least one --ranking LAYER=FILE is required");
    return out;
}

void check_model_matches(const nn::Network& net, const data::Dataset& d) {
    if (net.architecture().num_classes != d.class_count) {
        throw ConfigError("model has " + std::to_string(net.architecture().num_classes) + " classes, dataset has " +
                          std::to_string(d.class_count));
    }
}

std::string eval_row_csv(const std::vector<std::pair<std::string, zoo::EvalResult>>& rows) {
    CsvWriter csv({"set", "accuracy", "loss", "correct", "total"});
    for (const auto& [set, r] : rows) {
        csv.field(set).field(r.accuracy).field(r.loss);
        csv.field(static_cast<std::uint64_t>(r.correct)).field(static_cast<std::uint64_t>(r.total));
        csv.end_row();
    }
    return csv.str();
}

// ---- subcommands ---------------------------------------------------------

struct TrainBaselineCmd {
    DataFlags data;
    std::optional<std::string> arch;
    std::optional<std::size_t> max_epochs, batch_size, patience, max_steps;
    std::optional<double> lr;

    void add(CLI::App* app) {
        data.add(app);
        app->add_option("--arch", arch, "cifar10-small or allconv-bn");
        app->add_option("--max-epochs", max_epochs);
        app->add_option("--batch-size", batch_size);
        app->add_option("--patience", patience);
        app->add_option("--max-steps", max_steps, "hard cap on optimizer steps");
        app->add_option("--lr", lr, "Adam learning rate");
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        data.apply(c);
        if (arch) c.architecture = *arch;
        if (max_epochs) c.baseline.train.max_epochs = *max_epochs;
        if (batch_size) c.baseline.train.batch_size = *batch_size;
        if (patience) c.baseline.train.patience = *patience;
        if (max_steps) c.baseline.train.max_steps = max_steps;
        if (lr) c.baseline.train.learning_rate = *lr;
        require_data(c);
        zoo::preset_architecture(c.architecture, data::cifar_class_count(data::cifar_variant_from_string(c.dataset.id)));
        c.baseline.train.to_train_config().validate();

        RunRecorder rec(g.out_dir, "train-baseline");
        rec.set_config(c);
        experiment::DataBundle d;
        data::NormalizationStats stats;
        nn::Network net;
        rec.stage("load-data", [&] { d = experiment::load_data(c); });
        rec.stage("train", [&] {
            stats = data::compute_stats(d.train);
            net = zoo::build_model(zoo::preset_architecture(c.architecture, d.train.class_count), c.baseline.init_seed);
            const auto history = zoo::train(net, d.train, d.val, stats, c.baseline.train.to_train_config());
            rec.emit("baseline.ckpt", nn::save_checkpoint(net));
            rec.emit("stats.json", json(stats).dump(2) + "\n");
            rec.emit("baseline_history.csv", zoo::history_csv(history));
        });
        rec.stage("evaluate", [&] {
            const auto r = zoo::evaluate(net, d.test, stats);
            rec.emit("baseline_eval.csv", eval_row_csv({{"clean_test", r}}));
            std::printf("clean test accuracy %.4f (%zu/%zu)\n", r.accuracy, r.correct, r.total);
        });
        rec.finish();
    }
};

struct DistortCmd {
    DataFlags data;
    DistortionFlags dist;
    std::optional<std::string> input;
    std::string split = "test";

    void add(CLI::App* app) {
        data.add(app);
        dist.add(app);
        app->add_option("--input", input, "dataset file (.ftds) to distort instead of the CIFAR binaries");
        app->add_option("--split", split, "train, val or test when reading the CIFAR binaries")
            ->check(CLI::IsMember({"train", "val", "test"}));
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        data.apply(c);
        dist.apply(c);
        const auto spec = c.distortion.to_spec();
        spec.validate();
        if (!input) require_data(c);

        RunRecorder rec(g.out_dir, "distort");
        rec.set_config(c);
        rec.set("distortion", spec);
        data::Dataset clean;
        rec.stage("load-data", [&] {
            if (input) {
                clean = data::load_dataset(*input);
                return;
            }
            auto d = experiment::load_data(c);
            clean = split == "train" ? std::move(d.train) : split == "val" ? std::move(d.val) : std::move(d.test);
        });
        rec.stage("distort", [&] {
            const auto out = distortion::distort_dataset(clean, spec);
            const std::string name = (input ? fs::path(*input).stem().string() : split) + "_" + spec.label() + ".ftds";
            data::save_dataset(out, rec.out_dir() / name);
            rec.record(name);
        });
        rec.finish();
    }
};

struct RankAssocCmd {
    DataFlags data;
    DistortionFlags dist;
    ModelFlags model;
    std::vector<std::string> layers;
    std::optional<std::string> metric, capture;
    std::optional<std::size_t> pairs;

    void add(CLI::App* app) {
        data.add(app);
        dist.add(app);
        model.add(app);
        app->add_option("--layer", layers, "conv layer to rank (repeatable)");
        app->add_option("--metric", metric, "marginal or exact");
        app->add_option("--capture", capture, "post-relu or pre-relu");
        app->add_option("--pairs", pairs, "number of seeded (clean, distorted) training pairs");
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        data.apply(c);
        dist.apply(c);
        if (!layers.empty()) c.layers = layers;
        if (metric) c.ranking.emd_metric = *metric;
        if (capture) c.ranking.capture = *capture;
        if (pairs) c.ranking.pairs = *pairs;
        if (c.layers.empty()) throw UsageError("no layer to rank: pass --layer");
        if (c.ranking.pairs == 0) throw ConfigError("--pairs must be positive");
        const auto spec = c.distortion.to_spec();
        spec.validate();
        const auto options = experiment::distance_options(c);
        require_data(c);
        auto [net, stats] = model.load();

        RunRecorder rec(g.out_dir, "rank-assoc");
        rec.set_config(c);
        rec.set("distortion", spec);
        rec.set("checkpoint", {{"path", model.checkpoint}, {"sha256", sha256_hex(read_file_bytes(model.checkpoint))}});
        data::Dataset clean, noisy;
        rec.stage("load-data", [&] {
            auto d = experiment::load_data(c);
            check_model_matches(net, d.train);
            clean = experiment::sample_subset(d.train, c.ranking.pairs, c.ranking.pair_seed);
            noisy = distortion::distort_dataset(clean, spec);
        });
        rec.stage("rank", [&] {
            for (const auto& layer : c.layers) {
                const auto dm = susceptibility::compute_distance_matrix(net, clean, noisy, stats, layer, options);
                const auto r = susceptibility::borda_rank(dm);
                rec.emit("distances_" + layer + ".csv", susceptibility::distance_matrix_csv(dm));
                rec.emit("ranking_" + layer + ".csv", susceptibility::ranking_csv(r));
                std::printf("%s: top filters", layer.c_str());
                for (std::size_t i = 0; i < std::min<std::size_t>(8, r.filters()); ++i) std::printf(" %zu", r.order[i]);
                std::printf("\n");
            }
        });
        rec.finish();
    }
};

struct RankNonAssocCmd {
    DataFlags data;
    DistortionFlags dist;
    ModelFlags model;
    std::vector<std::string> layers;
    std::optional<std::string> features, metric, emd_metric, feature_layer;
    std::optional<std::size_t> max_points, pairs;
    bool binarize = false;
    std::optional<std::string> clean_file, noisy_file;

    void add(CLI::App* app) {
        data.add(app);
        dist.add(app);
        model.add(app);
        app->add_option("--layer", layers, "conv layer to rank (repeatable)");
        app->add_option("--features", features, "pixels or ftm");
        app->add_option("--metric", metric, "euclidean or hamming");
        app->add_flag("--binarize", binarize, "binarize ftm features (value > 0)");
        app->add_option("--feature-layer", feature_layer, "layer whose maps form ftm features");
        app->add_option("--emd-metric", emd_metric, "marginal or exact");
        app->add_option("--max-points", max_points, "seeded subsample threshold for the medoid");
        app->add_option("--pairs", pairs, "training images sampled; split into clean and noisy halves");
        app->add_option("--clean", clean_file, "clean dataset file (.ftds)");
        app->add_option("--noisy", noisy_file, "noisy dataset file (.ftds)");
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        data.apply(c);
        dist.apply(c);
        if (!layers.empty()) c.layers = layers;
        if (features) c.ranking.features = *features;
        if (metric) c.ranking.metric = *metric;
        if (binarize) c.ranking.binarize = true;
        if (feature_layer) c.ranking.feature_layer = *feature_layer;
        if (emd_metric) c.ranking.emd_metric = *emd_metric;
        if (max_points) c.ranking.max_points = *max_points;
        if (pairs) c.ranking.pairs = *pairs;
        c.ranking.method = "nonassoc";
        if (c.layers.empty()) throw UsageError("no layer to rank: pass --layer");
        if (clean_file.has_value() != noisy_file.has_value()) throw UsageError("--clean and --noisy go together");
        for (const auto& layer : c.layers) {
            const auto o = experiment::nonassoc_options(c, layer);
            exemplar::check_metric(o.exemplar.rep, o.exemplar.metric);
        }
        const auto spec = c.distortion.to_spec();
        spec.validate();
        if (!clean_file) require_data(c);
        auto [net, stats] = model.load();

        RunRecorder rec(g.out_dir, "rank-nonassoc");
        rec.set_config(c);
        rec.set("exemplar_subsample_threshold", c.ranking.max_points);
        data::Dataset clean, noisy;
        rec.stage("load-data", [&] {
            if (clean_file) {
                clean = data::load_dataset(*clean_file);
                noisy = data::load_dataset(*noisy_file);
                return;
            }
            rec.set("distortion", spec);
            auto d = experiment::load_data(c);
            const std::size_t n = std::min(c.ranking.pairs, d.train.size());
            if (n < 2) throw InputError("non-associative ranking needs at least two sampled images");
            Rng rng(c.ranking.pair_seed);
            const auto idx = sample_indices(d.train.size(), n, rng);
            std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n / 2));
            std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n / 2), idx.end());
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            clean = d.train.subset(a);
            noisy = distortion::distort_dataset(d.train.subset(b), spec);
        });
        check_model_matches(net, clean);
        rec.stage("rank", [&] {
            for (const auto& layer : c.layers) {
                const auto opts = experiment::nonassoc_options(c, layer);
                const auto r = exemplar::nonassoc_rank(net, clean, noisy, stats, layer, opts);
                rec.emit("ranking_" + layer + ".csv", susceptibility::ranking_csv(r.ranking));
                rec.emit("exemplars_" + layer + ".json", exemplar::exemplar_report_json(r, opts));
                std::printf("%s: exemplars clean id %llu, noisy id %llu\n", layer.c_str(),
                            static_cast<unsigned long long>(r.clean.image_id),
                            static_cast<unsigned long long>(r.noisy.image_id));
            }
        });
        rec.finish();
    }
};

// Shared by finetune and curve: model, rankings and the distorted data.
struct TuneInputs {
    nn::Network net;
    data::NormalizationStats stats;
    std::map<std::string, susceptibility::FilterRanking> rankings;
    experiment::DataBundle data;
    data::Dataset noisy_pool, noisy_test;
};

struct TuneFlags {
    DataFlags data;
    DistortionFlags dist;
    ModelFlags model;
    std::vector<std::string> rankings;
    std::optional<double> fraction, lr;
    std::optional<std::size_t> max_epochs, patience, batch_size, max_steps;
    bool train_classifier = false;

    void add(CLI::App* app) {
        data.add(app);
        dist.add(app);
        model.add(app);
        app->add_option("--ranking", rankings, "LAYER=FILE ranking CSV (repeatable)")->required();
        app->add_option("--fraction", fraction, "fraction of filters per layer for most/least");
        app->add_option("--lr", lr, "fine-tuning learning rate");
        app->add_option("--max-epochs", max_epochs);
        app->add_option("--patience", patience);
        app->add_option("--batch-size", batch_size);
        app->add_option("--max-steps", max_steps);
        app->add_flag("--train-classifier", train_classifier, "leave the classifier trainable");
    }

    void apply(ExperimentConfig& c) const {
        data.apply(c);
        dist.apply(c);
        if (fraction) c.fraction = *fraction;
        if (lr) c.finetune.train.learning_rate = *lr;
        if (max_epochs) c.finetune.train.max_epochs = *max_epochs;
        if (patience) c.finetune.train.patience = *patience;
        if (batch_size) c.finetune.train.batch_size = *batch_size;
        if (max_steps) c.finetune.train.max_steps = max_steps;
        if (train_classifier) c.finetune.freeze_classifier = false;
    }

    TuneInputs load(RunRecorder& rec, ExperimentConfig& c) const {
        TuneInputs in;
        std::tie(in.net, in.stats) = model.load();
        in.rankings = read_rankings(rankings);
        c.layers.clear();
        for (const auto& [layer, r] : in.rankings) c.layers.push_back(layer);
        require_data(c);
        const auto spec = c.distortion.to_spec();
        spec.validate();
        rec.set_config(c);
        rec.set("distortion", spec);
        rec.set("test_distortion", "all test images");
        rec.stage("load-data", [&] {
            in.data = experiment::load_data(c);
            check_model_matches(in.net, in.data.train);
            in.noisy_pool = distortion::distort_dataset(in.data.train, spec);
            in.noisy_test = distortion::distort_dataset(in.data.test, spec);
        });
        return in;
    }
};

struct FinetuneCmd {
    TuneFlags tune;
    std::string mode = "most";
    std::size_t train_size = 0;
    std::uint64_t sample_seed = 1;

    void add(CLI::App* app) {
        tune.add(app);
        app->add_option("--mode", mode, "most, least or all")->check(CLI::IsMember({"most", "least", "all"}));
        app->add_option("--train-size", train_size, "distorted images used for gradient steps")->required();
        app->add_option("--sample-seed", sample_seed, "seed of the training sample and of fine-tuning");
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        tune.apply(c);
        c.modes = {mode};
        c.train_sizes = {train_size};
        c.seeds = {sample_seed};
        if (train_size == 0) throw ConfigError("--train-size must be positive");
        RunRecorder rec(g.out_dir, "finetune");
        auto in = tune.load(rec, c);
        const auto cc = experiment::curve_config(c);
        cc.validate();
        rec.stage("finetune", [&] {
            std::vector<finetune::FilterSelection> sel;
            for (const auto& layer : c.layers) {
                sel.push_back(susceptibility::select_filters(in.rankings.at(layer), cc.modes.front(), c.fraction));
            }
            const auto masks = finetune::build_masks(in.net, sel, cc.finetune.freeze_classifier);
            const auto [train_set, val_set] = finetune::draw_sample(in.noisy_pool, train_size, sample_seed);
            auto fc = cc.finetune;
            fc.train.seed = mix_seed(sample_seed, train_size);
            const auto r = finetune::finetune(in.net, masks, train_set, val_set, in.stats, fc);
            rec.emit("finetuned.ckpt", nn::save_checkpoint(r.network));
            rec.emit("finetune_history.csv", zoo::history_csv(r.history));
            const auto noisy = zoo::evaluate(r.network, in.noisy_test, in.stats);
            const auto clean = zoo::evaluate(r.network, in.data.test, in.stats);
            rec.emit("finetune_eval.csv", eval_row_csv({{"noisy_test", noisy}, {"clean_test", clean}}));
            rec.set("trainable_params", r.trainable_params);
            std::printf("trainable params %zu, noisy test %.4f, clean test %.4f\n", r.trainable_params,
                        noisy.accuracy, clean.accuracy);
        });
        rec.finish();
    }
};

struct CurveCmd {
    TuneFlags tune;
    std::vector<std::string> modes;
    std::vector<std::size_t> train_sizes;
    std::vector<std::uint64_t> seeds;

    void add(CLI::App* app) {
        tune.add(app);
        app->add_option("--modes", modes, "subset of most least all")->delimiter(',');
        app->add_option("--train-sizes", train_sizes, "strictly increasing sizes")->delimiter(',');
        app->add_option("--seeds", seeds, "sample seeds, median taken over them")->delimiter(',');
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        tune.apply(c);
        if (!modes.empty()) c.modes = modes;
        if (!train_sizes.empty()) c.train_sizes = train_sizes;
        if (!seeds.empty()) c.seeds = seeds;
        RunRecorder rec(g.out_dir, "curve");
        auto in = tune.load(rec, c);
        const auto cc = experiment::curve_config(c);
        rec.stage("finetune-curve", [&] {
            const auto rows =
                finetune::accuracy_curve(in.net, in.rankings, cc, in.noisy_pool, in.noisy_test, in.data.test, in.stats);
            rec.emit("curve.csv", finetune::curve_csv(rows));
            rec.emit("curve_summary.csv", finetune::curve_summary_csv(rows));
        });
        rec.finish();
    }
};

struct InvarianceCmd {
    DataFlags data;
    DistortionFlags dist;
    ModelFlags model;
    std::optional<std::string> finetuned;
    std::vector<std::string> layers;
    std::optional<std::size_t> images;

    void add(CLI::App* app) {
        data.add(app);
        dist.add(app);
        model.add(app);
        app->add_option("--finetuned", finetuned, "second checkpoint to compare against the baseline");
        app->add_option("--layer", layers, "conv layer (repeatable)")->required();
        app->add_option("--images", images, "seeded sample of test images");
    }

    void run(const Globals& g) {
        auto c = base_config(g);
        data.apply(c);
        dist.apply(c);
        c.layers = layers;
        if (images) c.invariance.images = *images;
        const auto spec = c.distortion.to_spec();
        spec.validate();
        require_data(c);
        auto [net, stats] = model.load();
        std::optional<nn::Network> other;
        if (finetuned) {
            if (!fs::is_regular_file(*finetuned)) throw InputError("checkpoint " + *finetuned + " does not exist");
            other = nn::load_checkpoint_file<float>(*finetuned);
        }
        for (const auto& layer : layers) {
            susceptibility::capture_index(net, layer, susceptibility::Capture::post_relu);
        }

        RunRecorder rec(g.out_dir, "invariance");
        rec.set_config(c);
        rec.set("distortion", spec);
        data::Dataset clean, noisy;
        rec.stage("load-data", [&] {
            auto d = experiment::load_data(c);
            check_model_matches(net, d.test);
            clean = experiment::sample_subset(d.test, c.invariance.images, c.invariance.seed);
            noisy = distortion::distort_dataset(clean, spec);
        });
        rec.stage("heatmaps", [&] {
            std::vector<std::string> header{"image_id", "layer", "baseline_total"};
            if (other) header.push_back("finetuned_total");
            CsvWriter summary(header);
            for (const auto& layer : layers) {
                for (std::size_t i = 0; i < clean.size(); ++i) {
                    const std::string stem = layer + "_" + std::to_string(clean.ids[i]);
                    const auto hb = finetune::invariance_heatmap(net, clean, i, noisy, i, stats, layer);
                    rec.emit("heatmaps/baseline_" + stem + ".csv", finetune::heatmap_csv(hb));
                    summary.field(clean.ids[i]).field(layer).field(hb.total);
                    if (other) {
                        const auto hf = finetune::invariance_heatmap(*other, clean, i, noisy, i, stats, layer);
                        rec.emit("heatmaps/finetuned_" + stem + ".csv", finetune::heatmap_csv(hf));
                        summary.field(hf.total);
                    }
                    summary.end_row();
                }
            }
            rec.emit("invariance.csv", summary.str());
        });
        rec.finish();
    }
};

struct CompareCmd {
    std::string a, b, layer = "layer";
    std::optional<std::size_t> k;
    std::optional<double> fraction;

    void add(CLI::App* app) {
        app->add_option("a", a, "first ranking CSV")->required();
        app->add_option("b", b, "second ranking CSV")->required();
        app->add_option("--k", k, "top-k size (default from --fraction)");
        app->add_option("--fraction", fraction, "top fraction when --k is absent (default 0.25)");
    }

    void run(const Globals& g) {
        const auto ra = susceptibility::read_ranking_csv(a, layer);
        const auto rb = susceptibility::read_ranking_csv(b, layer);
        const std::size_t f = ra.filters();
        const std::size_t top = k ? *k : susceptibility::selection_count(f, fraction.value_or(0.25));
        const std::size_t overlap = exemplar::ranking_overlap(ra, rb, top);
        const double chance = static_cast<double>(top) * static_cast<double>(top) / static_cast<double>(f);

        RunRecorder rec(g.out_dir, "compare-rankings");
        rec.set("inputs", {{"a", a}, {"b", b}});
        rec.stage("compare", [&] {
            CsvWriter csv({"filters", "k", "overlap", "chance_mean"});
            csv.field(static_cast<std::uint64_t>(f)).field(static_cast<std::uint64_t>(top));
            csv.field(static_cast<std::uint64_t>(overlap)).field(chance);
            csv.end_row();
            rec.emit("comparison.csv", csv.str());
        });
        rec.finish();
        std::printf("top-%zu overlap %zu/%zu (chance mean %.3f)\n", top, overlap, top, chance);
    }
};

int exit_code(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) return 2;
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const FormatError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const CapabilityError*>(&e)) return 5;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rank CNN filters by distortion susceptibility and fine-tune the worst ones"};
    app.name("filter-triage");
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "override every single-valued seed in the config");
    app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");

    TrainBaselineCmd train_baseline;
    DistortCmd distort;
    RankAssocCmd rank_assoc;
    RankNonAssocCmd rank_nonassoc;
    FinetuneCmd finetune_cmd;
    CurveCmd curve;
    InvarianceCmd invariance;
    CompareCmd compare;

    auto* s_train = app.add_subcommand("train-baseline", "train a baseline model on clean data");
    auto* s_distort = app.add_subcommand("distort", "write a distorted copy of a dataset");
    auto* s_assoc = app.add_subcommand("rank-assoc", "rank filters from aligned clean/distorted pairs");
    auto* s_nonassoc = app.add_subcommand("rank-nonassoc", "rank filters from one exemplar per set");
    auto* s_finetune = app.add_subcommand("finetune", "fine-tune selected filters once");
    auto* s_curve = app.add_subcommand("curve", "accuracy versus training-set size for most/least/all");
    auto* s_invariance = app.add_subcommand("invariance", "binarized Hamming disparity heatmaps");
    auto* s_compare = app.add_subcommand("compare-rankings", "top-k overlap of two ranking CSVs");
    auto* s_run = app.add_subcommand("run", "run a full experiment from --config");
    train_baseline.add(s_train);
    distort.add(s_distort);
    rank_assoc.add(s_assoc);
    rank_nonassoc.add(s_nonassoc);
    finetune_cmd.add(s_finetune);
    curve.add(s_curve);
    invariance.add(s_invariance);
    compare.add(s_compare);

    CLI11_PARSE(app, argc, argv);

    try {
        set_thread_count(g.threads);
        if (s_train->parsed()) train_baseline.run(g);
        if (s_distort->parsed()) distort.run(g);
        if (s_assoc->parsed()) rank_assoc.run(g);
        if (s_nonassoc->parsed()) rank_nonassoc.run(g);
        if (s_finetune->parsed()) finetune_cmd.run(g);
        if (s_curve->parsed()) curve.run(g);
        if (s_invariance->parsed()) invariance.run(g);
        if (s_compare->parsed()) compare.run(g);
        if (s_run->parsed()) {
            if (g.config.empty()) throw UsageError("run needs --config");
            experiment::run_experiment(base_config(g), g.out_dir);
            std::printf("run complete: %s\n", (fs::path(g.out_dir) / "manifest.json").c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "filter-triage: %s: %s\n", e.category(), e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "filter-triage: %s\n", e.what());
        return 1;
    }
    return 0;
}

// Acceptance checks that need no external data: gradients, EMD, Borda,
// freeze soundness and run determinism.

#include "fixtures.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/lp_simplex.hpp"
#include "report.hpp"

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/hash.hpp"
#include "ftriage/distortion/distortion.hpp"
#include "ftriage/experiment/config.hpp"
#include "ftriage/experiment/run.hpp"
#include "ftriage/finetune/finetune.hpp"
#include "ftriage/susceptibility/emd.hpp"
#include "ftriage/susceptibility/ranking.hpp"
#include "ftriage/zoo/presets.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>

using namespace ftriage;
using namespace ftriage::acceptance;
namespace fs = std::filesystem;

namespace {

constexpr int kTrials = 20;
constexpr double kGradTol = 1e-4;

// ---------------------------------------------------------------- 1

struct GradKind {
    std::string name;
    std::function<double(std::mt19937_64&)> trial;  // worst relative error of one trial
};

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// distinct values at least 1e-2 apart, so no max-pool tie sits within h
nn::TensorD spread_tensor(const nn::Shape& shape, std::mt19937_64& rng) {
    nn::TensorD t(shape);
    std::vector<double> v(t.numel());
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), rng);
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = 0.01 * v[i] - 0.005 * static_cast<double>(v.size());
    return t;
}

std::vector<GradKind> grad_kinds() {
    using namespace nn;
    std::vector<GradKind> kinds;
    kinds.push_back({"conv2d", [](std::mt19937_64& rng) {
        const std::size_t k = std::vector<std::size_t>{1, 3, 5}[pick(rng, 0, 2)];
        const std::size_t stride = pick(rng, 1, 2), pad = pick(rng, 0, k / 2 + 1);
        const std::size_t c = pick(rng, 1, 3), f = pick(rng, 1, 4), b = pick(rng, 1, 2), hw = pick(rng, 5, 8);
        Rng init(rng());
        Conv2dLayer<double> conv(LayerSpec::conv(k, f, stride, pad), c, init);
        conv.params()[1]->value = oracle::random_tensor({f}, rng);
        return oracle::check_layer_gradients(conv, oracle::random_tensor({b, c, hw, hw}, rng), Mode::train, rng);
    }});
    kinds.push_back({"batchnorm (batch statistics)", [](std::mt19937_64& rng) {
        const std::size_t c = pick(rng, 1, 4);
        BatchNormLayer<double> bn(LayerSpec::batchnorm(), c);
        bn.params()[0]->value = oracle::random_tensor({c}, rng, 0.5, 1.5);
        bn.params()[1]->value = oracle::random_tensor({c}, rng);
        return oracle::check_layer_gradients(bn, oracle::random_tensor({pick(rng, 2, 3), c, 3, 3}, rng), Mode::train, rng);
    }});
    kinds.push_back({"batchnorm (frozen statistics)", [](std::mt19937_64& rng) {
        const std::size_t c = pick(rng, 1, 4);
        BatchNormLayer<double> bn(LayerSpec::batchnorm(), c);
        bn.set_track_statistics(false);
        bn.params()[0]->value = oracle::random_tensor({c}, rng, 0.5, 1.5);
        bn.params()[1]->value = oracle::random_tensor({c}, rng);
        return oracle::check_layer_gradients(bn, oracle::random_tensor({pick(rng, 1, 3), c, 3, 3}, rng), Mode::train, rng);
    }});
    kinds.push_back({"relu", [](std::mt19937_64& rng) {
        ReluLayer<double> relu(LayerSpec::relu());
        return oracle::check_layer_gradients(relu, oracle::random_tensor_away_from_zero({2, 3, 4, 4}, rng), Mode::train,
                                             rng);
    }});
    kinds.push_back({"maxpool", [](std::mt19937_64& rng) {
        const std::size_t k = pick(rng, 2, 3), stride = pick(rng, 1, k);
        MaxPoolLayer<double> pool(LayerSpec::maxpool(k, stride));
        return oracle::check_layer_gradients(pool, spread_tensor({2, 2, 6, 6}, rng), Mode::train, rng);
    }});
    kinds.push_back({"dense", [](std::mt19937_64& rng) {
        const std::size_t in = pick(rng, 1, 12), out = pick(rng, 1, 6);
        Rng init(rng());
        DenseLayer<double> dense(LayerSpec::dense(out), in, init);
        dense.params()[1]->value = oracle::random_tensor({out}, rng);
        return oracle::check_layer_gradients(dense, oracle::random_tensor({pick(rng, 1, 4), in}, rng), Mode::train, rng);
    }});
    kinds.push_back({"dropout (train mode)", [](std::mt19937_64& rng) {
        DropoutLayer<double> drop(LayerSpec::dropout_layer(0.5));
        return oracle::check_layer_gradients(drop, oracle::random_tensor({3, 16}, rng), Mode::train, rng);
    }});
    kinds.push_back({"global average pool", [](std::mt19937_64& rng) {
        GlobalAvgPoolLayer<double> gap(LayerSpec::global_avg_pool());
        return oracle::check_layer_gradients(gap, oracle::random_tensor({2, 3, pick(rng, 1, 5), 4}, rng), Mode::train,
                                             rng);
    }});
    kinds.push_back({"softmax cross-entropy", [](std::mt19937_64& rng) {
        const std::size_t b = pick(rng, 1, 5), k = pick(rng, 2, 10);
        std::vector<int> labels(b);
        for (auto& l : labels) l = static_cast<int>(pick(rng, 0, k - 1));
        return oracle::check_softmax_xent(oracle::random_tensor({b, k}, rng, -4, 4), labels);
    }});
    return kinds;
}

void gradient_suite(Report& report) {
    Stopwatch clock;
    std::mt19937_64 rng(20240501);
    double worst = 0.0;
    std::string worst_kind;
    std::size_t trials = 0;
    for (const auto& kind : grad_kinds()) {
        for (int t = 0; t < kTrials; ++t) {
            const double e = kind.trial(rng);
            ++trials;
            if (e > worst) {
                worst = e;
                worst_kind = kind.name;
            }
        }
    }
    const double secs = clock.seconds();
    report.line(1, worst < kGradTol && secs < 60.0, "gradient suite",
                std::to_string(trials) + " trials over 9 layer kinds, worst rel err " + fmt(worst, 3) + " (" +
                    worst_kind + "), tol 1e-4, " + fmt(secs, 3) + " s");
}

// ---------------------------------------------------------------- 2

std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng) < 0.3 ? 0.0 : u(rng);
    if (std::accumulate(v.begin(), v.end(), 0.0) == 0.0) v[0] = 1.0;
    return susceptibility::normalize_map(std::span<const double>(v));
}

void emd_oracle(Report& report) {
    using namespace susceptibility;
    Stopwatch clock;
    std::mt19937_64 rng(777);
    double lp_gap = 0.0;
    for (int i = 0; i < 50; ++i) {
        const auto p = random_distribution(9, rng), q = random_distribution(9, rng);
        lp_gap = std::max(lp_gap, std::abs(emd_exact_2d(p, q, 3, 3) - oracle::lp_emd_grid(p, q, 3, 3)));
    }
    int bound_violations = 0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t h = pick(rng, 2, 8), w = pick(rng, 2, 8);
        const auto p = random_distribution(h * w, rng), q = random_distribution(h * w, rng);
        if (emd_marginal(p, q, h, w) > emd_exact_2d(p, q, h, w) + 1e-12) ++bound_violations;
    }
    double asym = 0.0, triangle_excess = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t h = pick(rng, 2, 6), w = pick(rng, 2, 6);
        const auto p = random_distribution(h * w, rng), q = random_distribution(h * w, rng);
        const auto r = random_distribution(h * w, rng);
        const double pq = emd_exact_2d(p, q, h, w);
        asym = std::max(asym, std::abs(pq - emd_exact_2d(q, p, h, w)));
        triangle_excess = std::max(triangle_excess, pq - emd_exact_2d(p, r, h, w) - emd_exact_2d(r, q, h, w));
    }
    const double secs = clock.seconds();
    const bool pass = lp_gap <= 1e-6 && bound_violations == 0 && asym <= 1e-9 && triangle_excess <= 1e-6 && secs < 60.0;
    report.line(2, pass, "EMD oracle equivalence",
                "LP gap " + fmt(lp_gap, 3) + " (50x 3x3), marginal>exact " + std::to_string(bound_violations) +
                    "/200, asym " + fmt(asym, 3) + ", triangle excess " + fmt(triangle_excess, 3) + ", " +
                    fmt(secs, 3) + " s");
}

// ---------------------------------------------------------------- 3

struct BordaCase {
    std::string name;
    std::size_t filters;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> order;
    std::vector<std::int64_t> scores;
};

void borda_cases(Report& report) {
    std::vector<double> ramp(12);
    std::iota(ramp.begin(), ramp.end(), 0.0);
    const std::vector<BordaCase> cases{
        {"single voter", 3, {{0.1, 0.5, 0.3}}, {1, 2, 0}, {8, 10, 9}},
        {"all ties", 4, {{1, 1, 1, 1}, {1, 1, 1, 1}}, {0, 1, 2, 3}, {20, 18, 16, 14}},
        {"top-10 truncation", 12, {ramp}, {11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 0, 1}, {0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
        {"three voters", 3, {{3, 2, 1}, {1, 3, 2}, {1, 2, 3}}, {1, 2, 0}, {26, 28, 27}},
        {"score tie, index order", 2, {{5, 1}, {0, 100}}, {0, 1}, {19, 19}},
        {"votes beat magnitudes", 3, {{100, 1, 0}, {0, 2, 1}, {0, 2, 1}}, {1, 0, 2}, {26, 29, 26}},
    };
    int exact = 0;
    std::string misses;
    for (const auto& c : cases) {
        susceptibility::DistanceMatrix d;
        d.layer_id = "conv1";
        d.filters = c.filters;
        for (std::size_t i = 0; i < c.rows.size(); ++i) {
            d.image_ids.push_back(i);
            d.values.insert(d.values.end(), c.rows[i].begin(), c.rows[i].end());
        }
        const auto r = susceptibility::borda_rank(d);
        if (r.order == c.order && r.scores == c.scores) {
            ++exact;
        } else {
            misses += " [" + c.name + "]";
        }
    }
    report.line(3, exact == static_cast<int>(cases.size()), "Borda hand cases",
                std::to_string(exact) + "/" + std::to_string(cases.size()) + " exact" + misses);
}

// ---------------------------------------------------------------- 4

void freeze_soundness(Report& report) {
    const auto base = zoo::build_model(zoo::cifar10_small(10), 17);
    const auto clean = fixture::synthetic(128, 10, 5);
    const auto noisy = distortion::distort_dataset(clean, {distortion::Kind::awgn, 15.0, 3});
    const auto val = distortion::distort_dataset(fixture::synthetic(32, 10, 6), {distortion::Kind::awgn, 15.0, 4});
    const auto stats = data::compute_stats(clean);

    auto ranking = [](const std::string& layer, std::size_t f, std::uint64_t seed) {
        std::vector<double> d(f);
        Rng rng(seed);
        for (auto& v : d) v = unit_uniform(rng);
        return susceptibility::rank_by_distance(layer, d);
    };
    const std::vector<finetune::FilterSelection> sel{
        susceptibility::select_filters(ranking("conv1", 32, 1), finetune::SelectionMode::most, 0.25),
        susceptibility::select_filters(ranking("conv2", 16, 2), finetune::SelectionMode::most, 0.25)};
    const auto masks = finetune::build_masks(base, sel);

    finetune::FinetuneConfig fc;
    fc.train.batch_size = 16;
    fc.train.max_epochs = 1000;
    fc.train.patience = 1000;
    fc.train.max_steps = 200;

    auto hashes = [](const nn::Network& net) {
        std::map<std::pair<std::string, std::size_t>, std::string> out;
        for (const auto* p : net.params()) {
            const std::size_t block = p->channel_block();
            for (std::size_t c = 0; c < p->channels(); ++c) {
                const auto* bytes = reinterpret_cast<const std::byte*>(p->value.data() + c * block);
                out[{p->name, c}] = sha256_hex(std::span<const std::byte>(bytes, block * sizeof(float)));
            }
        }
        return out;
    };
    const auto before = hashes(base);
    const auto r = finetune::finetune(base, masks, noisy, val, stats, fc);
    const auto after = hashes(r.network);

    std::size_t frozen = 0, changed = 0;
    for (const auto* p : r.network.params()) {
        for (std::size_t c = 0; c < p->channels(); ++c) {
            if (p->channel_trainable(c)) continue;
            ++frozen;
            changed += before.at({p->name, c}) != after.at({p->name, c}) ? 1 : 0;
        }
    }
    // 8 conv1 channels x (27 weights + bias + gamma + beta), 4 conv2 channels x (288 + 1 + 2)
    constexpr std::size_t expected = 8 * (27 + 1 + 2) + 4 * (288 + 1 + 2);
    const bool pass = r.history.steps == 200 && changed == 0 && r.trainable_params == expected;
    report.line(4, pass, "freeze soundness",
                std::to_string(r.history.steps) + " steps, " + std::to_string(changed) + "/" + std::to_string(frozen) +
                    " frozen slices changed, trainable " + std::to_string(r.trainable_params) + " (expected " +
                    std::to_string(expected) + ")");
}

// ---------------------------------------------------------------- 10

void determinism(Report& report) {
    const auto data_dir = fixture::scratch("accept_determinism_data");
    fixture::write_cifar10(data_dir, 100, 11);  // 500 training images
    const std::string text = R"({"name": "determinism",
      "dataset": {"path": ")" + data_dir.string() + R"(", "records_per_file": 100},
      "baseline": {"train": {"max_epochs": 3, "batch_size": 32}},
      "distortion": {"kind": "awgn", "sigma": 15, "seed": 3},
      "ranking": {"pairs": 100},
      "layers": ["conv1", "conv2"], "train_sizes": [40, 80], "seeds": [1, 2, 3],
      "finetune": {"train": {"max_epochs": 3, "batch_size": 20}},
      "invariance": {"images": 4}})";
    const auto cfg = experiment::parse_config(text);
    const auto a = fixture::scratch("accept_determinism_a");
    const auto b = fixture::scratch("accept_determinism_b");
    experiment::run_experiment(cfg, a);
    experiment::run_experiment(cfg, b);

    std::size_t csv = 0, same = 0;
    std::string diff;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
        ++csv;
        const auto rel = fs::relative(entry.path(), a);
        if (fs::exists(b / rel) && read_file_bytes(entry.path()) == read_file_bytes(b / rel)) {
            ++same;
        } else if (diff.empty()) {
            diff = " first difference: " + rel.string();
        }
    }
    report.line(10, csv > 0 && same == csv, "determinism",
                std::to_string(same) + "/" + std::to_string(csv) + " CSV outputs byte-identical across two runs" + diff);
}

} // namespace

int main() {
    Report report;
    const std::vector<std::pair<int, std::function<void(Report&)>>> checks{
        {1, gradient_suite}, {2, emd_oracle}, {3, borda_cases}, {4, freeze_soundness}, {10, determinism}};
    for (const auto& [id, fn] : checks) {
        try {
            fn(report);
        } catch (const std::exception& e) {
            report.error(id, "criterion " + std::to_string(id), e.what());
        }
    }
    return report.exit_code();
}

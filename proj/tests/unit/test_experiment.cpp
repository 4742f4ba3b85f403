#include "fixtures.hpp"

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/experiment/config.hpp"
#include "ftriage/experiment/run.hpp"

#include <doctest.h>

#include <filesystem>

using namespace ftriage;
using namespace ftriage::experiment;
namespace fs = std::filesystem;

namespace {

std::string smoke_json(const fs::path& data_dir) {
    return R"({"name": "smoke",
      "dataset": {"path": ")" + data_dir.string() + R"(", "records_per_file": 100},
      "baseline": {"train": {"max_epochs": 3, "batch_size": 32}},
      "distortion": {"kind": "awgn", "sigma": 25, "seed": 7},
      "ranking": {"pairs": 30},
      "layers": ["conv1", "conv2"], "train_sizes": [16, 40], "seeds": [1, 2],
      "finetune": {"train": {"max_epochs": 2, "batch_size": 16}},
      "invariance": {"images": 2}})";
}

const fs::path& data_dir() {
    static const fs::path dir = [] {
        auto d = fixture::scratch("experiment_data");
        fixture::write_cifar10(d, 100, 40);
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("config round trip and defaults") {
    const auto c = parse_config(smoke_json("/data"));
    CHECK(c.name == "smoke");
    CHECK(c.dataset.records_per_file == std::optional<std::size_t>{100});
    CHECK(c.distortion.sigma == 25.0);
    CHECK(c.ranking.method == "assoc");
    CHECK(c.fraction == 0.25);
    CHECK(c.finetune.train.learning_rate == 1e-4);
    CHECK(c.finetune.train.patience == 10);
    CHECK(parse_config(dump_config(c)) == c);

    const ExperimentConfig defaults;
    CHECK(parse_config(dump_config(defaults)) == defaults);
}

TEST_CASE("config errors name the offending key") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            parse_config(text).validate();
            FAIL("no error for " << text);
        } catch (const ConfigError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, std::string(e.what()));
        }
    };
    expect_error(R"({"dataset": {"path": "x", "colour": true}})", "dataset.colour");
    expect_error(R"({"baseline": {"train": {"max_epochs": -3}}})", "baseline.train.max_epochs");
    expect_error(R"({"seeds": [1, "two"]})", "seeds[1]");
    expect_error(R"({"distortion": {"sigma": "high"}})", "distortion.sigma");
    expect_error(R"({"dataset": {"path": "x"}, "layers": ["conv1", "fc1"]})", "fc1");
    expect_error(R"({"dataset": {"path": "x"}, "ranking": {"method": "random"}})", "ranking.method");
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
}

TEST_CASE("preflight reports missing inputs before any work") {
    auto c = parse_config(smoke_json(data_dir()));
    CHECK_NOTHROW(preflight(c));
    c.baseline.checkpoint = "/nonexistent/base.ckpt";
    c.baseline.stats = "/nonexistent/stats.json";
    CHECK_THROWS_AS(preflight(c), InputError);
    auto d = parse_config(smoke_json("/nonexistent/cifar"));
    CHECK_THROWS_AS(preflight(d), InputError);
}

TEST_CASE("sample_subset keeps dataset order and is seeded") {
    const auto d = fixture::synthetic(30, 10, 1);
    const auto a = sample_subset(d, 10, 4);
    CHECK(a.size() == 10);
    CHECK(std::is_sorted(a.ids.begin(), a.ids.end()));
    CHECK(sample_subset(d, 10, 4).ids == a.ids);
    CHECK(sample_subset(d, 10, 5).ids != a.ids);
    CHECK(sample_subset(d, 99, 4).ids == d.ids);
}

TEST_CASE("end to end run emits every artifact and reruns byte for byte") {
    const auto cfg = parse_config(smoke_json(data_dir()));
    const auto out1 = fixture::scratch("e2e_run1");
    const auto out2 = fixture::scratch("e2e_run2");
    run_experiment(cfg, out1);
    run_experiment(cfg, out2);

    const std::vector<std::string> expected{
        "config.json", "baseline.ckpt", "stats.json", "baseline_history.csv", "baseline_eval.csv",
        "distances_conv1.csv", "distances_conv2.csv", "ranking_conv1.csv", "ranking_conv2.csv",
        "curve.csv", "curve_summary.csv", "finetuned_most.ckpt", "invariance.csv", "manifest.json"};
    for (const auto& name : expected) {
        CHECK_MESSAGE(fs::exists(out1 / name), name);
    }
    CHECK_FALSE(fs::exists(out1 / "FAILED"));
    // 2 images x 2 layers x {baseline, finetuned}
    const auto heatmaps = std::distance(fs::directory_iterator(out1 / "heatmaps"), fs::directory_iterator{});
    CHECK(heatmaps == 8);

    for (const auto& entry : fs::recursive_directory_iterator(out1)) {
        if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
        const auto rel = fs::relative(entry.path(), out1);
        CHECK_MESSAGE(read_file_bytes(entry.path()) == read_file_bytes(out2 / rel), rel.string());
    }

    const auto manifest = nlohmann::json::parse(read_file_bytes(out1 / "manifest.json"));
    CHECK(manifest["status"] == "ok");
    CHECK(manifest["stages"].size() == 7);
    CHECK(manifest["artifacts"].size() >= expected.size() - 1);
    const auto curve = read_file_bytes(out1 / "curve.csv");
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 1 + 3 * 2 * 2);
    const auto inv = read_file_bytes(out1 / "invariance.csv");
    CHECK(inv.rfind("image_id,layer,baseline_total,finetuned_total\n", 0) == 0);
}

TEST_CASE("a failing stage leaves FAILED and keeps earlier outputs") {
    auto cfg = parse_config(smoke_json(data_dir()));
    cfg.train_sizes = {5000};
    const auto out = fixture::scratch("e2e_failed");
    try {
        run_experiment(cfg, out);
        FAIL("expected an InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).rfind("stage finetune-curve: ", 0) == 0);
    }
    CHECK(fs::exists(out / "FAILED"));
    CHECK(fs::exists(out / "baseline.ckpt"));
    CHECK(fs::exists(out / "ranking_conv2.csv"));
    CHECK_FALSE(fs::exists(out / "curve.csv"));
    const auto manifest = nlohmann::json::parse(read_file_bytes(out / "manifest.json"));
    CHECK(manifest["status"] == "failed");
    CHECK(manifest["failed_stage"] == "finetune-curve");
}

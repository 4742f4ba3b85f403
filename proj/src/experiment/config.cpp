#include "ftriage/experiment/config.hpp"

#include "ftriage/common/bytes.hpp"
#include "ftriage/common/error.hpp"
#include "ftriage/zoo/presets.hpp"

#include <set>
#include <type_traits>

namespace ftriage::experiment {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        out = convert<T>(j_.at(key), where(key));
    }

    template <typename T>
    void get(const char* key, std::optional<T>& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        const auto& v = j_.at(key);
        if (v.is_null()) {
            out.reset();
        } else {
            out = convert<T>(v, where(key));
        }
    }

    template <typename T>
    void get(const char* key, std::vector<T>& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where(key) + " must be a list");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(convert<T>(v[i], where(key) + "[" + std::to_string(i) + "]"));
        }
    }

    ObjectReader sub(const char* key) {
        used_.insert(key);
        return ObjectReader(j_.at(key), where(key));
    }
    bool has(const char* key) const { return j_.contains(key); }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!used_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key()) + "'");
        }
    }

private:
    std::string where(const std::string& key = {}) const {
        if (key.empty()) return path_.empty() ? std::string("config") : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    template <typename T>
    static T convert(const json& v, const std::string& at) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(at + " must be true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(at + " must be a string");
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(at + " must be a number");
            return v.get<T>();
        } else {
            static_assert(std::is_unsigned_v<T>);
            if (!v.is_number_unsigned()) throw ConfigError(at + " must be a non-negative integer");
            return v.get<T>();
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

void read_train(ObjectReader r, TrainSection& t) {
    r.get("max_epochs", t.max_epochs);
    r.get("batch_size", t.batch_size);
    r.get("learning_rate", t.learning_rate);
    r.get("beta1", t.beta1);
    r.get("beta2", t.beta2);
    r.get("epsilon", t.epsilon);
    r.get("patience", t.patience);
    r.get("seed", t.seed);
    r.get("max_steps", t.max_steps);
    r.finish();
}

json write_train(const TrainSection& t) {
    return {{"max_epochs", t.max_epochs}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
            {"beta1", t.beta1},           {"beta2", t.beta2},           {"epsilon", t.epsilon},
            {"patience", t.patience},     {"seed", t.seed},             {"max_steps", opt(t.max_steps)}};
}

} // namespace

zoo::TrainConfig TrainSection::to_train_config() const {
    zoo::TrainConfig c;
    c.max_epochs = max_epochs;
    c.batch_size = batch_size;
    c.adam.learning_rate = learning_rate;
    c.adam.beta1 = beta1;
    c.adam.beta2 = beta2;
    c.adam.epsilon = epsilon;
    c.patience = patience;
    c.seed = seed;
    c.max_steps = max_steps;
    return c;
}

TrainSection TrainSection::from(const zoo::TrainConfig& c) {
    TrainSection t;
    t.max_epochs = c.max_epochs;
    t.batch_size = c.batch_size;
    t.learning_rate = c.adam.learning_rate;
    t.beta1 = c.adam.beta1;
    t.beta2 = c.adam.beta2;
    t.epsilon = c.adam.epsilon;
    t.patience = c.patience;
    t.seed = c.seed;
    t.max_steps = c.max_steps;
    return t;
}

distortion::DistortionSpec DistortionSection::to_spec() const {
    distortion::DistortionSpec s;
    s.kind = distortion::kind_from_string(kind);
    s.sigma = sigma;
    s.seed = seed;
    return s;
}

void ExperimentConfig::validate() const {
    const auto variant = data::cifar_variant_from_string(dataset.id);
    if (dataset.path.empty()) throw ConfigError("dataset.path is empty");
    if (dataset.records_per_file && *dataset.records_per_file == 0) {
        throw ConfigError("dataset.records_per_file must be positive");
    }
    data::SplitSpec{dataset.split_ratio, dataset.split_seed, dataset.stratified}.validate();
    if (baseline.checkpoint.has_value() != baseline.stats.has_value()) {
        throw ConfigError("baseline.checkpoint and baseline.stats must be given together");
    }
    baseline.train.to_train_config().validate();
    distortion.to_spec().validate();

    if (ranking.method != "assoc" && ranking.method != "nonassoc") {
        throw ConfigError("ranking.method must be assoc or nonassoc, got '" + ranking.method + "'");
    }
    if (ranking.pairs == 0) throw ConfigError("ranking.pairs must be positive");
    susceptibility::emd_metric_from_string(ranking.emd_metric);
    susceptibility::capture_from_string(ranking.capture);

    const nn::Network net(zoo::preset_architecture(architecture, data::cifar_class_count(variant)), 0);
    if (layers.empty()) throw ConfigError("layers lists no target layer");
    const auto convs = net.conv_layer_names();
    for (const auto& l : layers) {
        if (std::find(convs.begin(), convs.end(), l) == convs.end()) {
            throw ConfigError("layer '" + l + "' is not a convolution layer of " + architecture);
        }
    }
    if (ranking.method == "nonassoc") {
        for (const auto& l : layers) nonassoc_options(*this, l).exemplar.rep.validate();
        const auto o = nonassoc_options(*this, layers.front());
        exemplar::check_metric(o.exemplar.rep, o.exemplar.metric);
        if (o.exemplar.max_points == 0) throw ConfigError("ranking.max_points must be positive");
        if (!ranking.feature_layer.empty() &&
            std::find(convs.begin(), convs.end(), ranking.feature_layer) == convs.end()) {
            throw ConfigError("ranking.feature_layer '" + ranking.feature_layer + "' is not a convolution layer");
        }
    }
    curve_config(*this).validate();
}

finetune::CurveConfig curve_config(const ExperimentConfig& c) {
    finetune::CurveConfig cc;
    cc.layers = c.layers;
    cc.fraction = c.fraction;
    cc.modes.clear();
    for (const auto& m : c.modes) cc.modes.push_back(susceptibility::selection_mode_from_string(m));
    cc.train_sizes = c.train_sizes;
    cc.seeds = c.seeds;
    cc.finetune.train = c.finetune.train.to_train_config();
    cc.finetune.freeze_classifier = c.finetune.freeze_classifier;
    return cc;
}

exemplar::NonAssocOptions nonassoc_options(const ExperimentConfig& c, const std::string& layer) {
    exemplar::NonAssocOptions o;
    o.exemplar.rep.kind = exemplar::feature_kind_from_string(c.ranking.features);
    o.exemplar.rep.binarize = c.ranking.binarize;
    if (o.exemplar.rep.kind == exemplar::FeatureKind::collapsed_activations) {
        o.exemplar.rep.layer_id = c.ranking.feature_layer.empty() ? layer : c.ranking.feature_layer;
    }
    o.exemplar.metric = exemplar::metric_kind_from_string(c.ranking.metric);
    o.exemplar.max_points = c.ranking.max_points;
    o.exemplar.seed = c.ranking.exemplar_seed;
    o.emd = susceptibility::emd_metric_from_string(c.ranking.emd_metric);
    o.capture = susceptibility::capture_from_string(c.ranking.capture);
    return o;
}

susceptibility::DistanceOptions distance_options(const ExperimentConfig& c) {
    susceptibility::DistanceOptions o;
    o.metric = susceptibility::emd_metric_from_string(c.ranking.emd_metric);
    o.capture = susceptibility::capture_from_string(c.ranking.capture);
    return o;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    ObjectReader r(j, "");
    r.get("name", c.name);
    if (r.has("dataset")) {
        auto d = r.sub("dataset");
        d.get("id", c.dataset.id);
        d.get("path", c.dataset.path);
        d.get("records_per_file", c.dataset.records_per_file);
        d.get("max_train_pool", c.dataset.max_train_pool);
        d.get("max_test", c.dataset.max_test);
        d.get("subsample_seed", c.dataset.subsample_seed);
        d.get("split_ratio", c.dataset.split_ratio);
        d.get("split_seed", c.dataset.split_seed);
        d.get("stratified", c.dataset.stratified);
        d.finish();
    }
    r.get("architecture", c.architecture);
    if (r.has("baseline")) {
        auto b = r.sub("baseline");
        b.get("checkpoint", c.baseline.checkpoint);
        b.get("stats", c.baseline.stats);
        b.get("init_seed", c.baseline.init_seed);
        if (b.has("train")) read_train(b.sub("train"), c.baseline.train);
        b.finish();
    }
    if (r.has("distortion")) {
        auto d = r.sub("distortion");
        d.get("kind", c.distortion.kind);
        d.get("sigma", c.distortion.sigma);
        d.get("seed", c.distortion.seed);
        d.finish();
    }
    if (r.has("ranking")) {
        auto k = r.sub("ranking");
        k.get("method", c.ranking.method);
        k.get("pairs", c.ranking.pairs);
        k.get("pair_seed", c.ranking.pair_seed);
        k.get("emd_metric", c.ranking.emd_metric);
        k.get("capture", c.ranking.capture);
        k.get("features", c.ranking.features);
        k.get("binarize", c.ranking.binarize);
        k.get("metric", c.ranking.metric);
        k.get("feature_layer", c.ranking.feature_layer);
        k.get("max_points", c.ranking.max_points);
        k.get("exemplar_seed", c.ranking.exemplar_seed);
        k.finish();
    }
    r.get("layers", c.layers);
    r.get("fraction", c.fraction);
    r.get("modes", c.modes);
    r.get("train_sizes", c.train_sizes);
    r.get("seeds", c.seeds);
    if (r.has("finetune")) {
        auto f = r.sub("finetune");
        if (f.has("train")) read_train(f.sub("train"), c.finetune.train);
        f.get("freeze_classifier", c.finetune.freeze_classifier);
        f.finish();
    }
    if (r.has("invariance")) {
        auto v = r.sub("invariance");
        v.get("images", c.invariance.images);
        v.get("seed", c.invariance.seed);
        v.finish();
    }
    r.finish();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["dataset"] = {{"id", c.dataset.id},
                    {"path", c.dataset.path},
                    {"records_per_file", opt(c.dataset.records_per_file)},
                    {"max_train_pool", opt(c.dataset.max_train_pool)},
                    {"max_test", opt(c.dataset.max_test)},
                    {"subsample_seed", c.dataset.subsample_seed},
                    {"split_ratio", c.dataset.split_ratio},
                    {"split_seed", c.dataset.split_seed},
                    {"stratified", c.dataset.stratified}};
    j["architecture"] = c.architecture;
    j["baseline"] = {{"checkpoint", opt(c.baseline.checkpoint)},
                     {"stats", opt(c.baseline.stats)},
                     {"init_seed", c.baseline.init_seed},
                     {"train", write_train(c.baseline.train)}};
    j["distortion"] = {{"kind", c.distortion.kind}, {"sigma", c.distortion.sigma}, {"seed", c.distortion.seed}};
    j["ranking"] = {{"method", c.ranking.method},
                    {"pairs", c.ranking.pairs},
                    {"pair_seed", c.ranking.pair_seed},
                    {"emd_metric", c.ranking.emd_metric},
                    {"capture", c.ranking.capture},
                    {"features", c.ranking.features},
                    {"binarize", c.ranking.binarize},
                    {"metric", c.ranking.metric},
                    {"feature_layer", c.ranking.feature_layer},
                    {"max_points", c.ranking.max_points},
                    {"exemplar_seed", c.ranking.exemplar_seed}};
    j["layers"] = c.layers;
    j["fraction"] = c.fraction;
    j["modes"] = c.modes;
    j["train_sizes"] = c.train_sizes;
    j["seeds"] = c.seeds;
    j["finetune"] = {{"train", write_train(c.finetune.train)}, {"freeze_classifier", c.finetune.freeze_classifier}};
    j["invariance"] = {{"images", c.invariance.images}, {"seed", c.invariance.seed}};
    return j;
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

std::string dump_config(const ExperimentConfig& c) { return config_to_json(c).dump(2) + "\n"; }

ExperimentConfig load_config(const std::filesystem::path& path) {
    try {
        return parse_config(read_file_bytes(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace ftriage::experiment

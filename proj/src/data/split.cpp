#include "ftriage/data/split.hpp"

#include "ftriage/common/error.hpp"
#include "ftriage/common/random.hpp"

#include <algorithm>
#include <cmath>

namespace ftriage::data {

void SplitSpec::validate() const {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
}

SplitIndices split_indices(const Dataset& dataset, const SplitSpec& spec) {
    spec.validate();
    dataset.validate();
    const std::size_t n = dataset.size();
    const auto target = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(n)));
    Rng rng(spec.seed);
    std::vector<bool> in_train(n, false);

    if (!spec.stratified) {
        for (auto i : sample_indices(n, target, rng)) in_train[i] = true;
    } else {
        std::vector<std::vector<std::size_t>> by_class(dataset.class_count);
        for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
        std::vector<std::size_t> quota(by_class.size());
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            quota[c] = static_cast<std::size_t>(std::floor(spec.ratio * static_cast<double>(by_class[c].size())));
            assigned += quota[c];
        }
        std::vector<std::size_t> open;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            if (quota[c] < by_class[c].size()) open.push_back(c);
        }
        shuffle<std::size_t>(open, rng);
        for (std::size_t k = 0; assigned < target && k < open.size(); ++k, ++assigned) ++quota[open[k]];
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto& members = by_class[c];
            shuffle<std::size_t>(members, rng);
            for (std::size_t k = 0; k < quota[c]; ++k) in_train[members[k]] = true;
        }
    }

    SplitIndices out;
    for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.train : out.val).push_back(i);
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
    const auto idx = split_indices(dataset, spec);
    Dataset train = dataset.subset(idx.train);
    Dataset val = dataset.subset(idx.val);
    train.split = SplitTag::train;
    val.split = SplitTag::val;
    const nlohmann::json split_info = {{"ratio", spec.ratio}, {"seed", spec.seed}, {"stratified", spec.stratified}};
    train.provenance["split"] = split_info;
    val.provenance["split"] = split_info;
    train.provenance["split"]["part"] = "train";
    val.provenance["split"]["part"] = "val";
    return {std::move(train), std::move(val)};
}

} // namespace ftriage::data

#pragma once

#include "ftriage/data/dataset.hpp"

#include <utility>

namespace ftriage::data {

struct SplitSpec {
    double ratio = 0.8;  // train fraction
    std::uint64_t seed = 0;
    bool stratified = true;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> val;    // ascending
};

/// Target train size is round(ratio*N). Stratified splits take
/// floor(ratio*n_c) per class and hand the leftover slots to classes picked
/// by a seeded draw, one slot per class at most.
SplitIndices split_indices(const Dataset& dataset, const SplitSpec& spec);

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

} // namespace ftriage::data

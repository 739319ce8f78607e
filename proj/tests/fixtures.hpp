#pragma once

#include <string>
#include <vector>

#include "slicetuner/model.hpp"
#include "slicetuner/oracle.hpp"

namespace fixtures {

using slicetuner::Count;

inline std::vector<std::string> ids_for(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
    return ids;
}

inline slicetuner::SlicePartition partition(const std::vector<Count>& sizes, std::vector<double> costs = {}) {
    if (costs.empty()) costs.assign(sizes.size(), 1.0);
    const auto ids = ids_for(sizes.size());
    std::vector<slicetuner::SliceState> s;
    for (std::size_t i = 0; i < sizes.size(); ++i) s.push_back({ids[i], sizes[i], costs[i], 500});
    return slicetuner::SlicePartition(std::move(s));
}

inline slicetuner::SyntheticWorld world(std::vector<slicetuner::SliceTruth> truth, std::vector<Count> sizes,
                                        double sigma = 0.0, std::uint64_t seed = 1,
                                        std::vector<double> influence = {}) {
    slicetuner::SyntheticWorld w;
    w.ids = ids_for(truth.size());
    w.truth = std::move(truth);
    w.initial_sizes = std::move(sizes);
    w.noise_sigma = sigma;
    w.seed = seed;
    w.influence = std::move(influence);
    return w;
}

}  // namespace fixtures

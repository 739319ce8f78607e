#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicetuner/acquisition.hpp"
#include "slicetuner/curves.hpp"
#include "slicetuner/model.hpp"
#include "slicetuner/oracle.hpp"
#include "slicetuner/trainer.hpp"

namespace slicetuner {

enum class Method { original, uniform, water_filling, one_shot, conservative, moderate, aggressive };

std::string method_name(Method m);
Method parse_method(const std::string& text);
bool is_iterative(Method m);

struct OracleSpec {
    enum class Kind { synthetic, trainer };
    Kind kind = Kind::synthetic;

    // synthetic
    std::vector<SliceTruth> truth;
    std::vector<double> influence;  // n x n row-major, empty = no influence
    double influence_max = 0.2;
    double noise_sigma = 0.0;
    std::vector<std::optional<Count>> pool_limit;

    // trainer
    TrainerEndpoint endpoint;
};

struct ExperimentConfig {
    std::string scenario = "default";
    SlicePartition partition;
    OracleSpec oracle;
    std::vector<Method> methods;
    std::vector<double> budgets;  // at least one
    std::vector<double> lambdas;  // at least one
    CurveEstimationConfig curves;
    IterativeConfig iterative;     // strategy and lambda are filled per method / sweep point
    double moderate_step = 1.0;
    double aggressive_factor = 2.0;
    int num_trials = 10;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir = "slicetuner-out";
    bool parallel = true;
    Method compare_method = Method::moderate;

    void validate() const;
};

// Flat "key = <JSON value>" lines; '#' starts a comment. schema_version must be 1.
using FlatConfig = std::map<std::string, nlohmann::json>;
FlatConfig parse_flat_config(const std::string& text);
ExperimentConfig config_from_flat(const FlatConfig& flat);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace slicetuner

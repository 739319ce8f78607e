#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slicetuner/curves.hpp"
#include "slicetuner/model.hpp"
#include "slicetuner/optimizer.hpp"
#include "slicetuner/oracle.hpp"

namespace slicetuner {

// How the imbalance-ratio change limit T evolves between iterations.
struct LimitStrategy {
    enum class Kind { conservative, moderate, aggressive };
    Kind kind = Kind::moderate;
    double step = 1.0;  // additive for moderate, multiplicative for aggressive

    static LimitStrategy conservative() { return {Kind::conservative, 0.0}; }
    static LimitStrategy moderate(double c = 1.0) { return {Kind::moderate, c}; }
    static LimitStrategy aggressive(double c = 2.0) { return {Kind::aggressive, c}; }

    void validate() const;
    std::string name() const;
};

double increase_limit(double limit, const LimitStrategy& strategy);

struct IterativeConfig {
    Count min_slice_size = 1;  // L
    double initial_limit = 1.0;
    LimitStrategy strategy = LimitStrategy::moderate();
    double lambda = 1.0;
    int max_iterations = 50;

    void validate() const;
};

double get_imbalance_ratio(std::span<const Count> sizes);
double get_imbalance_ratio(std::span<const double> sizes);

struct ChangeRatio {
    double x = 1.0;
    bool feasible = true;  // false when no x > 0 keeps the ratio within the limit
    bool monotone = true;  // whether bisection (true) or the fallback scan (false) was used
};

// Largest x in (0, 1] such that the imbalance ratio of sizes + x * num_examples
// stays within |target - IR(sizes)| of IR(sizes).
ChangeRatio get_change_ratio(std::span<const Count> sizes, std::span<const double> num_examples,
                             double target_ratio);

struct IterationRecord {
    std::vector<PowerLawCurve> curves;
    std::vector<bool> reliable;
    std::vector<Count> sizes_before;
    std::vector<Count> one_shot_plan;
    std::vector<Count> acquired;
    double change_ratio = 1.0;
    double ir_before = 1.0;
    double ir_after = 1.0;
    double limit = 1.0;
    double spent = 0.0;
    double budget_remaining = 0.0;
    std::vector<double> realized_loss;
};

struct AcquisitionLog {
    std::vector<Count> initial_sizes;
    std::vector<Count> top_up;  // examples added to reach L
    double budget = 0.0;
    double top_up_cost = 0.0;
    bool top_up_short = false;  // budget could not cover the L top-up
    bool pool_limited = false;
    bool stalled = false;       // a limited plan rounded to zero examples
    std::vector<IterationRecord> iterations;
    std::vector<Count> total_acquired;
    double spent = 0.0;

    std::size_t iteration_count() const noexcept { return iterations.size(); }
};

// Examples needed to bring every slice up to L. If the budget cannot pay for all
// of it, the deficits are filled proportionally and short is set.
struct TopUp {
    std::vector<Count> counts;
    double cost = 0.0;
    bool short_of_budget = false;
};
TopUp minimum_size_top_up(std::span<const Count> sizes, std::span<const double> costs, Count min_size,
                          double budget);

struct RunOptions {
    Execution exec = Execution::parallel;
    EstimationMode estimation = EstimationMode::amortized;
    bool evaluate_each_iteration = true;
};

// Iterative acquisition: re-estimate curves, plan with the full remaining budget,
// shrink the plan so the imbalance ratio moves at most T, acquire, repeat.
AcquisitionLog run_iterative(const SlicePartition& partition, LossOracle& oracle,
                             const CurveEstimationConfig& curve_config, const IterativeConfig& config, double budget,
                             const RunOptions& options = {});

// Estimates curves once and spends the whole budget on one plan.
AcquisitionLog run_one_shot(const SlicePartition& partition, LossOracle& oracle,
                            const CurveEstimationConfig& curve_config, double lambda, Count min_slice_size,
                            double budget, const RunOptions& options = {});

// Equal counts for every slice, residual handed out in index order.
AllocationPlan uniform_allocate(const SlicePartition& partition, double budget);

// Raise the smallest slices to a common level.
AllocationPlan water_filling_allocate(const SlicePartition& partition, double budget);

// CSV: iteration,slice_id,size_before,acquired,limit_T,ir_before,ir_after,budget_remaining,realized_loss
void write_acquisition_log(std::ostream& out, const AcquisitionLog& log, std::span<const std::string> ids);

}  // namespace slicetuner

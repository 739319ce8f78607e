#pragma once

#include <span>
#include <vector>

#include "slicetuner/curves.hpp"
#include "slicetuner/model.hpp"

namespace slicetuner {

// One instance of the loss + lambda * unfairness-penalty allocation program.
// baseline_loss (the average predicted loss at the current sizes) is fixed at
// construction and does not move while the problem is solved.
class AllocationProblem {
public:
    AllocationProblem(std::vector<PowerLawCurve> curves, std::vector<Count> sizes, std::vector<double> costs,
                      double budget, double lambda);

    std::size_t n() const noexcept { return curves_.size(); }
    const std::vector<PowerLawCurve>& curves() const noexcept { return curves_; }
    const std::vector<Count>& sizes() const noexcept { return sizes_; }
    const std::vector<double>& costs() const noexcept { return costs_; }
    double budget() const noexcept { return budget_; }
    double lambda() const noexcept { return lambda_; }
    double baseline_loss() const noexcept { return baseline_loss_; }

    // Predicted loss of slice i after acquiring d more examples.
    double predicted(std::size_t i, double d) const { return curves_[i].predict(static_cast<double>(sizes_[i]) + d); }

    // Contribution of slice i to the objective: loss + lambda * max(0, loss / A - 1).
    double slice_term(std::size_t i, double d) const;

    AllocationProblem with_budget(double budget) const;

private:
    std::vector<PowerLawCurve> curves_;
    std::vector<Count> sizes_;
    std::vector<double> costs_;
    double budget_;
    double lambda_;
    double baseline_loss_;
};

struct AllocationPlan {
    std::vector<Count> d;
    double spent = 0.0;
    double objective = 0.0;
};

double objective(const AllocationProblem& problem, std::span<const double> d);
double objective(const AllocationProblem& problem, std::span<const Count> d);

// Predicted-loss part only (sum of b (s + d)^-a + c); equals objective() when lambda = 0.
double predicted_total_loss(const AllocationProblem& problem, std::span<const double> d);

// Euclidean projection of y onto { d >= 0, sum_i costs_i d_i = total }.
std::vector<double> project_onto_budget(std::span<const double> y, std::span<const double> costs, double total);

struct SolverOptions {
    double initial_step = 1.0;
    double backtrack = 0.5;
    double armijo = 1e-4;
    double relative_tolerance = 1e-10;
    int max_iterations = 10000;
};

// Continuous optimum by projected gradient descent with backtracking line search.
std::vector<double> solve_continuous(const AllocationProblem& problem, const SolverOptions& options = {});

// Integer plan: floor the continuous optimum, hand out the remaining budget one
// example at a time by best marginal decrease per unit cost, then apply
// single-example exchanges while they lower the objective.
AllocationPlan one_shot_allocate(const AllocationProblem& problem, const SolverOptions& options = {});

}  // namespace slicetuner

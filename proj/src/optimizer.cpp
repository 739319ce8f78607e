#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slicetuner/errors.hpp"
#include "slicetuner/optimizer.hpp"

namespace slicetuner {

AllocationProblem::AllocationProblem(std::vector<PowerLawCurve> curves, std::vector<Count> sizes,
                                     std::vector<double> costs, double budget, double lambda)
    : curves_(std::move(curves)), sizes_(std::move(sizes)), costs_(std::move(costs)), budget_(budget),
      lambda_(lambda) {
    const std::size_t k = curves_.size();
    if (k == 0) throw InvalidProblem("allocation problem needs at least one slice");
    if (sizes_.size() != k || costs_.size() != k)
        throw InvalidProblem("allocation problem: curves, sizes and costs must have equal length");
    if (!(budget_ >= 0.0) || !std::isfinite(budget_)) throw InvalidProblem("allocation problem: budget must be >= 0");
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw InvalidProblem("allocation problem: lambda must be >= 0");
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = curves_[i];
        if (!std::isfinite(c.a) || !std::isfinite(c.b) || !std::isfinite(c.c) || !(c.a > 0.0) || !(c.b > 0.0) ||
            c.c < 0.0)
            throw InvalidProblem("allocation problem: curve " + std::to_string(i) + " has invalid parameters");
        if (sizes_[i] < 1) throw InvalidProblem("allocation problem: slice sizes must be >= 1");
        if (!(costs_[i] > 0.0) || !std::isfinite(costs_[i]))
            throw InvalidProblem("allocation problem: costs must be positive");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += predicted(i, 0.0);
    baseline_loss_ = sum / static_cast<double>(k);
}

double AllocationProblem::slice_term(std::size_t i, double d) const {
    const double loss = predicted(i, d);
    return loss + lambda_ * std::max(0.0, loss / baseline_loss_ - 1.0);
}

AllocationProblem AllocationProblem::with_budget(double budget) const {
    AllocationProblem copy = *this;
    if (!(budget >= 0.0)) throw InvalidProblem("allocation problem: budget must be >= 0");
    copy.budget_ = budget;
    return copy;
}

namespace {

template <typename T>
void check_shape(const AllocationProblem& problem, std::span<const T> d) {
    if (d.size() != problem.n()) throw InvalidArgument("objective: allocation has the wrong length");
    for (const auto v : d)
        if (!(v >= 0)) throw InvalidArgument("objective: allocations must be >= 0");
}

// Subgradient of the objective; the hinge contributes nothing at its kink.
std::vector<double> gradient(const AllocationProblem& problem, std::span<const double> d) {
    std::vector<double> g(problem.n());
    const double a = problem.baseline_loss();
    for (std::size_t i = 0; i < problem.n(); ++i) {
        const double x = static_cast<double>(problem.sizes()[i]) + d[i];
        const double slope = problem.curves()[i].slope(x);
        const bool above = problem.predicted(i, d[i]) / a - 1.0 > 0.0;
        g[i] = slope * (1.0 + (above ? problem.lambda() / a : 0.0));
    }
    return g;
}

}  // namespace

double objective(const AllocationProblem& problem, std::span<const double> d) {
    check_shape(problem, d);
    double sum = 0.0;
    for (std::size_t i = 0; i < problem.n(); ++i) sum += problem.slice_term(i, d[i]);
    return sum;
}

double objective(const AllocationProblem& problem, std::span<const Count> d) {
    std::vector<double> dd(d.begin(), d.end());
    return objective(problem, dd);
}

double predicted_total_loss(const AllocationProblem& problem, std::span<const double> d) {
    check_shape(problem, d);
    double sum = 0.0;
    for (std::size_t i = 0; i < problem.n(); ++i) sum += problem.predicted(i, d[i]);
    return sum;
}

std::vector<double> project_onto_budget(std::span<const double> y, std::span<const double> costs, double total) {
    const std::size_t k = y.size();
    if (costs.size() != k || k == 0) throw InvalidArgument("projection: shape mismatch");
    if (total <= 0.0) return std::vector<double>(k, 0.0);
    // d_i = max(0, y_i - tau c_i) with tau chosen so that sum c_i d_i = total.
    // Breakpoints tau_i = y_i / c_i; walk them in decreasing order.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
        return y[p] / costs[p] > y[q] / costs[q];
    });
    double cy = 0.0;  // sum over active c_i y_i
    double cc = 0.0;  // sum over active c_i^2
    double tau = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t i = order[r];
        cy += costs[i] * y[i];
        cc += costs[i] * costs[i];
        const double candidate = (cy - total) / cc;
        const double next = r + 1 < k ? y[order[r + 1]] / costs[order[r + 1]] : -std::numeric_limits<double>::infinity();
        if (candidate >= next) {
            tau = candidate;
            break;
        }
    }
    std::vector<double> d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = std::max(0.0, y[i] - tau * costs[i]);
    return d;
}

std::vector<double> solve_continuous(const AllocationProblem& problem, const SolverOptions& options) {
    const std::size_t k = problem.n();
    const double budget = problem.budget();
    if (budget <= 0.0) return std::vector<double>(k, 0.0);

    const auto& costs = problem.costs();
    const double cost_sum = std::accumulate(costs.begin(), costs.end(), 0.0);
    std::vector<double> x(k, budget / cost_sum);
    double fx = objective(problem, x);
    double step = options.initial_step;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        const auto g = gradient(problem, x);
        std::vector<double> y(k);
        std::vector<double> candidate;
        double fc = fx;
        bool accepted = false;
        for (int tries = 0; tries < 200; ++tries) {
            for (std::size_t i = 0; i < k; ++i) y[i] = x[i] - step * g[i];
            candidate = project_onto_budget(y, costs, budget);
            double decrease = 0.0;
            for (std::size_t i = 0; i < k; ++i) decrease += g[i] * (candidate[i] - x[i]);
            fc = objective(problem, candidate);
            if (fc <= fx + options.armijo * decrease) {
                accepted = true;
                break;
            }
            step *= options.backtrack;
        }
        if (!accepted) break;
        const double change = std::abs(fx - fc);
        const bool moved = candidate != x;
        x = std::move(candidate);
        const double previous = fx;
        fx = fc;
        if (!moved || change <= options.relative_tolerance * std::max(1.0, std::abs(previous))) break;
        // Let the step grow back after successful iterations.
        step *= 2.0;
    }
    return x;
}

namespace {

double budget_left(const AllocationProblem& problem, std::span<const Count> d) {
    double spent = 0.0;
    for (std::size_t i = 0; i < problem.n(); ++i) spent += problem.costs()[i] * static_cast<double>(d[i]);
    return problem.budget() - spent;
}

// Tolerance for comparing budget sums built from the same costs.
double slack(const AllocationProblem& problem) { return 1e-9 * std::max(1.0, problem.budget()); }

// Adds single examples while any slice is affordable, best gain per unit cost first.
void greedy_fill(const AllocationProblem& problem, std::vector<Count>& d) {
    const std::size_t k = problem.n();
    double left = budget_left(problem, d);
    while (true) {
        std::size_t best = k;
        double best_gain = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            if (problem.costs()[i] > left + slack(problem)) continue;
            const double di = static_cast<double>(d[i]);
            const double gain = (problem.slice_term(i, di) - problem.slice_term(i, di + 1.0)) / problem.costs()[i];
            if (best == k || gain > best_gain) {
                best = i;
                best_gain = gain;
            }
        }
        if (best == k) return;
        ++d[best];
        left -= problem.costs()[best];
    }
}

// Best single-example move from one slice to another that fits the budget and lowers the objective.
bool improve_by_exchange(const AllocationProblem& problem, std::vector<Count>& d) {
    const std::size_t k = problem.n();
    const double left = budget_left(problem, d);
    double best_delta = 0.0;
    std::size_t from = k, to = k;
    for (std::size_t i = 0; i < k; ++i) {
        if (d[i] == 0) continue;
        const double di = static_cast<double>(d[i]);
        const double removed = problem.slice_term(i, di - 1.0) - problem.slice_term(i, di);
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            if (problem.costs()[j] > left + problem.costs()[i] + slack(problem)) continue;
            const double dj = static_cast<double>(d[j]);
            const double added = problem.slice_term(j, dj + 1.0) - problem.slice_term(j, dj);
            const double delta = removed + added;
            // Require a real decrease so round-off cannot cycle.
            if (delta < best_delta - 1e-15 * std::max(1.0, std::abs(problem.slice_term(i, di)))) {
                best_delta = delta;
                from = i;
                to = j;
            }
        }
    }
    if (from == k) return false;
    --d[from];
    ++d[to];
    return true;
}

}  // namespace

AllocationPlan one_shot_allocate(const AllocationProblem& problem, const SolverOptions& options) {
    const auto cont = solve_continuous(problem, options);
    AllocationPlan plan;
    plan.d.resize(problem.n());
    for (std::size_t i = 0; i < problem.n(); ++i) plan.d[i] = static_cast<Count>(std::floor(cont[i] + 1e-9));
    // Round-off in the projection can leave floor() a hair over budget.
    while (budget_left(problem, plan.d) < -slack(problem)) {
        const auto it = std::max_element(plan.d.begin(), plan.d.end());
        --*it;
    }
    greedy_fill(problem, plan.d);
    for (int guard = 0; guard < 1000000 && improve_by_exchange(problem, plan.d); ++guard) greedy_fill(problem, plan.d);
    for (std::size_t i = 0; i < problem.n(); ++i) plan.spent += problem.costs()[i] * static_cast<double>(plan.d[i]);
    plan.objective = objective(problem, std::span<const Count>(plan.d));
    return plan;
}

}  // namespace slicetuner

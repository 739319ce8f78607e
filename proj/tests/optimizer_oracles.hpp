#pragma once

// Brute-force reference solutions used by the optimizer tests and the acceptance suite.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "slicetuner/optimizer.hpp"

namespace oracles {

using slicetuner::Count;

// Textbook evaluation of  sum_i p_i + lambda * sum_i max(0, p_i / A - 1),  A = mean_i p_i(0).
inline double reference_objective(const std::vector<slicetuner::PowerLawCurve>& curves, const std::vector<Count>& sizes,
                                  double lambda, const std::vector<double>& d) {
    const std::size_t n = curves.size();
    double A = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        A += curves[i].b * std::pow(double(sizes[i]), -curves[i].a) + curves[i].c;
    A /= double(n);
    double loss = 0.0, pen = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = curves[i].b * std::pow(double(sizes[i]) + d[i], -curves[i].a) + curves[i].c;
        loss += p;
        pen += std::max(0.0, p / A - 1.0);
    }
    return loss + lambda * pen;
}

// Minimum over every integer allocation with unit costs and sum(d) == B, n <= 3.
inline double integer_grid_minimum(const std::vector<slicetuner::PowerLawCurve>& curves,
                                   const std::vector<Count>& sizes, double lambda, int B) {
    const std::size_t n = curves.size();
    double best = std::numeric_limits<double>::infinity();
    if (n == 1) return reference_objective(curves, sizes, lambda, {double(B)});
    for (int d0 = 0; d0 <= B; ++d0) {
        if (n == 2) {
            best = std::min(best, reference_objective(curves, sizes, lambda, {double(d0), double(B - d0)}));
            continue;
        }
        for (int d1 = 0; d1 <= B - d0; ++d1)
            best = std::min(best,
                            reference_objective(curves, sizes, lambda, {double(d0), double(d1), double(B - d0 - d1)}));
    }
    return best;
}

struct RandomProblem {
    std::vector<slicetuner::PowerLawCurve> curves;
    std::vector<Count> sizes;
    double lambda = 0.0;
    int budget = 0;
};

inline RandomProblem random_problem(std::mt19937_64& rng, int max_n = 3, int max_budget = 100) {
    std::uniform_int_distribution<int> N(1, max_n), Bd(0, max_budget), S(1, 200), L(0, 3);
    std::uniform_real_distribution<double> A(0.1, 2.0), Bs(0.1, 20.0);
    static const double lambdas[] = {0.0, 0.1, 1.0, 10.0};
    RandomProblem p;
    const int n = N(rng);
    for (int i = 0; i < n; ++i) {
        p.curves.push_back({A(rng), Bs(rng), 0.0});
        p.sizes.push_back(S(rng));
    }
    p.lambda = lambdas[L(rng)];
    p.budget = Bd(rng);
    return p;
}

}  // namespace oracles

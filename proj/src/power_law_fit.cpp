#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "slicetuner/curves.hpp"
#include "slicetuner/errors.hpp"

namespace slicetuner {

double PowerLawCurve::predict(double size) const { return b * std::pow(size, -a) + c; }

double PowerLawCurve::slope(double size) const { return -a * b * std::pow(size, -a - 1.0); }

double weighted_residual(const PowerLawCurve& curve, std::span<const CurvePoint> points) {
    double sum = 0.0;
    for (const auto& p : points) {
        const double r = p.loss - curve.predict(p.size);
        sum += p.weight * r * r;
    }
    return sum;
}

namespace {

constexpr double kMinExponent = 1e-8;
constexpr double kMaxExponent = 20.0;
constexpr double kMinScale = 1e-12;

void check_points(std::span<const CurvePoint> points, std::size_t num_params) {
    if (points.size() < num_params)
        throw InsufficientData("power-law fit needs at least " + std::to_string(num_params) + " points, got " +
                               std::to_string(points.size()));
    std::set<double> sizes;
    bool any_positive = false;
    for (const auto& p : points) {
        if (!(p.size > 0.0) || !std::isfinite(p.size)) throw InvalidArgument("power-law fit: sizes must be positive");
        if (!(p.loss >= 0.0) || !std::isfinite(p.loss)) throw InvalidArgument("power-law fit: losses must be >= 0");
        if (!(p.weight > 0.0) || !std::isfinite(p.weight)) throw InvalidArgument("power-law fit: weights must be > 0");
        sizes.insert(p.size);
        any_positive = any_positive || p.loss > 0.0;
    }
    // Repeated sizes are allowed and act like added weight, but the model
    // is only identifiable with as many distinct sizes as parameters.
    if (sizes.size() < num_params)
        throw InsufficientData("power-law fit needs " + std::to_string(num_params) + " distinct sizes");
    if (!any_positive) throw DegenerateFit("power-law fit: every observed loss is zero");
}

// For fixed exponent the best scale is a weighted linear least squares solution.
double best_scale(double a, std::span<const CurvePoint> points) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& p : points) {
        const double g = std::pow(p.size, -a);
        num += p.weight * p.loss * g;
        den += p.weight * g * g;
    }
    return std::max(kMinScale, num / den);
}

// Weighted linear regression of log(loss) on log(size) over points with loss > 0.
PowerLawCurve log_linear_start(std::span<const CurvePoint> points) {
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int used = 0;
    for (const auto& p : points) {
        if (p.loss <= 0.0) continue;
        const double x = std::log(p.size);
        const double y = std::log(p.loss);
        sw += p.weight;
        sx += p.weight * x;
        sy += p.weight * y;
        sxx += p.weight * x * x;
        sxy += p.weight * x * y;
        ++used;
    }
    PowerLawCurve start;
    const double det = sw * sxx - sx * sx;
    if (used >= 2 && det > 0.0) {
        const double slope = (sw * sxy - sx * sy) / det;
        start.a = std::clamp(-slope, 1e-3, kMaxExponent);
    } else {
        start.a = 0.5;
    }
    start.b = best_scale(start.a, points);
    start.c = 0.0;
    return start;
}

}  // namespace

FitResult fit_power_law(std::span<const CurvePoint> points, const FitOptions& options) {
    const std::size_t np = options.fit_floor ? 3 : 2;
    check_points(points, np);

    FitResult result;
    result.curve = log_linear_start(points);
    double current = weighted_residual(result.curve, points);
    double damping = options.initial_damping;

    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;
    Mat jtj(np, np);
    Vec jtr(np);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter + 1;
        const auto& cur = result.curve;
        jtj.setZero();
        jtr.setZero();
        for (const auto& p : points) {
            const double g = std::pow(p.size, -cur.a);
            Vec row(np);
            row(0) = -cur.b * g * std::log(p.size);
            row(1) = g;
            if (np == 3) row(2) = 1.0;
            const double r = p.loss - cur.predict(p.size);
            jtj.noalias() += p.weight * row * row.transpose();
            jtr.noalias() += p.weight * r * row;
        }

        bool accepted = false;
        while (!accepted) {
            Mat lhs = jtj;
            for (std::size_t d = 0; d < np; ++d) lhs(d, d) += damping * std::max(jtj(d, d), 1e-300);
            const Vec step = lhs.ldlt().solve(jtr);
            if (!step.allFinite()) {
                damping *= 10.0;
                if (damping > 1e16) break;
                continue;
            }
            PowerLawCurve trial = cur;
            trial.a = std::clamp(cur.a + step(0), kMinExponent, kMaxExponent);
            trial.b = std::max(kMinScale, cur.b + step(1));
            if (np == 3) trial.c = std::max(0.0, cur.c + step(2));
            const double value = weighted_residual(trial, points);
            if (std::isfinite(value) && value < current) {
                const double change = std::sqrt((trial.a - cur.a) * (trial.a - cur.a) +
                                                (trial.b - cur.b) * (trial.b - cur.b) +
                                                (trial.c - cur.c) * (trial.c - cur.c));
                const double scale = std::sqrt(cur.a * cur.a + cur.b * cur.b + cur.c * cur.c);
                result.curve = trial;
                current = value;
                damping = std::max(damping / 10.0, 1e-15);
                accepted = true;
                if (change <= options.tolerance * (scale + options.tolerance)) {
                    result.converged = true;
                }
            } else {
                damping *= 10.0;
                if (damping > 1e16) break;
            }
        }
        // No damping level yields descent: the current iterate is stationary.
        if (!accepted) result.converged = true;
        if (result.converged) break;
    }
    result.residual = current;
    return result;
}

}  // namespace slicetuner

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slicetuner/model.hpp"
#include "slicetuner/oracle.hpp"

namespace slicetuner {

// Learning curve loss(x) = b * x^-a + c.
struct PowerLawCurve {
    double a = 1e-6;
    double b = 1.0;
    double c = 0.0;

    double predict(double size) const;
    // d predict / d size
    double slope(double size) const;
};

struct CurvePoint {
    double size = 0.0;
    double loss = 0.0;
    double weight = 1.0;
};

struct FitResult {
    PowerLawCurve curve;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;  // sum_k w_k (loss_k - predict(size_k))^2
};

struct FitOptions {
    bool fit_floor = false;
    int max_iterations = 200;
    double initial_damping = 1e-3;
    double tolerance = 1e-8;  // relative parameter change
};

// Weighted sum of squared residuals of `curve` against `points`.
double weighted_residual(const PowerLawCurve& curve, std::span<const CurvePoint> points);

// Weighted nonlinear least squares by damped Gauss-Newton, started from a
// weighted log-log linear fit. Throws InsufficientData / DegenerateFit.
FitResult fit_power_law(std::span<const CurvePoint> points, const FitOptions& options = {});

enum class Execution { serial, parallel };

struct CurveEstimationConfig {
    int num_subsets = 10;      // K
    int num_repeats = 5;       // R
    double min_fraction = 0.1;
    std::uint64_t seed = 0;
    bool fit_floor = false;

    void validate() const;
};

// K evenly spaced fractions from min_fraction to 1, ascending.
std::vector<double> subset_schedule(const CurveEstimationConfig& config);

enum class EstimationMode {
    amortized,   // every slice shrunk to the same fraction in one query: K*R queries
    exhaustive,  // one slice shrunk at a time, the rest kept whole: n*K*R queries
};

struct Observation {
    std::size_t slice = 0;
    int repeat = 0;
    double fraction = 0.0;
    Count subset_size = 0;
    double loss = 0.0;
};

struct SliceCurve {
    PowerLawCurve curve;
    bool reliable = true;
    bool fit_failed = false;
    double residual_to_signal = 0.0;
    std::vector<CurvePoint> points;  // averaged over repeats, one per fraction
};

struct CurveEstimate {
    std::vector<SliceCurve> slices;
    std::vector<Observation> observations;
    std::uint64_t queries = 0;

    std::vector<PowerLawCurve> curves() const;
};

inline constexpr double kUnreliableRatio = 0.5;
inline constexpr double kFlatExponent = 1e-6;

// Fits one curve per slice from per-fraction averaged observations. Slices are
// independent, so the parallel path fits them concurrently; results are identical.
std::vector<SliceCurve> fit_slice_curves(const std::vector<std::vector<CurvePoint>>& per_slice_points,
                                         bool fit_floor, Execution exec);

// Queries the oracle on shrunken copies of the partition and fits one curve per slice.
// Queries run concurrently only when exec is parallel and the oracle is reentrant.
CurveEstimate estimate_curves(LossOracle& oracle, const SlicePartition& partition,
                              const CurveEstimationConfig& config,
                              EstimationMode mode = EstimationMode::amortized,
                              Execution exec = Execution::parallel);

// CSV: slice_id,repeat,fraction,subset_size,loss,fitted_a,fitted_b,fitted_c,reliable_flag
void write_curve_dump(std::ostream& out, const CurveEstimate& estimate, std::span<const std::string> ids);

}  // namespace slicetuner

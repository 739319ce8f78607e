#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "slicetuner/curves.hpp"
#include "slicetuner/errors.hpp"
#include "slicetuner/parallel.hpp"
#include "slicetuner/rng.hpp"

namespace slicetuner {

void CurveEstimationConfig::validate() const {
    if (num_subsets < 2) throw InvalidArgument("curve estimation needs at least 2 subsets");
    if (num_repeats < 1) throw InvalidArgument("curve estimation needs at least 1 repeat");
    if (!(min_fraction > 0.0 && min_fraction <= 1.0))
        throw InvalidArgument("curve estimation min_fraction must lie in (0, 1]");
    if (min_fraction == 1.0) throw InvalidArgument("min_fraction = 1 leaves a single distinct subset size");
}

std::vector<double> subset_schedule(const CurveEstimationConfig& config) {
    config.validate();
    const int k = config.num_subsets;
    std::vector<double> out(static_cast<std::size_t>(k));
    const double step = (1.0 - config.min_fraction) / static_cast<double>(k - 1);
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = config.min_fraction + step * i;
    out.back() = 1.0;
    return out;
}

std::vector<PowerLawCurve> CurveEstimate::curves() const {
    std::vector<PowerLawCurve> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(s.curve);
    return out;
}

namespace {

SliceCurve fit_one(const std::vector<CurvePoint>& points, bool fit_floor) {
    SliceCurve sc;
    sc.points = points;
    try {
        FitOptions opt;
        opt.fit_floor = fit_floor;
        const auto fit = fit_power_law(points, opt);
        sc.curve = fit.curve;
        // Residual RMS against the RMS variation the curve explains around the weighted
        // mean loss; ratio > 0.5 is the same as R^2 < 0.8.
        double wsum = 0.0, mean = 0.0;
        for (const auto& p : points) {
            wsum += p.weight;
            mean += p.weight * p.loss;
        }
        mean /= wsum;
        double explained = 0.0;
        for (const auto& p : points) {
            const double e = sc.curve.predict(p.size) - mean;
            explained += p.weight * e * e;
        }
        const double rms = std::sqrt(fit.residual / wsum);
        const double signal = std::sqrt(explained / wsum);
        sc.residual_to_signal = signal > 0.0 ? rms / signal : std::numeric_limits<double>::infinity();
        sc.reliable = sc.residual_to_signal <= kUnreliableRatio;
    } catch (const InsufficientData&) {
        sc.fit_failed = true;
    } catch (const DegenerateFit&) {
        sc.fit_failed = true;
    }
    if (sc.fit_failed) {
        // Flat fallback at the last observed loss.
        sc.curve = PowerLawCurve{kFlatExponent, points.empty() ? 0.0 : points.back().loss, 0.0};
        if (!(sc.curve.b > 0.0)) sc.curve.b = 1e-12;
        sc.reliable = false;
        sc.residual_to_signal = std::numeric_limits<double>::infinity();
    }
    return sc;
}

}  // namespace

std::vector<SliceCurve> fit_slice_curves(const std::vector<std::vector<CurvePoint>>& per_slice_points,
                                         bool fit_floor, Execution exec) {
    std::vector<SliceCurve> out(per_slice_points.size());
    parallel_for(per_slice_points.size(), exec == Execution::parallel,
                 [&](std::size_t i) { out[i] = fit_one(per_slice_points[i], fit_floor); });
    return out;
}

CurveEstimate estimate_curves(LossOracle& oracle, const SlicePartition& partition,
                              const CurveEstimationConfig& config, EstimationMode mode, Execution exec) {
    config.validate();
    const std::size_t n = partition.n();
    if (oracle.num_slices() != n) throw InvalidArgument("estimate_curves: oracle and partition disagree on slice count");
    for (const auto& s : partition.slices())
        if (config.min_fraction * static_cast<double>(s.size) < 2.0)
            throw InvalidArgument("estimate_curves: slice '" + s.id + "' is too small for the smallest subset");

    const auto fractions = subset_schedule(config);
    const std::size_t k = fractions.size();
    const std::size_t r = static_cast<std::size_t>(config.num_repeats);
    const std::size_t per_pass = r * k;
    const std::size_t total = mode == EstimationMode::amortized ? per_pass : n * per_pass;

    // losses[q] is the response to query q; q = ((target * R) + repeat) * K + fraction.
    std::vector<std::vector<double>> responses(total);
    auto query_for = [&](std::size_t q) {
        const std::size_t fi = q % k;
        const std::size_t rep = (q / k) % r;
        const std::size_t target = q / per_pass;
        if (mode == EstimationMode::amortized)
            return EvalQuery::uniform_fraction(n, fractions[fi], mix_seed(config.seed, {rep, fi}));
        std::vector<double> f(n, 1.0);
        f[target] = fractions[fi];
        return EvalQuery::with_fractions(std::move(f), mix_seed(config.seed, {rep, fi, target + 1}));
    };
    const bool concurrent = exec == Execution::parallel && oracle.capabilities().reentrant;
    parallel_for(total, concurrent, [&](std::size_t q) {
        auto losses = oracle.evaluate(query_for(q));
        if (losses.size() != n) throw OracleError("oracle returned the wrong number of slice losses");
        responses[q] = std::move(losses);
    });

    CurveEstimate est;
    est.queries = total;
    est.observations.reserve(n * per_pass);
    std::vector<std::vector<CurvePoint>> points(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double size = static_cast<double>(partition[i].size);
        // Average across repeats per fraction, then merge fractions that round
        // to the same subset size (their weights add).
        std::map<Count, std::pair<double, int>> by_size;
        for (std::size_t fi = 0; fi < k; ++fi) {
            const Count subset = std::max<Count>(1, std::llround(fractions[fi] * size));
            double sum = 0.0;
            for (std::size_t rep = 0; rep < r; ++rep) {
                const std::size_t base = mode == EstimationMode::amortized ? 0 : i * per_pass;
                const double loss = responses[base + rep * k + fi][i];
                sum += loss;
                est.observations.push_back({i, static_cast<int>(rep), fractions[fi], subset, loss});
            }
            auto& slot = by_size[subset];
            slot.first += sum / static_cast<double>(r);
            slot.second += 1;
        }
        for (const auto& [subset, acc] : by_size) {
            const double mult = static_cast<double>(acc.second);
            points[i].push_back({static_cast<double>(subset), acc.first / mult, static_cast<double>(subset) * mult});
        }
    }
    est.slices = fit_slice_curves(points, config.fit_floor, exec);
    return est;
}

void write_curve_dump(std::ostream& out, const CurveEstimate& estimate, std::span<const std::string> ids) {
    out << "slice_id,repeat,fraction,subset_size,loss,fitted_a,fitted_b,fitted_c,reliable_flag\n";
    const auto prec = out.precision(17);
    for (const auto& o : estimate.observations) {
        const auto& sc = estimate.slices.at(o.slice);
        out << ids[o.slice] << ',' << o.repeat << ',' << o.fraction << ',' << o.subset_size << ',' << o.loss << ','
            << sc.curve.a << ',' << sc.curve.b << ',' << sc.curve.c << ',' << (sc.reliable ? 1 : 0) << '\n';
    }
    out.precision(prec);
}

}  // namespace slicetuner

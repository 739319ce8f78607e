#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "slicetuner/acquisition.hpp"
#include "slicetuner/errors.hpp"
#include "slicetuner/rng.hpp"

namespace slicetuner {

void LimitStrategy::validate() const {
    switch (kind) {
        case Kind::conservative:
            return;
        case Kind::moderate:
            if (!(step > 0.0)) throw InvalidArgument("moderate strategy needs a positive increment");
            return;
        case Kind::aggressive:
            if (!(step > 1.0)) throw InvalidArgument("aggressive strategy needs a multiplier > 1");
            return;
    }
}

std::string LimitStrategy::name() const {
    switch (kind) {
        case Kind::conservative:
            return "Conservative";
        case Kind::moderate:
            return "Moderate";
        case Kind::aggressive:
            return "Aggressive";
    }
    return "?";
}

double increase_limit(double limit, const LimitStrategy& strategy) {
    switch (strategy.kind) {
        case LimitStrategy::Kind::conservative:
            return limit;
        case LimitStrategy::Kind::moderate:
            return limit + strategy.step;
        case LimitStrategy::Kind::aggressive:
            return limit * strategy.step;
    }
    return limit;
}

void IterativeConfig::validate() const {
    if (min_slice_size < 1) throw InvalidArgument("minimum slice size L must be >= 1");
    if (!(initial_limit > 0.0)) throw InvalidArgument("initial limit T must be > 0");
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    strategy.validate();
}

double get_imbalance_ratio(std::span<const Count> sizes) {
    std::vector<double> d(sizes.begin(), sizes.end());
    return imbalance_ratio_of(d);
}

double get_imbalance_ratio(std::span<const double> sizes) { return imbalance_ratio_of(sizes); }

namespace {

std::vector<double> shifted(std::span<const Count> sizes, std::span<const double> delta, double x) {
    std::vector<double> out(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) out[i] = static_cast<double>(sizes[i]) + x * delta[i];
    return out;
}

constexpr int kMonotoneSamples = 64;
constexpr int kScanPoints = 4096;

}  // namespace

ChangeRatio get_change_ratio(std::span<const Count> sizes, std::span<const double> num_examples,
                             double target_ratio) {
    if (sizes.size() != num_examples.size() || sizes.empty())
        throw InvalidArgument("get_change_ratio: sizes and num_examples must have equal nonzero length");
    for (double v : num_examples)
        if (!(v >= 0.0)) throw InvalidArgument("get_change_ratio: num_examples must be >= 0");
    if (!(target_ratio >= 1.0)) throw InvalidArgument("get_change_ratio: target ratio must be >= 1");

    const double base = get_imbalance_ratio(sizes);
    const double band = std::abs(target_ratio - base);
    auto ir = [&](double x) { return imbalance_ratio_of(shifted(sizes, num_examples, x)); };
    auto within = [&](double x) { return std::abs(ir(x) - base) <= band; };

    ChangeRatio out;
    if (within(1.0)) return out;

    // Refine the boundary between a feasible lo and an infeasible hi.
    auto refine = [&](double lo, double hi) {
        for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
            const double mid = 0.5 * (lo + hi);
            (within(mid) ? lo : hi) = mid;
        }
        return lo;
    };

    bool rising = true;
    bool falling = true;
    double prev = ir(0.0);
    for (int k = 1; k < kMonotoneSamples; ++k) {
        const double v = ir(static_cast<double>(k) / (kMonotoneSamples - 1));
        rising = rising && v >= prev - 1e-12;
        falling = falling && v <= prev + 1e-12;
        prev = v;
    }
    out.monotone = rising || falling;

    if (out.monotone) {
        out.x = refine(0.0, 1.0);
    } else {
        // Largest feasible grid point, then refine towards its infeasible neighbour.
        out.x = 0.0;
        for (int k = kScanPoints - 1; k >= 1; --k) {
            const double x = static_cast<double>(k) / (kScanPoints - 1);
            if (within(x)) {
                out.x = refine(x, static_cast<double>(k + 1) / (kScanPoints - 1));
                break;
            }
        }
        if (out.x == 0.0) out.x = refine(0.0, 1.0 / (kScanPoints - 1));
    }
    out.feasible = out.x > 0.0;
    return out;
}

TopUp minimum_size_top_up(std::span<const Count> sizes, std::span<const double> costs, Count min_size,
                          double budget) {
    const std::size_t n = sizes.size();
    TopUp t;
    t.counts.assign(n, 0);
    double needed = 0.0;
    std::vector<Count> deficit(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        deficit[i] = std::max<Count>(0, min_size - sizes[i]);
        needed += costs[i] * static_cast<double>(deficit[i]);
    }
    const double slack = 1e-9 * std::max(1.0, budget);
    if (needed <= budget + slack) {
        t.counts = deficit;
        t.cost = needed;
        return t;
    }
    t.short_of_budget = true;
    const double scale = budget / needed;
    double left = budget;
    for (std::size_t i = 0; i < n; ++i) {
        t.counts[i] = static_cast<Count>(std::floor(static_cast<double>(deficit[i]) * scale));
        left -= costs[i] * static_cast<double>(t.counts[i]);
    }
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (t.counts[i] < deficit[i] && costs[i] <= left + slack) {
                ++t.counts[i];
                left -= costs[i];
                changed = true;
            }
        }
    }
    t.cost = budget - left;
    return t;
}

namespace {

double cost_of(std::span<const double> costs, std::span<const Count> counts) {
    double s = 0.0;
    for (std::size_t i = 0; i < costs.size(); ++i) s += costs[i] * static_cast<double>(counts[i]);
    return s;
}

double cheapest(std::span<const double> costs) { return *std::min_element(costs.begin(), costs.end()); }

struct LoopState {
    std::vector<Count> sizes;
    std::vector<double> costs;
    std::vector<std::string> ids;
    std::vector<Count> validation;
    double remaining = 0.0;
};

// Shared prologue: validate, top slices up to L, and seed the log.
LoopState start_run(const SlicePartition& partition, LossOracle& oracle, Count min_size, double budget,
                    AcquisitionLog& log) {
    if (!(budget >= 0.0) || !std::isfinite(budget)) throw InvalidArgument("budget must be finite and >= 0");
    if (oracle.num_slices() != partition.n()) throw InvalidArgument("oracle and partition disagree on slice count");
    LoopState st{partition.sizes(), partition.costs(), partition.ids(), partition.validation_sizes(), budget};
    log.initial_sizes = st.sizes;
    log.budget = budget;
    log.total_acquired.assign(partition.n(), 0);
    log.top_up.assign(partition.n(), 0);

    const auto top = minimum_size_top_up(st.sizes, st.costs, min_size, budget);
    if (std::any_of(top.counts.begin(), top.counts.end(), [](Count c) { return c > 0; })) {
        const auto got = oracle.acquire(top.counts);
        log.pool_limited = log.pool_limited || got.pool_limited;
        for (std::size_t i = 0; i < st.sizes.size(); ++i) {
            st.sizes[i] += got.realized[i];
            log.total_acquired[i] += got.realized[i];
        }
        log.top_up = got.realized;
        log.top_up_cost = cost_of(st.costs, got.realized);
        st.remaining = std::max(0.0, budget - log.top_up_cost);
        log.spent += log.top_up_cost;
    }
    log.top_up_short = top.short_of_budget;
    return st;
}

// Curve estimation wants min_fraction * size >= 2 for every slice.
CurveEstimationConfig adapted(const CurveEstimationConfig& base, std::span<const Count> sizes, std::uint64_t seed) {
    CurveEstimationConfig cfg = base;
    cfg.seed = seed;
    const Count smallest = *std::min_element(sizes.begin(), sizes.end());
    const double need = 2.0 / static_cast<double>(smallest);
    if (need >= 1.0)
        throw InvalidArgument("slices are too small for curve estimation; raise the minimum slice size L to >= 3");
    cfg.min_fraction = std::max(cfg.min_fraction, need);
    return cfg;
}

std::vector<double> realized_losses(LossOracle& oracle, std::size_t n, std::uint64_t seed) {
    return oracle.evaluate(EvalQuery::uniform_fraction(n, 1.0, seed));
}

void record_acquisition(LoopState& st, AcquisitionLog& log, IterationRecord& rec, const AcquireResult& got) {
    log.pool_limited = log.pool_limited || got.pool_limited;
    rec.acquired = got.realized;
    rec.spent = cost_of(st.costs, got.realized);
    for (std::size_t i = 0; i < st.sizes.size(); ++i) {
        st.sizes[i] += got.realized[i];
        log.total_acquired[i] += got.realized[i];
    }
    st.remaining = std::max(0.0, st.remaining - rec.spent);
    rec.budget_remaining = st.remaining;
    log.spent += rec.spent;
}

}  // namespace

AcquisitionLog run_iterative(const SlicePartition& partition, LossOracle& oracle,
                             const CurveEstimationConfig& curve_config, const IterativeConfig& config, double budget,
                             const RunOptions& options) {
    config.validate();
    curve_config.validate();
    AcquisitionLog log;
    auto st = start_run(partition, oracle, config.min_slice_size, budget, log);
    if (log.top_up_short) return log;

    const std::size_t n = partition.n();
    const double slack = 1e-9 * std::max(1.0, budget);
    double limit = config.initial_limit;
    double ir = get_imbalance_ratio(st.sizes);

    for (int it = 0; it < config.max_iterations && st.remaining + slack >= cheapest(st.costs); ++it) {
        const std::uint64_t iter_seed = mix_seed(curve_config.seed, {static_cast<std::uint64_t>(it)});
        auto current = partition;
        {
            std::vector<Count> grown(n);
            for (std::size_t i = 0; i < n; ++i) grown[i] = st.sizes[i] - partition[i].size;
            current = partition.grown(grown);
        }
        const auto est =
            estimate_curves(oracle, current, adapted(curve_config, st.sizes, iter_seed), options.estimation, options.exec);

        IterationRecord rec;
        rec.curves = est.curves();
        for (const auto& s : est.slices) rec.reliable.push_back(s.reliable);
        rec.sizes_before = st.sizes;
        rec.ir_before = ir;
        rec.limit = limit;

        const AllocationProblem problem(rec.curves, st.sizes, st.costs, st.remaining, config.lambda);
        const auto plan = one_shot_allocate(problem);
        rec.one_shot_plan = plan.d;

        std::vector<double> wanted(plan.d.begin(), plan.d.end());
        std::vector<Count> take = plan.d;
        const double after = get_imbalance_ratio(shifted(st.sizes, wanted, 1.0));
        if (std::abs(after - ir) > limit) {
            const double target = ir + limit * (after > ir ? 1.0 : -1.0);
            const auto cr = get_change_ratio(st.sizes, wanted, std::max(1.0, target));
            rec.change_ratio = cr.x;
            // Rounding down can push the integer plan past the limit; back off until it fits.
            for (int j = 0; j <= kScanPoints; ++j) {
                const double x = cr.x * (1.0 - static_cast<double>(j) / kScanPoints);
                for (std::size_t i = 0; i < n; ++i)
                    take[i] = static_cast<Count>(std::floor(x * wanted[i] + 1e-9));
                std::vector<double> dt(take.begin(), take.end());
                if (std::abs(get_imbalance_ratio(shifted(st.sizes, dt, 1.0)) - ir) <= limit + 1e-6) break;
            }
        }
        if (std::all_of(take.begin(), take.end(), [](Count c) { return c == 0; })) {
            log.stalled = true;
            break;
        }

        const auto got = oracle.acquire(take);
        record_acquisition(st, log, rec, got);
        rec.ir_after = get_imbalance_ratio(st.sizes);
        if (options.evaluate_each_iteration)
            rec.realized_loss = realized_losses(oracle, n, mix_seed(iter_seed, {0x5ea1ULL}));
        log.iterations.push_back(std::move(rec));

        if (got.pool_limited && std::all_of(got.realized.begin(), got.realized.end(), [](Count c) { return c == 0; }))
            break;
        limit = increase_limit(limit, config.strategy);
        ir = log.iterations.back().ir_after;
    }
    return log;
}

AcquisitionLog run_one_shot(const SlicePartition& partition, LossOracle& oracle,
                            const CurveEstimationConfig& curve_config, double lambda, Count min_slice_size,
                            double budget, const RunOptions& options) {
    curve_config.validate();
    if (min_slice_size < 1) throw InvalidArgument("minimum slice size L must be >= 1");
    AcquisitionLog log;
    auto st = start_run(partition, oracle, min_slice_size, budget, log);
    if (log.top_up_short) return log;
    const std::size_t n = partition.n();
    if (st.remaining + 1e-9 * std::max(1.0, budget) < cheapest(st.costs)) return log;

    const std::uint64_t seed = mix_seed(curve_config.seed, {0ULL});
    std::vector<Count> grown(n);
    for (std::size_t i = 0; i < n; ++i) grown[i] = st.sizes[i] - partition[i].size;
    const auto est = estimate_curves(oracle, partition.grown(grown), adapted(curve_config, st.sizes, seed),
                                     options.estimation, options.exec);

    IterationRecord rec;
    rec.curves = est.curves();
    for (const auto& s : est.slices) rec.reliable.push_back(s.reliable);
    rec.sizes_before = st.sizes;
    rec.ir_before = get_imbalance_ratio(st.sizes);
    rec.limit = std::numeric_limits<double>::infinity();
    const AllocationProblem problem(rec.curves, st.sizes, st.costs, st.remaining, lambda);
    const auto plan = one_shot_allocate(problem);
    rec.one_shot_plan = plan.d;
    const auto got = oracle.acquire(plan.d);
    record_acquisition(st, log, rec, got);
    rec.ir_after = get_imbalance_ratio(st.sizes);
    if (options.evaluate_each_iteration) rec.realized_loss = realized_losses(oracle, n, mix_seed(seed, {0x5ea1ULL}));
    log.iterations.push_back(std::move(rec));
    return log;
}

AllocationPlan uniform_allocate(const SlicePartition& partition, double budget) {
    if (!(budget >= 0.0)) throw InvalidArgument("budget must be >= 0");
    const auto costs = partition.costs();
    const double per_round = std::accumulate(costs.begin(), costs.end(), 0.0);
    const double slack = 1e-9 * std::max(1.0, budget);
    const Count each = static_cast<Count>(std::floor(budget / per_round + 1e-12));
    AllocationPlan plan;
    plan.d.assign(partition.n(), each);
    double left = budget - cost_of(costs, plan.d);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < costs.size(); ++i) {
            if (costs[i] <= left + slack) {
                ++plan.d[i];
                left -= costs[i];
                changed = true;
            }
        }
    }
    plan.spent = cost_of(costs, plan.d);
    return plan;
}

AllocationPlan water_filling_allocate(const SlicePartition& partition, double budget) {
    if (!(budget >= 0.0)) throw InvalidArgument("budget must be >= 0");
    const auto sizes = partition.sizes();
    const auto costs = partition.costs();
    const std::size_t n = sizes.size();
    const double slack = 1e-9 * std::max(1.0, budget);
    auto spend_at = [&](double level) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += costs[i] * std::max(0.0, level - static_cast<double>(sizes[i]));
        return s;
    };
    double lo = static_cast<double>(*std::min_element(sizes.begin(), sizes.end()));
    double hi = static_cast<double>(*std::max_element(sizes.begin(), sizes.end())) + budget / cheapest(costs) + 1.0;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (spend_at(mid) <= budget ? lo : hi) = mid;
    }
    AllocationPlan plan;
    plan.d.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        plan.d[i] = static_cast<Count>(std::floor(std::max(0.0, lo - static_cast<double>(sizes[i])) + 1e-9));
    while (cost_of(costs, plan.d) > budget + slack) {
        const auto it = std::max_element(plan.d.begin(), plan.d.end());
        --*it;
    }
    // Residual goes to whichever affordable slice is currently smallest.
    double left = budget - cost_of(costs, plan.d);
    while (true) {
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (costs[i] > left + slack) continue;
            if (pick == n || sizes[i] + plan.d[i] < sizes[pick] + plan.d[pick]) pick = i;
        }
        if (pick == n) break;
        ++plan.d[pick];
        left -= costs[pick];
    }
    plan.spent = cost_of(costs, plan.d);
    return plan;
}

void write_acquisition_log(std::ostream& out, const AcquisitionLog& log, std::span<const std::string> ids) {
    out << "iteration,slice_id,size_before,acquired,limit_T,ir_before,ir_after,budget_remaining,realized_loss\n";
    const auto prec = out.precision(17);
    const std::size_t n = ids.size();
    if (std::any_of(log.top_up.begin(), log.top_up.end(), [](Count c) { return c > 0; })) {
        std::vector<Count> after = log.initial_sizes;
        for (std::size_t i = 0; i < n; ++i) after[i] += log.top_up[i];
        const double ir0 = log.initial_sizes.empty() || *std::min_element(log.initial_sizes.begin(), log.initial_sizes.end()) < 1
                               ? std::numeric_limits<double>::quiet_NaN()
                               : get_imbalance_ratio(log.initial_sizes);
        for (std::size_t i = 0; i < n; ++i)
            out << 0 << ',' << ids[i] << ',' << log.initial_sizes[i] << ',' << log.top_up[i] << ",," << ir0 << ','
                << get_imbalance_ratio(after) << ',' << (log.budget - log.top_up_cost) << ",\n";
    }
    for (std::size_t it = 0; it < log.iterations.size(); ++it) {
        const auto& rec = log.iterations[it];
        for (std::size_t i = 0; i < n; ++i) {
            out << (it + 1) << ',' << ids[i] << ',' << rec.sizes_before[i] << ',' << rec.acquired[i] << ','
                << rec.limit << ',' << rec.ir_before << ',' << rec.ir_after << ',' << rec.budget_remaining << ',';
            if (i < rec.realized_loss.size()) out << rec.realized_loss[i];
            out << '\n';
        }
    }
    out.precision(prec);
}

}  // namespace slicetuner

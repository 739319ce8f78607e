#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slicetuner/model.hpp"

namespace slicetuner {

struct OracleCapabilities {
    bool reentrant = false;  // evaluate() may be called concurrently
    bool stateful = true;    // acquire() changes what evaluate() returns
};

// One logical loss query. Exactly one of fractions / sizes is set.
// fractions are relative to each slice's current training size.
struct EvalQuery {
    std::optional<std::vector<double>> fractions;
    std::optional<std::vector<Count>> sizes;
    std::uint64_t seed = 0;

    static EvalQuery uniform_fraction(std::size_t n, double f, std::uint64_t seed);
    static EvalQuery with_fractions(std::vector<double> f, std::uint64_t seed);
    static EvalQuery with_sizes(std::vector<Count> s, std::uint64_t seed);
};

struct AcquireResult {
    std::vector<Count> realized;
    bool pool_limited = false;
};

// Anything that trains on per-slice data and reports per-slice validation losses.
class LossOracle {
public:
    virtual ~LossOracle() = default;

    virtual std::size_t num_slices() const = 0;
    virtual OracleCapabilities capabilities() const = 0;
    virtual std::vector<double> evaluate(const EvalQuery& query) = 0;
    virtual AcquireResult acquire(std::span<const Count> counts) = 0;
};

struct SliceTruth {
    double a = 0.5;
    double b = 1.0;
    double c = 0.0;
};

struct SyntheticWorld {
    std::vector<std::string> ids;
    std::vector<SliceTruth> truth;
    std::vector<Count> initial_sizes;
    std::vector<double> influence;  // n x n row-major, influence[j*n + l] acts on slice j, diagonal zero
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::optional<Count>> pool_limit;  // max examples acquirable per slice, empty = unlimited
    double influence_max = 0.2;

    std::size_t n() const noexcept { return truth.size(); }
    void validate() const;
    double kappa(std::size_t j, std::size_t l) const { return influence.empty() ? 0.0 : influence[j * n() + l]; }
};

// Seeded simulator: power-law ground truth, linear imbalance-ratio influence, Gaussian noise.
// evaluate() is read-only and reentrant. acquire() must not overlap any other call.
class SyntheticOracle final : public LossOracle {
public:
    explicit SyntheticOracle(SyntheticWorld world);

    std::size_t num_slices() const override { return world_.n(); }
    OracleCapabilities capabilities() const override { return {true, true}; }
    std::vector<double> evaluate(const EvalQuery& query) override;
    AcquireResult acquire(std::span<const Count> counts) override;

    // Losses at explicit sizes. Noise uses (world seed, query seed, slice index).
    std::vector<double> losses_at(std::span<const Count> sizes, std::uint64_t query_seed) const;

    const SyntheticWorld& world() const noexcept { return world_; }
    const std::vector<Count>& sizes() const noexcept { return sizes_; }
    const std::vector<Count>& acquired() const noexcept { return acquired_; }

    // Stable hash of world parameters and current sizes.
    std::uint64_t digest() const;

private:
    SyntheticWorld world_;
    std::vector<Count> sizes_;
    std::vector<Count> acquired_;
    double reference_ir_;
};

// Forwards to another oracle and counts evaluate() calls.
class CountingOracle final : public LossOracle {
public:
    explicit CountingOracle(LossOracle& inner) : inner_(inner) {}

    std::size_t num_slices() const override { return inner_.num_slices(); }
    OracleCapabilities capabilities() const override { return inner_.capabilities(); }
    std::vector<double> evaluate(const EvalQuery& query) override {
        queries_.fetch_add(1, std::memory_order_relaxed);
        return inner_.evaluate(query);
    }
    AcquireResult acquire(std::span<const Count> counts) override { return inner_.acquire(counts); }

    std::uint64_t queries() const noexcept { return queries_.load(); }

private:
    LossOracle& inner_;
    std::atomic<std::uint64_t> queries_{0};
};

}  // namespace slicetuner

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "slicetuner/errors.hpp"
#include "slicetuner/oracle.hpp"
#include "slicetuner/rng.hpp"

namespace slicetuner {

EvalQuery EvalQuery::uniform_fraction(std::size_t n, double f, std::uint64_t seed) {
    return with_fractions(std::vector<double>(n, f), seed);
}

EvalQuery EvalQuery::with_fractions(std::vector<double> f, std::uint64_t seed) {
    EvalQuery q;
    q.fractions = std::move(f);
    q.seed = seed;
    return q;
}

EvalQuery EvalQuery::with_sizes(std::vector<Count> s, std::uint64_t seed) {
    EvalQuery q;
    q.sizes = std::move(s);
    q.seed = seed;
    return q;
}

void SyntheticWorld::validate() const {
    const std::size_t k = n();
    if (k == 0) throw InvalidArgument("synthetic world needs at least one slice");
    if (ids.size() != k || initial_sizes.size() != k)
        throw InvalidArgument("synthetic world: ids, truth and initial sizes must have equal length");
    if (!influence.empty() && influence.size() != k * k)
        throw InvalidArgument("synthetic world: influence matrix must be n x n");
    if (!pool_limit.empty() && pool_limit.size() != k)
        throw InvalidArgument("synthetic world: pool limit list must have one entry per slice");
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("synthetic world: noise sigma must be >= 0");
    for (std::size_t j = 0; j < k; ++j) {
        const auto& t = truth[j];
        if (!(t.a > 0.0) || !(t.b > 0.0) || !(t.c >= 0.0))
            throw InvalidArgument("synthetic world: slice '" + ids[j] + "' needs a > 0, b > 0, c >= 0");
        if (initial_sizes[j] < 1) throw InvalidArgument("synthetic world: initial sizes must be >= 1");
        for (std::size_t l = 0; l < k; ++l) {
            const double kap = kappa(j, l);
            if (j == l && kap != 0.0) throw InvalidArgument("synthetic world: influence diagonal must be zero");
            if (std::abs(kap) > influence_max)
                throw InvalidArgument("synthetic world: influence entry exceeds the configured bound");
        }
    }
}

namespace {

double ratio_of(std::span<const Count> sizes) {
    std::vector<double> d(sizes.begin(), sizes.end());
    return imbalance_ratio_of(d);
}

}  // namespace

SyntheticOracle::SyntheticOracle(SyntheticWorld world)
    : world_(std::move(world)), sizes_(world_.initial_sizes), acquired_(world_.n(), 0) {
    world_.validate();
    reference_ir_ = ratio_of(sizes_);
}

std::vector<double> SyntheticOracle::losses_at(std::span<const Count> sizes, std::uint64_t query_seed) const {
    const std::size_t k = world_.n();
    if (sizes.size() != k) throw InvalidArgument("synthetic oracle: query has wrong slice count");
    for (Count s : sizes)
        if (s < 1) throw InvalidArgument("synthetic oracle: query sizes must be >= 1");

    const double drift = ratio_of(sizes) - reference_ir_;
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto& t = world_.truth[j];
        double loss = t.b * std::pow(static_cast<double>(sizes[j]), -t.a) + t.c;
        if (drift != 0.0) {
            double row = 0.0;
            for (std::size_t l = 0; l < k; ++l) row += world_.kappa(j, l);
            loss += row * drift;
        }
        if (world_.noise_sigma > 0.0) {
            std::mt19937_64 gen(mix_seed(world_.seed, {query_seed, j}));
            std::normal_distribution<double> noise(0.0, world_.noise_sigma);
            loss += noise(gen);
        }
        out[j] = std::max(0.0, loss);
    }
    return out;
}

std::vector<double> SyntheticOracle::evaluate(const EvalQuery& query) {
    const std::size_t k = world_.n();
    if (query.sizes) {
        for (std::size_t j = 0; j < std::min(k, query.sizes->size()); ++j)
            if ((*query.sizes)[j] > sizes_[j])
                throw PoolExhausted(world_.ids[j], "synthetic oracle: slice '" + world_.ids[j] +
                                                       "' has fewer examples than requested");
        return losses_at(*query.sizes, query.seed);
    }
    if (!query.fractions) throw InvalidArgument("synthetic oracle: query carries neither sizes nor fractions");
    const auto& f = *query.fractions;
    if (f.size() != k) throw InvalidArgument("synthetic oracle: query has wrong slice count");
    std::vector<Count> sizes(k);
    for (std::size_t j = 0; j < k; ++j) {
        if (!(f[j] > 0.0 && f[j] <= 1.0)) throw InvalidArgument("synthetic oracle: fractions must lie in (0, 1]");
        sizes[j] = std::max<Count>(1, std::llround(f[j] * static_cast<double>(sizes_[j])));
    }
    return losses_at(sizes, query.seed);
}

AcquireResult SyntheticOracle::acquire(std::span<const Count> counts) {
    const std::size_t k = world_.n();
    if (counts.size() != k) throw InvalidArgument("synthetic oracle: acquire has wrong slice count");
    AcquireResult r;
    r.realized.assign(k, 0);
    for (std::size_t j = 0; j < k; ++j) {
        if (counts[j] < 0) throw InvalidArgument("synthetic oracle: negative acquisition count");
        Count grant = counts[j];
        if (!world_.pool_limit.empty() && world_.pool_limit[j]) {
            const Count left = std::max<Count>(0, *world_.pool_limit[j] - acquired_[j]);
            if (grant > left) {
                grant = left;
                r.pool_limited = true;
            }
        }
        r.realized[j] = grant;
        sizes_[j] += grant;
        acquired_[j] += grant;
    }
    return r;
}

std::uint64_t SyntheticOracle::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& t : world_.truth) {
        feed(&t.a, sizeof t.a);
        feed(&t.b, sizeof t.b);
        feed(&t.c, sizeof t.c);
    }
    for (double kap : world_.influence) feed(&kap, sizeof kap);
    feed(&world_.noise_sigma, sizeof world_.noise_sigma);
    feed(&world_.seed, sizeof world_.seed);
    for (Count s : sizes_) feed(&s, sizeof s);
    return h;
}

}  // namespace slicetuner

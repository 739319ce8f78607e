#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "slicetuner/curves.hpp"
#include "slicetuner/errors.hpp"

using namespace slicetuner;

namespace {

// Brute-force (a, b) search: a coarse pass over the whole box, then a fine pass
// around the best coarse cell. Independent of the fitter.
double grid_oracle_residual(const std::vector<CurvePoint>& pts) {
    auto residual = [&](double a, double b) {
        double r = 0.0;
        for (const auto& p : pts) {
            const double e = p.loss - b * std::pow(p.size, -a);
            r += p.weight * e * e;
        }
        return r;
    };
    double best = INFINITY, ba = 0, bb = 0;
    for (int i = 0; i <= 600; ++i)
        for (int j = 0; j <= 800; ++j) {
            const double a = 0.01 + (3.0 - 0.01) * i / 600.0;
            const double b = 0.1 + (20.0 - 0.1) * j / 800.0;
            const double r = residual(a, b);
            if (r < best) best = r, ba = a, bb = b;
        }
    const double da = (3.0 - 0.01) / 600.0, db = (20.0 - 0.1) / 800.0;
    for (int i = -200; i <= 200; ++i)
        for (int j = -200; j <= 200; ++j) {
            const double a = std::clamp(ba + da * i / 200.0, 0.01, 3.0);
            const double b = std::clamp(bb + db * j / 200.0, 0.1, 20.0);
            best = std::min(best, residual(a, b));
        }
    return best;
}

std::vector<CurvePoint> sampled(double a, double b, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, sigma);
    std::vector<CurvePoint> pts;
    for (int s = 10; s <= 100; s += 10) {
        const double y = b * std::pow(s, -a) + (sigma > 0 ? N(rng) : 0.0);
        pts.push_back({static_cast<double>(s), std::max(0.0, y), static_cast<double>(s)});
    }
    return pts;
}

}  // namespace

TEST_SUITE("curves") {

TEST_CASE("subset schedule") {
    CurveEstimationConfig c;
    c.num_subsets = 10;
    c.min_fraction = 0.1;
    const auto s = subset_schedule(c);
    REQUIRE(s.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(s[i] == doctest::Approx(0.1 * (i + 1)).epsilon(1e-12));
    CHECK(s.back() == 1.0);
    c.num_subsets = 2;
    c.min_fraction = 0.5;
    CHECK(subset_schedule(c) == std::vector<double>{0.5, 1.0});
    c.num_subsets = 4;
    c.min_fraction = 0.25;
    CHECK(subset_schedule(c) == std::vector<double>{0.25, 0.5, 0.75, 1.0});
    c.num_subsets = 1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.num_subsets = 3;
    c.min_fraction = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("two exact points") {
    const std::vector<CurvePoint> pts{{1, 2.0, 1}, {4, 1.0, 1}};
    const auto f = fit_power_law(pts);
    CHECK(f.curve.a == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(f.curve.b == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(f.curve.c == 0.0);
    CHECK(f.converged);
}

TEST_CASE("noiseless identifiability") {
    const auto f = fit_power_law(sampled(0.8, 5.0, 0.0, 0));
    CHECK(std::abs(f.curve.a - 0.8) / 0.8 < 1e-4);
    CHECK(std::abs(f.curve.b - 5.0) / 5.0 < 1e-4);
}

TEST_CASE("noisy fit is no worse than the grid oracle") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto pts = sampled(0.5, 3.0, 0.05, seed);
        const auto f = fit_power_law(pts);
        const double oracle = grid_oracle_residual(pts);
        CHECK(f.residual <= 1.01 * oracle + 1e-15);
        CHECK(f.residual == doctest::Approx(weighted_residual(f.curve, pts)).epsilon(1e-12));
    }
}

TEST_CASE("floor variant recovers c") {
    std::vector<CurvePoint> pts;
    for (int s = 10; s <= 200; s += 10) pts.push_back({double(s), 4.0 * std::pow(s, -0.7) + 0.2, double(s)});
    FitOptions o;
    o.fit_floor = true;
    const auto f = fit_power_law(pts, o);
    CHECK(f.curve.a == doctest::Approx(0.7).epsilon(1e-4));
    CHECK(f.curve.b == doctest::Approx(4.0).epsilon(1e-4));
    CHECK(f.curve.c == doctest::Approx(0.2).epsilon(1e-4));
}

TEST_CASE("doubling a weight equals duplicating the point") {
    auto pts = sampled(0.6, 2.0, 0.03, 9);
    auto dup = pts;
    dup.push_back(pts[3]);
    auto heavy = pts;
    heavy[3].weight *= 2.0;
    const auto f1 = fit_power_law(dup);
    const auto f2 = fit_power_law(heavy);
    CHECK(f1.curve.a == doctest::Approx(f2.curve.a).epsilon(1e-9));
    CHECK(f1.curve.b == doctest::Approx(f2.curve.b).epsilon(1e-9));
}

TEST_CASE("fit errors") {
    CHECK_THROWS_AS(fit_power_law(std::vector<CurvePoint>{{10, 1.0, 1}}), InsufficientData);
    CHECK_THROWS_AS(fit_power_law(std::vector<CurvePoint>{{10, 1.0, 1}, {10, 0.9, 1}}), InsufficientData);
    FitOptions o;
    o.fit_floor = true;
    CHECK_THROWS_AS(fit_power_law(std::vector<CurvePoint>{{10, 1.0, 1}, {20, 0.8, 1}}, o), InsufficientData);
    CHECK_THROWS_AS(fit_power_law(std::vector<CurvePoint>{{10, 0.0, 1}, {20, 0.0, 1}}), DegenerateFit);
    CHECK_THROWS_AS(fit_power_law(std::vector<CurvePoint>{{0, 1.0, 1}, {20, 0.8, 1}}), InvalidArgument);
}

TEST_CASE("fitted curves are strictly decreasing") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto f = fit_power_law(sampled(0.3 + 0.05 * double(seed), 1.0 + double(seed) * 0.5, 0.05, seed));
        double prev = f.curve.predict(1.0);
        for (double x = 2.0; x < 1e5; x *= 1.7) {
            const double y = f.curve.predict(x);
            CHECK(y < prev);
            prev = y;
        }
    }
}

TEST_CASE("query budget of the two estimation modes") {
    std::vector<SliceTruth> truth(10, {0.5, 2.0, 0.0});
    std::vector<Count> sizes(10, 200);
    SyntheticOracle world(fixtures::world(truth, sizes, 0.01, 4));
    const auto part = fixtures::partition(sizes);
    CurveEstimationConfig cfg;  // K = 10, R = 5
    {
        CountingOracle counting(world);
        const auto est = estimate_curves(counting, part, cfg, EstimationMode::amortized);
        CHECK(counting.queries() == 50);
        CHECK(est.queries == 50);
    }
    {
        CountingOracle counting(world);
        estimate_curves(counting, part, cfg, EstimationMode::exhaustive);
        CHECK(counting.queries() == 500);
    }
    SyntheticOracle single(fixtures::world({{0.5, 2.0, 0.0}}, {200}, 0.01, 4));
    const auto one = fixtures::partition({200});
    CountingOracle c1(single), c2(single);
    estimate_curves(c1, one, cfg, EstimationMode::amortized);
    estimate_curves(c2, one, cfg, EstimationMode::exhaustive);
    CHECK(c1.queries() == c2.queries());
}

TEST_CASE("noiseless round trip through the oracle") {
    const std::vector<SliceTruth> truth{{0.5, 5.0, 0}, {0.8, 2.0, 0}, {0.3, 1.0, 0}};
    const std::vector<Count> sizes{1000, 1500, 800};
    SyntheticOracle world(fixtures::world(truth, sizes));
    const auto est = estimate_curves(world, fixtures::partition(sizes), CurveEstimationConfig{});
    for (std::size_t i = 0; i < truth.size(); ++i) {
        CHECK(std::abs(est.slices[i].curve.a - truth[i].a) / truth[i].a < 1e-3);
        CHECK(std::abs(est.slices[i].curve.b - truth[i].b) / truth[i].b < 1e-3);
        CHECK(est.slices[i].reliable);
    }
}

TEST_CASE("relative ordering survives noise") {
    const std::vector<SliceTruth> truth{{0.5, 5.0, 0}, {0.5, 2.0, 0}};
    const std::vector<Count> sizes{500, 500};
    SyntheticOracle world(fixtures::world(truth, sizes, 0.02, 77));
    CurveEstimationConfig cfg;
    cfg.seed = 5;
    const auto est = estimate_curves(world, fixtures::partition(sizes), cfg);
    for (double x = 50; x <= 5000; x += 1.0)
        REQUIRE(est.slices[0].curve.predict(x) > est.slices[1].curve.predict(x));
}

TEST_CASE("estimation is deterministic and execution-independent") {
    const std::vector<SliceTruth> truth{{0.5, 5.0, 0}, {0.4, 2.0, 0}, {0.7, 3.0, 0}, {0.6, 1.5, 0}};
    const std::vector<Count> sizes{300, 120, 60, 500};
    SyntheticOracle world(fixtures::world(truth, sizes, 0.03, 12));
    const auto part = fixtures::partition(sizes);
    CurveEstimationConfig cfg;
    cfg.seed = 99;
    for (auto mode : {EstimationMode::amortized, EstimationMode::exhaustive}) {
        const auto a = estimate_curves(world, part, cfg, mode, Execution::serial);
        const auto b = estimate_curves(world, part, cfg, mode, Execution::parallel);
        const auto c = estimate_curves(world, part, cfg, mode, Execution::parallel);
        for (std::size_t i = 0; i < truth.size(); ++i) {
            CHECK(a.slices[i].curve.a == b.slices[i].curve.a);
            CHECK(a.slices[i].curve.b == b.slices[i].curve.b);
            CHECK(b.slices[i].curve.a == c.slices[i].curve.a);
            CHECK(a.slices[i].residual_to_signal == b.slices[i].residual_to_signal);
        }
        REQUIRE(a.observations.size() == b.observations.size());
        for (std::size_t k = 0; k < a.observations.size(); ++k) CHECK(a.observations[k].loss == b.observations[k].loss);
    }
    cfg.seed = 100;
    const auto d = estimate_curves(world, part, cfg);
    const auto e = estimate_curves(world, part, CurveEstimationConfig{.seed = 99});
    CHECK(d.slices[0].curve.a != e.slices[0].curve.a);
}

TEST_CASE("noisy small slices are flagged unreliable") {
    const std::vector<SliceTruth> truth{{0.3, 1.0, 0}, {0.3, 1.0, 0}};
    const std::vector<Count> sizes{20, 2000};
    SyntheticOracle world(fixtures::world(truth, sizes, 0.3, 3));
    CurveEstimationConfig cfg;
    cfg.num_repeats = 1;
    const auto est = estimate_curves(world, fixtures::partition(sizes), cfg);
    CHECK_FALSE(est.slices[0].reliable);
    CHECK(est.slices[0].residual_to_signal > kUnreliableRatio);
    for (const auto& sc : est.slices) CHECK(std::isfinite(sc.curve.predict(100.0)));
}

TEST_CASE("flat fallback when a slice cannot be fitted") {
    std::vector<std::vector<CurvePoint>> pts{{{10, 0.0, 10}, {20, 0.0, 20}}, {{10, 1.0, 10}, {40, 0.5, 40}}};
    const auto fits = fit_slice_curves(pts, false, Execution::serial);
    CHECK(fits[0].fit_failed);
    CHECK_FALSE(fits[0].reliable);
    CHECK(fits[0].curve.a == kFlatExponent);
    CHECK(fits[0].curve.b > 0.0);
    CHECK_FALSE(fits[1].fit_failed);
}

TEST_CASE("curve dump") {
    SyntheticOracle world(fixtures::world({{0.5, 1.0, 0}}, {100}));
    CurveEstimationConfig cfg;
    cfg.num_subsets = 2;
    cfg.num_repeats = 1;
    cfg.min_fraction = 0.5;
    const auto est = estimate_curves(world, fixtures::partition({100}), cfg);
    std::ostringstream out;
    const std::vector<std::string> ids{"s0"};
    write_curve_dump(out, est, ids);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "slice_id,repeat,fraction,subset_size,loss,fitted_a,fitted_b,fitted_c,reliable_flag");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2);
}

}

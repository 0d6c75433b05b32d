#include "doctest.h"

#include <cmath>
#include <vector>

#include "sll/estimators.hpp"

using namespace sll;

namespace {

const Model kBinaryGw = GaltonWatsonModel{OffspringDistribution::binary()};

Model binary_brw(int d, int L)
{
    return BranchingRandomWalkModel{OffspringDistribution::binary(), SpreadOutKernel::uniform_box(d, L)};
}

ReplicatePlan plan(std::uint64_t seed, std::uint64_t replicates, unsigned workers = 1)
{
    return ReplicatePlan{.seed = seed, .replicates = replicates, .workers = workers};
}

bool within_sigmas(double value, double target, double se, double k = 4.0)
{
    return std::abs(value - target) <= k * se;
}

}  // namespace

TEST_CASE("survival curve")
{
    const std::vector<double> ns{0, 10, 50, 100};
    const auto curve = estimate_survival_curve(kBinaryGw, ns, plan(1, 1'000'000));
    REQUIRE(curve.points.size() == 4);
    CHECK(curve.points[0].theta.value == 1.0);
    const auto law = OffspringDistribution::binary();
    for (std::size_t i = 1; i < ns.size(); ++i)
    {
        const auto& p = curve.points[i];
        CHECK(p.theta.value <= curve.points[i - 1].theta.value);
        const double exact = gw_survival_exact(law, static_cast<std::int64_t>(ns[i]));
        CHECK(within_sigmas(p.theta.value, exact, p.theta.std_error));
        CHECK(p.theta.ci_low <= p.theta.value);
        CHECK(p.theta.ci_high >= p.theta.value);
        CHECK(p.n_theta.value == doctest::Approx(ns[i] * p.theta.value));
        CHECK(p.theta.n_effective == p.survivors);
    }
    CHECK(curve.cap_hits == 0);
}

TEST_CASE("zero survivors are flagged")
{
    const Model dead = GaltonWatsonModel{OffspringDistribution({1.0})};
    const std::vector<double> ns{5};
    const auto curve = estimate_survival_curve(dead, ns, plan(2, 1000));
    CHECK(curve.points[0].degenerate);
    CHECK(curve.points[0].theta.ci_low == 0.0);
    CHECK(curve.points[0].theta.ci_high > 0.0);
}

TEST_CASE("scaled moments")
{
    const NormalizationContext ctx{{}, 100};
    SUBCASE("first moment is A")
    {
        const auto e = estimate_scaled_moments(kBinaryGw, ctx, MomentSpec{{1.0}, {1}, {}}, plan(3, 200000));
        CHECK(e.predicted == 1.0);
        CHECK(within_sigmas(e.estimate.value, 1.0, e.estimate.std_error));
    }
    SUBCASE("agrees with the exact finite-n joint moments")
    {
        const std::vector<MomentSpec> specs{{{1.0}, {2}, {}},
                                            {{1.0}, {3}, {}},
                                            {{0.5, 1.0}, {1, 1}, {}},
                                            {{1.0, 2.0}, {1, 1}, {}}};
        const auto est = estimate_scaled_moments(kBinaryGw, ctx, specs, plan(4, 400000));
        const auto law = OffspringDistribution::binary();
        for (std::size_t s = 0; s < specs.size(); ++s)
        {
            MomentSpec gens = specs[s];
            for (auto& t : gens.times)
                t = std::floor(t * 100);
            const double exact = 100 * gw_joint_moments_exact(law, gens)
                                 / std::pow(100.0, specs[s].total_order());
            CHECK(within_sigmas(est[s].estimate.value, exact, est[s].estimate.std_error));
        }
        CHECK(std::isnan(est[0].jackknife_stderr));
        CHECK(std::isfinite(est[1].jackknife_stderr));
        CHECK_FALSE(est[1].heavy_tail);
    }
    CHECK_THROWS_AS(estimate_scaled_moments(kBinaryGw, ctx, MomentSpec{{1.0}, {0}, {}}, plan(1, 10)),
                    std::invalid_argument);
    CHECK_THROWS(estimate_scaled_moments(kBinaryGw, NormalizationContext{{}, 0},
                                         MomentSpec{{1.0}, {1}, {}}, plan(1, 10)));
}

TEST_CASE("fourier estimator")
{
    const auto brw = binary_brw(2, 1);
    const NormalizationContext ctx{{1.0, 1.0, 1.5}, 20};
    SUBCASE("zero wavevector reduces to the scaled moment on the same pool")
    {
        MomentSpec zero{{1.0, 1.0}, {1, 1}, {{0.0, 0.0}, {0.0, 0.0}}};
        const auto f = estimate_fourier_rpoint(brw, ctx, zero, plan(5, 20000));
        const auto m = estimate_scaled_moments(brw, ctx, MomentSpec{{1.0}, {2}, {}}, plan(5, 20000));
        CHECK(f.real.value == doctest::Approx(m.estimate.value).epsilon(1e-12));
        CHECK(f.imag.value == 0.0);
    }
    SUBCASE("two-point function at |k|^2 = 2d")
    {
        MomentSpec one{{1.0}, {1}, {{std::sqrt(2.0), std::sqrt(2.0)}}};
        const auto f = estimate_fourier_rpoint(brw, ctx, one, plan(6, 200000));
        CHECK(f.predicted == doctest::Approx(std::exp(-1.0)));
        // Finite n: E[N_n] D^(k / sqrt(v n))^n exactly.
        const auto kernel = SpreadOutKernel::uniform_box(2, 1);
        const double q = std::sqrt(2.0) / std::sqrt(1.5 * 20);
        const double exact = std::pow(kernel_fourier(kernel, std::vector<double>{q, q}), 20);
        CHECK(within_sigmas(f.real.value, exact, f.real.std_error));
        CHECK(within_sigmas(f.imag.value, 0.0, f.imag.std_error));
    }
    CHECK_THROWS(estimate_fourier_rpoint(kBinaryGw, ctx, MomentSpec{{1.0}, {1}, {{0.1}}}, plan(1, 10)));
    MomentSpec high{{1.0}, {3}, {{0.1, 0.1}}};
    CHECK_THROWS_AS(estimate_fourier_rpoint(brw, ctx, high, plan(1, 10)), UnsupportedOrderError);
}

TEST_CASE("conditional moments")
{
    const NormalizationContext ctx{{}, 100};
    const auto e = estimate_conditional_moments(kBinaryGw, ctx, 1.0, MomentSpec{{1.0}, {1}, {}},
                                                plan(7, 400000));
    CHECK(e.predicted == doctest::Approx(0.5));
    // E[N_n / n | N_n > 0] = 1 / (n theta_n) exactly.
    const double exact = 1.0 / (100 * gw_survival_exact(OffspringDistribution::binary(), 100));
    CHECK(within_sigmas(e.estimate.value, exact, e.estimate.std_error));
    CHECK(e.estimate.n_effective == e.survivors);
    CHECK(e.unconditional == doctest::Approx(e.estimate.value * e.survival).epsilon(1e-12));
    CHECK_FALSE(e.low_power);

    const auto trivial = estimate_conditional_moments(kBinaryGw, ctx, 1.0, MomentSpec{{1.0}, {0}, {}},
                                                      plan(7, 10000));
    CHECK(trivial.estimate.value == 1.0);
    CHECK(trivial.predicted == 1.0);

    const auto few = estimate_conditional_moments(kBinaryGw, ctx, 1.0, MomentSpec{{1.0}, {1}, {}},
                                                  plan(8, 1000));
    CHECK(few.low_power);
    CHECK_THROWS(estimate_conditional_moments(kBinaryGw, ctx, 1.0, MomentSpec{{0.5}, {1}, {}}, plan(1, 10)));
}

TEST_CASE("feller conditional moments")
{
    const auto e = feller_conditional_moment_mc(1.0, MomentSpec{{1.0, 1.5}, {1, 1}, {}}, plan(9, 400000));
    // X_1 ~ Exp(mean 1/2) and E[X_1.5 | X_1] = X_1, so the target is E[X_1^2] = 1/2.
    CHECK(within_sigmas(e.value, 0.5, e.std_error));
    const auto sq = feller_conditional_moment_mc(1.0, MomentSpec{{1.5}, {2}, {}}, plan(10, 400000));
    // E[X_1.5^2] = E[X_1^2 + X_1 / 2] = 1/2 + 1/4.
    CHECK(within_sigmas(sq.value, 0.75, sq.std_error));
}

TEST_CASE("yaglom")
{
    const auto y = estimate_yaglom(kBinaryGw, 100, 0.5, plan(11, 200000));
    CHECK(y.survivors == y.samples.size());
    CHECK(y.survivors > 3000);
    CHECK_FALSE(y.low_power);
    // N_n is even, so N_n / n lives on atoms of mass about 4 / n; add the
    // 99% KS noise level.
    CHECK(y.ks.statistic < 4.0 / 100 + 1.63 / std::sqrt(double(y.survivors)));
    const double exact = 1.0 / (100 * gw_survival_exact(OffspringDistribution::binary(), 100));
    CHECK(within_sigmas(y.mean.value, exact, y.mean.std_error));
    CHECK(yaglom_reference_mean(ModelConstants{1.0, 1.0, 1.0}) == 0.5);
    const Model dead = GaltonWatsonModel{OffspringDistribution({1.0})};
    CHECK_THROWS_AS(estimate_yaglom(dead, 10, 0.5, plan(1, 100)), std::runtime_error);
}

TEST_CASE("cluster tail")
{
    const std::vector<std::int64_t> ks{1, 10, 100};
    const auto tail = estimate_cluster_tail(kBinaryGw, ks, plan(12, 300000), 10);
    CHECK(tail.points[0].scaled.value == 1.0);
    const auto law = OffspringDistribution::binary();
    for (std::size_t i = 1; i < ks.size(); ++i)
        CHECK(within_sigmas(tail.points[i].tail.value, gw_progeny_tail_exact(law, ks[i]),
                            tail.points[i].tail.std_error));
    CHECK(tail.plateau == doctest::Approx(0.5 * (tail.points[1].scaled.value + tail.points[2].scaled.value)));
}

TEST_CASE("truncated functionals")
{
    const NormalizationContext ctx{{}, 100};
    for (auto h : {TruncatedFunctional::indicator_one, TruncatedFunctional::identity_clipped,
                   TruncatedFunctional::exp_decay})
    {
        const auto e = estimate_truncated_functional(kBinaryGw, ctx, 1.0, 1.5, 0.2, h, plan(13, 400000));
        CHECK(e.spine);
        const double se = std::hypot(e.direct.std_error, e.size_biased.std_error);
        CHECK_MESSAGE(std::abs(e.direct.value - e.size_biased.value) <= 4 * se,
                      truncated_functional_name(h));
    }
    const auto one = estimate_truncated_functional(kBinaryGw, ctx, 1.0, 1.0, 0.005,
                                                   TruncatedFunctional::indicator_one, plan(14, 400000));
    CHECK(one.direct.value == doctest::Approx(2.0).epsilon(0.1));
    CHECK(one.size_biased.value == doctest::Approx(2.0).epsilon(0.1));
    const auto zero = estimate_truncated_functional(kBinaryGw, ctx, 1.0, 1.0, 0.1,
                                                    TruncatedFunctional::zero, plan(15, 1000));
    CHECK(zero.direct.value == 0.0);
    CHECK(zero.size_biased.value == 0.0);
    CHECK(parse_truncated_functional("exp_decay") == TruncatedFunctional::exp_decay);
    CHECK_THROWS(parse_truncated_functional("nope"));
}

TEST_CASE("criticality calibration on the Galton-Watson family")
{
    const auto r = calibrate_criticality(gw_mean_family(), 0.9, 1.1, 20, 100, plan(16, 200000));
    CHECK(r.converged);
    CHECK(std::abs(r.parameter - 1.0) <= 1e-3);
    CHECK(std::abs(r.slope) <= 2 * r.slope_se + 1e-12);
    CHECK_THROWS_AS(calibrate_criticality(gw_mean_family(), 1.05, 1.1, 20, 100, plan(16, 20000)),
                    std::domain_error);
}

TEST_CASE("constants")
{
    SUBCASE("binary GW")
    {
        const auto c = estimate_constants(kBinaryGw, 10, 100, plan(17, 1'000'000));
        CHECK(c.A.value == doctest::Approx(1.0).epsilon(0.03));
        CHECK(c.V.value == doctest::Approx(1.0).epsilon(0.03));
        CHECK(c.two_over_AV.value == doctest::Approx(2.0).epsilon(0.05));
        CHECK(c.two_over_AV.ci_low <= c.two_over_AV.value);
        CHECK(c.two_over_AV.ci_high >= c.two_over_AV.value);
        CHECK(c.plateau_ok);
        CHECK(c.v.n_samples == 0);
    }
    SUBCASE("binary BRW diffusion constant")
    {
        const auto c = estimate_constants(binary_brw(2, 1), 10, 50, plan(18, 200000));
        CHECK(c.v.value == doctest::Approx(1.5).epsilon(0.05));
        CHECK(c.A.value == doctest::Approx(1.0).epsilon(0.03));
    }
}

TEST_CASE("self-repellence proxy for GW")
{
    const std::vector<double> ms{10, 25, 50};
    const auto p = estimate_self_repellence_proxy(kBinaryGw, 100, ms, plan(19, 400000));
    // theta_n / theta_{n-m} ~ (n - m) / n for critical GW, at most 1.
    CHECK(p.value > 0.8);
    CHECK(p.value < 1.1);
}

TEST_CASE("results do not depend on the worker count")
{
    const std::vector<double> ns{10, 40};
    const auto a = estimate_survival_curve(kBinaryGw, ns, plan(20, 50000, 1));
    const auto b = estimate_survival_curve(kBinaryGw, ns, plan(20, 50000, 3));
    for (std::size_t i = 0; i < ns.size(); ++i)
        CHECK(a.points[i].survivors == b.points[i].survivors);
    const NormalizationContext ctx{{}, 50};
    const auto ma = estimate_scaled_moments(kBinaryGw, ctx, MomentSpec{{1.0}, {3}, {}}, plan(21, 50000, 1));
    const auto mb = estimate_scaled_moments(kBinaryGw, ctx, MomentSpec{{1.0}, {3}, {}}, plan(21, 50000, 4));
    CHECK(ma.estimate.value == mb.estimate.value);
    CHECK(ma.estimate.std_error == mb.estimate.std_error);
    CHECK(ma.jackknife_stderr == mb.jackknife_stderr);
}

TEST_CASE("sample-size calculators")
{
    CHECK(replicates_for_survivors(1000, 20000) == 10'000'000);
    CHECK(replicates_for_relative_error(2.0, 1.0, 0.01) == 10000);
    CHECK_THROWS(replicates_for_relative_error(0.5, 1.0, 0.01));
}

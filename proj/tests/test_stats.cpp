#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "sll/parallel.hpp"
#include "sll/stats.hpp"

using namespace sll;

TEST_CASE("streams are determined by seed and stream id")
{
    RandomStream a(42, 7), b(42, 7), c(42, 8), e(43, 7);
    for (int i = 0; i < 100; ++i)
    {
        const auto x = a();
        CHECK(x == b());
        (void)c;
    }
    RandomStream a2(42, 7);
    std::vector<std::uint64_t> first, other, seeded;
    for (int i = 0; i < 64; ++i)
    {
        first.push_back(a2());
        other.push_back(c());
        seeded.push_back(e());
    }
    CHECK(first != other);
    CHECK(first != seeded);
}

TEST_CASE("neighbouring streams share no output in their first 64 draws")
{
    std::set<std::uint64_t> seen;
    std::size_t total = 0;
    for (std::uint64_t id = 0; id < 256; ++id)
    {
        RandomStream s(2024, id);
        for (int i = 0; i < 64; ++i, ++total)
            seen.insert(s());
    }
    CHECK(seen.size() == total);
}

TEST_CASE("below is uniform over small ranges")
{
    RandomStream s(5, 0);
    std::vector<int> hits(7, 0);
    const int n = 700000;
    for (int i = 0; i < n; ++i)
        ++hits[s.below(7)];
    double chi2 = 0.0;
    for (int h : hits)
        chi2 += (h - n / 7.0) * (h - n / 7.0) / (n / 7.0);
    CHECK(chi2 < 22.46);  // 0.999 quantile, 6 dof
}

TEST_CASE("accumulator matches two-pass mean and variance")
{
    RandomStream s(11, 0);
    std::vector<double> xs(1'000'000);
    for (auto& x : xs)
        x = s.uniform();
    MomentAccumulator acc;
    for (double x : xs)
        acc.add(x);

    long double mean = 0.0L;
    for (double x : xs)
        mean += x;
    mean /= xs.size();
    long double ss = 0.0L;
    for (double x : xs)
        ss += (x - mean) * (x - mean);
    const double var = static_cast<double>(ss / (xs.size() - 1));

    const double eps = std::numeric_limits<double>::epsilon();
    CHECK(std::abs(acc.mean() - static_cast<double>(mean)) <= 8 * eps * static_cast<double>(mean));
    CHECK(std::abs(acc.variance() - var) <= 8 * eps * var);
}

TEST_CASE("merge is streaming over the concatenation")
{
    RandomStream s(3, 1);
    MomentAccumulator all, left, right;
    for (int i = 0; i < 100000; ++i)
    {
        const double x = s.exponential(2.0);
        all.add(x);
        (i < 37000 ? left : right).add(x);
    }
    left.merge(right);
    CHECK(left.count() == all.count());
    for (int k = 1; k <= 4; ++k)
        CHECK(left.raw_moment(k) == doctest::Approx(all.raw_moment(k)).epsilon(1e-15));
}

TEST_CASE("excess kurtosis of a Gaussian-like sample is near zero")
{
    RandomStream s(9, 0);
    MomentAccumulator acc;
    for (int i = 0; i < 200000; ++i)
    {
        // sum of 12 uniforms minus 6
        double x = -6.0;
        for (int j = 0; j < 12; ++j)
            x += s.uniform();
        acc.add(x);
    }
    CHECK(std::abs(acc.excess_kurtosis() + 0.1) < 0.05);  // exact value -0.1
}

TEST_CASE("wilson interval")
{
    auto [lo, hi] = wilson_interval(50, 100, 0.95);
    CHECK(lo == doctest::Approx(0.404).epsilon(0.005));
    CHECK(hi == doctest::Approx(0.596).epsilon(0.004));
    CHECK(wilson_interval(0, 40).low == 0.0);
    CHECK(wilson_interval(40, 40).high == 1.0);
    CHECK_THROWS(wilson_interval(5, 4));
    CHECK_THROWS(wilson_interval(0, 0));
}

TEST_CASE("ks statistic")
{
    auto cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
    SUBCASE("quantile sample")
    {
        const int n = 1000;
        std::vector<double> xs;
        for (int i = 1; i <= n; ++i)
            xs.push_back((i - 0.5) / n);
        CHECK(ks_statistic(xs, cdf).statistic == doctest::Approx(0.5 / n));
    }
    SUBCASE("sample from the cdf")
    {
        RandomStream s(1, 0);
        std::vector<double> xs(10000);
        for (auto& x : xs)
            x = s.uniform();
        const auto r = ks_statistic(xs, cdf);
        CHECK(r.statistic <= 0.025);
        CHECK(r.p_value > 0.001);
    }
    SUBCASE("shifted sample")
    {
        std::vector<double> xs;
        for (int i = 1; i <= 1000; ++i)
            xs.push_back(std::min(1.0, (i - 0.5) / 1000 + 0.2));
        const auto r = ks_statistic(xs, cdf);
        CHECK(r.statistic == doctest::Approx(0.2).epsilon(0.01));
        CHECK(r.p_value < 1e-10);
    }
    CHECK_THROWS(ks_statistic(std::vector<double>{}, cdf));
}

TEST_CASE("kolmogorov survival function")
{
    CHECK(kolmogorov_survival(1.36) == doctest::Approx(0.0495).epsilon(0.01));
    CHECK(kolmogorov_survival(0.0) == 1.0);
    CHECK(kolmogorov_survival(3.0) < 1e-7);
}

TEST_CASE("slope fit")
{
    std::vector<double> xs{0, 1, 2, 3, 4}, line, flat(5, 3.0);
    for (double x : xs)
        line.push_back(2.5 * x - 1.0);
    auto f = slope_with_se(xs, line);
    CHECK(f.slope == doctest::Approx(2.5));
    CHECK(f.intercept == doctest::Approx(-1.0));
    CHECK(f.se == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(slope_with_se(xs, flat).slope == doctest::Approx(0.0));
    CHECK_THROWS(slope_with_se(std::vector<double>{1, 2}, std::vector<double>{1, 2}));
}

TEST_CASE("slope interval coverage is about 95 percent")
{
    RandomStream s(77, 0);
    const std::vector<double> xs{0, 1, 2, 3, 4, 5, 6, 7};
    const std::vector<double> w(xs.size(), 1.0 / 0.25);  // sigma = 0.5
    int covered_w = 0, covered_u = 0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r)
    {
        std::vector<double> ys;
        for (double x : xs)
        {
            const double u1 = s.uniform_open0(), u2 = s.uniform();
            const double z = std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
            ys.push_back(0.3 * x + 1.0 + 0.5 * z);
        }
        const auto fw = slope_with_se(xs, ys, w);
        const auto fu = slope_with_se(xs, ys);
        covered_w += std::abs(fw.slope - 0.3) <= 1.96 * fw.se;
        covered_u += std::abs(fu.slope - 0.3) <= 2.447 * fu.se;  // t quantile, 6 dof
    }
    CHECK(covered_w / double(reps) == doctest::Approx(0.95).epsilon(0.03));
    CHECK(covered_u / double(reps) == doctest::Approx(0.95).epsilon(0.03));
}

TEST_CASE("grouped runs do not depend on the worker count")
{
    auto run = [](unsigned workers) {
        ReplicatePlan plan{.seed = 99, .replicates = 5000, .workers = workers};
        auto groups = run_grouped(plan, MomentAccumulator{},
                                  [](MomentAccumulator& acc, std::uint64_t, RandomStream& rng) {
                                      acc.add(rng.exponential(1.0));
                                  });
        return merge_in_order(groups, MomentAccumulator{});
    };
    const auto one = run(1), four = run(4);
    CHECK(one.count() == 5000);
    for (int k = 1; k <= 4; ++k)
        CHECK(one.raw_moment(k) == four.raw_moment(k));
}

TEST_CASE("grouped runs propagate exceptions")
{
    ReplicatePlan plan{.seed = 1, .replicates = 100, .workers = 2};
    CHECK_THROWS_AS(run_grouped(plan, MomentAccumulator{},
                                [](MomentAccumulator&, std::uint64_t i, RandomStream&) {
                                    if (i == 50)
                                        throw std::runtime_error("boom");
                                }),
                    std::runtime_error);
}

TEST_CASE("jackknife and bootstrap over groups")
{
    ReplicatePlan plan{.seed = 5, .replicates = 100000, .workers = 1};
    auto groups = run_grouped(plan, MomentAccumulator{},
                              [](MomentAccumulator& acc, std::uint64_t, RandomStream& rng) {
                                  acc.add(rng.exponential(1.0));
                              });
    const auto mean = [](const MomentAccumulator& a) { return a.mean(); };
    const double jk = jackknife_stderr<MomentAccumulator>(groups, mean);
    CHECK(jk == doctest::Approx(1.0 / std::sqrt(1e5)).epsilon(0.15));
    const auto b1 = bootstrap_interval<MomentAccumulator>(groups, mean, 3, 500);
    const auto b2 = bootstrap_interval<MomentAccumulator>(groups, mean, 3, 500);
    CHECK(b1.low == b2.low);
    CHECK(b1.high == b2.high);
    CHECK(b1.low < 1.0);
    CHECK(b1.high > 1.0);
    CHECK((b1.high - b1.low) / 2 == doctest::Approx(1.96 / std::sqrt(1e5)).epsilon(0.2));
}

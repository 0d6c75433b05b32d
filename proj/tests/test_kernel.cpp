#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "sll/kernel.hpp"

using namespace sll;

TEST_CASE("uniform box kernel")
{
    const auto k = SpreadOutKernel::uniform_box(2, 1);
    CHECK(k.dimension() == 2);
    CHECK(k.support_size() == 8);
    CHECK(k.is_uniform());
    CHECK(k.max_mass() == doctest::Approx(1.0 / 8));
    CHECK(k.mass(std::vector<std::int32_t>{0, 0}) == 0.0);
    CHECK(k.mass(std::vector<std::int32_t>{1, -1}) == doctest::Approx(1.0 / 8));
    CHECK(k.mass(std::vector<std::int32_t>{2, 0}) == 0.0);
    CHECK_THROWS(k.mass(std::vector<std::int32_t>{1}));
    CHECK(kernel_variance(k) == doctest::Approx(1.5));
    CHECK(kernel_variance(SpreadOutKernel::uniform_box(5, 1)) == doctest::Approx(5 * 162.0 / 242));
    CHECK(SpreadOutKernel::uniform_box(5, 1).support_size() == 242);
    CHECK_THROWS(SpreadOutKernel::uniform_box(0, 1));
    CHECK_THROWS(SpreadOutKernel::uniform_box(2, 0));
}

TEST_CASE("kernel fourier transform")
{
    const auto k = SpreadOutKernel::uniform_box(1, 2);
    CHECK(kernel_fourier(k, std::vector<double>{0.0}) == doctest::Approx(1.0));
    const double q = 0.7;
    const double expected = (2 * std::cos(q) + 2 * std::cos(2 * q)) / 4;
    CHECK(kernel_fourier(k, std::vector<double>{q}) == doctest::Approx(expected));
    CHECK_THROWS(kernel_fourier(k, std::vector<double>{1.0, 2.0}));
}

TEST_CASE("table kernels are validated")
{
    std::vector<LatticePoint> pts{{1}, {-1}, {2}, {-2}};
    std::vector<double> m{0.3, 0.3, 0.2, 0.2};
    const auto k = SpreadOutKernel::from_table(1, pts, m);
    CHECK_FALSE(k.is_uniform());
    CHECK(k.range() == 2);
    CHECK(kernel_variance(k) == doctest::Approx(0.6 + 1.6));

    std::vector<double> asym{0.4, 0.2, 0.2, 0.2};
    CHECK_THROWS(SpreadOutKernel::from_table(1, pts, asym));
    std::vector<double> unnorm{0.3, 0.3, 0.3, 0.3};
    CHECK_THROWS(SpreadOutKernel::from_table(1, pts, unnorm));
    std::vector<LatticePoint> origin{{0}, {1}, {-1}};
    std::vector<double> om{0.2, 0.4, 0.4};
    CHECK_THROWS(SpreadOutKernel::from_table(1, origin, om));
}

TEST_CASE("steps follow the table")
{
    std::vector<LatticePoint> pts{{1}, {-1}, {3}, {-3}};
    std::vector<double> m{0.35, 0.35, 0.15, 0.15};
    const auto k = SpreadOutKernel::from_table(1, pts, m);
    RandomStream rng(4, 0);
    std::map<int, int> hits;
    const int n = 400000;
    for (int i = 0; i < n; ++i)
        ++hits[sample_step(k, rng)[0]];
    double chi2 = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        const double e = n * m[i];
        chi2 += (hits[pts[i][0]] - e) * (hits[pts[i][0]] - e) / e;
    }
    CHECK(hits.size() == 4);
    CHECK(chi2 < 16.27);  // 0.999 quantile, 3 dof
}

TEST_CASE("forward bonds are independent Bernoulli(pD)")
{
    const auto k = SpreadOutKernel::uniform_box(1, 2);  // 4 neighbours
    const double p = 1.2;                              // pD = 0.3
    ForwardBondSampler sampler(k, p);
    RandomStream rng(8, 0);
    const int n = 200000;
    std::vector<int> per_bond(4, 0);
    std::vector<int> count_hist(5, 0);
    std::vector<std::uint32_t> out;
    for (int i = 0; i < n; ++i)
    {
        out.clear();
        sampler(rng, out);
        ++count_hist[out.size()];
        std::vector<bool> seen(4, false);
        for (auto idx : out)
        {
            REQUIRE(idx < 4);
            REQUIRE_FALSE(seen[idx]);
            seen[idx] = true;
            ++per_bond[idx];
        }
    }
    for (int b : per_bond)
        CHECK(std::abs(b - 0.3 * n) < 4 * std::sqrt(n * 0.3 * 0.7));
    // Binomial(4, 0.3) child counts.
    const double pmf[5] = {0.2401, 0.4116, 0.2646, 0.0756, 0.0081};
    double chi2 = 0.0;
    for (int c = 0; c <= 4; ++c)
        chi2 += (count_hist[c] - n * pmf[c]) * (count_hist[c] - n * pmf[c]) / (n * pmf[c]);
    CHECK(chi2 < 18.47);  // 0.999 quantile, 4 dof

    CHECK_THROWS(ForwardBondSampler(k, 4.5));
    ForwardBondSampler all(k, 4.0);
    out.clear();
    all(rng, out);
    CHECK(out.size() == 4);
}

TEST_CASE("forward children are translated by the parent")
{
    const auto k = SpreadOutKernel::uniform_box(2, 1);
    RandomStream rng(1, 2);
    const std::vector<std::int32_t> parent{5, -3};
    for (int i = 0; i < 100; ++i)
        for (const auto& c : sample_forward_children(k, 8.0, parent, rng))
        {
            CHECK(std::abs(c[0] - 5) <= 1);
            CHECK(std::abs(c[1] + 3) <= 1);
            CHECK((c[0] != 5 || c[1] != -3));
        }
    CHECK(sample_forward_children(k, 8.0, parent, rng).size() == 8);
}

TEST_CASE("kernel json round trip")
{
    const auto k = SpreadOutKernel::uniform_box(3, 2);
    const auto j = kernel_to_json(k, 0.5);
    CHECK(j.at("d") == 3);
    CHECK(j.at("L") == 2);
    CHECK(j.at("family") == "uniform_box");
    CHECK(j.at("p") == 0.5);
    const auto back = kernel_from_json(j);
    CHECK(back.dimension() == 3);
    CHECK(back.range() == 2);
    CHECK(back.support_size() == k.support_size());
    CHECK_THROWS(kernel_from_json(nlohmann::json{{"d", 2}, {"L", 1}, {"family", "gaussian"}}));
}

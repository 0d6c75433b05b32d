#include "doctest.h"

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "sll/analytic.hpp"
#include "sll/models.hpp"

using namespace sll;

namespace {

// Exact oriented percolation on Z with L = 1 by propagating the law of the
// occupied set one generation at a time. Sites of the next generation are
// occupied independently: y is reached iff one of its open in-bonds from
// the current set is open.
struct OpExact
{
    std::vector<double> survival;
    std::vector<double> mean_count;
};

OpExact op_exact_d1(double bond_prob, int generations)
{
    std::map<std::set<int>, double> law{{{0}, 1.0}};
    OpExact out{{1.0}, {1.0}};
    for (int g = 1; g <= generations; ++g)
    {
        std::map<std::set<int>, double> next;
        for (const auto& [occupied, prob] : law)
        {
            std::set<int> candidates;
            for (int x : occupied)
            {
                candidates.insert(x - 1);
                candidates.insert(x + 1);
            }
            std::vector<int> ys(candidates.begin(), candidates.end());
            std::vector<double> hit;
            for (int y : ys)
            {
                const int parents = int(occupied.count(y - 1)) + int(occupied.count(y + 1));
                hit.push_back(1.0 - std::pow(1.0 - bond_prob, parents));
            }
            for (std::uint32_t mask = 0; mask < (1u << ys.size()); ++mask)
            {
                double w = prob;
                std::set<int> s;
                for (std::size_t i = 0; i < ys.size(); ++i)
                {
                    if (mask >> i & 1u)
                    {
                        w *= hit[i];
                        s.insert(ys[i]);
                    }
                    else
                    {
                        w *= 1.0 - hit[i];
                    }
                }
                if (w > 0.0)
                    next[s] += w;
            }
        }
        law = std::move(next);
        double alive = 0.0, mean = 0.0;
        for (const auto& [s, w] : law)
        {
            if (!s.empty())
                alive += w;
            mean += w * double(s.size());
        }
        out.survival.push_back(alive);
        out.mean_count.push_back(mean);
    }
    return out;
}

}  // namespace

TEST_CASE("galton-watson survival matches the exact recursion")
{
    const auto law = OffspringDistribution::binary();
    RandomStream rng(1, 0);
    const int reps = 200000, n = 10;
    int alive = 0;
    for (int i = 0; i < reps; ++i)
    {
        const auto t = simulate_gw(law, 20, rng);
        REQUIRE_FALSE(check_trajectory(t, 0).has_value());
        alive += t.alive_at(n);
    }
    const double exact = gw_survival_exact(law, n);
    const double se = std::sqrt(exact * (1 - exact) / reps);
    CHECK(std::abs(alive / double(reps) - exact) < 4 * se);
}

TEST_CASE("galton-watson generation totals are exact sums")
{
    // Large populations go through the binomial path; the mean and variance
    // of one generation from 1000 parents must be 1000 and 1000 gamma.
    const OffspringDistribution law({0.25, 0.3, 0.25, 0.2});
    RandomStream rng(2, 0);
    MomentAccumulator acc;
    for (int i = 0; i < 20000; ++i)
        acc.add(static_cast<double>(law.sample_total(1000, rng)));
    const double mean = law.mean() * 1000, var = law.variance() * 1000;
    CHECK(std::abs(acc.mean() - mean) < 4 * std::sqrt(var / 20000));
    CHECK(acc.variance() == doctest::Approx(var).epsilon(0.05));
}

TEST_CASE("population cap censors the cluster")
{
    const auto law = OffspringDistribution::binary(2.0);  // two children always
    RandomStream rng(3, 0);
    const auto t = simulate_gw(law, 100, rng, 1000);
    CHECK(t.cap_hit);
    CHECK(t.censored);
    CHECK(t.counts.back() == 1024);
    CHECK(t.alive_at(50));
    CHECK_FALSE(check_trajectory(t, 0).has_value());
}

TEST_CASE("branching random walk counts and positions")
{
    const auto law = OffspringDistribution::binary();
    const auto kernel = SpreadOutKernel::uniform_box(2, 1);
    RandomStream rng(4, 0);
    const std::vector<std::int64_t> levels{0, 5};
    MomentAccumulator spread;
    int alive = 0;
    const int reps = 100000;
    for (int i = 0; i < reps; ++i)
    {
        const auto t = simulate_brw(law, kernel, 5, rng, levels);
        REQUIRE_FALSE(check_trajectory(t, 1).has_value());
        alive += t.alive_at(5);
        double sq = 0.0;
        if (const auto* ls = t.level_set_at(5.0))
            for (std::size_t j = 0; j < ls->size(); ++j)
                for (auto x : ls->point(j))
                    sq += double(x) * x;
        spread.add(sq);
    }
    const double exact = gw_survival_exact(law, 5);
    CHECK(std::abs(alive / double(reps) - exact) < 4 * std::sqrt(exact * (1 - exact) / reps));
    // E[sum |x|^2 over A_n] = n v E[N_n] = 5 * 1.5 * 1.
    CHECK(std::abs(spread.mean() - 7.5) < 4 * spread.stderr_of_mean());
}

TEST_CASE("oriented percolation with all bonds open is a deterministic line")
{
    OrientedPercolationModel m{SpreadOutKernel::uniform_box(1, 1), 2.0};
    RandomStream rng(5, 0);
    const std::vector<std::int64_t> levels{3};
    const auto t = simulate_op_cluster(m, 6, rng, levels);
    for (int g = 0; g <= 6; ++g)
        CHECK(t.count_at(g) == g + 1);
    CHECK(t.censored);
    const auto* ls = t.level_set_at(3.0);
    REQUIRE(ls != nullptr);
    std::set<int> xs;
    for (std::size_t i = 0; i < ls->size(); ++i)
        xs.insert(ls->point(i)[0]);
    CHECK(xs == std::set<int>{-3, -1, 1, 3});
}

TEST_CASE("oriented percolation matches the exact occupied-set recursion")
{
    const double p = 1.3;  // bond probability p/2
    const auto exact = op_exact_d1(p / 2, 4);
    OrientedPercolationModel m{SpreadOutKernel::uniform_box(1, 1), p};
    RandomStream rng(6, 0);
    const int reps = 200000;
    std::vector<int> alive(5, 0);
    std::vector<MomentAccumulator> counts(5);
    for (int i = 0; i < reps; ++i)
    {
        const auto t = simulate_op_cluster(m, 4, rng, std::vector<std::int64_t>{1, 2, 3, 4});
        REQUIRE_FALSE(check_trajectory(t, 1).has_value());
        for (int g = 0; g <= 4; ++g)
        {
            alive[g] += t.alive_at(g);
            counts[g].add(double(t.count_at(g)));
        }
    }
    for (int g = 1; g <= 4; ++g)
    {
        const double th = exact.survival[g];
        CHECK(std::abs(alive[g] / double(reps) - th) < 4 * std::sqrt(th * (1 - th) / reps));
        CHECK(std::abs(counts[g].mean() - exact.mean_count[g]) < 4 * counts[g].stderr_of_mean());
    }
}

TEST_CASE("contact process without infection is pure death")
{
    ContactProcessModel m{SpreadOutKernel::uniform_box(2, 1), 0.0};
    RandomStream rng(7, 0);
    const std::vector<double> grid{1.0};
    const int reps = 1000000;
    int alive = 0;
    for (int i = 0; i < reps; ++i)
    {
        const auto t = simulate_cp_cluster(m, 2.0, grid, rng);
        alive += t.alive_at(1);
    }
    const double exact = std::exp(-1.0);
    CHECK(std::abs(alive / double(reps) - exact) < 4 * std::sqrt(exact * (1 - exact) / reps));
}

TEST_CASE("contact process first event is recovery with probability 1/(1+lambda)")
{
    const double lambda = 1.5;
    ContactProcessModel m{SpreadOutKernel::uniform_box(1, 1), lambda};
    RandomStream rng(8, 0);
    const int reps = 100000;
    int immediate = 0;
    const std::vector<double> grid{0.5, 1.0, 2.0, 4.0};
    for (int i = 0; i < reps; ++i)
    {
        const auto t = simulate_cp_cluster(m, 4.0, grid, rng);
        REQUIRE_FALSE(check_trajectory(t, 1).has_value());
        // Dying before any infection leaves cluster_size == survival time.
        immediate += !t.censored && t.cluster_size == t.survival_time;
    }
    const double q = 1.0 / (1.0 + lambda);
    CHECK(std::abs(immediate / double(reps) - q) < 4 * std::sqrt(q * (1 - q) / reps));
}

TEST_CASE("contact process infections arrive at rate lambda N")
{
    // On a wide kernel collisions are rare, so d/dt E[N] = (lambda - 1) E[N]
    // up to a collision correction of order T^2 / |supp D|.
    const double lambda = 0.8;
    ContactProcessModel m{SpreadOutKernel::uniform_box(3, 3), lambda};
    RandomStream rng(9, 0);
    const std::vector<double> grid{0.25};
    MomentAccumulator n_at;
    for (int i = 0; i < 200000; ++i)
        n_at.add(double(simulate_cp_cluster(m, 0.25, grid, rng).count_at(1)));
    CHECK(std::abs(n_at.mean() - std::exp((lambda - 1) * 0.25)) < 4 * n_at.stderr_of_mean() + 2e-3);
}

TEST_CASE("fixed seed gives identical trajectories")
{
    OrientedPercolationModel m{SpreadOutKernel::uniform_box(3, 1), 1.0};
    RandomStream a(10, 3), b(10, 3);
    for (int i = 0; i < 50; ++i)
    {
        const auto ta = simulate_op_cluster(m, 30, a, std::vector<std::int64_t>{10});
        const auto tb = simulate_op_cluster(m, 30, b, std::vector<std::int64_t>{10});
        CHECK(ta.counts == tb.counts);
        if (!ta.level_sets.empty())
            CHECK(ta.level_sets[0].coords == tb.level_sets[0].coords);
    }
}

TEST_CASE("generic dispatch")
{
    const Model gw = GaltonWatsonModel{OffspringDistribution::binary()};
    const Model cp = ContactProcessModel{SpreadOutKernel::uniform_box(1, 1), 1.0};
    CHECK(model_name(gw) == "gw");
    CHECK(model_name(cp) == "cp");
    CHECK(is_continuous_time(cp));
    CHECK_FALSE(has_positions(gw));
    CHECK(model_dimension(cp) == 1);
    RandomStream rng(11, 0);
    ObservationPlan plan{.horizon = 3.7, .sample_times = {1.0, 2.0, 3.5}};
    const auto tc = simulate(cp, plan, rng);
    CHECK(tc.times.size() == 4);
    const auto tg = simulate(gw, plan, rng);
    CHECK(tg.counts.size() <= 4);
}

TEST_CASE("coordinate packing")
{
    const auto p = CoordinatePacker::for_bound(3, 100);
    const std::vector<std::int32_t> x{-100, 0, 57}, step{1, -1, -3};
    const auto w = p.pack(x);
    std::int32_t back[3];
    p.unpack(w + p.delta(step), back);
    CHECK(back[0] == -99);
    CHECK(back[1] == -1);
    CHECK(back[2] == 54);
    CHECK(p.within(w, 100));
    CHECK_FALSE(p.within(w, 99));
    CHECK_THROWS(p.pack(std::vector<std::int32_t>{int(p.max_abs()) + 1, 0, 0}));
}

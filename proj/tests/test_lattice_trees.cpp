#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "sll/lattice_trees.hpp"

using namespace sll;

namespace {

using Vertex = std::array<int, 2>;
using Bond = std::pair<Vertex, Vertex>;  // unordered, stored sorted
using BondSet = std::vector<Bond>;       // sorted

// Grows connected acyclic bond sets containing the origin one bond at a
// time and removes duplicates at every size.
std::vector<std::size_t> brute_force_counts_d2(int max_bonds)
{
    std::vector<Vertex> steps;
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b)
            if (a || b)
                steps.push_back({a, b});
    std::set<BondSet> level{BondSet{}};
    std::vector<std::size_t> counts{1};
    for (int size = 1; size <= max_bonds; ++size)
    {
        std::set<BondSet> next;
        for (const auto& tree : level)
        {
            std::set<Vertex> verts{{0, 0}};
            for (const auto& [u, v] : tree)
            {
                verts.insert(u);
                verts.insert(v);
            }
            for (const auto& u : verts)
                for (const auto& s : steps)
                {
                    const Vertex w{u[0] + s[0], u[1] + s[1]};
                    if (verts.count(w))
                        continue;  // a bond between tree vertices closes a cycle
                    BondSet grown = tree;
                    grown.push_back(std::minmax(u, w));
                    std::sort(grown.begin(), grown.end());
                    next.insert(std::move(grown));
                }
        }
        counts.push_back(next.size());
        level = std::move(next);
    }
    return counts;
}

}  // namespace

TEST_CASE("one-dimensional hand enumeration")
{
    const auto e = enumerate_lattice_trees(SpreadOutKernel::uniform_box(1, 1), 1.0, 2);
    CHECK(e.size() == 6);
    CHECK(e.rho_truncated() == doctest::Approx(2.75));
    CHECK(lt_survival(e, 0) == 1.0);
    // Every tree except {0} reaches distance 1: 2 (1/2) + 3 (1/4) = 1.75.
    CHECK(lt_survival(e, 1) == doctest::Approx(1.75 / 2.75));
    CHECK(lt_survival(e, 2) == doctest::Approx(0.5 / 2.75));
    CHECK(lt_survival(e, 3) == 0.0);
    std::vector<int> by_size(3, 0);
    for (std::size_t i = 0; i < e.size(); ++i)
        ++by_size[e.tree(i).size()];
    CHECK(by_size == std::vector<int>{1, 2, 3});
}

TEST_CASE("empty bond budget")
{
    const auto e = enumerate_lattice_trees(SpreadOutKernel::uniform_box(2, 1), 0.7, 0);
    CHECK(e.size() == 1);
    CHECK(e.weight(0) == 1.0);
    CHECK(e.rho_truncated() == 1.0);
}

TEST_CASE("two-dimensional counts match a brute-force generator")
{
    const int B = 4;
    const auto e = enumerate_lattice_trees(SpreadOutKernel::uniform_box(2, 1), 1.0, B);
    std::vector<std::size_t> counts(B + 1, 0);
    for (std::size_t i = 0; i < e.size(); ++i)
        ++counts[e.tree(i).size()];
    CHECK(counts == brute_force_counts_d2(B));
}

TEST_CASE("weights and levels")
{
    const double z = 0.8;
    const auto e = enumerate_lattice_trees(SpreadOutKernel::uniform_box(2, 1), z, 3);
    long double total = 0.0L;
    for (std::size_t i = 0; i < e.size(); ++i)
    {
        const auto bonds = e.tree(i);
        CHECK(e.weight(i) == doctest::Approx(std::pow(z / 8, double(bonds.size()))));
        const auto levels = e.level_counts(i);
        CHECK(levels[0] == 1);
        std::int64_t sum = 0;
        for (auto c : levels)
            sum += c;
        CHECK(sum == std::int64_t(bonds.size()) + 1);
        CHECK(levels.back() > 0);
        total += e.weight(i);
    }
    CHECK(static_cast<double>(total / e.rho_truncated()) == doctest::Approx(1.0).epsilon(1e-15));
    const auto lv = lt_survival_and_levels(e, 2);
    CHECK(lv.level_counts.size() == e.size());
    CHECK(lv.theta_n == lt_survival(e, 2));
}

TEST_CASE("size guard")
{
    CHECK_THROWS_AS(enumerate_lattice_trees(SpreadOutKernel::uniform_box(2, 1), 1.0, 6, 1000),
                    std::length_error);
    CHECK_THROWS(enumerate_lattice_trees(SpreadOutKernel::uniform_box(2, 1), 0.0, 2));
}

TEST_CASE("self-repellence")
{
    const auto e = enumerate_lattice_trees(SpreadOutKernel::uniform_box(1, 1), 1.0, 4);
    SUBCASE("m = 0 gives 1/rho")
    {
        const auto r = verify_self_repellence_lt(e, 0, 3);
        CHECK(r.max_ratio == doctest::Approx(1.0 / e.rho_truncated()));
        CHECK(r.pass);
    }
    SUBCASE("all pairs in d = 1")
    {
        for (int n = 1; n <= 4; ++n)
            for (int m = 0; m < n; ++m)
                CHECK(verify_self_repellence_lt(e, m, n).pass);
    }
    CHECK_THROWS(verify_self_repellence_lt(e, 2, 2));
    CHECK_THROWS(verify_self_repellence_lt(e, 1, 5));
}

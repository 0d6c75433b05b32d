#include "sll/lattice_trees.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace sll {
namespace {

struct FrontierEdge
{
    std::uint64_t parent;
    std::uint32_t step;
    std::int32_t parent_depth;
};

class Enumerator
{
  public:
    Enumerator(const SpreadOutKernel& k, const CoordinatePacker& packer, double z,
               int cutoff, std::size_t max_trees)
        : kernel_(k), z_(z), cutoff_(cutoff), max_trees_(max_trees)
    {
        for (std::size_t i = 0; i < k.support_size(); ++i)
            deltas_.push_back(packer.delta(k.support_point(i)));
    }

    template<class Emit>
    void run(std::uint64_t origin, Emit&& emit)
    {
        vertices_.assign(1, origin);
        bonds_.clear();
        weights_.assign(1, 1.0);
        std::vector<FrontierEdge> frontier;
        push_edges(origin, 0, frontier);
        recurse(frontier, emit);
    }

  private:
    bool in_tree(std::uint64_t v) const
    {
        return std::find(vertices_.begin(), vertices_.end(), v) != vertices_.end();
    }

    void push_edges(std::uint64_t v, std::int32_t depth, std::vector<FrontierEdge>& frontier) const
    {
        // Reverse support order so that popping from the back visits steps in
        // support order.
        for (std::size_t i = deltas_.size(); i-- > 0;)
            if (!in_tree(v + deltas_[i]))
                frontier.push_back({v, static_cast<std::uint32_t>(i), depth});
    }

    template<class Emit>
    void recurse(std::vector<FrontierEdge> frontier, Emit& emit)
    {
        if (++produced_ > max_trees_)
            throw std::length_error("lattice-tree enumeration exceeded the size guard");
        emit(bonds_, weights_.back());
        if (static_cast<int>(bonds_.size()) == cutoff_)
            return;
        while (!frontier.empty())
        {
            const FrontierEdge e = frontier.back();
            frontier.pop_back();
            const std::uint64_t child = e.parent + deltas_[e.step];
            if (in_tree(child))
                continue;  // would close a cycle
            vertices_.push_back(child);
            bonds_.push_back({e.parent, child, e.parent_depth + 1});
            weights_.push_back(weights_.back() * z_ * kernel_.support_mass(e.step));
            std::vector<FrontierEdge> next = frontier;
            push_edges(child, e.parent_depth + 1, next);
            recurse(std::move(next), emit);
            weights_.pop_back();
            bonds_.pop_back();
            vertices_.pop_back();
        }
    }

    const SpreadOutKernel& kernel_;
    double z_;
    int cutoff_;
    std::size_t max_trees_;
    std::size_t produced_ = 0;
    std::vector<std::uint64_t> deltas_;
    std::vector<std::uint64_t> vertices_;
    std::vector<TreeBond> bonds_;
    std::vector<double> weights_;
};

struct VectorHash
{
    std::size_t operator()(const std::vector<std::uint64_t>& v) const noexcept
    {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ v.size();
        for (auto x : v)
            h = mix64(h ^ x) + 0x632be59bd9b4e019ULL;
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

std::vector<std::int64_t> LatticeTreeEnsemble::level_counts(std::size_t i) const
{
    std::vector<std::int64_t> counts(static_cast<std::size_t>(heights_[i]) + 1, 0);
    counts[0] = 1;
    for (const auto& b : tree(i))
        ++counts[static_cast<std::size_t>(b.depth)];
    return counts;
}

LatticeTreeEnsemble enumerate_lattice_trees(const SpreadOutKernel& kernel, double z,
                                            int bond_cutoff, std::size_t max_trees)
{
    if (!(z > 0.0))
        throw std::invalid_argument("enumerate_lattice_trees: z must be positive");
    if (bond_cutoff < 0)
        throw std::invalid_argument("enumerate_lattice_trees: negative bond cutoff");
    const auto packer = CoordinatePacker::for_bound(
        kernel.dimension(), static_cast<std::int64_t>(kernel.range()) * std::max(bond_cutoff, 1));
    LatticeTreeEnsemble e(kernel, packer, z, bond_cutoff);

    Enumerator walker(kernel, packer, z, bond_cutoff, max_trees);
    const std::uint64_t origin
        = packer.pack(std::vector<std::int32_t>(static_cast<std::size_t>(kernel.dimension()), 0));
    long double rho = 0.0L;
    walker.run(origin, [&](const std::vector<TreeBond>& bonds, double weight) {
        e.bonds_.insert(e.bonds_.end(), bonds.begin(), bonds.end());
        e.offsets_.push_back(e.bonds_.size());
        e.weights_.push_back(weight);
        int height = 0;
        for (const auto& b : bonds)
            height = std::max(height, static_cast<int>(b.depth));
        e.heights_.push_back(height);
        rho += weight;
    });
    e.rho_ = static_cast<double>(rho);
    return e;
}

double lt_survival(const LatticeTreeEnsemble& e, int n)
{
    if (n < 0)
        throw std::invalid_argument("lt_survival: n must be nonnegative");
    long double alive = 0.0L;
    for (std::size_t i = 0; i < e.size(); ++i)
        if (e.height(i) >= n)
            alive += e.weight(i);
    return static_cast<double>(alive / e.rho_truncated());
}

LatticeTreeLevels lt_survival_and_levels(const LatticeTreeEnsemble& e, int n)
{
    LatticeTreeLevels out;
    out.theta_n = lt_survival(e, n);
    out.level_counts.reserve(e.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        out.level_counts.push_back(e.level_counts(i));
    return out;
}

SelfRepellenceReport verify_self_repellence_lt(const LatticeTreeEnsemble& e, int m, int n)
{
    if (m < 0 || m >= n || n > e.bond_cutoff())
        throw std::invalid_argument("verify_self_repellence_lt: need 0 <= m < n <= bond cutoff");

    struct ClassTotals
    {
        long double weight = 0.0L;
        long double surviving = 0.0L;
        std::int64_t frontier = 0;
    };
    std::unordered_map<std::vector<std::uint64_t>, ClassTotals, VectorHash> classes;
    std::vector<std::uint64_t> key;
    for (std::size_t i = 0; i < e.size(); ++i)
    {
        key.clear();
        std::int64_t frontier = m == 0 ? 1 : 0;
        for (const auto& b : e.tree(i))
        {
            if (b.depth > m)
                continue;
            key.push_back(b.parent);
            key.push_back(b.child);
            if (b.depth == m)
                ++frontier;
        }
        // Bonds as (parent, child) pairs sorted lexicographically.
        std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
        for (std::size_t j = 0; j < key.size(); j += 2)
            pairs.emplace_back(key[j], key[j + 1]);
        std::sort(pairs.begin(), pairs.end());
        for (std::size_t j = 0; j < pairs.size(); ++j)
        {
            key[2 * j] = pairs[j].first;
            key[2 * j + 1] = pairs[j].second;
        }
        auto& c = classes[key];
        c.weight += e.weight(i);
        if (e.height(i) >= n)
            c.surviving += e.weight(i);
        c.frontier = frontier;
    }

    // rho theta_{n-m} = total weight of trees reaching distance n - m.
    long double reach = 0.0L;
    for (std::size_t i = 0; i < e.size(); ++i)
        if (e.height(i) >= n - m)
            reach += e.weight(i);

    SelfRepellenceReport report;
    for (const auto& [skeleton, c] : classes)
    {
        if (c.frontier == 0)
            continue;
        ++report.classes;
        const long double lhs = c.surviving / c.weight;
        const long double rhs = static_cast<long double>(c.frontier) * reach;
        report.max_ratio = std::max(report.max_ratio, static_cast<double>(lhs / rhs));
    }
    if (report.classes == 0)
        throw std::invalid_argument("verify_self_repellence_lt: no skeleton reaches distance m");
    report.pass = report.max_ratio <= 1.0 + 1e-12;
    return report;
}

}  // namespace sll

// Exact enumeration of lattice trees containing the origin, truncated at a
// bond cutoff, and the combinatorial self-repellence check on them.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sll/kernel.hpp"
#include "sll/models.hpp"

namespace sll {

/// Bond oriented away from the origin. `depth` is the tree distance of the
/// child from the origin.
struct TreeBond
{
    std::uint64_t parent = 0;
    std::uint64_t child = 0;
    std::int32_t depth = 0;
};

/// All lattice trees T containing 0 with at most `bond_cutoff` bonds, each
/// with weight W_z(T) = z^{|B|} prod D(y - x). Bonds use packed coordinates
/// (see `packer()`).
class LatticeTreeEnsemble
{
  public:
    const SpreadOutKernel& kernel() const noexcept { return kernel_; }
    const CoordinatePacker& packer() const noexcept { return packer_; }
    double z() const noexcept { return z_; }
    int bond_cutoff() const noexcept { return bond_cutoff_; }

    std::size_t size() const noexcept { return weights_.size(); }
    std::span<const TreeBond> tree(std::size_t i) const noexcept
    {
        return {bonds_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    double weight(std::size_t i) const noexcept { return weights_[i]; }
    /// Largest tree distance from the origin in tree i.
    int height(std::size_t i) const noexcept { return heights_[i]; }
    /// Sum of all weights.
    double rho_truncated() const noexcept { return rho_; }

    /// N_m(T) for m = 0..height(i).
    std::vector<std::int64_t> level_counts(std::size_t i) const;

  private:
    friend LatticeTreeEnsemble enumerate_lattice_trees(const SpreadOutKernel&, double,
                                                       int, std::size_t);
    LatticeTreeEnsemble(SpreadOutKernel k, CoordinatePacker p, double z, int b)
        : kernel_(std::move(k)), packer_(p), z_(z), bond_cutoff_(b)
    {
    }

    SpreadOutKernel kernel_;
    CoordinatePacker packer_;
    double z_;
    int bond_cutoff_;
    std::vector<TreeBond> bonds_;
    std::vector<std::size_t> offsets_{0};
    std::vector<double> weights_;
    std::vector<int> heights_;
    double rho_ = 0.0;
};

constexpr std::size_t kMaxEnumeratedTrees = 10'000'000;

/// Depth-first enumeration with an excluded-edge list, which produces every
/// tree exactly once. Throws std::length_error once more than `max_trees`
/// trees have been produced.
LatticeTreeEnsemble enumerate_lattice_trees(const SpreadOutKernel& kernel, double z,
                                            int bond_cutoff,
                                            std::size_t max_trees = kMaxEnumeratedTrees);

struct LatticeTreeLevels
{
    double theta_n = 0.0;
    std::vector<std::vector<std::int64_t>> level_counts;  ///< per tree
};

/// theta_n = sum_{T : A_n(T) nonempty} W(T) / rho_truncated.
LatticeTreeLevels lt_survival_and_levels(const LatticeTreeEnsemble& e, int n);

/// theta_n only.
double lt_survival(const LatticeTreeEnsemble& e, int n);

struct SelfRepellenceReport
{
    double max_ratio = 0.0;
    bool pass = false;
    std::size_t classes = 0;  ///< distinct skeletons T_m with N_m > 0
};

/// Compares P(A_m -> n | T_m = tau) with N_m(tau) rho theta_{n-m} for every
/// realized skeleton tau and reports the largest ratio.
SelfRepellenceReport verify_self_repellence_lt(const LatticeTreeEnsemble& e, int m, int n);

}  // namespace sll

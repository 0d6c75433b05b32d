// Spread-out step distribution D on Z^d.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/random/binomial_distribution.hpp>

#include "json.hpp"

#include "sll/stats.hpp"

namespace sll {

/// Point of Z^d; the dimension is the vector length.
using LatticePoint = std::vector<std::int32_t>;

/// Symmetric probability mass function on Z^d with D(0) = 0 and support
/// inside the box [-L, L]^d. Immutable after construction.
///
/// Masses live in a dense table indexed by the base-(2L+1) encoding of the
/// box, so lookup is O(d). The support is also kept as an explicit list for
/// sampling: uniform kernels draw an index uniformly, others use an alias
/// table.
class SpreadOutKernel
{
  public:
    /// Uniform on [-L, L]^d minus the origin.
    static SpreadOutKernel uniform_box(int d, int L);

    /// Arbitrary table. Rejects tables that are not normalized, not
    /// symmetric, or that put mass on the origin.
    static SpreadOutKernel from_table(int d, std::span<const LatticePoint> points,
                                      std::span<const double> masses);

    int dimension() const noexcept { return d_; }
    int range() const noexcept { return L_; }
    bool is_uniform() const noexcept { return uniform_; }
    std::size_t support_size() const noexcept { return masses_.size(); }
    double max_mass() const noexcept { return max_mass_; }

    /// D(x); zero outside the box. Throws on dimension mismatch.
    double mass(std::span<const std::int32_t> x) const;

    /// i-th support point (coordinates) and its mass.
    std::span<const std::int32_t> support_point(std::size_t i) const noexcept
    {
        return {offsets_.data() + i * static_cast<std::size_t>(d_),
                static_cast<std::size_t>(d_)};
    }
    double support_mass(std::size_t i) const noexcept { return masses_[i]; }

    /// Index into the support list, distributed as D.
    std::size_t sample_index(RandomStream& rng) const noexcept;

  private:
    SpreadOutKernel() = default;
    void finish();

    int d_ = 0;
    int L_ = 0;
    bool uniform_ = false;
    double max_mass_ = 0.0;
    std::vector<double> box_mass_;        // dense over [-L, L]^d
    std::vector<std::int32_t> offsets_;   // support points, d per entry
    std::vector<double> masses_;          // support masses
    std::vector<double> alias_prob_;      // Walker alias table
    std::vector<std::uint32_t> alias_index_;
};

/// Draws the occupied forward bonds of one site at bond parameter p, as
/// support indices (distinct, unordered). For uniform kernels the child
/// count is Binomial(|supp D|, p/|supp D|) and positions are distinct
/// uniform picks, which is the per-bond Bernoulli product law.
class ForwardBondSampler
{
  public:
    ForwardBondSampler(const SpreadOutKernel& kernel, double p);

    /// Appends to `out`.
    void operator()(RandomStream& rng, std::vector<std::uint32_t>& out) const;

    double p() const noexcept { return p_; }

  private:
    const SpreadOutKernel* kernel_;
    double p_;
    double q_ = 0.0;
    boost::random::binomial_distribution<std::int64_t, double> count_;
};

/// v = sum_x |x|^2 D(x).
double kernel_variance(const SpreadOutKernel& k);

/// D^(k) = sum_x cos(k.x) D(x).
double kernel_fourier(const SpreadOutKernel& k, std::span<const double> wavevector);

LatticePoint sample_step(const SpreadOutKernel& k, RandomStream& rng);

/// Each forward neighbour y of `parent` is occupied independently with
/// probability p D(y - parent).
std::vector<LatticePoint> sample_forward_children(const SpreadOutKernel& k,
                                                  double p,
                                                  std::span<const std::int32_t> parent,
                                                  RandomStream& rng);

/// {d, L, family: "uniform_box", p?}
nlohmann::json kernel_to_json(const SpreadOutKernel& k,
                              std::optional<double> p = std::nullopt);
SpreadOutKernel kernel_from_json(const nlohmann::json& j);

}  // namespace sll

// Cluster samplers for the critical model zoo: Galton–Watson, branching
// random walk, spread-out oriented percolation and the contact process.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sll/analytic.hpp"
#include "sll/kernel.hpp"
#include "sll/stats.hpp"

namespace sll {

constexpr std::int64_t kDefaultPopulationCap = 10'000'000;

/// Positions of the particles alive at one observation time. Branching
/// random walk level sets are multisets; percolation level sets are sets.
struct LevelSet
{
    double time = 0.0;
    int dimension = 0;
    std::vector<std::int32_t> coords;  ///< `dimension` entries per point

    std::size_t size() const noexcept
    {
        return dimension ? coords.size() / static_cast<std::size_t>(dimension) : 0;
    }
    std::span<const std::int32_t> point(std::size_t i) const noexcept
    {
        return {coords.data() + i * static_cast<std::size_t>(dimension),
                static_cast<std::size_t>(dimension)};
    }
};

/// One cluster observed from a single initial particle at the origin.
///
/// Discrete-time models store counts per generation, truncated after the
/// first zero (or at the horizon, or when the population cap is hit).
/// Continuous-time models store counts on the requested sample grid, whose
/// first entry is time 0.
struct Trajectory
{
    bool continuous_time = false;
    std::vector<double> times;  ///< sample grid (continuous time only)
    std::vector<std::int64_t> counts;
    std::vector<LevelSet> level_sets;
    double survival_time = 0.0;  ///< last time with N > 0 (horizon if alive)
    double cluster_size = 0.0;   ///< sum of counts, or time integral of N
    bool censored = false;       ///< alive at the horizon, or cap hit
    bool cap_hit = false;

    /// N at a generation / sample index. Past the stored range the count is
    /// 0, except after a cap hit where the last (lower-bound) count is
    /// returned.
    std::int64_t count_at(std::size_t index) const noexcept;

    /// Whether N > 0 at the index; cap-censored clusters count as alive.
    bool alive_at(std::size_t index) const noexcept;

    const LevelSet* level_set_at(double time) const noexcept;
};

/// Returns a description of the first violated invariant, if any.
std::optional<std::string> check_trajectory(const Trajectory& t, int range_L);

//---------------------------------------------------------------------------//
// Models
//---------------------------------------------------------------------------//

struct GaltonWatsonModel
{
    OffspringDistribution law;
};

struct BranchingRandomWalkModel
{
    OffspringDistribution law;
    SpreadOutKernel kernel;
};

struct OrientedPercolationModel
{
    SpreadOutKernel kernel;
    double p = 0.0;
};

struct ContactProcessModel
{
    SpreadOutKernel kernel;
    double lambda = 0.0;
};

using Model = std::variant<GaltonWatsonModel, BranchingRandomWalkModel,
                           OrientedPercolationModel, ContactProcessModel>;

bool is_continuous_time(const Model& m) noexcept;
bool has_positions(const Model& m) noexcept;
/// Spatial dimension, or 0 for counts-only models.
int model_dimension(const Model& m) noexcept;
std::string model_name(const Model& m);

/// What a simulation records.
struct ObservationPlan
{
    double horizon = 0.0;               ///< generations, or time
    std::vector<double> sample_times;   ///< continuous-time grid
    std::vector<double> level_times;    ///< keep positions at these times
    std::int64_t population_cap = kDefaultPopulationCap;
};

Trajectory simulate_gw(const OffspringDistribution& law, std::int64_t horizon,
                       RandomStream& rng,
                       std::int64_t population_cap = kDefaultPopulationCap);

Trajectory simulate_brw(const OffspringDistribution& law, const SpreadOutKernel& kernel,
                        std::int64_t horizon, RandomStream& rng,
                        std::span<const std::int64_t> level_generations = {},
                        std::int64_t population_cap = kDefaultPopulationCap);

Trajectory simulate_op_cluster(const OrientedPercolationModel& m, std::int64_t horizon,
                               RandomStream& rng,
                               std::span<const std::int64_t> level_generations = {},
                               std::int64_t population_cap = kDefaultPopulationCap);

Trajectory simulate_cp_cluster(const ContactProcessModel& m, double horizon,
                               std::span<const double> sample_times, RandomStream& rng,
                               std::int64_t population_cap = kDefaultPopulationCap);

/// Dispatches on the model type. Discrete-time models use floor(time).
Trajectory simulate(const Model& m, const ObservationPlan& plan, RandomStream& rng);

//---------------------------------------------------------------------------//

/// Packs points of Z^d into 64-bit words, `bits` per coordinate with an
/// offset of 2^{bits-1}. Translation by a fixed step is a single addition.
class CoordinatePacker
{
  public:
    /// Chooses the narrowest field that holds |x_i| <= bound.
    static CoordinatePacker for_bound(int d, std::int64_t bound);
    /// Widest field for dimension d.
    static CoordinatePacker widest(int d);

    int dimension() const noexcept { return d_; }
    int bits() const noexcept { return bits_; }
    std::int64_t max_abs() const noexcept { return (std::int64_t{1} << (bits_ - 1)) - 1; }

    std::uint64_t pack(std::span<const std::int32_t> x) const;
    void unpack(std::uint64_t word, std::int32_t* out) const noexcept;
    /// Additive increment for a step; valid while fields stay in range.
    std::uint64_t delta(std::span<const std::int32_t> step) const noexcept;
    /// Whether every coordinate satisfies |x_i| <= limit.
    bool within(std::uint64_t word, std::int64_t limit) const noexcept;

  private:
    CoordinatePacker(int d, int bits) : d_(d), bits_(bits) {}
    int d_;
    int bits_;
};

}  // namespace sll

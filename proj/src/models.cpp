#include "sll/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace sll {

//---------------------------------------------------------------------------//
// Trajectory
//---------------------------------------------------------------------------//

std::int64_t Trajectory::count_at(std::size_t index) const noexcept
{
    if (index < counts.size())
        return counts[index];
    if (cap_hit && !counts.empty())
        return counts.back();
    return 0;
}

bool Trajectory::alive_at(std::size_t index) const noexcept
{
    if (index < counts.size())
        return counts[index] > 0;
    return cap_hit;
}

const LevelSet* Trajectory::level_set_at(double time) const noexcept
{
    for (const auto& ls : level_sets)
        if (ls.time == time)
            return &ls;
    return nullptr;
}

std::optional<std::string> check_trajectory(const Trajectory& t, int range_L)
{
    if (t.counts.empty() || t.counts[0] != 1)
        return "counts[0] must be 1";
    bool extinct = false;
    for (auto c : t.counts)
    {
        if (c < 0)
            return "negative count";
        if (extinct && c != 0)
            return "count revived after extinction";
        extinct = extinct || c == 0;
    }
    if (t.continuous_time)
    {
        if (t.times.size() != t.counts.size())
            return "sample grid and counts differ in length";
    }
    else
    {
        if (t.cluster_size < t.survival_time + 1)
            return "cluster_size below survival_time + 1";
        for (const auto& ls : t.level_sets)
        {
            const auto limit = static_cast<std::int64_t>(std::floor(ls.time)) * range_L;
            for (std::size_t i = 0; i < ls.size(); ++i)
                for (auto xi : ls.point(i))
                    if (std::abs(static_cast<std::int64_t>(xi)) > limit)
                        return "level-set point beyond j*L";
            const auto g = static_cast<std::size_t>(std::floor(ls.time));
            if (static_cast<std::int64_t>(ls.size()) != t.count_at(g) && !t.cap_hit)
                return "level-set size differs from count";
        }
    }
    return std::nullopt;
}

//---------------------------------------------------------------------------//
// Packing
//---------------------------------------------------------------------------//

CoordinatePacker CoordinatePacker::for_bound(int d, std::int64_t bound)
{
    if (d < 1 || bound < 0)
        throw std::invalid_argument("CoordinatePacker: invalid dimension or bound");
    int bits = 1;
    while ((std::int64_t{1} << (bits - 1)) - 1 < bound)
        ++bits;
    if (static_cast<long>(bits) * d > 63)
        throw std::overflow_error("CoordinatePacker: coordinates do not fit in 64 bits");
    return CoordinatePacker(d, bits);
}

CoordinatePacker CoordinatePacker::widest(int d)
{
    if (d < 1 || d > 31)
        throw std::overflow_error("CoordinatePacker: dimension too large to pack");
    return CoordinatePacker(d, 63 / d);
}

std::uint64_t CoordinatePacker::pack(std::span<const std::int32_t> x) const
{
    if (static_cast<int>(x.size()) != d_)
        throw std::invalid_argument("CoordinatePacker: dimension mismatch");
    const std::int64_t offset = std::int64_t{1} << (bits_ - 1);
    std::uint64_t word = 0;
    for (int i = 0; i < d_; ++i)
    {
        if (std::abs(static_cast<std::int64_t>(x[static_cast<std::size_t>(i)])) > max_abs())
            throw std::overflow_error("CoordinatePacker: coordinate out of range");
        word |= static_cast<std::uint64_t>(x[static_cast<std::size_t>(i)] + offset) << (i * bits_);
    }
    return word;
}

void CoordinatePacker::unpack(std::uint64_t word, std::int32_t* out) const noexcept
{
    const std::uint64_t mask = (std::uint64_t{1} << bits_) - 1;
    const std::int64_t offset = std::int64_t{1} << (bits_ - 1);
    for (int i = 0; i < d_; ++i)
        out[i] = static_cast<std::int32_t>(
            static_cast<std::int64_t>((word >> (i * bits_)) & mask) - offset);
}

std::uint64_t CoordinatePacker::delta(std::span<const std::int32_t> step) const noexcept
{
    std::uint64_t word = 0;
    for (int i = 0; i < d_; ++i)
        word += static_cast<std::uint64_t>(static_cast<std::int64_t>(step[static_cast<std::size_t>(i)]))
                << (i * bits_);
    return word;
}

bool CoordinatePacker::within(std::uint64_t word, std::int64_t limit) const noexcept
{
    const std::uint64_t mask = (std::uint64_t{1} << bits_) - 1;
    const std::int64_t offset = std::int64_t{1} << (bits_ - 1);
    for (int i = 0; i < d_; ++i)
    {
        const auto x = static_cast<std::int64_t>((word >> (i * bits_)) & mask) - offset;
        if (x < -limit || x > limit)
            return false;
    }
    return true;
}

namespace {

std::vector<std::uint64_t> step_deltas(const SpreadOutKernel& k, const CoordinatePacker& packer)
{
    std::vector<std::uint64_t> deltas(k.support_size());
    for (std::size_t i = 0; i < deltas.size(); ++i)
        deltas[i] = packer.delta(k.support_point(i));
    return deltas;
}

bool contains(std::span<const std::int64_t> sorted, std::int64_t g)
{
    return std::binary_search(sorted.begin(), sorted.end(), g);
}

std::vector<std::int64_t> sorted_generations(std::span<const std::int64_t> gens)
{
    std::vector<std::int64_t> out(gens.begin(), gens.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void finish_discrete(Trajectory& t, std::int64_t horizon)
{
    std::int64_t last_alive = 0;
    double size = 0.0;
    for (std::size_t j = 0; j < t.counts.size(); ++j)
    {
        size += static_cast<double>(t.counts[j]);
        if (t.counts[j] > 0)
            last_alive = static_cast<std::int64_t>(j);
    }
    t.cluster_size = size;
    t.survival_time = static_cast<double>(last_alive);
    t.censored = t.cap_hit || (last_alive == horizon && t.counts.back() > 0);
}

}  // namespace

//---------------------------------------------------------------------------//
// Galton–Watson
//---------------------------------------------------------------------------//

Trajectory simulate_gw(const OffspringDistribution& law, std::int64_t horizon,
                       RandomStream& rng, std::int64_t population_cap)
{
    if (horizon < 1)
        throw std::invalid_argument("simulate_gw: horizon must be >= 1");
    Trajectory t;
    t.counts.reserve(16);
    t.counts.push_back(1);
    std::uint64_t alive = 1;
    for (std::int64_t g = 1; g <= horizon && alive > 0; ++g)
    {
        alive = law.sample_total(alive, rng);
        t.counts.push_back(static_cast<std::int64_t>(alive));
        if (static_cast<std::int64_t>(alive) > population_cap)
        {
            t.cap_hit = true;
            break;
        }
    }
    finish_discrete(t, horizon);
    return t;
}

//---------------------------------------------------------------------------//
// Branching random walk
//---------------------------------------------------------------------------//

Trajectory simulate_brw(const OffspringDistribution& law, const SpreadOutKernel& kernel,
                        std::int64_t horizon, RandomStream& rng,
                        std::span<const std::int64_t> level_generations,
                        std::int64_t population_cap)
{
    if (horizon < 1)
        throw std::invalid_argument("simulate_brw: horizon must be >= 1");
    const int d = kernel.dimension();
    const auto ud = static_cast<std::size_t>(d);
    const auto levels = sorted_generations(level_generations);

    Trajectory t;
    t.counts.push_back(1);
    std::vector<std::int32_t> current(ud, 0);
    std::vector<std::int32_t> next;
    if (contains(levels, 0))
        t.level_sets.push_back({0.0, d, current});

    for (std::int64_t g = 1; g <= horizon && !current.empty(); ++g)
    {
        next.clear();
        const std::size_t parents = current.size() / ud;
        for (std::size_t i = 0; i < parents; ++i)
        {
            const std::uint32_t children = law.sample(rng);
            for (std::uint32_t c = 0; c < children; ++c)
            {
                const auto step = kernel.support_point(kernel.sample_index(rng));
                for (std::size_t j = 0; j < ud; ++j)
                    next.push_back(current[i * ud + j] + step[j]);
            }
        }
        std::swap(current, next);
        const auto count = static_cast<std::int64_t>(current.size() / ud);
        t.counts.push_back(count);
        if (contains(levels, g))
            t.level_sets.push_back({static_cast<double>(g), d, current});
        if (count > population_cap)
        {
            t.cap_hit = true;
            break;
        }
    }
    finish_discrete(t, horizon);
    return t;
}

//---------------------------------------------------------------------------//
// Oriented percolation
//---------------------------------------------------------------------------//

Trajectory simulate_op_cluster(const OrientedPercolationModel& m, std::int64_t horizon,
                               RandomStream& rng,
                               std::span<const std::int64_t> level_generations,
                               std::int64_t population_cap)
{
    if (horizon < 1)
        throw std::invalid_argument("simulate_op_cluster: horizon must be >= 1");
    const SpreadOutKernel& k = m.kernel;
    const int d = k.dimension();
    const ForwardBondSampler bonds(k, m.p);
    const auto packer = CoordinatePacker::for_bound(d, static_cast<std::int64_t>(k.range()) * horizon);
    const auto deltas = step_deltas(k, packer);
    const auto levels = sorted_generations(level_generations);

    auto record = [&](Trajectory& t, double time, const std::vector<std::uint64_t>& sites) {
        LevelSet ls{time, d, {}};
        ls.coords.resize(sites.size() * static_cast<std::size_t>(d));
        for (std::size_t i = 0; i < sites.size(); ++i)
            packer.unpack(sites[i], ls.coords.data() + i * static_cast<std::size_t>(d));
        t.level_sets.push_back(std::move(ls));
    };

    Trajectory t;
    t.counts.push_back(1);
    std::vector<std::uint64_t> current{packer.pack(std::vector<std::int32_t>(static_cast<std::size_t>(d), 0))};
    std::vector<std::uint64_t> next;
    std::vector<std::uint32_t> picks;
    if (contains(levels, 0))
        record(t, 0.0, current);

    for (std::int64_t g = 1; g <= horizon && !current.empty(); ++g)
    {
        next.clear();
        for (const std::uint64_t site : current)
        {
            picks.clear();
            bonds(rng, picks);
            for (auto idx : picks)
                next.push_back(site + deltas[idx]);
        }
        // Set semantics: arrivals at the same site merge.
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        std::swap(current, next);
        const auto count = static_cast<std::int64_t>(current.size());
        t.counts.push_back(count);
        if (contains(levels, g))
            record(t, static_cast<double>(g), current);
        if (count > population_cap)
        {
            t.cap_hit = true;
            break;
        }
    }
    finish_discrete(t, horizon);
    return t;
}

//---------------------------------------------------------------------------//
// Contact process
//---------------------------------------------------------------------------//

Trajectory simulate_cp_cluster(const ContactProcessModel& m, double horizon,
                               std::span<const double> sample_times, RandomStream& rng,
                               std::int64_t population_cap)
{
    if (!(horizon > 0.0))
        throw std::invalid_argument("simulate_cp_cluster: horizon must be positive");
    if (m.lambda < 0.0)
        throw std::invalid_argument("simulate_cp_cluster: lambda must be >= 0");
    if (!std::is_sorted(sample_times.begin(), sample_times.end()))
        throw std::invalid_argument("simulate_cp_cluster: sample times must be sorted");
    if (!sample_times.empty() && (sample_times.front() < 0.0 || sample_times.back() > horizon))
        throw std::invalid_argument("simulate_cp_cluster: sample times outside [0, horizon]");

    const SpreadOutKernel& k = m.kernel;
    const int d = k.dimension();
    const auto packer = CoordinatePacker::widest(d);
    const auto deltas = step_deltas(k, packer);
    const std::int64_t safe = packer.max_abs() - k.range();

    Trajectory t;
    t.continuous_time = true;
    t.times.push_back(0.0);
    for (double s : sample_times)
        if (s > 0.0)
            t.times.push_back(s);
    t.counts.assign(t.times.size(), 0);

    std::vector<std::uint64_t> infected{packer.pack(std::vector<std::int32_t>(static_cast<std::size_t>(d), 0))};
    std::unordered_map<std::uint64_t, std::uint32_t> where;
    where.reserve(64);
    where.emplace(infected[0], 0);

    const double recover_prob = 1.0 / (1.0 + m.lambda);
    double now = 0.0;
    double integral = 0.0;
    std::size_t next_sample = 0;
    bool alive = true;
    for (;;)
    {
        const auto n = static_cast<double>(infected.size());
        const double dt = rng.exponential(1.0 / (n * (1.0 + m.lambda)));
        const double until = std::min(now + dt, horizon);
        while (next_sample < t.times.size() && t.times[next_sample] < until)
            t.counts[next_sample++] = static_cast<std::int64_t>(infected.size());
        integral += n * (until - now);
        if (now + dt >= horizon)
        {
            while (next_sample < t.times.size())
                t.counts[next_sample++] = static_cast<std::int64_t>(infected.size());
            now = horizon;
            break;
        }
        now += dt;
        if (rng.uniform() < recover_prob)
        {
            const auto victim = static_cast<std::size_t>(rng.below(infected.size()));
            const std::uint64_t site = infected[victim];
            where.erase(site);
            if (victim + 1 != infected.size())
            {
                infected[victim] = infected.back();
                where[infected[victim]] = static_cast<std::uint32_t>(victim);
            }
            infected.pop_back();
            if (infected.empty())
            {
                alive = false;
                break;
            }
        }
        else
        {
            const std::uint64_t source = infected[rng.below(infected.size())];
            const std::uint64_t target = source + deltas[k.sample_index(rng)];
            if (where.find(target) == where.end())
            {
                if (!packer.within(target, safe))
                    throw std::overflow_error("simulate_cp_cluster: lattice coordinate overflow");
                where.emplace(target, static_cast<std::uint32_t>(infected.size()));
                infected.push_back(target);
                if (static_cast<std::int64_t>(infected.size()) > population_cap)
                {
                    t.cap_hit = true;
                    while (next_sample < t.times.size() && t.times[next_sample] <= now)
                        t.counts[next_sample++] = static_cast<std::int64_t>(infected.size());
                    break;
                }
            }
        }
    }
    // Samples after a cap hit are unknown; extinct clusters keep zeros.
    if (t.cap_hit)
        t.counts.resize(std::max<std::size_t>(next_sample, 1));
    t.cluster_size = integral;
    t.survival_time = now;
    t.censored = alive;
    return t;
}

//---------------------------------------------------------------------------//

bool is_continuous_time(const Model& m) noexcept
{
    return std::holds_alternative<ContactProcessModel>(m);
}

bool has_positions(const Model& m) noexcept
{
    return std::holds_alternative<BranchingRandomWalkModel>(m)
           || std::holds_alternative<OrientedPercolationModel>(m);
}

int model_dimension(const Model& m) noexcept
{
    return std::visit(
        [](const auto& model) -> int {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, GaltonWatsonModel>)
                return 0;
            else
                return model.kernel.dimension();
        },
        m);
}

std::string model_name(const Model& m)
{
    static const char* names[] = {"gw", "brw", "op", "cp"};
    return names[m.index()];
}

Trajectory simulate(const Model& m, const ObservationPlan& plan, RandomStream& rng)
{
    std::vector<std::int64_t> gens;
    for (double t : plan.level_times)
        gens.push_back(static_cast<std::int64_t>(std::floor(t)));
    const auto horizon = static_cast<std::int64_t>(std::floor(plan.horizon));
    return std::visit(
        [&](const auto& model) -> Trajectory {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, GaltonWatsonModel>)
                return simulate_gw(model.law, horizon, rng, plan.population_cap);
            else if constexpr (std::is_same_v<T, BranchingRandomWalkModel>)
                return simulate_brw(model.law, model.kernel, horizon, rng, gens,
                                    plan.population_cap);
            else if constexpr (std::is_same_v<T, OrientedPercolationModel>)
                return simulate_op_cluster(model, horizon, rng, gens, plan.population_cap);
            else
                return simulate_cp_cluster(model, plan.horizon, plan.sample_times, rng,
                                           plan.population_cap);
        },
        m);
}

}  // namespace sll

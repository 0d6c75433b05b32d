#include "sll/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sll {
namespace {

constexpr double kTimeSlack = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::int64_t generation_of(double time)
{
    return static_cast<std::int64_t>(std::floor(time + kTimeSlack));
}

double int_power(double x, int k)
{
    double r = 1.0;
    for (int i = 0; i < k; ++i)
        r *= x;
    return r;
}

/// Observation plan for a set of absolute times, and the map from a time to
/// its index in Trajectory::counts.
class TimeGrid
{
  public:
    TimeGrid(const Model& m, std::vector<double> times, bool keep_levels = false)
        : continuous_(is_continuous_time(m))
    {
        for (double t : times)
            if (!(t >= 0.0) || !std::isfinite(t))
                throw std::invalid_argument("observation times must be finite and >= 0");
        if (keep_levels)
            plan.level_times = times;
        if (continuous_)
        {
            for (double t : times)
                if (t > 0.0)
                    grid_.push_back(t);
            std::sort(grid_.begin(), grid_.end());
            grid_.erase(std::unique(grid_.begin(), grid_.end()), grid_.end());
            plan.sample_times = grid_;
            plan.horizon = grid_.empty() ? 1e-12 : grid_.back();
        }
        else
        {
            std::int64_t horizon = 1;
            for (double t : times)
                horizon = std::max(horizon, generation_of(t));
            plan.horizon = static_cast<double>(horizon);
        }
    }

    std::size_t index(double time) const
    {
        if (!continuous_)
            return static_cast<std::size_t>(generation_of(time));
        if (time <= 0.0)
            return 0;
        const auto it = std::lower_bound(grid_.begin(), grid_.end(), time);
        return 1 + static_cast<std::size_t>(it - grid_.begin());
    }

    /// Level set recorded for `time`, or nullptr (extinct or not recorded).
    const LevelSet* levels(const Trajectory& t, double time) const
    {
        return t.level_set_at(static_cast<double>(generation_of(time)));
    }

    ObservationPlan plan;

  private:
    bool continuous_;
    std::vector<double> grid_;
};

/// Mergeable per-group state shared by most estimators.
struct PoolAcc
{
    std::uint64_t total = 0;
    std::uint64_t cap_hits = 0;
    std::vector<MomentAccumulator> moments;
    std::vector<std::uint64_t> counts;

    static PoolAcc sized(std::size_t n_moments, std::size_t n_counts)
    {
        PoolAcc a;
        a.moments.resize(n_moments);
        a.counts.resize(n_counts, 0);
        return a;
    }

    void merge(const PoolAcc& o)
    {
        total += o.total;
        cap_hits += o.cap_hits;
        if (moments.size() < o.moments.size())
            moments.resize(o.moments.size());
        if (counts.size() < o.counts.size())
            counts.resize(o.counts.size(), 0);
        for (std::size_t i = 0; i < o.moments.size(); ++i)
            moments[i].merge(o.moments[i]);
        for (std::size_t i = 0; i < o.counts.size(); ++i)
            counts[i] += o.counts[i];
    }
};

template<class Acc, class Body>
std::vector<Acc> run_pool(const Model& m, const ObservationPlan& obs, const ReplicatePlan& plan,
                          const Acc& prototype, Body&& body)
{
    if (plan.replicates < 1)
        throw std::invalid_argument("replicates must be >= 1");
    return run_grouped(plan, prototype, [&](Acc& acc, std::uint64_t, RandomStream& rng) {
        const Trajectory t = simulate(m, obs, rng);
        body(acc, t);
    });
}

EstimateWithCI proportion_estimate(std::uint64_t successes, std::uint64_t trials,
                                   double scale = 1.0)
{
    const double p = static_cast<double>(successes) / static_cast<double>(trials);
    const auto ci = wilson_interval(successes, trials);
    EstimateWithCI e;
    e.value = scale * p;
    e.std_error = scale * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    e.ci_low = scale * ci.low;
    e.ci_high = scale * ci.high;
    e.n_samples = trials;
    e.n_effective = successes;
    return e;
}

EstimateWithCI normal_estimate(double value, double se, std::uint64_t n)
{
    const double z = normal_critical_value(0.95);
    EstimateWithCI e;
    e.value = value;
    e.std_error = se;
    e.ci_low = value - z * se;
    e.ci_high = value + z * se;
    e.n_samples = n;
    e.n_effective = n;
    return e;
}

EstimateWithCI scaled(EstimateWithCI e, double factor)
{
    e.value *= factor;
    e.std_error *= std::abs(factor);
    e.ci_low *= factor;
    e.ci_high *= factor;
    if (factor < 0.0)
        std::swap(e.ci_low, e.ci_high);
    return e;
}

void check_times_at_least(const MomentSpec& spec, double t)
{
    for (double s : spec.times)
        if (s + kTimeSlack < t)
            throw std::invalid_argument("spec times must not precede the conditioning time");
}

std::vector<double> window_points(const Model& m, double n1, double n2, int points)
{
    if (!(n1 > 0.0 && n2 > n1))
        throw std::invalid_argument("window must satisfy 0 < n1 < n2");
    if (points < 3)
        throw std::invalid_argument("window needs at least 3 points");
    std::vector<double> out;
    for (int i = 0; i < points; ++i)
    {
        double g = n1 + (n2 - n1) * i / (points - 1);
        if (!is_continuous_time(m))
            g = static_cast<double>(generation_of(g + 0.5));
        out.push_back(g);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.size() < 3)
        throw std::invalid_argument("window has fewer than 3 distinct generations");
    return out;
}

double median(std::vector<double> v)
{
    if (v.empty())
        return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double ols_slope(std::span<const double> xs, std::span<const double> ys)
{
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxy / sxx;
}

/// Critical-GW total counts with a spine kept alive for `spine_gens`
/// generations: the law of the counts under the measure size-biased by
/// N_{spine_gens}.
std::vector<std::int64_t> simulate_spine_counts(const OffspringDistribution& law,
                                                const std::vector<double>& biased_cdf,
                                                std::int64_t spine_gens, std::int64_t horizon,
                                                RandomStream& rng)
{
    std::vector<std::int64_t> counts{1};
    std::uint64_t alive = 1;
    for (std::int64_t g = 1; g <= horizon; ++g)
    {
        if (g <= spine_gens)
        {
            const double u = rng.uniform();
            const auto k = static_cast<std::uint64_t>(
                std::upper_bound(biased_cdf.begin(), biased_cdf.end() - 1, u) - biased_cdf.begin());
            alive = k + law.sample_total(alive - 1, rng);
        }
        else
        {
            alive = law.sample_total(alive, rng);
        }
        counts.push_back(static_cast<std::int64_t>(alive));
        if (alive == 0 || static_cast<std::int64_t>(alive) > kDefaultPopulationCap)
            break;
    }
    return counts;
}

double truncated_h(TruncatedFunctional h, double x)
{
    switch (h)
    {
    case TruncatedFunctional::indicator_one: return 1.0;
    case TruncatedFunctional::identity_clipped: return std::min(x, 1.0);
    case TruncatedFunctional::exp_decay: return std::exp(-x);
    case TruncatedFunctional::zero: return 0.0;
    }
    return 0.0;
}

}  // namespace

//---------------------------------------------------------------------------//

void NormalizationContext::validate() const
{
    if (n < 1)
        throw std::invalid_argument("normalization: n must be >= 1");
    if (!(constants.A > 0.0 && constants.V > 0.0 && constants.v > 0.0))
        throw std::invalid_argument("normalization: constants must be positive");
}

std::uint64_t replicates_for_survivors(double n, std::uint64_t survivors, const ModelConstants& c)
{
    if (!(n > 0.0))
        throw std::invalid_argument("replicates_for_survivors: n must be positive");
    const double theta = std::min(1.0, 2.0 / (c.A * c.V * n));
    return static_cast<std::uint64_t>(std::ceil(static_cast<double>(survivors) / theta));
}

std::uint64_t replicates_for_relative_error(double second_moment, double mean,
                                            double relative_error)
{
    if (!(mean != 0.0 && relative_error > 0.0 && second_moment >= mean * mean))
        throw std::invalid_argument("replicates_for_relative_error: invalid arguments");
    const double var = second_moment - mean * mean;
    return static_cast<std::uint64_t>(
        std::ceil(var / (relative_error * relative_error * mean * mean)));
}

//---------------------------------------------------------------------------//
// Survival
//---------------------------------------------------------------------------//

SurvivalCurve estimate_survival_curve(const Model& model, std::span<const double> ns,
                                      const ReplicatePlan& plan)
{
    if (ns.empty())
        throw std::invalid_argument("estimate_survival_curve: no times requested");
    const TimeGrid grid(model, {ns.begin(), ns.end()});
    std::vector<std::size_t> idx;
    for (double n : ns)
        idx.push_back(grid.index(n));

    const auto groups = run_pool(model, grid.plan, plan, PoolAcc::sized(0, ns.size()),
                                 [&](PoolAcc& a, const Trajectory& t) {
                                     ++a.total;
                                     a.cap_hits += t.cap_hit;
                                     for (std::size_t i = 0; i < idx.size(); ++i)
                                         a.counts[i] += t.alive_at(idx[i]);
                                 });
    const auto all = merge_in_order(groups, PoolAcc{});

    SurvivalCurve out;
    out.replicates = all.total;
    out.cap_hits = all.cap_hits;
    for (std::size_t i = 0; i < ns.size(); ++i)
    {
        SurvivalPoint p;
        p.n = ns[i];
        p.survivors = all.counts[i];
        p.degenerate = p.survivors == 0;
        p.theta = proportion_estimate(p.survivors, all.total);
        p.n_theta = scaled(p.theta, ns[i]);
        out.points.push_back(p);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Moments
//---------------------------------------------------------------------------//

std::vector<MomentEstimate> estimate_scaled_moments(const Model& model,
                                                    const NormalizationContext& ctx,
                                                    std::span<const MomentSpec> specs,
                                                    const ReplicatePlan& plan)
{
    ctx.validate();
    if (specs.empty())
        throw std::invalid_argument("estimate_scaled_moments: no specs");
    const auto n = static_cast<double>(ctx.n);
    std::vector<double> times;
    for (const auto& spec : specs)
    {
        spec.validate(true);
        if (spec.total_order() == 0)
            throw std::invalid_argument(
                "estimate_scaled_moments: all exponents zero is ill-posed (value is n)");
        for (double t : spec.times)
            times.push_back(t * n);
    }
    const TimeGrid grid(model, times);
    std::vector<std::vector<std::size_t>> idx(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s)
        for (double t : specs[s].times)
            idx[s].push_back(grid.index(t * n));

    const auto groups = run_pool(model, grid.plan, plan, PoolAcc::sized(specs.size(), 0),
                                 [&](PoolAcc& a, const Trajectory& t) {
                                     ++a.total;
                                     a.cap_hits += t.cap_hit;
                                     for (std::size_t s = 0; s < specs.size(); ++s)
                                     {
                                         double z = n;
                                         for (std::size_t j = 0; j < idx[s].size(); ++j)
                                             z *= int_power(static_cast<double>(t.count_at(idx[s][j])) / n,
                                                            specs[s].exponents[j]);
                                         a.moments[s].add(z);
                                     }
                                 });
    const auto all = merge_in_order(groups, PoolAcc{});

    std::vector<MomentEstimate> out;
    for (std::size_t s = 0; s < specs.size(); ++s)
    {
        const auto& acc = all.moments[s];
        MomentEstimate e;
        e.estimate = mean_estimate(acc);
        e.predicted = predicted_scaled_moment(ctx.constants, specs[s]);
        e.cap_hits = all.cap_hits;
        e.excess_kurtosis = acc.excess_kurtosis();
        e.jackknife_stderr = kNaN;
        // The variance estimate itself is unreliable when (kurtosis + 2) / R
        // is large; its relative error is about sqrt((kurtosis + 2) / R).
        if (std::isfinite(e.excess_kurtosis)
            && std::sqrt((e.excess_kurtosis + 2.0) / static_cast<double>(acc.count())) > 0.5)
            e.warnings.push_back("heavy tail: excess kurtosis " + std::to_string(e.excess_kurtosis)
                                 + " too large for the replicate count");
        if (specs[s].total_order() >= 3)
        {
            e.jackknife_stderr = jackknife_stderr<PoolAcc>(
                groups, [s](const PoolAcc& a) { return a.moments[s].mean(); });
            const double ratio = e.jackknife_stderr / e.estimate.std_error;
            e.heavy_tail = !(ratio <= 2.0 && ratio >= 0.5);
            if (e.heavy_tail)
                e.warnings.push_back("jackknife and naive standard errors disagree by more than 2x");
        }
        out.push_back(std::move(e));
    }
    return out;
}

MomentEstimate estimate_scaled_moments(const Model& model, const NormalizationContext& ctx,
                                       const MomentSpec& spec, const ReplicatePlan& plan)
{
    return estimate_scaled_moments(model, ctx, std::span<const MomentSpec>(&spec, 1), plan).front();
}

FourierEstimate estimate_fourier_rpoint(const Model& model, const NormalizationContext& ctx,
                                        const MomentSpec& spec, const ReplicatePlan& plan)
{
    ctx.validate();
    spec.validate();
    if (!has_positions(model))
        throw std::invalid_argument("estimate_fourier_rpoint: model has no positions");
    const int d = model_dimension(model);
    if (spec.wavevectors.size() != spec.times.size())
        throw std::invalid_argument("estimate_fourier_rpoint: one wavevector per time required");
    const int order = spec.total_order();
    if (order > 2)
        throw UnsupportedOrderError("estimate_fourier_rpoint: only r-1 <= 2 is supported");

    const auto& c = ctx.constants;
    const auto n = static_cast<double>(ctx.n);
    const double norm = c.A * std::pow(c.V * c.A * c.A * n, order - 1);
    const double k_scale = 1.0 / std::sqrt(c.v * n);

    std::vector<double> times;
    for (double t : spec.times)
        times.push_back(t * n);
    const TimeGrid grid(model, times, true);

    FourierEstimate out;
    out.predicted = sbm_fourier_moment(spec, d);
    const auto groups = run_pool(
        model, grid.plan, plan, PoolAcc::sized(2, 0), [&](PoolAcc& a, const Trajectory& t) {
            ++a.total;
            a.cap_hits += t.cap_hit;
            std::complex<double> prod = 1.0;
            for (std::size_t j = 0; j < spec.times.size(); ++j)
            {
                std::complex<double> sum = 0.0;
                if (const LevelSet* ls = grid.levels(t, times[j]))
                    for (std::size_t i = 0; i < ls->size(); ++i)
                    {
                        const auto x = ls->point(i);
                        double phase = 0.0;
                        for (int q = 0; q < d; ++q)
                            phase += spec.wavevectors[j][static_cast<std::size_t>(q)]
                                     * static_cast<double>(x[static_cast<std::size_t>(q)]);
                        sum += std::polar(1.0, phase * k_scale);
                    }
                for (int e = 0; e < spec.exponents[j]; ++e)
                    prod *= sum;
            }
            a.moments[0].add(prod.real() / norm);
            a.moments[1].add(prod.imag() / norm);
        });
    const auto all = merge_in_order(groups, PoolAcc{});
    out.real = mean_estimate(all.moments[0]);
    out.imag = mean_estimate(all.moments[1]);
    out.cap_hits = all.cap_hits;
    return out;
}

ConditionalEstimate estimate_conditional_moments(const Model& model,
                                                 const NormalizationContext& ctx, double t,
                                                 const MomentSpec& spec, const ReplicatePlan& plan)
{
    ctx.validate();
    spec.validate(true);
    if (!(t > 0.0))
        throw std::invalid_argument("estimate_conditional_moments: t must be positive");
    check_times_at_least(spec, t);
    const auto n = static_cast<double>(ctx.n);

    std::vector<double> times{t * n};
    for (double s : spec.times)
        times.push_back(s * n);
    const TimeGrid grid(model, times);
    const std::size_t cond = grid.index(t * n);
    std::vector<std::size_t> idx;
    for (double s : spec.times)
        idx.push_back(grid.index(s * n));

    const auto groups = run_pool(model, grid.plan, plan, PoolAcc::sized(2, 1),
                                 [&](PoolAcc& a, const Trajectory& tr) {
                                     ++a.total;
                                     a.cap_hits += tr.cap_hit;
                                     if (!tr.alive_at(cond))
                                     {
                                         a.moments[1].add(0.0);
                                         return;
                                     }
                                     double z = 1.0;
                                     for (std::size_t j = 0; j < idx.size(); ++j)
                                         z *= int_power(static_cast<double>(tr.count_at(idx[j])) / n,
                                                        spec.exponents[j]);
                                     ++a.counts[0];
                                     a.moments[0].add(z);
                                     a.moments[1].add(z);
                                 });
    const auto all = merge_in_order(groups, PoolAcc{});

    ConditionalEstimate out;
    out.survivors = all.counts[0];
    out.low_power = out.survivors < 100;
    out.cap_hits = all.cap_hits;
    out.survival = static_cast<double>(out.survivors) / static_cast<double>(all.total);
    out.unconditional = all.moments[1].mean();
    if (out.survivors > 0)
        out.estimate = mean_estimate(all.moments[0]);
    else
        out.estimate.value = out.estimate.ci_low = out.estimate.ci_high = kNaN;
    out.estimate.n_samples = all.total;
    out.estimate.n_effective = out.survivors;

    const int order = spec.total_order();
    const auto& c = ctx.constants;
    out.predicted = order == 0 ? 1.0
                               : std::pow(c.V * c.A * c.A, order) * sbm_mass_moment(spec) * t / 2.0;
    return out;
}

EstimateWithCI feller_conditional_moment_mc(double t, const MomentSpec& spec,
                                            const ReplicatePlan& plan, const ModelConstants& c)
{
    spec.validate(true);
    if (!(t > 0.0))
        throw std::invalid_argument("feller_conditional_moment_mc: t must be positive");
    check_times_at_least(spec, t);
    std::vector<std::pair<double, int>> points;
    for (std::size_t j = 0; j < spec.times.size(); ++j)
        points.emplace_back(spec.times[j], spec.exponents[j]);
    std::sort(points.begin(), points.end());
    const double unit = c.V * c.A * c.A;

    const auto groups = run_grouped(plan, MomentAccumulator{},
                                    [&](MomentAccumulator& acc, std::uint64_t, RandomStream& rng) {
                                        double x = feller_entrance_sample(t, rng);
                                        double now = t;
                                        double z = 1.0;
                                        for (const auto& [s, l] : points)
                                        {
                                            if (s > now)
                                            {
                                                x = feller_exact_sample(x, s - now, rng);
                                                now = s;
                                            }
                                            z *= int_power(unit * x, l);
                                        }
                                        acc.add(z);
                                    });
    return mean_estimate(merge_in_order(groups, MomentAccumulator{}));
}

//---------------------------------------------------------------------------//
// Yaglom, tail, truncated functionals
//---------------------------------------------------------------------------//

double yaglom_reference_mean(const ModelConstants& c)
{
    return c.A * c.A * c.V / 2.0;
}

namespace {

struct SampleAcc
{
    std::uint64_t total = 0;
    std::uint64_t cap_hits = 0;
    std::vector<double> samples;

    void merge(const SampleAcc& o)
    {
        total += o.total;
        cap_hits += o.cap_hits;
        samples.insert(samples.end(), o.samples.begin(), o.samples.end());
    }
};

}  // namespace

YaglomResult estimate_yaglom(const Model& model, double n, double reference_mean,
                             const ReplicatePlan& plan)
{
    if (!(n > 0.0) || !(reference_mean > 0.0))
        throw std::invalid_argument("estimate_yaglom: n and reference mean must be positive");
    const TimeGrid grid(model, {n});
    const std::size_t at = grid.index(n);
    const auto groups = run_pool(model, grid.plan, plan, SampleAcc{},
                                 [&](SampleAcc& a, const Trajectory& t) {
                                     ++a.total;
                                     a.cap_hits += t.cap_hit;
                                     if (t.alive_at(at))
                                         a.samples.push_back(static_cast<double>(t.count_at(at)) / n);
                                 });
    auto all = merge_in_order(groups, SampleAcc{});
    if (all.samples.empty())
        throw std::runtime_error("estimate_yaglom: no replicate survived");

    YaglomResult out;
    out.reference_mean = reference_mean;
    out.survivors = all.samples.size();
    out.low_power = out.survivors < 1000;
    out.cap_hits = all.cap_hits;
    MomentAccumulator acc;
    for (double x : all.samples)
        acc.add(x);
    out.mean = mean_estimate(acc);
    out.mean.n_samples = all.total;
    out.mean.n_effective = out.survivors;
    out.ks = ks_statistic(all.samples,
                          [reference_mean](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x / reference_mean); });
    out.samples = std::move(all.samples);
    return out;
}

ClusterTail estimate_cluster_tail(const Model& model, std::span<const std::int64_t> ks,
                                  const ReplicatePlan& plan, std::int64_t plateau_from)
{
    if (ks.empty())
        throw std::invalid_argument("estimate_cluster_tail: no k requested");
    std::int64_t kmax = 1;
    for (auto k : ks)
    {
        if (k < 1)
            throw std::invalid_argument("estimate_cluster_tail: k must be >= 1");
        kmax = std::max(kmax, k);
    }
    ObservationPlan obs;
    obs.horizon = static_cast<double>(kmax);

    const auto groups = run_pool(model, obs, plan, PoolAcc::sized(0, ks.size() + 1),
                                 [&](PoolAcc& a, const Trajectory& t) {
                                     ++a.total;
                                     a.cap_hits += t.cap_hit;
                                     a.counts.back() += t.censored;
                                     for (std::size_t i = 0; i < ks.size(); ++i)
                                         a.counts[i] += t.censored
                                                        || t.cluster_size >= static_cast<double>(ks[i]);
                                 });
    const auto all = merge_in_order(groups, PoolAcc{});

    ClusterTail out;
    out.cap_hits = all.cap_hits;
    out.censored = all.counts.back();
    std::vector<double> plateau, every;
    for (std::size_t i = 0; i < ks.size(); ++i)
    {
        TailPoint p;
        p.k = ks[i];
        p.tail = proportion_estimate(all.counts[i], all.total);
        p.scaled = scaled(p.tail, std::sqrt(static_cast<double>(ks[i])));
        every.push_back(p.scaled.value);
        if (ks[i] >= plateau_from)
            plateau.push_back(p.scaled.value);
        out.points.push_back(p);
    }
    out.plateau = median(plateau.empty() ? every : plateau);
    return out;
}

TruncatedFunctional parse_truncated_functional(std::string_view name)
{
    if (name == "indicator_one")
        return TruncatedFunctional::indicator_one;
    if (name == "identity_clipped")
        return TruncatedFunctional::identity_clipped;
    if (name == "exp_decay")
        return TruncatedFunctional::exp_decay;
    if (name == "zero")
        return TruncatedFunctional::zero;
    throw std::invalid_argument("unknown functional id: " + std::string(name));
}

std::string_view truncated_functional_name(TruncatedFunctional f)
{
    switch (f)
    {
    case TruncatedFunctional::indicator_one: return "indicator_one";
    case TruncatedFunctional::identity_clipped: return "identity_clipped";
    case TruncatedFunctional::exp_decay: return "exp_decay";
    case TruncatedFunctional::zero: return "zero";
    }
    return "?";
}

TruncatedEstimate estimate_truncated_functional(const Model& model,
                                                const NormalizationContext& ctx, double s,
                                                double t, double eta, TruncatedFunctional h,
                                                const ReplicatePlan& plan)
{
    ctx.validate();
    if (!(s > 0.0 && t > 0.0 && eta > 0.0))
        throw std::invalid_argument("estimate_truncated_functional: s, t, eta must be positive");
    const auto& c = ctx.constants;
    const auto n = static_cast<double>(ctx.n);
    const double mass_unit = c.V * c.A * c.A * n;
    const double threshold = eta * mass_unit;
    const double factor = n * c.V * c.A;

    const TimeGrid grid(model, {s * n, t * n});
    const std::size_t is = grid.index(s * n);
    const std::size_t it = grid.index(t * n);
    const auto direct_groups = run_pool(
        model, grid.plan, plan, PoolAcc::sized(1, 0), [&](PoolAcc& a, const Trajectory& tr) {
            ++a.total;
            const auto ns = static_cast<double>(tr.count_at(is));
            const double y = ns > threshold
                                 ? factor * truncated_h(h, static_cast<double>(tr.count_at(it)) / mass_unit)
                                 : 0.0;
            a.moments[0].add(y);
        });
    TruncatedEstimate out;
    out.direct = mean_estimate(merge_in_order(direct_groups, PoolAcc{}).moments[0]);

    const OffspringDistribution* law = nullptr;
    if (const auto* gw = std::get_if<GaltonWatsonModel>(&model))
        law = &gw->law;
    else if (const auto* brw = std::get_if<BranchingRandomWalkModel>(&model))
        law = &brw->law;
    if (law == nullptr)
    {
        // Size-biasing the pool by N_s and undoing the weight returns the
        // direct average; report it as such.
        out.size_biased = out.direct;
        out.spine = false;
        return out;
    }

    const double mu = law->mean();
    if (!(mu > 0.0))
        throw std::invalid_argument("estimate_truncated_functional: offspring mean must be positive");
    std::vector<double> biased_cdf;
    double acc = 0.0;
    for (std::size_t k = 0; k < law->pmf().size(); ++k)
    {
        acc += static_cast<double>(k) * law->pmf()[k] / mu;
        biased_cdf.push_back(acc);
    }
    biased_cdf.back() = 1.0;
    const std::int64_t gs = generation_of(s * n);
    const std::int64_t gt = generation_of(t * n);
    const double mean_ns = std::pow(mu, static_cast<double>(gs));

    ReplicatePlan spine_plan = plan;
    spine_plan.seed = mix64(plan.seed ^ 0x5e1f5b1a5ed00001ULL);
    const auto sb_groups = run_grouped(
        spine_plan, MomentAccumulator{}, [&](MomentAccumulator& a, std::uint64_t, RandomStream& rng) {
            const auto counts = simulate_spine_counts(*law, biased_cdf, gs, std::max(gs, gt), rng);
            // Past the stored range the cluster is extinct, or capped (keep
            // the last count as a lower bound).
            auto at = [&](std::int64_t g) {
                const auto i = static_cast<std::size_t>(g);
                if (i < counts.size())
                    return static_cast<double>(counts[i]);
                return counts.back() > 0 ? static_cast<double>(counts.back()) : 0.0;
            };
            const double ns = at(gs);
            const double y = ns > threshold ? factor * mean_ns * truncated_h(h, at(gt) / mass_unit) / ns : 0.0;
            a.add(y);
        });
    out.size_biased = mean_estimate(merge_in_order(sb_groups, MomentAccumulator{}));
    out.spine = true;
    return out;
}

//---------------------------------------------------------------------------//
// Calibration
//---------------------------------------------------------------------------//

ModelFamily gw_mean_family()
{
    return {"gw-binary-mean", "mu",
            [](double mu) -> Model { return GaltonWatsonModel{OffspringDistribution::binary(mu)}; }};
}

ModelFamily op_family(int d, int L)
{
    const auto kernel = SpreadOutKernel::uniform_box(d, L);
    return {"op", "p", [kernel](double p) -> Model { return OrientedPercolationModel{kernel, p}; }};
}

ModelFamily cp_family(int d, int L)
{
    const auto kernel = SpreadOutKernel::uniform_box(d, L);
    return {"cp", "lambda",
            [kernel](double lambda) -> Model { return ContactProcessModel{kernel, lambda}; }};
}

CalibrationStep growth_slope(const Model& model, double n1, double n2, const ReplicatePlan& plan,
                             const CalibrationOptions& options)
{
    const auto points = window_points(model, n1, n2, options.window_points);
    TimeGrid grid(model, points);
    grid.plan.population_cap = options.population_cap > 0
                                   ? options.population_cap
                                   : std::max<std::int64_t>(10000, static_cast<std::int64_t>(100 * n2));
    std::vector<std::size_t> idx;
    for (double g : points)
        idx.push_back(grid.index(g));

    auto run = [&](const ReplicatePlan& p) {
        return merge_in_order(
            run_pool(model, grid.plan, p, PoolAcc::sized(points.size(), 0),
                     [&](PoolAcc& a, const Trajectory& t) {
                         ++a.total;
                         a.cap_hits += t.cap_hit;
                         for (std::size_t i = 0; i < idx.size(); ++i)
                             a.moments[i].add(static_cast<double>(t.count_at(idx[i])));
                     }),
            PoolAcc{});
    };

    CalibrationStep step;
    constexpr double inf = std::numeric_limits<double>::infinity();
    // A cluster this large is out of reach at criticality, so a cap hit is
    // a supercritical verdict. The pilot finds it cheaply.
    ReplicatePlan pilot = plan;
    pilot.replicates = std::min(plan.replicates, options.pilot_replicates);
    if (run(pilot).cap_hits > 0)
    {
        step.slope = inf;
        return step;
    }
    const auto all = run(plan);
    if (all.cap_hits > 0)
    {
        step.slope = inf;
        return step;
    }
    std::vector<double> xs, ys, ws;
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        const auto& m = all.moments[i];
        if (m.mean() <= 0.0)
        {
            step.slope = -inf;
            return step;
        }
        xs.push_back(points[i]);
        ys.push_back(std::log(m.mean()));
        const double var_log = m.variance() / (static_cast<double>(m.count()) * m.mean() * m.mean());
        ws.push_back(var_log > 0.0 ? 1.0 / var_log : 1e300);
    }
    const auto fit = slope_with_se(xs, ys, ws);
    step.slope = fit.slope;
    step.slope_se = fit.se;
    return step;
}

CalibrationResult calibrate_criticality(const ModelFamily& family, double lower, double upper,
                                        double n1, double n2, const ReplicatePlan& plan,
                                        const CalibrationOptions& options)
{
    if (!(lower < upper))
        throw std::invalid_argument("calibrate_criticality: empty bracket");
    CalibrationResult out;
    auto evaluate = [&](double x) {
        auto step = growth_slope(family.make(x), n1, n2, plan, options);
        step.parameter = x;
        out.steps.push_back(step);
        return step;
    };
    const auto lo = evaluate(lower);
    const auto hi = evaluate(upper);
    if (!(lo.slope < 0.0 && hi.slope > 0.0))
    {
        std::ostringstream msg;
        msg << "calibrate_criticality: bracket does not straddle criticality ("
            << family.parameter << "=" << lower << " slope " << lo.slope << ", "
            << family.parameter << "=" << upper << " slope " << hi.slope << ")";
        throw std::domain_error(msg.str());
    }
    double a = lower, b = upper;
    for (int it = 0; it < options.max_iterations; ++it)
    {
        if (b - a <= options.relative_precision * 0.5 * (a + b))
            break;
        const double mid = 0.5 * (a + b);
        (evaluate(mid).slope > 0.0 ? b : a) = mid;
    }
    out.lower = a;
    out.upper = b;
    out.parameter = 0.5 * (a + b);
    out.converged = b - a <= options.relative_precision * out.parameter;
    const auto final_step = evaluate(out.parameter);
    out.slope = final_step.slope;
    out.slope_se = final_step.slope_se;
    return out;
}

//---------------------------------------------------------------------------//
// Constants
//---------------------------------------------------------------------------//

ConstantsEstimate estimate_constants(const Model& model, double n1, double n2,
                                     const ReplicatePlan& plan, std::vector<double> k2_grid)
{
    const auto points = window_points(model, n1, n2, 8);
    const std::size_t P = points.size();
    const bool positions = has_positions(model);
    if (!positions)
        k2_grid.clear();
    for (double k2 : k2_grid)
        if (!(k2 > 0.0))
            throw std::invalid_argument("estimate_constants: |k|^2 grid must be positive");
    const std::size_t K = k2_grid.size();
    const int d = model_dimension(model);
    const double top = points.back();

    TimeGrid grid(model, points);
    if (positions)
        grid.plan.level_times = {top};
    std::vector<std::size_t> idx;
    for (double g : points)
        idx.push_back(grid.index(g));

    const auto groups = run_pool(
        model, grid.plan, plan, PoolAcc::sized(2 * P + K, 0), [&](PoolAcc& a, const Trajectory& t) {
            ++a.total;
            a.cap_hits += t.cap_hit;
            for (std::size_t i = 0; i < P; ++i)
            {
                const auto c = static_cast<double>(t.count_at(idx[i]));
                a.moments[i].add(c);
                a.moments[P + i].add(c * c);
            }
            if (K == 0)
                return;
            const LevelSet* ls = grid.levels(t, top);
            for (std::size_t j = 0; j < K; ++j)
            {
                double f = 0.0;
                if (ls != nullptr)
                {
                    const double k = std::sqrt(k2_grid[j] / top);
                    for (std::size_t i = 0; i < ls->size(); ++i)
                        f += std::cos(k * static_cast<double>(ls->point(i)[0]));
                }
                a.moments[2 * P + j].add(f);
            }
        });
    const auto all = merge_in_order(groups, PoolAcc{});

    auto stat_A = [&](const PoolAcc& a) {
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i)
            s += a.moments[i].mean();
        return s / static_cast<double>(P);
    };
    auto stat_V = [&](const PoolAcc& a) {
        std::vector<double> ys;
        for (std::size_t i = 0; i < P; ++i)
            ys.push_back(a.moments[P + i].mean());
        return ols_slope(points, ys) / std::pow(stat_A(a), 3);
    };
    // Regression through the origin: the Gaussian limit has no intercept.
    auto stat_v = [&](const PoolAcc& a) {
        const double f0 = a.moments[P - 1].mean();
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t j = 0; j < K; ++j)
        {
            const double y = -2.0 * d * std::log(a.moments[2 * P + j].mean() / f0);
            sxy += k2_grid[j] * y;
            sxx += k2_grid[j] * k2_grid[j];
        }
        return sxy / sxx;
    };
    auto stat_plateau = [&](const PoolAcc& a) {
        std::vector<double> ys;
        for (std::size_t i = 0; i < P; ++i)
            ys.push_back(a.moments[i].mean());
        return ols_slope(points, ys);
    };
    auto stat_ratio = [&](const PoolAcc& a) { return 2.0 / (stat_A(a) * stat_V(a)); };

    ConstantsEstimate out;
    out.cap_hits = all.cap_hits;
    const std::span<const PoolAcc> gs(groups);
    out.A = normal_estimate(stat_A(all), jackknife_stderr<PoolAcc>(gs, stat_A), all.total);
    out.V = normal_estimate(stat_V(all), jackknife_stderr<PoolAcc>(gs, stat_V), all.total);
    if (K > 0)
    {
        out.v = normal_estimate(stat_v(all), jackknife_stderr<PoolAcc>(gs, stat_v), all.total);
    }
    else
    {
        double v = 1.0;
        if (const auto* cp = std::get_if<ContactProcessModel>(&model))
            v = kernel_variance(cp->kernel);
        out.v = normal_estimate(v, 0.0, 0);
        out.v.n_effective = 0;
    }
    const double ratio = stat_ratio(all);
    const auto boot = bootstrap_interval<PoolAcc>(gs, stat_ratio, plan.seed);
    out.two_over_AV = normal_estimate(ratio, jackknife_stderr<PoolAcc>(gs, stat_ratio), all.total);
    out.two_over_AV.ci_low = std::min(boot.low, ratio);
    out.two_over_AV.ci_high = std::max(boot.high, ratio);
    out.plateau_slope = stat_plateau(all);
    out.plateau_slope_se = jackknife_stderr<PoolAcc>(gs, stat_plateau);
    out.plateau_ok = std::abs(out.plateau_slope) <= 2.0 * out.plateau_slope_se;
    out.values = {out.A.value, out.V.value, out.v.value};
    return out;
}

SelfRepellenceProxy estimate_self_repellence_proxy(const Model& model, double n,
                                                   std::span<const double> ms,
                                                   const ReplicatePlan& plan)
{
    if (ms.empty())
        throw std::invalid_argument("estimate_self_repellence_proxy: no m values");
    std::vector<double> times{n};
    for (double m : ms)
    {
        if (!(m > 0.0 && m < n))
            throw std::invalid_argument("estimate_self_repellence_proxy: need 0 < m < n");
        times.push_back(m);
        times.push_back(n - m);
    }
    const TimeGrid grid(model, times);
    std::vector<std::size_t> idx;
    for (double t : times)
        idx.push_back(grid.index(t));
    const auto groups = run_pool(model, grid.plan, plan, PoolAcc::sized(times.size(), times.size()),
                                 [&](PoolAcc& a, const Trajectory& t) {
                                     ++a.total;
                                     for (std::size_t i = 0; i < idx.size(); ++i)
                                     {
                                         a.counts[i] += t.alive_at(idx[i]);
                                         a.moments[i].add(static_cast<double>(t.count_at(idx[i])));
                                     }
                                 });
    const auto all = merge_in_order(groups, PoolAcc{});
    const auto R = static_cast<double>(all.total);
    const double theta_n = static_cast<double>(all.counts[0]) / R;
    SelfRepellenceProxy out;
    for (std::size_t j = 0; j < ms.size(); ++j)
    {
        const double mean_m = all.moments[1 + 2 * j].mean();
        const double theta_rest = static_cast<double>(all.counts[2 + 2 * j]) / R;
        if (mean_m <= 0.0 || theta_rest <= 0.0)
            continue;
        const double ratio = theta_n / (mean_m * theta_rest);
        if (ratio > out.value)
        {
            out.value = ratio;
            out.argmax_m = ms[j];
        }
    }
    return out;
}

}  // namespace sll

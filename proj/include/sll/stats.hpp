// Statistical substrate: reproducible random streams, compensated moment
// accumulators, interval estimates and distribution tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace sll {

/// 64-bit finalizer from SplitMix64 (Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct RandomStreamSpec
{
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

/// xoshiro256** whose state is derived from (seed, stream_id) by SplitMix64
/// mixing. Any (seed, stream_id) pair can be materialized independently, so
/// replicate i always sees the same stream regardless of which worker runs it.
/// Satisfies UniformRandomBitGenerator.
class RandomStream
{
  public:
    using result_type = std::uint64_t;

    RandomStream() : RandomStream(RandomStreamSpec{}) {}
    RandomStream(std::uint64_t seed, std::uint64_t stream_id)
        : RandomStream(RandomStreamSpec{seed, stream_id})
    {
    }
    explicit RandomStream(RandomStreamSpec spec) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept
    {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept
    {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double uniform_open0() noexcept { return 1.0 - uniform(); }

    /// Unbiased uniform integer in [0, bound) (Lemire's multiply-shift).
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        std::uint64_t x = (*this)();
        __uint128_t m = static_cast<__uint128_t>(x) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound)
        {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold)
            {
                x = (*this)();
                m = static_cast<__uint128_t>(x) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    double exponential(double mean) noexcept
    {
        return -mean * std::log(uniform_open0());
    }

    RandomStreamSpec spec() const noexcept { return spec_; }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    RandomStreamSpec spec_;
    std::uint64_t state_[4];
};

//---------------------------------------------------------------------------//
// Accumulators
//---------------------------------------------------------------------------//

/// Sum carried as an unevaluated pair hi + lo (Neumaier/TwoSum).
struct CompensatedSum
{
    double hi = 0.0;
    double lo = 0.0;

    void add(double x) noexcept
    {
        const double s = hi + x;
        const double bp = s - hi;
        lo += (hi - (s - bp)) + (x - bp);
        hi = s;
    }
    void merge(const CompensatedSum& other) noexcept
    {
        add(other.hi);
        lo += other.lo;
    }
    long double value() const noexcept
    {
        return static_cast<long double>(hi) + static_cast<long double>(lo);
    }
};

/// Count plus compensated power sums of order 1..4. Merging two accumulators
/// is equivalent (to rounding of the compensated pair) to streaming the
/// concatenated samples.
class MomentAccumulator
{
  public:
    void add(double x) noexcept
    {
        ++count_;
        const double x2 = x * x;
        sums_[0].add(x);
        sums_[1].add(x2);
        sums_[2].add(x2 * x);
        sums_[3].add(x2 * x2);
    }

    void merge(const MomentAccumulator& other) noexcept
    {
        count_ += other.count_;
        for (int i = 0; i < 4; ++i)
            sums_[i].merge(other.sums_[i]);
    }

    std::uint64_t count() const noexcept { return count_; }
    double sum() const noexcept { return static_cast<double>(sums_[0].value()); }
    double mean() const noexcept;
    /// Unbiased sample variance.
    double variance() const noexcept;
    /// Standard error of the mean.
    double stderr_of_mean() const noexcept;
    /// Raw power moment E[X^k], k in 1..4.
    double raw_moment(int k) const noexcept;
    /// Excess kurtosis of the sample (0 for a Gaussian); NaN if undefined.
    double excess_kurtosis() const noexcept;

  private:
    std::uint64_t count_ = 0;
    CompensatedSum sums_[4];
};

/// Point estimate with its uncertainty.
struct EstimateWithCI
{
    double value = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t n_effective = 0;
};

/// Normal-theory interval around the mean of an accumulator.
EstimateWithCI mean_estimate(const MomentAccumulator& acc, double level = 0.95);

/// Two-sided standard normal quantile for the given confidence level.
double normal_critical_value(double level);

//---------------------------------------------------------------------------//
// Intervals and tests
//---------------------------------------------------------------------------//

struct Interval
{
    double low = 0.0;
    double high = 0.0;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials,
                         double level = 0.95);

struct KsResult
{
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sided one-sample Kolmogorov–Smirnov test. The sample is copied and
/// sorted; the p-value uses the asymptotic Kolmogorov distribution.
KsResult ks_statistic(std::span<const double> sample,
                      const std::function<double(double)>& cdf);

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

struct SlopeFit
{
    double slope = 0.0;
    double intercept = 0.0;
    double se = 0.0;
};

/// Least-squares slope. With weights, they are inverse variances of ys and
/// the standard error follows from them; without weights the standard error
/// is estimated from the residuals.
SlopeFit slope_with_se(std::span<const double> xs, std::span<const double> ys,
                       std::span<const double> weights = {});

/// Delete-one-group jackknife standard error of a statistic evaluated on
/// merged groups. `statistic` receives the merged accumulator set with one
/// group left out.
template<class Group, class Statistic>
double jackknife_stderr(std::span<const Group> groups, Statistic statistic)
{
    const std::size_t g = groups.size();
    if (g < 2)
        return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> leave_out(g);
    for (std::size_t skip = 0; skip < g; ++skip)
    {
        Group merged{};
        for (std::size_t i = 0; i < g; ++i)
            if (i != skip)
                merged.merge(groups[i]);
        leave_out[skip] = statistic(merged);
    }
    double mean = 0.0;
    for (double v : leave_out)
        mean += v;
    mean /= static_cast<double>(g);
    double ss = 0.0;
    for (double v : leave_out)
        ss += (v - mean) * (v - mean);
    return std::sqrt(ss * static_cast<double>(g - 1) / static_cast<double>(g));
}

/// Percentile bootstrap over groups: resample groups with replacement,
/// merge, evaluate the statistic. Deterministic in `seed`.
template<class Group, class Statistic>
Interval bootstrap_interval(std::span<const Group> groups, Statistic statistic,
                            std::uint64_t seed, int resamples = 2000,
                            double level = 0.95)
{
    RandomStream rng(seed, 0xb007ULL);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(resamples));
    for (int r = 0; r < resamples; ++r)
    {
        Group merged{};
        for (std::size_t i = 0; i < groups.size(); ++i)
            merged.merge(groups[rng.below(groups.size())]);
        const double v = statistic(merged);
        if (std::isfinite(v))
            values.push_back(v);
    }
    if (values.empty())
        return {std::numeric_limits<double>::quiet_NaN(),
                std::numeric_limits<double>::quiet_NaN()};
    std::sort(values.begin(), values.end());
    const double alpha = (1.0 - level) / 2.0;
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    return {at(alpha), at(1.0 - alpha)};
}

}  // namespace sll

#include "sll/stats.hpp"

#include <algorithm>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace sll {

RandomStream::RandomStream(RandomStreamSpec spec) noexcept : spec_(spec)
{
    // Key the SplitMix64 sequence on both halves; the stream id is mixed
    // before combining so that adjacent ids land far apart.
    std::uint64_t z = mix64(spec.seed ^ 0x6a09e667f3bcc909ULL)
                      ^ mix64(spec.stream_id + 0x3c6ef372fe94f82bULL);
    for (auto& word : state_)
    {
        z += 0x9e3779b97f4a7c15ULL;
        word = mix64(z);
    }
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0)
        state_[0] = 1;
}

//---------------------------------------------------------------------------//

double MomentAccumulator::mean() const noexcept
{
    if (count_ == 0)
        return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(sums_[0].value()
                               / static_cast<long double>(count_));
}

double MomentAccumulator::variance() const noexcept
{
    if (count_ < 2)
        return 0.0;
    const auto n = static_cast<long double>(count_);
    const long double s1 = sums_[0].value();
    const long double s2 = sums_[1].value();
    const long double var = (s2 - s1 * s1 / n) / (n - 1);
    return var > 0 ? static_cast<double>(var) : 0.0;
}

double MomentAccumulator::stderr_of_mean() const noexcept
{
    if (count_ < 2)
        return 0.0;
    return std::sqrt(variance() / static_cast<double>(count_));
}

double MomentAccumulator::raw_moment(int k) const noexcept
{
    if (count_ == 0 || k < 1 || k > 4)
        return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(sums_[k - 1].value()
                               / static_cast<long double>(count_));
}

double MomentAccumulator::excess_kurtosis() const noexcept
{
    if (count_ < 4)
        return std::numeric_limits<double>::quiet_NaN();
    const auto n = static_cast<long double>(count_);
    const long double m = sums_[0].value() / n;
    const long double e2 = sums_[1].value() / n;
    const long double e3 = sums_[2].value() / n;
    const long double e4 = sums_[3].value() / n;
    const long double c2 = e2 - m * m;
    const long double c4 = e4 - 4 * m * e3 + 6 * m * m * e2 - 3 * m * m * m * m;
    if (c2 <= 0)
        return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(c4 / (c2 * c2) - 3);
}

double normal_critical_value(double level)
{
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("confidence level must lie in (0, 1)");
    boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, 0.5 + level / 2.0);
}

EstimateWithCI mean_estimate(const MomentAccumulator& acc, double level)
{
    EstimateWithCI e;
    e.n_samples = acc.count();
    e.n_effective = acc.count();
    if (acc.count() == 0)
    {
        e.value = e.std_error = e.ci_low = e.ci_high
            = std::numeric_limits<double>::quiet_NaN();
        return e;
    }
    e.value = acc.mean();
    e.std_error = acc.stderr_of_mean();
    const double z = normal_critical_value(level);
    e.ci_low = e.value - z * e.std_error;
    e.ci_high = e.value + z * e.std_error;
    return e;
}

//---------------------------------------------------------------------------//

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials,
                         double level)
{
    if (trials == 0 || successes > trials)
        throw std::invalid_argument("wilson_interval: need 0 <= successes <= trials, trials >= 1");
    const double z = normal_critical_value(level);
    const double n = static_cast<double>(trials);
    const double phat = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (phat + z2 / (2.0 * n)) / denom;
    const double half
        = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    Interval out{centre - half, centre + half};
    // Endpoints are exact at the boundaries.
    if (successes == 0)
        out.low = 0.0;
    if (successes == trials)
        out.high = 1.0;
    out.low = std::max(0.0, out.low);
    out.high = std::min(1.0, out.high);
    return out;
}

double kolmogorov_survival(double lambda)
{
    if (lambda <= 0.0)
        return 1.0;
    if (lambda < 0.2)
        return 1.0;
    // Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k)
    {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-17)
            break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_statistic(std::span<const double> sample,
                      const std::function<double(double)>& cdf)
{
    if (sample.empty())
        throw std::invalid_argument("ks_statistic: empty sample");
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i)
    {
        const double f = cdf(sorted[i]);
        const double above = static_cast<double>(i + 1) / n - f;
        const double below = f - static_cast<double>(i) / n;
        d = std::max({d, above, below});
    }
    return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

SlopeFit slope_with_se(std::span<const double> xs, std::span<const double> ys,
                       std::span<const double> weights)
{
    const std::size_t n = xs.size();
    if (n < 3 || ys.size() != n || (!weights.empty() && weights.size() != n))
        throw std::invalid_argument("slope_with_se: need >= 3 aligned points");
    const bool weighted = !weights.empty();
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double w = weighted ? weights[i] : 1.0;
        if (!(w > 0.0) || !std::isfinite(w))
            throw std::invalid_argument("slope_with_se: weights must be positive");
        sw += w;
        sx += w * xs[i];
        sy += w * ys[i];
    }
    const double xbar = sx / sw;
    const double ybar = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double w = weighted ? weights[i] : 1.0;
        sxx += w * (xs[i] - xbar) * (xs[i] - xbar);
        sxy += w * (xs[i] - xbar) * (ys[i] - ybar);
    }
    if (sxx <= 0.0)
        throw std::invalid_argument("slope_with_se: xs are all equal");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    if (weighted)
    {
        fit.se = std::sqrt(1.0 / sxx);
    }
    else
    {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            const double r = ys[i] - fit.intercept - fit.slope * xs[i];
            rss += r * r;
        }
        fit.se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

}  // namespace sll

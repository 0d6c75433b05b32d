#include "sll/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>

#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/factorials.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace sll {
namespace {

constexpr int kMaxSbmOrder = 6;
constexpr int kMaxGwOrder = 4;
constexpr std::int64_t kMaxGwTime = 10'000;
constexpr std::int64_t kMaxProgeny = 100'000;

double binom(int n, int k)
{
    if (k < 0 || k > n)
        return 0.0;
    return boost::math::binomial_coefficient<double>(static_cast<unsigned>(n),
                                                     static_cast<unsigned>(k));
}

double factorial(int n)
{
    return boost::math::factorial<double>(static_cast<unsigned>(n));
}

using Polynomial = std::vector<double>;  // coefficient of x^j at index j

// Nonzero (time, exponent) pairs sorted by time, equal times merged.
std::vector<std::pair<double, int>> collapse(const MomentSpec& spec)
{
    std::vector<std::pair<double, int>> pairs;
    for (std::size_t i = 0; i < spec.times.size(); ++i)
        if (spec.exponents[i] > 0)
            pairs.emplace_back(spec.times[i], spec.exponents[i]);
    std::sort(pairs.begin(), pairs.end());
    std::vector<std::pair<double, int>> merged;
    for (const auto& p : pairs)
    {
        if (!merged.empty() && merged.back().first == p.first)
            merged.back().second += p.second;
        else
            merged.push_back(p);
    }
    return merged;
}

Polynomial multiply_by_power(const Polynomial& p, int power)
{
    Polynomial out(p.size() + static_cast<std::size_t>(power), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j)
        out[j + static_cast<std::size_t>(power)] = p[j];
    return out;
}

// Adaptive Simpson on [a, b].
double simpson_step(const std::function<double(double)>& f, double a, double b,
                    double fa, double fm, double fb, double whole, double rel,
                    double abs_floor, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    const double tol = std::max(abs_floor, rel * std::abs(left + right));
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, rel, abs_floor / 2, depth - 1)
           + simpson_step(f, m, b, fm, frm, fb, right, rel, abs_floor / 2, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double rel, double abs_floor)
{
    if (b <= a)
        return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_step(f, a, b, fa, fm, fb, whole, rel, abs_floor, 50);
}

}  // namespace

//---------------------------------------------------------------------------//
// Offspring laws
//---------------------------------------------------------------------------//

OffspringDistribution::OffspringDistribution(std::vector<double> pmf)
    : pmf_(std::move(pmf))
{
    if (pmf_.empty())
        throw std::invalid_argument("offspring pmf is empty");
    double total = 0.0;
    for (double p : pmf_)
    {
        if (!(p >= 0.0))
            throw std::invalid_argument("offspring pmf has a negative entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("offspring pmf must sum to 1");
    while (pmf_.size() > 1 && pmf_.back() == 0.0)
        pmf_.pop_back();

    cdf_.resize(pmf_.size());
    std::partial_sum(pmf_.begin(), pmf_.end(), cdf_.begin());
    cdf_.back() = 1.0;

    // Raw moments up to order 6, then cumulants.
    std::vector<double> raw(7, 0.0);
    for (std::size_t k = 0; k < pmf_.size(); ++k)
    {
        double power = 1.0;
        for (int j = 0; j <= 6; ++j)
        {
            raw[static_cast<std::size_t>(j)] += pmf_[k] * power;
            power *= static_cast<double>(k);
        }
    }
    cumulants_.assign(7, 0.0);
    for (int n = 1; n <= 6; ++n)
    {
        double kappa = raw[static_cast<std::size_t>(n)];
        for (int k = 1; k < n; ++k)
            kappa -= binom(n - 1, k - 1) * cumulants_[static_cast<std::size_t>(k)]
                     * raw[static_cast<std::size_t>(n - k)];
        cumulants_[static_cast<std::size_t>(n)] = kappa;
    }
    mean_ = cumulants_[1];
    variance_ = cumulants_[2];
}

OffspringDistribution OffspringDistribution::binary(double mean)
{
    if (!(mean >= 0.0 && mean <= 2.0))
        throw std::invalid_argument("binary offspring mean must lie in [0, 2]");
    return OffspringDistribution({1.0 - mean / 2.0, 0.0, mean / 2.0});
}

double OffspringDistribution::cumulant(int j) const
{
    if (j < 1 || j > 6)
        throw std::out_of_range("cumulant order must lie in 1..6");
    return cumulants_[static_cast<std::size_t>(j)];
}

double OffspringDistribution::pgf(double s) const noexcept
{
    double value = 0.0;
    for (std::size_t k = pmf_.size(); k-- > 0;)
        value = value * s + pmf_[k];
    return value;
}

std::uint32_t OffspringDistribution::sample(RandomStream& rng) const noexcept
{
    const double u = rng.uniform();
    std::uint32_t k = 0;
    while (k + 1 < cdf_.size() && u >= cdf_[k])
        ++k;
    return k;
}

std::uint64_t OffspringDistribution::sample_total(std::uint64_t parents,
                                                  RandomStream& rng) const
{
    if (parents < 16)
    {
        std::uint64_t total = 0;
        for (std::uint64_t i = 0; i < parents; ++i)
            total += sample(rng);
        return total;
    }
    // Multinomial split by sequential conditional binomials.
    std::uint64_t remaining = parents;
    double remaining_prob = 1.0;
    std::uint64_t total = 0;
    for (std::size_t k = 0; k + 1 < pmf_.size() && remaining > 0; ++k)
    {
        const double pk = pmf_[k];
        if (pk > 0.0)
        {
            const double q = std::min(1.0, pk / remaining_prob);
            std::uint64_t c = remaining;
            if (q < 1.0)
                c = static_cast<std::uint64_t>(
                    boost::random::binomial_distribution<std::int64_t, double>(
                        static_cast<std::int64_t>(remaining), q)(rng));
            total += c * k;
            remaining -= c;
        }
        remaining_prob -= pk;
        if (remaining_prob <= 0.0)
            break;
    }
    total += remaining * (pmf_.size() - 1);
    return total;
}

OffspringLaw::OffspringLaw(std::vector<double> pmf) : dist_(std::move(pmf))
{
    if (std::abs(dist_.mean() - 1.0) > 1e-12)
        throw std::invalid_argument("critical offspring law must have mean 1");
    if (!(dist_.variance() > 0.0))
        throw std::invalid_argument("offspring variance must be positive");
}

OffspringLaw OffspringLaw::binary()
{
    return OffspringLaw({0.5, 0.0, 0.5});
}

//---------------------------------------------------------------------------//
// Moment specs
//---------------------------------------------------------------------------//

int MomentSpec::total_order() const
{
    return std::accumulate(exponents.begin(), exponents.end(), 0);
}

void MomentSpec::validate(bool allow_zero_order) const
{
    if (times.empty())
        throw std::invalid_argument("moment spec is empty");
    if (exponents.size() != times.size())
        throw std::invalid_argument("moment spec: times and exponents differ in length");
    if (!wavevectors.empty() && wavevectors.size() != times.size())
        throw std::invalid_argument("moment spec: wavevectors must align with times");
    for (double t : times)
        if (!(t > 0.0) || !std::isfinite(t))
            throw std::invalid_argument("moment spec: times must be positive");
    for (int e : exponents)
        if (e < 0)
            throw std::invalid_argument("moment spec: negative exponent");
    if (!allow_zero_order && total_order() < 1)
        throw std::invalid_argument("moment spec: need at least one positive exponent");
}

//---------------------------------------------------------------------------//
// Canonical measure
//---------------------------------------------------------------------------//

double sbm_survival(double t)
{
    if (!(t > 0.0))
        throw std::invalid_argument("sbm_survival: t must be positive");
    return 2.0 / t;
}

double kolmogorov_limit(double gamma)
{
    if (!(gamma > 0.0))
        throw std::invalid_argument("kolmogorov_limit: gamma must be positive");
    return 2.0 / gamma;
}

double yaglom_mean(double gamma)
{
    if (!(gamma > 0.0))
        throw std::invalid_argument("yaglom_mean: gamma must be positive");
    return gamma / 2.0;
}

std::vector<double> feller_conditional_moment(int m, double tau)
{
    if (m < 0)
        throw std::invalid_argument("moment order must be nonnegative");
    Polynomial p(static_cast<std::size_t>(m) + 1, 0.0);
    if (m == 0)
    {
        p[0] = 1.0;
        return p;
    }
    // m! sum_j x^j / j! C(m-1, j-1) (tau/2)^{m-j}
    for (int j = 1; j <= m; ++j)
        p[static_cast<std::size_t>(j)] = factorial(m) / factorial(j) * binom(m - 1, j - 1)
                                         * std::pow(tau / 2.0, m - j);
    return p;
}

double sbm_mass_moment(const MomentSpec& spec)
{
    spec.validate();
    if (spec.total_order() > kMaxSbmOrder)
        throw UnsupportedOrderError("sbm_mass_moment: total order above 6");
    const auto pairs = collapse(spec);

    // q(x) = E[prod_{later} X^l | X_{current} = x], built from the last time.
    Polynomial q{1.0};
    for (std::size_t i = pairs.size(); i-- > 0;)
    {
        if (i + 1 < pairs.size())
        {
            const double tau = pairs[i + 1].first - pairs[i].first;
            Polynomial next(q.size(), 0.0);
            for (std::size_t m = 0; m < q.size(); ++m)
            {
                if (q[m] == 0.0)
                    continue;
                const auto cm = feller_conditional_moment(static_cast<int>(m), tau);
                for (std::size_t j = 0; j < cm.size(); ++j)
                    next[j] += q[m] * cm[j];
            }
            q = std::move(next);
        }
        q = multiply_by_power(q, pairs[i].second);
    }
    // Canonical single-time moments N_0[X_t^m] = m! (t/2)^{m-1}, m >= 1.
    const double t = pairs.front().first;
    double total = 0.0;
    for (std::size_t m = 1; m < q.size(); ++m)
        total += q[m] * factorial(static_cast<int>(m)) * std::pow(t / 2.0, static_cast<double>(m) - 1.0);
    return total;
}

double sbm_fourier_moment(const MomentSpec& spec, int d)
{
    spec.validate();
    if (d < 1)
        throw std::invalid_argument("sbm_fourier_moment: dimension must be >= 1");
    if (spec.wavevectors.empty())
        return sbm_mass_moment(spec);

    std::vector<std::pair<double, const std::vector<double>*>> points;
    for (std::size_t i = 0; i < spec.times.size(); ++i)
    {
        if (spec.wavevectors[i].size() != static_cast<std::size_t>(d))
            throw std::invalid_argument("sbm_fourier_moment: wavevector length mismatch");
        for (int e = 0; e < spec.exponents[i]; ++e)
            points.emplace_back(spec.times[i], &spec.wavevectors[i]);
    }
    if (points.size() > 2)
        throw UnsupportedOrderError("sbm_fourier_moment: only r-1 <= 2 is supported");

    const double two_d = 2.0 * d;
    auto norm2 = [](const std::vector<double>& k) {
        double s = 0.0;
        for (double ki : k)
            s += ki * ki;
        return s;
    };
    if (points.size() == 1)
        return std::exp(-norm2(*points[0].second) * points[0].first / two_d);

    const double s = points[0].first;
    const double t = points[1].first;
    const auto& k1 = *points[0].second;
    const auto& k2 = *points[1].second;
    std::vector<double> ksum(k1.size());
    for (std::size_t i = 0; i < k1.size(); ++i)
        ksum[i] = k1[i] + k2[i];
    const double a = norm2(ksum) / two_d;
    const double b = norm2(k1) / two_d;
    const double c = norm2(k2) / two_d;
    auto integrand = [&](double u) {
        return std::exp(-a * u - b * (s - u) - c * (t - u));
    };
    return adaptive_simpson(integrand, 0.0, std::min(s, t), 1e-8, 1e-12);
}

double predicted_scaled_moment(const ModelConstants& c, const MomentSpec& spec)
{
    if (!(c.A > 0.0 && c.V > 0.0))
        throw std::invalid_argument("model constants must be positive");
    const int order = spec.total_order();
    return c.A * std::pow(c.V * c.A * c.A, order - 1) * sbm_mass_moment(spec);
}

//---------------------------------------------------------------------------//
// Feller diffusion
//---------------------------------------------------------------------------//

double feller_transition_laplace(double x, double tau, double lambda)
{
    if (x < 0.0 || !(tau > 0.0) || lambda < 0.0)
        throw std::invalid_argument("feller_transition_laplace: invalid arguments");
    if (std::isinf(lambda))
        return std::exp(-2.0 * x / tau);
    return std::exp(-x * lambda / (1.0 + lambda * tau / 2.0));
}

double feller_exact_sample(double x, double tau, RandomStream& rng)
{
    if (x < 0.0 || !(tau > 0.0))
        throw std::invalid_argument("feller_exact_sample: invalid arguments");
    if (x == 0.0)
        return 0.0;
    const auto clumps = boost::random::poisson_distribution<std::int64_t, double>(
        2.0 * x / tau)(rng);
    if (clumps == 0)
        return 0.0;
    if (clumps < 8)
    {
        double sum = 0.0;
        for (std::int64_t i = 0; i < clumps; ++i)
            sum += rng.exponential(tau / 2.0);
        return sum;
    }
    return boost::random::gamma_distribution<double>(static_cast<double>(clumps),
                                                     tau / 2.0)(rng);
}

double feller_entrance_sample(double t, RandomStream& rng)
{
    if (!(t > 0.0))
        throw std::invalid_argument("feller_entrance_sample: t must be positive");
    return rng.exponential(t / 2.0);
}

//---------------------------------------------------------------------------//
// Galton–Watson
//---------------------------------------------------------------------------//

double gw_survival_exact(const OffspringDistribution& law, std::int64_t n)
{
    if (n < 0)
        throw std::invalid_argument("gw_survival_exact: n must be nonnegative");
    const auto& p = law.pmf();
    // theta <- 1 - f(1 - theta), written as sum_k p_k (1 - (1-theta)^k).
    double theta = 1.0;
    for (std::int64_t i = 0; i < n; ++i)
    {
        const double log_q = std::log1p(-theta);
        double next = 0.0;
        for (std::size_t k = 1; k < p.size(); ++k)
        {
            if (p[k] == 0.0)
                continue;
            const double survive = theta >= 1.0 ? 1.0 : -std::expm1(static_cast<double>(k) * log_q);
            next += p[k] * survive;
        }
        theta = next;
        if (theta == 0.0)
            break;
    }
    return theta;
}

double gw_joint_moments_exact(const OffspringDistribution& law, const MomentSpec& spec)
{
    if (spec.times.empty() || spec.exponents.size() != spec.times.size())
        throw std::invalid_argument("gw_joint_moments_exact: malformed spec");
    for (double t : spec.times)
        if (t < 0 || t != std::floor(t) || t > static_cast<double>(kMaxGwTime))
            throw std::invalid_argument("gw_joint_moments_exact: times must be integers in [0, 1e4]");
    for (int e : spec.exponents)
        if (e < 0)
            throw std::invalid_argument("gw_joint_moments_exact: negative exponent");
    if (spec.total_order() > kMaxGwOrder)
        throw UnsupportedOrderError("gw_joint_moments_exact: total order above 4");

    // One-generation map: coefficient of x^j in E[N_{k+1}^m | N_k = x], from
    // the moment-cumulant recursion mu_m = sum_j C(m-1, j-1) (x kappa_j) mu_{m-j}.
    const int order = kMaxGwOrder;
    std::vector<Polynomial> step(order + 1, Polynomial(order + 1, 0.0));
    step[0][0] = 1.0;
    for (int m = 1; m <= order; ++m)
        for (int j = 1; j <= m; ++j)
        {
            const double coeff = binom(m - 1, j - 1) * law.cumulant(j);
            const auto& prev = step[static_cast<std::size_t>(m - j)];
            for (int i = 0; i + 1 <= order; ++i)
                step[static_cast<std::size_t>(m)][static_cast<std::size_t>(i + 1)]
                    += coeff * prev[static_cast<std::size_t>(i)];
        }
    auto advance = [&](Polynomial q, std::int64_t generations) {
        for (std::int64_t g = 0; g < generations; ++g)
        {
            Polynomial next(q.size(), 0.0);
            for (std::size_t m = 0; m < q.size(); ++m)
                if (q[m] != 0.0)
                    for (std::size_t j = 0; j < q.size(); ++j)
                        next[j] += q[m] * step[m][j];
            q = std::move(next);
        }
        return q;
    };

    std::vector<std::pair<std::int64_t, int>> pairs;
    for (std::size_t i = 0; i < spec.times.size(); ++i)
        if (spec.exponents[i] > 0)
            pairs.emplace_back(static_cast<std::int64_t>(spec.times[i]), spec.exponents[i]);
    std::sort(pairs.begin(), pairs.end());

    Polynomial q(order + 1, 0.0);
    q[0] = 1.0;
    for (std::size_t i = pairs.size(); i-- > 0;)
    {
        if (i + 1 < pairs.size())
            q = advance(q, pairs[i + 1].first - pairs[i].first);
        Polynomial shifted(order + 1, 0.0);
        for (std::size_t j = 0; j + static_cast<std::size_t>(pairs[i].second) <= static_cast<std::size_t>(order); ++j)
            shifted[j + static_cast<std::size_t>(pairs[i].second)] = q[j];
        q = std::move(shifted);
    }
    if (!pairs.empty())
        q = advance(q, pairs.front().first);
    // N_0 = 1.
    return std::accumulate(q.begin(), q.end(), 0.0);
}

double ProgenyDistribution::tail(std::int64_t k) const
{
    if (k < 1 || k > static_cast<std::int64_t>(pmf.size()))
        throw std::out_of_range("ProgenyDistribution::tail: k outside computed range");
    // Sum the tail from the far end to avoid cancellation in 1 - sum.
    long double acc = remaining_mass;
    for (auto j = static_cast<std::int64_t>(pmf.size()) - 1; j >= k; --j)
        acc += pmf[static_cast<std::size_t>(j)];
    return static_cast<double>(acc);
}

ProgenyDistribution gw_progeny_distribution(const OffspringDistribution& law,
                                            std::int64_t kmax)
{
    if (kmax < 1)
        throw std::invalid_argument("gw_progeny_distribution: kmax must be >= 1");
    if (kmax > kMaxProgeny)
        throw std::overflow_error("gw_progeny_distribution: kmax above 1e5");

    const auto& p = law.pmf();
    const auto K = static_cast<std::int64_t>(p.size()) - 1;
    const double sigma = std::sqrt(std::max(law.variance(), 1e-12));
    const double drift = law.mean() - 1.0;

    ProgenyDistribution out;
    out.pmf.assign(static_cast<std::size_t>(kmax) + 1, 0.0);

    // Distribution of the shifted walk W_j = sum_{i<=j} (xi_i - 1) on a window
    // [lo, hi]. Values above kmax - j - 1 can no longer reach -1 by step kmax;
    // values more than 40 standard deviations below the drift carry no mass
    // representable in double precision.
    std::int64_t lo = 0;
    std::vector<double> dist{1.0};
    for (std::int64_t j = 1; j <= kmax; ++j)
    {
        const std::int64_t old_lo = lo;
        const std::int64_t old_hi = old_lo + static_cast<std::int64_t>(dist.size()) - 1;
        const auto spread = static_cast<std::int64_t>(
            std::ceil(40.0 * sigma * std::sqrt(static_cast<double>(j)))) + K + 2;
        const auto centre = static_cast<std::int64_t>(std::floor(drift * static_cast<double>(j)));
        std::int64_t new_lo = std::max<std::int64_t>(-j, std::min<std::int64_t>(centre - spread, -1));
        std::int64_t new_hi = std::min<std::int64_t>(old_hi + K - 1, kmax - j - 1);
        new_hi = std::max<std::int64_t>(new_hi, -1);
        new_lo = std::max(new_lo, old_lo - 1);
        std::vector<double> next(static_cast<std::size_t>(new_hi - new_lo + 1), 0.0);
        for (std::int64_t v = old_lo; v <= old_hi; ++v)
        {
            const double mass = dist[static_cast<std::size_t>(v - old_lo)];
            if (mass == 0.0)
                continue;
            for (std::int64_t k = 0; k <= K; ++k)
            {
                const std::int64_t w = v + k - 1;
                if (w < new_lo || w > new_hi || p[static_cast<std::size_t>(k)] == 0.0)
                    continue;
                next[static_cast<std::size_t>(w - new_lo)] += mass * p[static_cast<std::size_t>(k)];
            }
        }
        dist = std::move(next);
        lo = new_lo;
        out.pmf[static_cast<std::size_t>(j)] = dist[static_cast<std::size_t>(-1 - lo)] / static_cast<double>(j);
    }
    long double total = 0.0L;
    for (double v : out.pmf)
        total += v;
    out.remaining_mass = static_cast<double>(std::max(0.0L, 1.0L - total));
    return out;
}

double gw_progeny_tail_exact(const OffspringDistribution& law, std::int64_t k)
{
    if (k < 1)
        throw std::invalid_argument("gw_progeny_tail_exact: k must be >= 1");
    if (k == 1)
        return 1.0;
    return gw_progeny_distribution(law, k - 1).tail(k);
}

//---------------------------------------------------------------------------//

WeakBoundCertificate certify_weak_bound(double c_cluster, double c_theta)
{
    if (!(c_cluster > 0.0 && c_theta > 0.0))
        throw std::invalid_argument("certify_weak_bound: constants must be positive");
    // (C_cluster/sqrt2 + C_theta) c2^{2/3} <= c2/4  <=>  c2^{1/3} >= 4 (...)
    const double root = 4.0 * (c_cluster / std::sqrt(2.0) + c_theta);
    WeakBoundCertificate cert;
    cert.c2 = std::max(1.0, root * root * root);
    cert.epsilon = std::pow(cert.c2, -4.0 / 3.0);
    cert.c_plus = 4.0 * cert.c2;
    return cert;
}

double weak_bound_slack(double c_cluster, double c_theta, double c2)
{
    const double c23 = std::cbrt(c2 * c2);
    return (c_cluster / std::sqrt(2.0) + c_theta) * c23 - c2 / 4.0;
}

}  // namespace sll

// Exact limit theory: canonical-measure mass moments of super-Brownian
// motion, Feller's branching diffusion, classical Galton–Watson recursions
// and the weak-bound certifier.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sll/stats.hpp"

namespace sll {

/// Requested moment order exceeds what an exact routine supports.
class UnsupportedOrderError : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

/// Finite-support law on {0, 1, 2, ...}; any mean.
class OffspringDistribution
{
  public:
    OffspringDistribution() = default;
    explicit OffspringDistribution(std::vector<double> pmf);

    /// P(0) = 1 - mu/2, P(2) = mu/2.
    static OffspringDistribution binary(double mean = 1.0);

    const std::vector<double>& pmf() const noexcept { return pmf_; }
    std::size_t max_children() const noexcept { return pmf_.size() - 1; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return variance_; }
    /// j-th cumulant, j in 1..6.
    double cumulant(int j) const;

    /// f(s) = sum_k p_k s^k.
    double pgf(double s) const noexcept;

    /// One draw.
    std::uint32_t sample(RandomStream& rng) const noexcept;
    /// Sum of `parents` independent draws.
    std::uint64_t sample_total(std::uint64_t parents, RandomStream& rng) const;

  private:
    std::vector<double> pmf_;
    std::vector<double> cdf_;
    double mean_ = 0.0;
    double variance_ = 0.0;
    std::vector<double> cumulants_;
};

/// Critical offspring law: mean 1, variance gamma in (0, inf).
class OffspringLaw
{
  public:
    explicit OffspringLaw(std::vector<double> pmf);
    /// 0 or 2 children with probability 1/2 each (gamma = 1).
    static OffspringLaw binary();

    const OffspringDistribution& distribution() const noexcept { return dist_; }
    double gamma() const noexcept { return dist_.variance(); }
    double pgf(double s) const noexcept { return dist_.pgf(s); }

  private:
    OffspringDistribution dist_;
};

/// Model-dependent normalization (A, V, v).
struct ModelConstants
{
    double A = 1.0;
    double V = 1.0;
    double v = 1.0;
};

/// r-point observable: times t_j, exponents l_j and optional wavevectors.
struct MomentSpec
{
    std::vector<double> times;
    std::vector<int> exponents;
    std::vector<std::vector<double>> wavevectors;

    int total_order() const;
    /// Throws std::invalid_argument on malformed specs.
    void validate(bool allow_zero_order = false) const;
};

//---------------------------------------------------------------------------//
// Canonical measure and classical limits
//---------------------------------------------------------------------------//

/// N_0(S > t) = 2/t.
double sbm_survival(double t);
/// lim n theta_n = 2/gamma.
double kolmogorov_limit(double gamma);
/// Mean gamma/2 of the exponential Yaglom law.
double yaglom_mean(double gamma);

/// N_0[prod_j X_{t_j}(1)^{l_j}], by Markov propagation of conditional
/// moments from the largest time inward. Sum of exponents at most 6.
double sbm_mass_moment(const MomentSpec& spec);

/// Fourier transform of the moment measure, order r-1 <= 2. Each
/// (time, wavevector) pair is repeated according to its exponent. The
/// Gaussian transforms used here are real.
double sbm_fourier_moment(const MomentSpec& spec, int d);

/// A (V A^2)^{sum l - 1} N_0[prod X^l].
double predicted_scaled_moment(const ModelConstants& c, const MomentSpec& spec);

//---------------------------------------------------------------------------//
// Feller's branching diffusion (standardized, gamma = 1)
//---------------------------------------------------------------------------//

/// E[exp(-lambda X_{s+tau}) | X_s = x] = exp(-x lambda / (1 + lambda tau / 2)).
double feller_transition_laplace(double x, double tau, double lambda);

/// Exact transition draw: Poisson(2x/tau) exponential clumps of mean tau/2.
double feller_exact_sample(double x, double tau, RandomStream& rng);

/// Mass at time t conditioned on survival: exponential with mean t/2.
double feller_entrance_sample(double t, RandomStream& rng);

/// Polynomial coefficients (in x) of E[X_{s+tau}^m | X_s = x].
std::vector<double> feller_conditional_moment(int m, double tau);

//---------------------------------------------------------------------------//
// Galton–Watson exact values
//---------------------------------------------------------------------------//

/// theta_n = 1 - f^{(n)}(0).
double gw_survival_exact(const OffspringDistribution& law, std::int64_t n);

/// E[prod_j N_{t_j}^{l_j}] for integer times, sum of exponents <= 4.
double gw_joint_moments_exact(const OffspringDistribution& law, const MomentSpec& spec);

/// Total-progeny law from the cycle lemma P(|C| = j) = P(S_j = j-1)/j.
struct ProgenyDistribution
{
    std::vector<double> pmf;  ///< pmf[j] = P(|C| = j), j = 0..kmax (pmf[0] = 0)
    double remaining_mass = 0.0;  ///< 1 - sum_{j<=kmax} pmf[j]

    /// P(|C| >= k) for 1 <= k <= kmax + 1.
    double tail(std::int64_t k) const;
};

ProgenyDistribution gw_progeny_distribution(const OffspringDistribution& law,
                                            std::int64_t kmax);

/// P(|C| >= k).
double gw_progeny_tail_exact(const OffspringDistribution& law, std::int64_t k);

//---------------------------------------------------------------------------//
// Weak upper bound theta_n <= c_+/n
//---------------------------------------------------------------------------//

struct WeakBoundCertificate
{
    double epsilon = 0.0;
    double c2 = 0.0;
    double c_plus = 0.0;
};

/// Smallest c2 >= 1 with 2^{-1/2} C_cluster c2^{2/3} + C_theta c2^{2/3} <= c2/4,
/// with epsilon = c2^{-4/3} and c_+ = 4 c2.
WeakBoundCertificate certify_weak_bound(double c_cluster, double c_theta);

/// Left-hand minus right-hand side of the induction condition at c2.
double weak_bound_slack(double c_cluster, double c_theta, double c2);

}  // namespace sll

// Monte Carlo estimators for survival, moments, Fourier r-point functions,
// conditional and size-biased functionals, plus criticality calibration and
// extraction of the constants (A, V, v).
//
// Every estimator takes a ReplicatePlan: replicate i is simulated from
// RandomStream(seed, stream_offset + i), so results depend only on
// (seed, replicates). Each call simulates one trajectory pool and computes all
// of its observables from that pool.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sll/analytic.hpp"
#include "sll/models.hpp"
#include "sll/parallel.hpp"
#include "sll/stats.hpp"

namespace sll {

/// Scaling parameter n and the constants (A, V, v) used to normalize.
struct NormalizationContext
{
    ModelConstants constants;
    std::int64_t n = 1;
    void validate() const;
};

/// Replicates expected to give `survivors` clusters alive at time n, using
/// theta_n ~ 2 / (A V n).
std::uint64_t replicates_for_survivors(double n, std::uint64_t survivors,
                                       const ModelConstants& c = {});

/// Replicates for a target relative standard error of a mean, given the
/// second moment and mean of one replicate.
std::uint64_t replicates_for_relative_error(double second_moment, double mean,
                                            double relative_error);

//---------------------------------------------------------------------------//
// Survival
//---------------------------------------------------------------------------//

struct SurvivalPoint
{
    double n = 0.0;
    EstimateWithCI theta;    ///< Wilson interval
    EstimateWithCI n_theta;  ///< n times the above
    std::uint64_t survivors = 0;
    bool degenerate = false;  ///< no survivors
};

struct SurvivalCurve
{
    std::vector<SurvivalPoint> points;
    std::uint64_t replicates = 0;
    std::uint64_t cap_hits = 0;
};

/// theta_n for every requested time from one shared pool. Cap-censored
/// clusters count as alive.
SurvivalCurve estimate_survival_curve(const Model& model, std::span<const double> ns,
                                      const ReplicatePlan& plan);

//---------------------------------------------------------------------------//
// Moments
//---------------------------------------------------------------------------//

struct MomentEstimate
{
    EstimateWithCI estimate;
    double predicted = 0.0;
    /// Group jackknife standard error (order >= 3 only, otherwise NaN).
    double jackknife_stderr = 0.0;
    double excess_kurtosis = 0.0;
    bool heavy_tail = false;
    std::uint64_t cap_hits = 0;
    std::vector<std::string> warnings;
};

/// n E[prod_j (N_{floor(t_j n)} / n)^{l_j}] against predicted_scaled_moment.
/// Throws on a spec whose exponents are all zero.
MomentEstimate estimate_scaled_moments(const Model& model, const NormalizationContext& ctx,
                                       const MomentSpec& spec, const ReplicatePlan& plan);

/// Several specs evaluated on one pool.
std::vector<MomentEstimate> estimate_scaled_moments(const Model& model,
                                                    const NormalizationContext& ctx,
                                                    std::span<const MomentSpec> specs,
                                                    const ReplicatePlan& plan);

struct FourierEstimate
{
    EstimateWithCI real;
    EstimateWithCI imag;
    double predicted = 0.0;
    std::uint64_t cap_hits = 0;
};

/// E[prod_j (sum_{x in A_{floor(t_j n)}} e^{i k_j . x / sqrt(v n)})^{l_j}]
/// divided by A (V A^2 n)^{r-2}, against sbm_fourier_moment.
FourierEstimate estimate_fourier_rpoint(const Model& model, const NormalizationContext& ctx,
                                        const MomentSpec& spec, const ReplicatePlan& plan);

struct ConditionalEstimate
{
    EstimateWithCI estimate;  ///< E[Z | N_{floor(tn)} > 0]
    double predicted = 0.0;
    std::uint64_t survivors = 0;
    bool low_power = false;  ///< fewer than 100 survivors
    double survival = 0.0;       ///< fraction alive at the conditioning time
    double unconditional = 0.0;  ///< E[Z 1{alive}] over the same pool
    std::uint64_t cap_hits = 0;
};

/// Z = prod_j (N_{floor(s_j n)} / n)^{l_j} conditioned on survival to tn.
/// The prediction is (V A^2)^{sum l} N_0[prod X_{s_j}^{l_j}] t / 2.
ConditionalEstimate estimate_conditional_moments(const Model& model,
                                                 const NormalizationContext& ctx,
                                                 double t, const MomentSpec& spec,
                                                 const ReplicatePlan& plan);

/// Same functional for Feller's diffusion entered at time t by
/// feller_entrance_sample and propagated exactly, in units of V A^2.
EstimateWithCI feller_conditional_moment_mc(double t, const MomentSpec& spec,
                                            const ReplicatePlan& plan,
                                            const ModelConstants& c = {});

//---------------------------------------------------------------------------//
// Yaglom, cluster tail, truncated functionals
//---------------------------------------------------------------------------//

struct YaglomResult
{
    std::vector<double> samples;  ///< N_n / n for surviving replicates, in order
    KsResult ks;
    EstimateWithCI mean;
    double reference_mean = 0.0;
    std::uint64_t survivors = 0;
    bool low_power = false;  ///< fewer than 1000 survivors
    std::uint64_t cap_hits = 0;
};

/// Mean A^2 V / 2 of the limiting exponential law of N_n / n.
double yaglom_reference_mean(const ModelConstants& c);

/// Throws std::runtime_error when no replicate survives.
YaglomResult estimate_yaglom(const Model& model, double n, double reference_mean,
                             const ReplicatePlan& plan);

struct TailPoint
{
    std::int64_t k = 0;
    EstimateWithCI tail;    ///< P(|C| >= k)
    EstimateWithCI scaled;  ///< sqrt(k) P(|C| >= k)
};

struct ClusterTail
{
    std::vector<TailPoint> points;
    double plateau = 0.0;  ///< median of scaled values with k >= plateau_from
    std::uint64_t censored = 0;
    std::uint64_t cap_hits = 0;
};

/// Clusters are simulated to horizon max(ks). A cluster still alive there
/// has size above max(ks), so censoring is exact for every k.
ClusterTail estimate_cluster_tail(const Model& model, std::span<const std::int64_t> ks,
                                  const ReplicatePlan& plan, std::int64_t plateau_from = 100);

enum class TruncatedFunctional
{
    indicator_one,     ///< H = 1
    identity_clipped,  ///< H(x) = min(x, 1)
    exp_decay,         ///< H(x) = exp(-x)
    zero,              ///< H = 0
};

TruncatedFunctional parse_truncated_functional(std::string_view name);
std::string_view truncated_functional_name(TruncatedFunctional f);

struct TruncatedEstimate
{
    EstimateWithCI direct;
    EstimateWithCI size_biased;
    /// True when the size-biased value comes from an independent spine
    /// simulation (GW, BRW); otherwise the pool is reweighted.
    bool spine = false;
};

/// n V A E[1{N_{sn} > eta V A^2 n} H(N_{tn} / (V A^2 n))], directly and via
/// the measure size-biased by N_{sn}.
TruncatedEstimate estimate_truncated_functional(const Model& model,
                                                const NormalizationContext& ctx, double s,
                                                double t, double eta, TruncatedFunctional h,
                                                const ReplicatePlan& plan);

//---------------------------------------------------------------------------//
// Calibration and constants
//---------------------------------------------------------------------------//

/// One-parameter model family.
struct ModelFamily
{
    std::string name;
    std::string parameter;
    std::function<Model(double)> make;
};

/// Galton–Watson with P(0) = 1 - mu/2, P(2) = mu/2; parameter mu.
ModelFamily gw_mean_family();
/// Oriented percolation with the uniform kernel; parameter p.
ModelFamily op_family(int d, int L);
/// Contact process with the uniform kernel; parameter lambda.
ModelFamily cp_family(int d, int L);

struct CalibrationStep
{
    double parameter = 0.0;
    double slope = 0.0;  ///< of log E[N_n] over the window; +inf after a cap hit
    double slope_se = 0.0;
};

struct CalibrationResult
{
    double parameter = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool converged = false;
    double slope = 0.0;  ///< at the returned parameter
    double slope_se = 0.0;
    std::vector<CalibrationStep> steps;
};

struct CalibrationOptions
{
    double relative_precision = 1e-3;
    int max_iterations = 40;
    int window_points = 8;
    /// Clusters above this size mark the parameter supercritical. 0 selects
    /// max(10^4, 100 n2), far above anything a critical cluster reaches.
    std::int64_t population_cap = 0;
    std::uint64_t pilot_replicates = 2000;
};

/// Bisection on the sign of the slope of log E[N] over [n1, n2]. The same
/// seed is used at every parameter value. Throws std::domain_error if the
/// bracket does not straddle criticality.
CalibrationResult calibrate_criticality(const ModelFamily& family, double lower, double upper,
                                        double n1, double n2, const ReplicatePlan& plan,
                                        const CalibrationOptions& options = {});

/// Slope of log E[N] over the window and its standard error for one model.
CalibrationStep growth_slope(const Model& model, double n1, double n2,
                             const ReplicatePlan& plan, const CalibrationOptions& options = {});

struct ConstantsEstimate
{
    ModelConstants values;
    EstimateWithCI A;
    EstimateWithCI V;
    EstimateWithCI v;  ///< n_samples = 0 when the model has no positions
    EstimateWithCI two_over_AV;  ///< percentile bootstrap interval
    bool plateau_ok = false;     ///< |slope of E[N]| <= 2 SE over the window
    double plateau_slope = 0.0;
    double plateau_slope_se = 0.0;
    std::uint64_t cap_hits = 0;
};

/// A = average of E[N_g] over the window, V = slope of E[N_g^2] in g over
/// A^3, v from -2d ln(F(k)/F(0)) regressed on |k|^2 at g = n2.
ConstantsEstimate estimate_constants(const Model& model, double n1, double n2,
                                     const ReplicatePlan& plan,
                                     std::vector<double> k2_grid = {0.1, 0.2, 0.4, 0.8});

/// Empirical stand-in for C_theta: max over m of theta_n / (E[N_m] theta_{n-m}).
struct SelfRepellenceProxy
{
    double value = 0.0;
    double argmax_m = 0.0;
};

SelfRepellenceProxy estimate_self_repellence_proxy(const Model& model, double n,
                                                   std::span<const double> ms,
                                                   const ReplicatePlan& plan);

}  // namespace sll

#include "sll/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "sll/analytic.hpp"
#include "sll/estimators.hpp"
#include "sll/kernel.hpp"
#include "sll/lattice_trees.hpp"

#ifndef SLL_VERSION
#define SLL_VERSION "0.0.0"
#endif
#ifndef SLL_GIT_COMMIT
#define SLL_GIT_COMMIT ""
#endif

namespace sll {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

//---------------------------------------------------------------------------//
// JSON helpers
//---------------------------------------------------------------------------//

json estimate_json(const EstimateWithCI& e)
{
    return {{"value", e.value},
            {"stderr", e.std_error},
            {"ci_low", e.ci_low},
            {"ci_high", e.ci_high},
            {"n_samples", e.n_samples},
            {"n_effective", e.n_effective}};
}

json constants_json(const ModelConstants& c)
{
    return {{"A", c.A}, {"V", c.V}, {"v", c.v}};
}

const json& require(const json& p, const char* key)
{
    if (!p.contains(key))
        throw ConfigError(std::string("missing field '") + key + "'");
    return p.at(key);
}

double number(const json& p, const char* key)
{
    const json& v = require(p, key);
    if (!v.is_number())
        throw ConfigError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

double number_or(const json& p, const char* key, double fallback)
{
    return p.contains(key) ? number(p, key) : fallback;
}

/// A number or an array of numbers.
std::vector<double> number_list(const json& p, const char* key)
{
    const json& v = require(p, key);
    std::vector<double> out;
    if (v.is_number())
        out.push_back(v.get<double>());
    else if (v.is_array())
        for (const auto& x : v)
        {
            if (!x.is_number())
                throw ConfigError(std::string("field '") + key + "' must hold numbers");
            out.push_back(x.get<double>());
        }
    else
        throw ConfigError(std::string("field '") + key + "' must be a number or array");
    if (out.empty())
        throw ConfigError(std::string("field '") + key + "' is empty");
    return out;
}

std::pair<double, double> number_pair(const json& p, const char* key)
{
    const auto v = number_list(p, key);
    if (v.size() != 2)
        throw ConfigError(std::string("field '") + key + "' must have two entries");
    return {v[0], v[1]};
}

ModelConstants constants_from(const json& p)
{
    ModelConstants c;
    if (!p.contains("constants"))
        return c;
    const json& j = p.at("constants");
    c.A = number_or(j, "A", 1.0);
    c.V = number_or(j, "V", 1.0);
    c.v = number_or(j, "v", 1.0);
    if (!(c.A > 0 && c.V > 0 && c.v > 0))
        throw ConfigError("constants must be positive");
    return c;
}

OffspringDistribution offspring_from_json(const json& j)
{
    if (j.is_string())
    {
        if (j.get<std::string>() != "binary")
            throw ConfigError("unknown offspring law: " + j.get<std::string>());
        return OffspringDistribution::binary();
    }
    if (j.is_array())
        return OffspringDistribution(j.get<std::vector<double>>());
    if (j.is_object() && j.contains("binary_mean"))
        return OffspringDistribution::binary(number(j, "binary_mean"));
    throw ConfigError("offspring must be \"binary\", a pmf array or {binary_mean}");
}

OffspringDistribution offspring_of(const json& p)
{
    return offspring_from_json(p.contains("offspring") ? p.at("offspring") : json("binary"));
}

SpreadOutKernel kernel_of(const json& p)
{
    const int d = static_cast<int>(number(p, "d"));
    const int L = static_cast<int>(number_or(p, "L", 1));
    return SpreadOutKernel::uniform_box(d, L);
}

bool is_critical_gw(const Model& m)
{
    const auto* gw = std::get_if<GaltonWatsonModel>(&m);
    return gw && std::abs(gw->law.mean() - 1.0) < 1e-12;
}

std::string fmt(double x)
{
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

//---------------------------------------------------------------------------//
// Experiments
//---------------------------------------------------------------------------//

using Experiment = std::function<void(const ExperimentConfig&, RunRecord&)>;

Model model_param(const json& p)
{
    return model_from_json(require(p, "model"));
}

std::vector<MomentSpec> specs_param(const json& p)
{
    std::vector<MomentSpec> specs;
    if (p.contains("specs"))
        for (const auto& s : p.at("specs"))
            specs.push_back(moment_spec_from_json(s));
    else
        specs.push_back(moment_spec_from_json(require(p, "spec")));
    return specs;
}

void run_survival(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const auto ns = number_list(cfg.params, "n");
    const auto curve = estimate_survival_curve(model, ns, cfg.plan());
    r.cap_hits = curve.cap_hits;
    json points = json::array();
    for (const auto& pt : curve.points)
        points.push_back({{"n", pt.n},
                          {"theta", estimate_json(pt.theta)},
                          {"n_theta", estimate_json(pt.n_theta)},
                          {"survivors", pt.survivors},
                          {"degenerate", pt.degenerate}});
    r.estimates["points"] = points;
    if (const auto* gw = std::get_if<GaltonWatsonModel>(&model))
    {
        json exact = json::array();
        for (const auto& pt : curve.points)
        {
            const double e = gw_survival_exact(gw->law, static_cast<std::int64_t>(std::floor(pt.n)));
            exact.push_back(e);
            if (!pt.degenerate)
                r.checks.push_back(check_sigmas("theta[n=" + fmt(pt.n) + "] vs exact", pt.theta.value,
                                                e, pt.theta.std_error, 4.0));
        }
        r.references["gw_survival_exact"] = exact;
        if (is_critical_gw(model))
            r.references["kolmogorov_limit"] = kolmogorov_limit(gw->law.variance());
    }
}

void run_moments(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const NormalizationContext ctx{constants_from(cfg.params),
                                   static_cast<std::int64_t>(number(cfg.params, "n"))};
    const auto specs = specs_param(cfg.params);
    const double tol = number_or(cfg.params, "tolerance", 0.05);
    const auto est = estimate_scaled_moments(model, ctx, specs, cfg.plan());
    json out = json::array();
    json exact = json::array();
    for (std::size_t i = 0; i < specs.size(); ++i)
    {
        const auto& e = est[i];
        r.cap_hits = std::max(r.cap_hits, e.cap_hits);
        out.push_back({{"spec", moment_spec_to_json(specs[i])},
                       {"estimate", estimate_json(e.estimate)},
                       {"jackknife_stderr", e.jackknife_stderr},
                       {"excess_kurtosis", e.excess_kurtosis},
                       {"heavy_tail", e.heavy_tail},
                       {"warnings", e.warnings}});
        const std::string tag = "moment[" + std::to_string(i) + "]";
        r.checks.push_back(check_relative(tag + " vs limit", e.estimate.value, e.predicted, tol));
        if (const auto* gw = std::get_if<GaltonWatsonModel>(&model);
            gw && specs[i].total_order() <= 4
            && *std::max_element(specs[i].times.begin(), specs[i].times.end()) * static_cast<double>(ctx.n) <= 1e4)
        {
            MomentSpec at_n = specs[i];
            for (auto& t : at_n.times)
                t = std::floor(t * static_cast<double>(ctx.n) + 1e-9);
            const double n = static_cast<double>(ctx.n);
            const double value
                = n * gw_joint_moments_exact(gw->law, at_n) / std::pow(n, at_n.total_order());
            exact.push_back(value);
            r.checks.push_back(check_sigmas(tag + " vs exact finite n", e.estimate.value, value,
                                            e.estimate.std_error, 4.0));
        }
    }
    r.estimates["moments"] = out;
    json predicted = json::array();
    for (const auto& e : est)
        predicted.push_back(e.predicted);
    r.references["predicted_scaled_moment"] = predicted;
    if (!exact.empty())
        r.references["gw_exact_scaled"] = exact;
}

void run_fourier(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const NormalizationContext ctx{constants_from(cfg.params),
                                   static_cast<std::int64_t>(number(cfg.params, "n"))};
    const MomentSpec spec = moment_spec_from_json(require(cfg.params, "spec"));
    const double tol = number_or(cfg.params, "tolerance", 0.05);
    const auto e = estimate_fourier_rpoint(model, ctx, spec, cfg.plan());
    r.cap_hits = e.cap_hits;
    r.estimates["real"] = estimate_json(e.real);
    r.estimates["imag"] = estimate_json(e.imag);
    r.references["sbm_fourier_moment"] = e.predicted;
    r.checks.push_back(check_relative("real part vs limit", e.real.value, e.predicted, tol));
    r.checks.push_back(check_sigmas("imaginary part vs 0", e.imag.value, 0.0, e.imag.std_error, 4.0));
}

void run_yaglom(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const double n = number(cfg.params, "n");
    const double ref = number_or(cfg.params, "reference_mean",
                                 yaglom_reference_mean(constants_from(cfg.params)));
    const auto y = estimate_yaglom(model, n, ref, cfg.plan());
    r.cap_hits = y.cap_hits;
    r.estimates["ks_statistic"] = y.ks.statistic;
    r.estimates["ks_p_value"] = y.ks.p_value;
    r.estimates["mean"] = estimate_json(y.mean);
    r.estimates["survivors"] = y.survivors;
    r.estimates["low_power"] = y.low_power;
    r.references["reference_mean"] = ref;
    r.checks.push_back(check_upper("KS distance", y.ks.statistic, number_or(cfg.params, "ks_tolerance", 0.03)));
    r.checks.push_back(check_relative("conditional mean", y.mean.value, ref,
                                      number_or(cfg.params, "mean_tolerance", 0.05)));
}

void run_tail(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    std::vector<std::int64_t> ks;
    for (double k : number_list(cfg.params, "k"))
        ks.push_back(static_cast<std::int64_t>(k));
    const auto plateau_from = static_cast<std::int64_t>(number_or(cfg.params, "plateau_from", 100));
    const auto tail = estimate_cluster_tail(model, ks, cfg.plan(), plateau_from);
    r.cap_hits = tail.cap_hits;
    json pts = json::array();
    for (const auto& p : tail.points)
        pts.push_back({{"k", p.k}, {"tail", estimate_json(p.tail)}, {"scaled", estimate_json(p.scaled)}});
    r.estimates["points"] = pts;
    r.estimates["plateau"] = tail.plateau;
    r.estimates["censored"] = tail.censored;
    if (const auto* gw = std::get_if<GaltonWatsonModel>(&model))
    {
        json exact = json::array();
        for (const auto& p : tail.points)
        {
            const double e = gw_progeny_tail_exact(gw->law, p.k);
            exact.push_back(e);
            r.checks.push_back(check_sigmas("P(|C|>=" + std::to_string(p.k) + ") vs exact",
                                            p.tail.value, e, p.tail.std_error, 4.0));
        }
        r.references["gw_progeny_tail_exact"] = exact;
    }
}

void run_conditional(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const NormalizationContext ctx{constants_from(cfg.params),
                                   static_cast<std::int64_t>(number(cfg.params, "n"))};
    const double t = number(cfg.params, "t");
    const auto specs = specs_param(cfg.params);
    ReplicatePlan feller_plan = cfg.plan();
    feller_plan.replicates = static_cast<std::uint64_t>(
        number_or(cfg.params, "feller_replicates", static_cast<double>(cfg.replicates)));
    feller_plan.stream_offset = 1ULL << 62;
    json out = json::array();
    for (std::size_t i = 0; i < specs.size(); ++i)
    {
        const auto e = estimate_conditional_moments(model, ctx, t, specs[i], cfg.plan());
        const auto f = feller_conditional_moment_mc(t, specs[i], feller_plan, ctx.constants);
        r.cap_hits = std::max(r.cap_hits, e.cap_hits);
        out.push_back({{"spec", moment_spec_to_json(specs[i])},
                       {"estimate", estimate_json(e.estimate)},
                       {"survivors", e.survivors},
                       {"low_power", e.low_power},
                       {"survival", e.survival},
                       {"feller_mc", estimate_json(f)},
                       {"predicted", e.predicted}});
        const double se = std::hypot(e.estimate.std_error, f.std_error);
        r.checks.push_back(check_sigmas("conditional[" + std::to_string(i) + "] vs Feller MC",
                                        e.estimate.value, f.value, se, 4.0));
    }
    r.estimates["conditional"] = out;
}

void run_truncated(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const NormalizationContext ctx{constants_from(cfg.params),
                                   static_cast<std::int64_t>(number(cfg.params, "n"))};
    const auto h = parse_truncated_functional(require(cfg.params, "functional").get<std::string>());
    const auto e = estimate_truncated_functional(model, ctx, number(cfg.params, "s"),
                                                 number(cfg.params, "t"), number(cfg.params, "eta"),
                                                 h, cfg.plan());
    r.estimates["direct"] = estimate_json(e.direct);
    r.estimates["size_biased"] = estimate_json(e.size_biased);
    r.estimates["spine"] = e.spine;
    const double se = std::hypot(e.direct.std_error, e.size_biased.std_error);
    r.checks.push_back(check_sigmas("direct vs size-biased", e.direct.value, e.size_biased.value, se, 4.0));
}

ModelFamily family_param(const json& p)
{
    const json& f = require(p, "family");
    const std::string type = require(f, "type").get<std::string>();
    if (type == "gw")
        return gw_mean_family();
    if (type == "op")
        return op_family(static_cast<int>(number(f, "d")), static_cast<int>(number_or(f, "L", 1)));
    if (type == "cp")
        return cp_family(static_cast<int>(number(f, "d")), static_cast<int>(number_or(f, "L", 1)));
    throw ConfigError("unknown model family: " + type);
}

CalibrationOptions calibration_options(const json& p)
{
    CalibrationOptions o;
    o.relative_precision = number_or(p, "precision", o.relative_precision);
    o.window_points = static_cast<int>(number_or(p, "window_points", o.window_points));
    o.population_cap = static_cast<std::int64_t>(number_or(p, "population_cap", 0));
    return o;
}

json calibration_json(const CalibrationResult& c)
{
    json steps = json::array();
    for (const auto& s : c.steps)
        steps.push_back({{"parameter", s.parameter}, {"slope", s.slope}, {"slope_se", s.slope_se}});
    return {{"parameter", c.parameter}, {"lower", c.lower},   {"upper", c.upper},
            {"converged", c.converged}, {"slope", c.slope},   {"slope_se", c.slope_se},
            {"steps", steps}};
}

void run_calibrate(const ExperimentConfig& cfg, RunRecord& r)
{
    const auto family = family_param(cfg.params);
    const auto [lo, hi] = number_pair(cfg.params, "bracket");
    const auto [n1, n2] = number_pair(cfg.params, "window");
    const auto c = calibrate_criticality(family, lo, hi, n1, n2, cfg.plan(),
                                         calibration_options(cfg.params));
    r.estimates["calibration"] = calibration_json(c);
    r.estimates["parameter_name"] = family.parameter;
}

json constants_estimate_json(const ConstantsEstimate& c)
{
    return {{"values", constants_json(c.values)},
            {"A", estimate_json(c.A)},
            {"V", estimate_json(c.V)},
            {"v", estimate_json(c.v)},
            {"two_over_AV", estimate_json(c.two_over_AV)},
            {"plateau_ok", c.plateau_ok},
            {"plateau_slope", c.plateau_slope},
            {"plateau_slope_se", c.plateau_slope_se}};
}

void run_constants(const ExperimentConfig& cfg, RunRecord& r)
{
    const Model model = model_param(cfg.params);
    const auto [n1, n2] = number_pair(cfg.params, "window");
    std::vector<double> k2{0.1, 0.2, 0.4, 0.8};
    if (cfg.params.contains("k2_grid"))
        k2 = number_list(cfg.params, "k2_grid");
    const auto c = estimate_constants(model, n1, n2, cfg.plan(), k2);
    r.cap_hits = c.cap_hits;
    r.estimates = constants_estimate_json(c);
    const double tol = number_or(cfg.params, "tolerance", 0.05);
    if (const auto* gw = std::get_if<GaltonWatsonModel>(&model); gw && is_critical_gw(model))
    {
        r.references["two_over_gamma"] = kolmogorov_limit(gw->law.variance());
        r.checks.push_back(check_relative("2/(A V)", c.two_over_AV.value,
                                          kolmogorov_limit(gw->law.variance()), tol));
    }
    if (const auto* brw = std::get_if<BranchingRandomWalkModel>(&model);
        brw && std::abs(brw->law.mean() - 1.0) < 1e-12)
    {
        const double v = kernel_variance(brw->kernel);
        r.references["kernel_variance"] = v;
        r.checks.push_back(check_relative("v", c.v.value, v, tol));
        r.checks.push_back(check_relative("2/(A V)", c.two_over_AV.value,
                                          kolmogorov_limit(brw->law.variance()), tol));
    }
}

/// Query name -> value (number or JSON).
json limit_query(const std::string& query, const json& p)
{
    auto gamma = [&] {
        if (p.contains("gamma"))
            return number(p, "gamma");
        if (p.contains("γ"))
            return number(p, "γ");
        return 1.0;
    };
    auto spec = [&] { return moment_spec_from_json(p.contains("spec") ? p.at("spec") : p); };
    if (query == "kolmogorov")
        return kolmogorov_limit(gamma());
    if (query == "yaglom_mean")
        return yaglom_mean(gamma());
    if (query == "sbm_survival")
        return sbm_survival(number(p, "t"));
    if (query == "sbm_moment")
        return sbm_mass_moment(spec());
    if (query == "sbm_fourier")
        return sbm_fourier_moment(spec(), static_cast<int>(number(p, "d")));
    if (query == "predicted_scaled_moment")
        return predicted_scaled_moment(constants_from(p), spec());
    if (query == "gw_survival")
        return gw_survival_exact(offspring_of(p), static_cast<std::int64_t>(number(p, "n")));
    if (query == "gw_joint_moment")
        return gw_joint_moments_exact(offspring_of(p), spec());
    if (query == "gw_progeny_tail")
        return gw_progeny_tail_exact(offspring_of(p), static_cast<std::int64_t>(number(p, "k")));
    if (query == "feller_laplace")
        return feller_transition_laplace(number(p, "x"), number(p, "tau"), number(p, "lambda"));
    if (query == "feller_conditional_moment")
        return feller_conditional_moment(static_cast<int>(number(p, "m")), number(p, "tau"));
    if (query == "kernel_variance")
        return kernel_variance(kernel_of(p));
    if (query == "certify")
    {
        const auto c = certify_weak_bound(number(p, "C_cluster"), number(p, "C_theta"));
        return {{"c2", c.c2}, {"epsilon", c.epsilon}, {"c_plus", c.c_plus}};
    }
    throw ConfigError("unknown limits query: " + query);
}

const std::vector<std::string> kLimitQueries{
    "kolmogorov",   "yaglom_mean",     "sbm_survival",   "sbm_moment",
    "sbm_fourier",  "predicted_scaled_moment", "gw_survival", "gw_joint_moment",
    "gw_progeny_tail", "feller_laplace", "feller_conditional_moment", "kernel_variance",
    "certify"};

void run_limits(const ExperimentConfig& cfg, RunRecord& r)
{
    const std::string query = require(cfg.params, "query").get<std::string>();
    json inputs = cfg.params.contains("params") ? cfg.params.at("params") : cfg.params;
    r.references["inputs"] = inputs;
    r.estimates["query"] = query;
    r.estimates["value"] = limit_query(query, inputs);
}

/// Closed form of the smallest admissible c2 when it is at least 1.
double certifier_closed_form(double c_cluster, double c_theta)
{
    return std::pow(4.0 * (c_cluster / std::numbers::sqrt2 + c_theta), 3.0);
}

void run_certify(const ExperimentConfig& cfg, RunRecord& r)
{
    const double cc = number(cfg.params, "C_cluster");
    const double ct = number(cfg.params, "C_theta");
    const auto c = certify_weak_bound(cc, ct);
    r.estimates["c2"] = c.c2;
    r.estimates["epsilon"] = c.epsilon;
    r.estimates["c_plus"] = c.c_plus;
    r.estimates["slack_at_c2"] = weak_bound_slack(cc, ct, c.c2);
    const double closed = certifier_closed_form(cc, ct);
    if (closed >= 1.0)
    {
        r.references["closed_form_c2"] = closed;
        r.checks.push_back(check_relative("c2 vs (4(C_cluster/sqrt2 + C_theta))^3", c.c2, closed, 1e-9));
    }
}

void run_lt_verify(const ExperimentConfig& cfg, RunRecord& r)
{
    const auto kernel = kernel_of(cfg.params);
    const double z = number_or(cfg.params, "z", 1.0);
    const int b = static_cast<int>(number(cfg.params, "bond_cutoff"));
    const auto e = enumerate_lattice_trees(kernel, z, b);
    r.estimates["trees"] = e.size();
    r.estimates["rho_truncated"] = e.rho_truncated();
    std::vector<std::pair<int, int>> pairs;
    if (cfg.params.contains("pairs"))
        for (const auto& pr : cfg.params.at("pairs"))
            pairs.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
    else
        for (int n = 1; n <= b; ++n)
            for (int m = 0; m < n; ++m)
                pairs.emplace_back(m, n);
    json out = json::array();
    for (const auto& [m, n] : pairs)
    {
        const auto rep = verify_self_repellence_lt(e, m, n);
        out.push_back({{"m", m}, {"n", n}, {"max_ratio", rep.max_ratio}, {"classes", rep.classes}});
        r.checks.push_back(check_upper("max_ratio m=" + std::to_string(m) + " n=" + std::to_string(n),
                                       rep.max_ratio, 1.0));
    }
    r.estimates["pairs"] = out;
    json theta = json::array();
    for (int n = 0; n <= b; ++n)
        theta.push_back(lt_survival(e, n));
    r.estimates["theta"] = theta;
}

/// Composition of the transform over tau1 then tau2, done numerically by
/// reading the exponent off the second transform.
double feller_composed(double x, double tau1, double tau2, double lambda)
{
    const double u = -std::log(feller_transition_laplace(1.0, tau2, lambda));
    return feller_transition_laplace(x, tau1, u);
}

json feller_laplace_mc(double x, double tau, double lambda, const ReplicatePlan& plan,
                       EstimateWithCI& out)
{
    const auto groups = run_grouped(plan, MomentAccumulator{},
                                    [&](MomentAccumulator& acc, std::uint64_t, RandomStream& rng) {
                                        acc.add(std::exp(-lambda * feller_exact_sample(x, tau, rng)));
                                    });
    out = mean_estimate(merge_in_order(groups, MomentAccumulator{}));
    return estimate_json(out);
}

double chapman_kolmogorov_error()
{
    double worst = 0.0;
    for (double lambda : {0.1, 0.5, 1.0, 2.0, 5.0})
        for (double x : {0.1, 1.0, 3.0, 10.0})
        {
            const double direct = feller_transition_laplace(x, 2.0, lambda);
            const double composed = feller_composed(x, 0.7, 1.3, lambda);
            worst = std::max(worst, std::abs(composed / direct - 1.0));
        }
    return worst;
}

void run_feller_check(const ExperimentConfig& cfg, RunRecord& r)
{
    const double x = number_or(cfg.params, "x", 1.0);
    const double tau = number_or(cfg.params, "tau", 1.0);
    const double lambda = number_or(cfg.params, "lambda", 1.0);
    EstimateWithCI est;
    r.estimates["laplace_mc"] = feller_laplace_mc(x, tau, lambda, cfg.plan(), est);
    const double exact = feller_transition_laplace(x, tau, lambda);
    r.references["laplace_exact"] = exact;
    r.checks.push_back(check_sigmas("Laplace transform vs exact", est.value, exact, est.std_error, 4.0));
    const double ck = chapman_kolmogorov_error();
    r.estimates["chapman_kolmogorov_max_rel_error"] = ck;
    r.checks.push_back(check_upper("Chapman-Kolmogorov relative error", ck, 1e-8));
}

const std::map<std::string, Experiment>& experiments()
{
    static const std::map<std::string, Experiment> table{
        {"survival", run_survival},       {"moments", run_moments},
        {"fourier", run_fourier},         {"yaglom", run_yaglom},
        {"tail", run_tail},               {"conditional", run_conditional},
        {"calibrate", run_calibrate},     {"constants", run_constants},
        {"limits", run_limits},           {"certify", run_certify},
        {"lt_verify", run_lt_verify},     {"feller_check", run_feller_check},
        {"truncated", run_truncated},
    };
    return table;
}

}  // namespace

//---------------------------------------------------------------------------//
// Configuration and records
//---------------------------------------------------------------------------//

std::string artifact_version()
{
    std::string v = std::string("sll ") + SLL_VERSION;
    if (std::string_view(SLL_GIT_COMMIT).size())
        v += std::string("+g") + SLL_GIT_COMMIT;
    return v;
}

const std::vector<std::string>& experiment_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [name, fn] : experiments())
            out.push_back(name);
        return out;
    }();
    return names;
}

ExperimentConfig ExperimentConfig::from_json(const json& j)
{
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    c.experiment = require(j, "experiment").get<std::string>();
    if (!experiments().contains(c.experiment))
        throw ConfigError("unknown experiment: " + c.experiment);
    auto integer = [&](const char* key, double fallback) {
        const double v = number_or(j, key, fallback);
        if (v < 0 || v != std::floor(v))
            throw ConfigError(std::string("field '") + key + "' must be a nonnegative integer");
        return v;
    };
    c.seed = static_cast<std::uint64_t>(integer("seed", 1));
    c.replicates = static_cast<std::uint64_t>(integer("replicates", 100'000));
    c.workers = static_cast<unsigned>(integer("workers", 0));
    if (c.replicates < 1)
        throw ConfigError("replicates must be at least 1");
    c.output_path = j.value("output_path", std::string());
    for (const auto& [key, value] : j.items())
        if (key != "experiment" && key != "seed" && key != "replicates" && key != "workers"
            && key != "output_path")
            c.params[key] = value;
    return c;
}

json ExperimentConfig::to_json() const
{
    json j = params;
    j["experiment"] = experiment;
    j["seed"] = seed;
    j["replicates"] = replicates;
    j["workers"] = workers;
    if (!output_path.empty())
        j["output_path"] = output_path;
    return j;
}

Model model_from_json(const json& j)
{
    if (j.is_string())
    {
        const auto s = j.get<std::string>();
        if (s == "gw-binary" || s == "gw")
            return GaltonWatsonModel{OffspringDistribution::binary()};
        throw ConfigError("model shorthand must be \"gw-binary\"; got " + s);
    }
    if (!j.is_object())
        throw ConfigError("model must be an object or \"gw-binary\"");
    const std::string type = require(j, "type").get<std::string>();
    if (type == "gw")
        return GaltonWatsonModel{offspring_of(j)};
    if (type == "brw")
        return BranchingRandomWalkModel{offspring_of(j), kernel_of(j)};
    if (type == "op")
    {
        const double p = number(j, "p");
        if (!(p >= 0))
            throw ConfigError("op needs p >= 0");
        return OrientedPercolationModel{kernel_of(j), p};
    }
    if (type == "cp")
    {
        const double lambda = j.contains("λ") ? number(j, "λ") : number(j, "lambda");
        if (!(lambda >= 0))
            throw ConfigError("cp needs lambda >= 0");
        return ContactProcessModel{kernel_of(j), lambda};
    }
    if (type == "lt")
        throw ConfigError("lattice trees are only available through lt_verify");
    throw ConfigError("unknown model type: " + type);
}

json model_to_json(const Model& m)
{
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, GaltonWatsonModel>)
                return {{"type", "gw"}, {"offspring", x.law.pmf()}};
            else if constexpr (std::is_same_v<T, BranchingRandomWalkModel>)
                return {{"type", "brw"}, {"offspring", x.law.pmf()},
                        {"d", x.kernel.dimension()}, {"L", x.kernel.range()}};
            else if constexpr (std::is_same_v<T, OrientedPercolationModel>)
                return {{"type", "op"}, {"d", x.kernel.dimension()}, {"L", x.kernel.range()}, {"p", x.p}};
            else
                return {{"type", "cp"}, {"d", x.kernel.dimension()}, {"L", x.kernel.range()},
                        {"lambda", x.lambda}};
        },
        m);
}

MomentSpec moment_spec_from_json(const json& j)
{
    if (!j.is_object())
        throw ConfigError("spec must be an object");
    MomentSpec s;
    s.times = number_list(j, "times");
    for (double e : number_list(j, "exponents"))
    {
        if (e != std::floor(e))
            throw ConfigError("exponents must be integers");
        s.exponents.push_back(static_cast<int>(e));
    }
    if (j.contains("wavevectors"))
        s.wavevectors = j.at("wavevectors").get<std::vector<std::vector<double>>>();
    s.validate(true);
    return s;
}

json moment_spec_to_json(const MomentSpec& s)
{
    json j = {{"times", s.times}, {"exponents", s.exponents}};
    if (!s.wavevectors.empty())
        j["wavevectors"] = s.wavevectors;
    return j;
}

Check check_relative(std::string name, double measured, double predicted, double rel)
{
    const bool ok = std::abs(measured - predicted) <= rel * std::abs(predicted);
    return {std::move(name), measured, predicted, rel, "relative", ok, {}};
}

Check check_sigmas(std::string name, double measured, double predicted, double se, double k)
{
    const bool ok = std::isfinite(se) && std::abs(measured - predicted) <= k * se;
    Check c{std::move(name), measured, predicted, k * se, "absolute", ok, {}};
    c.note = fmt(k) + " standard errors";
    return c;
}

Check check_upper(std::string name, double measured, double bound)
{
    return {std::move(name), measured, bound, bound, "upper_bound", measured <= bound, {}};
}

Check check_lower(std::string name, double measured, double bound)
{
    return {std::move(name), measured, bound, bound, "lower_bound", measured >= bound, {}};
}

Check check_range(std::string name, double measured, double low, double high)
{
    Check c{std::move(name), measured, 0.5 * (low + high), 0.5 * (high - low), "range",
            measured >= low && measured <= high, {}};
    c.note = "[" + fmt(low) + ", " + fmt(high) + "]";
    return c;
}

std::string RunRecord::verdict() const
{
    if (checks.empty())
        return "none";
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; })
               ? "pass"
               : "fail";
}

json RunRecord::to_json() const
{
    json cs = json::array();
    for (const auto& c : checks)
    {
        json j = {{"name", c.name},           {"measured", c.measured},
                  {"predicted", c.predicted}, {"tolerance", c.tolerance},
                  {"tolerance_kind", c.tolerance_kind}, {"pass", c.pass}};
        if (!c.note.empty())
            j["note"] = c.note;
        cs.push_back(std::move(j));
    }
    return {{"schema_version", kSchemaVersion},
            {"version", artifact_version()},
            {"kind", kind},
            {"id", id},
            {"config", config},
            {"estimates", estimates},
            {"references", references},
            {"checks", cs},
            {"verdict", verdict()},
            {"wall_time_seconds", wall_time_seconds},
            {"cap_hits", cap_hits}};
}

RunRecord run(const ExperimentConfig& config)
{
    const auto start = Clock::now();
    RunRecord r;
    r.kind = "experiment";
    r.id = config.experiment;
    r.config = config.to_json();
    const auto it = experiments().find(config.experiment);
    if (it == experiments().end())
        throw ConfigError("unknown experiment: " + config.experiment);
    try
    {
        it->second(config, r);
    }
    catch (const json::exception& e)
    {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    r.wall_time_seconds = seconds_since(start);
    return r;
}

std::string dump_record(const json& record)
{
    // Shortest round-trip representation, so every double is exact.
    return record.dump(-1, ' ', false, json::error_handler_t::replace);
}

void append_record(const std::string& path, const json& record)
{
    std::ofstream os(path, std::ios::app);
    if (!os)
        throw std::runtime_error("cannot open output file: " + path);
    os << dump_record(record) << '\n';
    if (!os)
        throw std::runtime_error("write failed: " + path);
}

json error_record(const std::string& kind, const std::string& message)
{
    return {{"schema_version", kSchemaVersion},
            {"version", artifact_version()},
            {"kind", "error"},
            {"error", kind},
            {"message", message}};
}

void print_summary(std::ostream& os, const RunRecord& r)
{
    os << r.kind << " " << r.id << "  verdict=" << r.verdict() << "  wall=" << std::fixed
       << std::setprecision(2) << r.wall_time_seconds << "s  cap_hits=" << r.cap_hits << '\n';
    os.unsetf(std::ios::floatfield);
    for (const auto& [key, value] : r.estimates.items())
        if (value.is_primitive())
            os << "  " << std::left << std::setw(34) << key << ' ' << value.dump() << '\n';
        else if (value.is_object() && value.contains("value"))
            os << "  " << std::left << std::setw(34) << key << ' ' << value.at("value").dump()
               << " +- " << value.at("stderr").dump() << '\n';
    if (r.checks.empty())
        return;
    os << "  " << std::left << std::setw(44) << "check" << ' ' << std::setw(15) << "measured"
       << std::setw(15) << "predicted" << std::setw(15) << "tolerance" << "verdict\n";
    for (const auto& c : r.checks)
        os << "  " << std::left << std::setw(44) << c.name << ' ' << std::setw(15) << fmt(c.measured)
           << std::setw(15) << fmt(c.predicted) << std::setw(15) << fmt(c.tolerance)
           << (c.pass ? "PASS" : "FAIL") << '\n';
}

//---------------------------------------------------------------------------//
// Verification suites
//---------------------------------------------------------------------------//

namespace {

const OffspringDistribution kBinary = OffspringDistribution::binary();
const Model kBinaryGw = GaltonWatsonModel{OffspringDistribution::binary()};

ReplicatePlan suite_plan(const SuiteOptions& o, std::uint64_t replicates, std::uint64_t offset = 0)
{
    return {o.seed, replicates, o.workers, offset};
}

Check check_runtime(std::string name, double seconds, double limit)
{
    Check c = check_upper(std::move(name), seconds, limit);
    c.tolerance_kind = "runtime";
    return c;
}

/// max/min - 1 over a list of values.
double spread(const std::vector<double>& v)
{
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi / *lo - 1.0;
}

/// P(N_n = k), k < m, for a GW law from the pgf iterate on the m-th roots of
/// unity followed by an inverse DFT.
std::vector<double> gw_generation_law(const OffspringDistribution& law, int n, std::size_t m)
{
    const auto& pmf = law.pmf();
    std::vector<std::complex<double>> twiddle(m);
    for (std::size_t j = 0; j < m; ++j)
        twiddle[j] = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m));
    std::vector<std::complex<double>> g(m);
    for (std::size_t j = 0; j < m; ++j)
    {
        std::complex<double> w = twiddle[j];
        for (int gen = 0; gen < n; ++gen)
        {
            std::complex<double> acc = 0.0;
            for (std::size_t k = pmf.size(); k-- > 0;)
                acc = acc * w + pmf[k];
            w = acc;
        }
        g[j] = w;
    }
    std::vector<double> p(m);
    for (std::size_t k = 0; k < m; ++k)
    {
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            acc += g[j] * std::conj(twiddle[(j * k) % m]);
        p[k] = std::max(0.0, acc.real() / static_cast<double>(m));
    }
    return p;
}

/// KS distance between the exact law of N_n / n given N_n > 0 and the
/// exponential law with the given mean.
double exact_yaglom_ks(const OffspringDistribution& law, int n, double mean, std::size_t m)
{
    const auto p = gw_generation_law(law, n, m);
    const double alive = 1.0 - p[0];
    double cum = 0.0;
    double worst = 0.0;
    for (std::size_t k = 1; k < m; ++k)
    {
        const double f = 1.0 - std::exp(-static_cast<double>(k) / n / mean);
        worst = std::max(worst, std::abs(f - cum));
        cum += p[k] / alive;
        worst = std::max(worst, std::abs(f - cum));
    }
    return worst;
}

void suite_kolmogorov(const SuiteOptions&, RunRecord& r)
{
    const auto start = Clock::now();
    const double theta = gw_survival_exact(kBinary, 10'000);
    const double t = seconds_since(start);
    r.estimates["n_theta_1e4"] = 1e4 * theta;
    r.references["kolmogorov_limit"] = kolmogorov_limit(1.0);
    r.checks.push_back(check_range("n theta_n at n=1e4 (exact)", 1e4 * theta, 1.96, 2.00));
    r.checks.push_back(check_runtime("runtime seconds", t, 1.0));
}

void suite_gw_scaling(const SuiteOptions& o, RunRecord& r)
{
    const auto c = estimate_constants(kBinaryGw, 20, 200, suite_plan(o, 10'000'000));
    r.estimates["constants"] = constants_estimate_json(c);
    r.checks.push_back(check_relative("2/(A V) from estimate_constants", c.two_over_AV.value, 2.0, 0.05));
    const std::vector<double> ns{1000};
    const auto curve = estimate_survival_curve(kBinaryGw, ns, suite_plan(o, 10'000'000, 1ULL << 40));
    const auto& pt = curve.points.front();
    r.estimates["n_theta_1000"] = estimate_json(pt.n_theta);
    r.estimates["survivors_1000"] = pt.survivors;
    r.references["kolmogorov_limit"] = 2.0;
    r.references["n_theta_1000_exact"] = 1000.0 * gw_survival_exact(kBinary, 1000);
    r.checks.push_back(check_relative("n theta_n at n=1000 (MC)", pt.n_theta.value, 2.0, 0.05));
    r.cap_hits = c.cap_hits + curve.cap_hits;
}

void suite_yaglom(const SuiteOptions& o, RunRecord& r)
{
    const std::uint64_t reps = replicates_for_survivors(200, 12'000);
    const auto y = estimate_yaglom(kBinaryGw, 200, 0.5, suite_plan(o, reps));
    r.estimates["replicates"] = reps;
    r.estimates["survivors"] = y.survivors;
    r.estimates["ks_statistic"] = y.ks.statistic;
    r.estimates["ks_p_value"] = y.ks.p_value;
    r.estimates["mean"] = estimate_json(y.mean);
    r.references["reference_mean"] = 0.5;
    const double exact_ks = exact_yaglom_ks(kBinary, 200, 0.5, 8192);
    r.references["exact_law_ks_n200"] = exact_ks;
    r.references["exact_conditional_mean_n200"] = 1.0 / (200.0 * gw_survival_exact(kBinary, 200));
    r.checks.push_back(check_lower("survivors", static_cast<double>(y.survivors), 1e4));
    Check ks = check_upper("KS distance at n=200", y.ks.statistic, 0.03);
    ks.note = "exact finite-n law is at KS " + fmt(exact_ks) + " from the limit";
    r.checks.push_back(ks);
    r.checks.push_back(check_relative("conditional mean at n=200", y.mean.value, 0.5, 0.05));

    // Larger n for context only; not part of the verdict.
    const std::uint64_t reps400 = replicates_for_survivors(400, 12'000);
    const auto y4 = estimate_yaglom(kBinaryGw, 400, 0.5, suite_plan(o, reps400, 1ULL << 40));
    r.estimates["supplementary_n400"] = {{"survivors", y4.survivors},
                                         {"ks_statistic", y4.ks.statistic},
                                         {"mean", y4.mean.value},
                                         {"exact_law_ks", exact_yaglom_ks(kBinary, 400, 0.5, 16384)}};
    r.cap_hits = y.cap_hits + y4.cap_hits;
}

std::vector<MomentSpec> criterion_moment_specs()
{
    return {{{1.0}, {2}, {}}, {{1.0}, {3}, {}}, {{0.5, 1.0}, {1, 1}, {}}, {{1.0, 2.0}, {1, 1}, {}}};
}

void suite_moments(const SuiteOptions& o, RunRecord& r)
{
    const auto specs = criterion_moment_specs();
    const std::vector<std::string> names{"(1),(2)", "(1),(3)", "(1/2,1),(1,1)", "(1,2),(1,1)"};
    {
        const NormalizationContext ctx{{}, 2000};
        const auto est = estimate_scaled_moments(kBinaryGw, ctx, specs, suite_plan(o, 100'000'000));
        json out = json::array();
        for (std::size_t i = 0; i < specs.size(); ++i)
        {
            out.push_back({{"spec", names[i]},
                           {"estimate", estimate_json(est[i].estimate)},
                           {"predicted", est[i].predicted},
                           {"jackknife_stderr", est[i].jackknife_stderr},
                           {"heavy_tail", est[i].heavy_tail}});
            r.checks.push_back(check_relative("n=2000 " + names[i] + " vs limit",
                                              est[i].estimate.value, est[i].predicted, 0.05));
            r.cap_hits += est[i].cap_hits;
        }
        r.estimates["n2000"] = out;
    }
    {
        const std::int64_t n = 500;
        const NormalizationContext ctx{{}, n};
        const auto est = estimate_scaled_moments(kBinaryGw, ctx, specs, suite_plan(o, 10'000'000, 1ULL << 40));
        json out = json::array();
        for (std::size_t i = 0; i < specs.size(); ++i)
        {
            MomentSpec at_n = specs[i];
            for (auto& t : at_n.times)
                t = std::floor(t * static_cast<double>(n));
            const double exact = static_cast<double>(n) * gw_joint_moments_exact(kBinary, at_n)
                                 / std::pow(static_cast<double>(n), at_n.total_order());
            out.push_back({{"spec", names[i]}, {"estimate", estimate_json(est[i].estimate)}, {"exact", exact}});
            r.checks.push_back(check_sigmas("n=500 " + names[i] + " vs exact", est[i].estimate.value,
                                            exact, est[i].estimate.std_error, 4.0));
        }
        r.estimates["n500"] = out;
    }
}

void suite_fourier(const SuiteOptions& o, RunRecord& r)
{
    const auto kernel = SpreadOutKernel::uniform_box(2, 1);
    const Model brw = BranchingRandomWalkModel{kBinary, kernel};
    const ModelConstants c{1.0, 1.0, kernel_variance(kernel)};
    const MomentSpec spec{{1.0}, {1}, {{2.0, 0.0}}};
    const auto e = estimate_fourier_rpoint(brw, {c, 400}, spec, suite_plan(o, 13'000'000));
    r.estimates["real"] = estimate_json(e.real);
    r.estimates["imag"] = estimate_json(e.imag);
    r.references["v"] = c.v;
    r.references["exp_minus_one"] = std::exp(-1.0);
    r.references["sbm_fourier_moment"] = e.predicted;
    r.checks.push_back(check_relative("real part vs e^-1", e.real.value, std::exp(-1.0), 0.05));
    r.checks.push_back(check_sigmas("imaginary part vs 0", e.imag.value, 0.0, e.imag.std_error, 4.0));
    r.cap_hits = e.cap_hits;
}

void exact_tail_flatness(RunRecord& r)
{
    const auto dist = gw_progeny_distribution(kBinary, 10'000);
    std::vector<double> scaled;
    for (std::int64_t k = 1000; k <= 10'000; k += 100)
        scaled.push_back(std::sqrt(static_cast<double>(k)) * dist.tail(k));
    r.estimates["exact_sqrt_k_tail_1e3"] = scaled.front();
    r.estimates["exact_sqrt_k_tail_1e4"] = scaled.back();
    r.references["sqrt_2_over_pi"] = std::sqrt(2.0 / std::numbers::pi);
    r.checks.push_back(check_upper("sqrt(k) P(|C|>=k) spread over [1e3,1e4] (exact)", spread(scaled), 0.03));
}

void suite_cluster_tail(const SuiteOptions& o, RunRecord& r)
{
    exact_tail_flatness(r);
    const std::vector<std::int64_t> ks{10, 100, 1000};
    const auto tail = estimate_cluster_tail(kBinaryGw, ks, suite_plan(o, 1'000'000));
    json pts = json::array();
    for (const auto& p : tail.points)
    {
        const double exact = gw_progeny_tail_exact(kBinary, p.k);
        pts.push_back({{"k", p.k}, {"tail", estimate_json(p.tail)}, {"exact", exact}});
        r.checks.push_back(check_sigmas("MC P(|C|>=" + std::to_string(p.k) + ") vs exact", p.tail.value,
                                        exact, p.tail.std_error, 4.0));
    }
    r.estimates["mc_tail"] = pts;
    r.cap_hits = tail.cap_hits;
}

void certify_analytic(RunRecord& r)
{
    const auto c = certify_weak_bound(1.0, 1.0);
    const double closed = std::pow(4.0 * (1.0 + 1.0 / std::numbers::sqrt2), 3.0);
    r.estimates["c2_unit"] = c.c2;
    r.references["c2_unit_closed_form"] = closed;
    r.checks.push_back(check_relative("certify_weak_bound(1,1).c2", c.c2, closed, 1e-9));
}

void theta_bound_checks(RunRecord& r, double c2, const std::string& label)
{
    double worst = 0.0;
    for (int k = 1; k <= 7; ++k)
    {
        const double n = std::pow(4.0, k);
        const double theta = gw_survival_exact(kBinary, static_cast<std::int64_t>(n));
        worst = std::max(worst, theta * n / c2);
    }
    r.estimates["max_theta_4k_over_bound_" + label] = worst;
    r.checks.push_back(check_upper("max_k theta_{4^k} 4^k / c2 (" + label + ")", worst, 1.0));
}

void suite_certify(const SuiteOptions& o, RunRecord& r)
{
    certify_analytic(r);
    std::vector<std::int64_t> ks;
    for (std::int64_t k = 10; k <= 1000; k = k * 2)
        ks.push_back(k);
    const auto tail = estimate_cluster_tail(kBinaryGw, ks, suite_plan(o, 1'000'000));
    const std::vector<double> ms{16, 32, 64, 128};
    const auto proxy = estimate_self_repellence_proxy(kBinaryGw, 256, ms, suite_plan(o, 2'000'000, 1ULL << 40));
    const auto c = certify_weak_bound(tail.plateau, proxy.value);
    r.estimates["C_cluster_hat"] = tail.plateau;
    r.estimates["C_theta_hat"] = proxy.value;
    r.estimates["C_theta_argmax_m"] = proxy.argmax_m;
    r.estimates["c2_measured"] = c.c2;
    theta_bound_checks(r, c.c2, "measured");
    r.cap_hits = tail.cap_hits;
}

void suite_lattice_trees(const SuiteOptions&, RunRecord& r)
{
    const auto start = Clock::now();
    json out = json::array();
    for (const auto& [d, b] : {std::pair{1, 4}, std::pair{2, 6}})
    {
        const auto e = enumerate_lattice_trees(SpreadOutKernel::uniform_box(d, 1), 1.0, b);
        double worst = 0.0;
        int pairs = 0;
        for (int n = 1; n <= b; ++n)
            for (int m = 0; m < n; ++m, ++pairs)
                worst = std::max(worst, verify_self_repellence_lt(e, m, n).max_ratio);
        const std::string tag = "d=" + std::to_string(d) + " B=" + std::to_string(b);
        out.push_back({{"d", d}, {"B", b}, {"trees", e.size()}, {"rho", e.rho_truncated()},
                       {"pairs", pairs}, {"max_ratio", worst}});
        r.checks.push_back(check_upper("max ratio over all pairs " + tag, worst, 1.0));
    }
    r.estimates["ensembles"] = out;
    r.checks.push_back(check_runtime("runtime seconds", seconds_since(start), 300.0));
}

void suite_op(const SuiteOptions& o, RunRecord& r)
{
    const auto family = op_family(5, 1);
    CalibrationOptions opt;
    opt.relative_precision = 2.5e-4;
    const auto cal = calibrate_criticality(family, 0.9, 1.1, 64, 256, suite_plan(o, 400'000), opt);
    r.estimates["calibration"] = calibration_json(cal);
    const Model model = family.make(cal.parameter);

    const std::vector<double> ns{64, 96, 128, 160, 192, 224, 256};
    const auto curve = estimate_survival_curve(model, ns, suite_plan(o, 1'000'000, 1ULL << 40));
    std::vector<double> ntheta;
    json pts = json::array();
    for (const auto& p : curve.points)
    {
        ntheta.push_back(p.n_theta.value);
        pts.push_back({{"n", p.n}, {"n_theta", estimate_json(p.n_theta)}, {"survivors", p.survivors}});
    }
    r.estimates["survival"] = pts;
    r.checks.push_back(check_upper("n theta_n spread over [64,256]", spread(ntheta), 0.20));

    const auto c = estimate_constants(model, 64, 256, suite_plan(o, 1'000'000, 2ULL << 40));
    r.estimates["constants"] = constants_estimate_json(c);
    r.checks.push_back(check_relative("256 theta_256 vs 2/(A V)", ntheta.back(), c.two_over_AV.value, 0.25));

    const double ref = yaglom_reference_mean(c.values);
    const std::uint64_t reps = replicates_for_survivors(256, 2000, c.values);
    const auto y = estimate_yaglom(model, 256, ref, suite_plan(o, reps, 3ULL << 40));
    r.estimates["yaglom"] = {{"replicates", reps}, {"survivors", y.survivors},
                             {"ks_statistic", y.ks.statistic}, {"mean", estimate_json(y.mean)}};
    r.references["yaglom_reference_mean"] = ref;
    r.checks.push_back(check_lower("Yaglom survivors", static_cast<double>(y.survivors), 1e3));
    r.checks.push_back(check_upper("Yaglom KS at n=256", y.ks.statistic, 0.08));
    r.cap_hits = curve.cap_hits + c.cap_hits + y.cap_hits;
}

void suite_cp(const SuiteOptions& o, RunRecord& r)
{
    const auto kernel = SpreadOutKernel::uniform_box(5, 1);
    {
        const Model zero = ContactProcessModel{kernel, 0.0};
        const std::vector<double> ts{1.0};
        const auto curve = estimate_survival_curve(zero, ts, suite_plan(o, 1'000'000));
        const auto& p = curve.points.front();
        r.estimates["theta_1_lambda0"] = estimate_json(p.theta);
        r.references["exp_minus_one"] = std::exp(-1.0);
        r.checks.push_back(check_sigmas("lambda=0 theta_1 vs e^-1", p.theta.value, std::exp(-1.0),
                                        p.theta.std_error, 4.0));
    }
    const auto family = cp_family(5, 1);
    CalibrationOptions opt;
    opt.relative_precision = 2.5e-4;
    const auto cal = calibrate_criticality(family, 0.9, 1.2, 16, 64, suite_plan(o, 500'000, 1ULL << 40), opt);
    r.estimates["calibration"] = calibration_json(cal);
    const std::vector<double> ts{16, 24, 32, 40, 48, 56, 64};
    const auto curve = estimate_survival_curve(family.make(cal.parameter), ts,
                                               suite_plan(o, 1'000'000, 2ULL << 40));
    std::vector<double> ttheta;
    json pts = json::array();
    for (const auto& p : curve.points)
    {
        ttheta.push_back(p.n_theta.value);
        pts.push_back({{"t", p.n}, {"t_theta", estimate_json(p.n_theta)}, {"survivors", p.survivors}});
    }
    r.estimates["survival"] = pts;
    r.checks.push_back(check_upper("t theta_t spread over [16,64]", spread(ttheta), 0.25));
    r.cap_hits = curve.cap_hits;
}

void suite_feller(const SuiteOptions& o, RunRecord& r)
{
    EstimateWithCI lap;
    r.estimates["laplace_mc"] = feller_laplace_mc(1.0, 1.0, 1.0, suite_plan(o, 1'000'000), lap);
    r.references["exp_minus_two_thirds"] = std::exp(-2.0 / 3.0);
    r.checks.push_back(check_sigmas("Laplace transform at (1,1,1)", lap.value, std::exp(-2.0 / 3.0),
                                    lap.std_error, 4.0));
    const double ck = chapman_kolmogorov_error();
    r.estimates["chapman_kolmogorov_max_rel_error"] = ck;
    r.checks.push_back(check_upper("Chapman-Kolmogorov relative error", ck, 1e-8));

    const std::vector<MomentSpec> specs{{{1.0, 1.5}, {1, 1}, {}}, {{1.5}, {2}, {}}, {{1.5}, {1}, {}}};
    const std::vector<std::string> names{"E[X_1 X_1.5]", "E[X_1.5^2]", "E[X_1.5]"};
    const NormalizationContext ctx{{}, 1000};
    json out = json::array();
    for (std::size_t i = 0; i < specs.size(); ++i)
    {
        const auto g = estimate_conditional_moments(kBinaryGw, ctx, 1.0, specs[i], suite_plan(o, 5'000'000, 1ULL << 40));
        const auto f = feller_conditional_moment_mc(1.0, specs[i], suite_plan(o, 1'000'000, 2ULL << 40));
        out.push_back({{"functional", names[i]},
                       {"gw", estimate_json(g.estimate)},
                       {"feller", estimate_json(f)},
                       {"survivors", g.survivors},
                       {"predicted", g.predicted}});
        r.checks.push_back(check_sigmas("GW vs Feller " + names[i] + " given survival to t=1",
                                        g.estimate.value, f.value,
                                        std::hypot(g.estimate.std_error, f.std_error), 4.0));
        r.cap_hits += g.cap_hits;
    }
    r.estimates["conditional"] = out;
}

void suite_gw_exact(const SuiteOptions& o, RunRecord& r)
{
    const auto start = Clock::now();
    suite_kolmogorov(o, r);
    exact_tail_flatness(r);
    certify_analytic(r);
    theta_bound_checks(r, certify_weak_bound(1.0, 1.0).c2, "unit");
    r.checks.push_back(check_runtime("suite runtime seconds", seconds_since(start), 60.0));
}

/// Record content that must not depend on the worker count.
json numeric_content(const RunRecord& r)
{
    json j = r.to_json();
    j.erase("wall_time_seconds");
    j["config"].erase("workers");
    json kept = json::array();
    for (const auto& c : j["checks"])
        if (c.at("tolerance_kind") != "runtime")
            kept.push_back(c);
    j["checks"] = kept;
    return j;
}

void suite_reproducibility(const SuiteOptions& o, RunRecord& r)
{
    json out = json::array();
    for (const std::string id : {"yaglom", "cluster-tail", "fourier-smoke"})
    {
        const auto a = verify_suite(id, {o.seed, 1});
        const auto b = verify_suite(id, {o.seed, 4});
        const bool same = dump_record(numeric_content(a)) == dump_record(numeric_content(b));
        out.push_back({{"suite", id}, {"identical", same}});
        Check c{"suite " + id + " workers 1 vs 4 mismatches", same ? 0.0 : 1.0, 0.0, 0.0, "equal", same, {}};
        r.checks.push_back(c);
    }
    r.estimates["compared"] = out;
}

void suite_fourier_smoke(const SuiteOptions& o, RunRecord& r)
{
    const auto kernel = SpreadOutKernel::uniform_box(2, 1);
    const Model brw = BranchingRandomWalkModel{kBinary, kernel};
    const MomentSpec spec{{1.0}, {1}, {{2.0, 0.0}}};
    const auto e = estimate_fourier_rpoint(brw, {{1.0, 1.0, kernel_variance(kernel)}, 100}, spec,
                                           suite_plan(o, 200'000));
    r.estimates["real"] = estimate_json(e.real);
    r.estimates["imag"] = estimate_json(e.imag);
    r.checks.push_back(check_relative("real part vs e^-1 (n=100)", e.real.value, std::exp(-1.0), 0.10));
}

struct SuiteEntry
{
    SuiteInfo info;
    std::function<void(const SuiteOptions&, RunRecord&)> body;
};

const std::vector<SuiteEntry>& suite_table()
{
    static const std::vector<SuiteEntry> table{
        {{"kolmogorov", "exact n theta_n at n = 1e4 for the binary law", {1}}, suite_kolmogorov},
        {{"gw-scaling", "2/(A V) and n theta_n at n = 1000 for binary GW by Monte Carlo", {2}}, suite_gw_scaling},
        {{"yaglom", "conditional law of N_200/200 against Exp(1/2)", {3}}, suite_yaglom},
        {{"moments", "scaled joint moments at n = 2000 and exact cross-check at n = 500", {4}}, suite_moments},
        {{"fourier", "BRW two-point Fourier transform at n = 400", {5}}, suite_fourier},
        {{"cluster-tail", "sqrt(k) P(|C| >= k) flatness and Monte Carlo tail", {6}}, suite_cluster_tail},
        {{"certify", "weak-bound certifier and theta_{4^k} <= c2 4^-k", {7}}, suite_certify},
        {{"lattice-trees", "exhaustive self-repellence for lattice trees", {8}}, suite_lattice_trees},
        {{"op", "oriented percolation d = 5 after calibration", {9}}, suite_op},
        {{"cp", "contact process d = 5: lambda = 0 and after calibration", {10}}, suite_cp},
        {{"feller", "Feller diffusion transform, composition and conditional fdd", {11}}, suite_feller},
        {{"reproducibility", "suites re-run with 1 and 4 workers give identical records", {12}}, suite_reproducibility},
        {{"gw-exact", "fast exact Galton–Watson checks", {1, 6, 7}}, suite_gw_exact},
        {{"fourier-smoke", "small BRW Fourier run used by the reproducibility suite", {}}, suite_fourier_smoke},
    };
    return table;
}

}  // namespace

const std::vector<SuiteInfo>& list_suites()
{
    static const std::vector<SuiteInfo> infos = [] {
        std::vector<SuiteInfo> out;
        for (const auto& e : suite_table())
            out.push_back(e.info);
        return out;
    }();
    return infos;
}

RunRecord verify_suite(const std::string& id, const SuiteOptions& options)
{
    const auto& table = suite_table();
    const auto it = std::find_if(table.begin(), table.end(), [&](const SuiteEntry& e) { return e.info.id == id; });
    if (it == table.end())
        throw ConfigError("unknown suite: " + id);
    const auto start = Clock::now();
    RunRecord r;
    r.kind = "verify";
    r.id = id;
    r.config = {{"suite", id}, {"seed", options.seed}, {"workers", options.workers},
                {"criteria", it->info.criteria}};
    it->body(options, r);
    r.wall_time_seconds = seconds_since(start);
    return r;
}

//---------------------------------------------------------------------------//
// CSV
//---------------------------------------------------------------------------//

void flatten_json(const json& j, const std::string& prefix, json& out)
{
    if (j.is_object() && !j.empty())
    {
        for (const auto& [k, v] : j.items())
            flatten_json(v, prefix.empty() ? k : prefix + "." + k, out);
    }
    else if (j.is_array() && !j.empty())
    {
        for (std::size_t i = 0; i < j.size(); ++i)
            flatten_json(j[i], prefix + "." + std::to_string(i), out);
    }
    else
    {
        out[prefix] = j;
    }
}

namespace {

std::string csv_cell(const json& v)
{
    std::string s;
    if (v.is_null())
        return s;
    s = v.is_string() ? v.get<std::string>() : dump_record(v);
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
    {
        if (c == '"')
            q += '"';
        q += c;
    }
    return q + '"';
}

}  // namespace

void jsonl_to_csv(std::istream& in, std::ostream& out)
{
    std::vector<json> rows;
    std::set<std::string> keys;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        json flat = json::object();
        try
        {
            flatten_json(json::parse(line), "", flat);
        }
        catch (const json::exception& e)
        {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const auto& [k, v] : flat.items())
            keys.insert(k);
        rows.push_back(std::move(flat));
    }
    bool first = true;
    for (const auto& k : keys)
    {
        out << (first ? "" : ",") << csv_cell(k);
        first = false;
    }
    out << '\n';
    for (const auto& row : rows)
    {
        first = true;
        for (const auto& k : keys)
        {
            out << (first ? "" : ",");
            if (row.contains(k))
                out << csv_cell(row.at(k));
            first = false;
        }
        out << '\n';
    }
}

}  // namespace sll

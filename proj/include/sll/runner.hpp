// Experiment configuration, dispatch, JSON-lines records and the
// verification suites.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sll/models.hpp"
#include "sll/parallel.hpp"

namespace sll {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

/// "sll <version>[+g<commit>]".
std::string artifact_version();

enum ExitCode : int
{
    exit_ok = 0,
    exit_config_error = 1,
    exit_verification_failure = 2,
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig
{
    std::string experiment;
    /// Experiment-specific fields (model, n, spec, ...) exactly as given.
    json params = json::object();
    std::uint64_t seed = 1;
    std::uint64_t replicates = 100'000;
    unsigned workers = 0;
    std::string output_path;

    /// Throws ConfigError on unknown experiments or bad common fields.
    static ExperimentConfig from_json(const json& j);
    json to_json() const;
    ReplicatePlan plan() const { return {seed, replicates, workers, 0}; }
};

const std::vector<std::string>& experiment_names();

/// Parses {"type": "gw"|"brw"|"op"|"cp", ...} or the shorthand "gw-binary".
Model model_from_json(const json& j);
json model_to_json(const Model& m);
MomentSpec moment_spec_from_json(const json& j);
json moment_spec_to_json(const MomentSpec& s);

/// One numeric comparison.
struct Check
{
    std::string name;
    double measured = 0.0;
    double predicted = 0.0;
    double tolerance = 0.0;
    std::string tolerance_kind;  ///< relative, absolute, upper_bound, lower_bound, range, runtime, equal
    bool pass = false;
    std::string note;
};

Check check_relative(std::string name, double measured, double predicted, double rel);
Check check_sigmas(std::string name, double measured, double predicted, double se, double k);
Check check_upper(std::string name, double measured, double bound);
Check check_lower(std::string name, double measured, double bound);
Check check_range(std::string name, double measured, double low, double high);

struct RunRecord
{
    std::string kind = "experiment";  ///< or "verify"
    std::string id;
    json config = json::object();
    json estimates = json::object();
    json references = json::object();
    std::vector<Check> checks;
    double wall_time_seconds = 0.0;
    std::uint64_t cap_hits = 0;

    /// "pass" or "fail" when there are checks, "none" otherwise.
    std::string verdict() const;
    json to_json() const;
};

/// Dispatches to the matching estimator or analytic routine. Does not write
/// anything; see append_record and print_summary.
RunRecord run(const ExperimentConfig& config);

/// Appends one line. Records are written by a single caller.
void append_record(const std::string& path, const json& record);
/// Full double precision; one line, no trailing newline.
std::string dump_record(const json& record);
void print_summary(std::ostream& os, const RunRecord& r);
/// Machine-readable error line.
json error_record(const std::string& kind, const std::string& message);

struct SuiteInfo
{
    std::string id;
    std::string description;
    std::vector<int> criteria;
};

struct SuiteOptions
{
    std::uint64_t seed = 1;
    unsigned workers = 0;
};

const std::vector<SuiteInfo>& list_suites();
/// Throws ConfigError for an unknown suite.
RunRecord verify_suite(const std::string& id, const SuiteOptions& options = {});

/// JSON-lines to CSV with the union of flattened keys in sorted order.
void jsonl_to_csv(std::istream& in, std::ostream& out);
/// Nested keys joined with '.', array elements by index.
void flatten_json(const json& j, const std::string& prefix, json& out);

}  // namespace sll

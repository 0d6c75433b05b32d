// Command-line front end: experiments, verification suites, limits and CSV
// export.
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sll/runner.hpp"

namespace {

using sll::json;

struct Options
{
    std::string config_file;
    std::string out;
    std::string params;
    std::string query;
    std::uint64_t seed = 1;
    std::uint64_t replicates = 0;
    unsigned workers = 0;
};

void add_run_options(CLI::App* sub, Options& o)
{
    sub->add_option("--config", o.config_file, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--replicates", o.replicates, "number of replicates");
    sub->add_option("--workers", o.workers, "worker threads (default: SLL_WORKERS or all cores)");
    sub->add_option("--out", o.out, "append the JSON-lines record to this file");
    sub->add_option("--params", o.params, "JSON object merged into the config");
}

json load_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw sll::ConfigError("cannot read " + path);
    try
    {
        return json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw sll::ConfigError(path + ": " + e.what());
    }
}

json parse_params(const std::string& text)
{
    try
    {
        json j = json::parse(text);
        if (!j.is_object())
            throw sll::ConfigError("--params must be a JSON object");
        return j;
    }
    catch (const json::exception& e)
    {
        throw sll::ConfigError(std::string("--params: ") + e.what());
    }
}

void emit(const json& record, const std::string& out)
{
    if (out.empty())
        std::cout << sll::dump_record(record) << '\n';
    else
        sll::append_record(out, record);
}

void emit_error(const std::string& kind, const std::string& message, const std::string& out)
{
    try
    {
        emit(sll::error_record(kind, message), out);
    }
    catch (const std::exception&)
    {
        std::cout << sll::dump_record(sll::error_record(kind, message)) << '\n';
    }
}

int finish(const sll::RunRecord& r, const std::string& out)
{
    sll::print_summary(std::cout, r);
    emit(r.to_json(), out);
    return r.verdict() == "fail" ? sll::exit_verification_failure : sll::exit_ok;
}

int run_experiment(const std::string& name, const CLI::App& sub, const Options& o)
{
    json cfg = o.config_file.empty() ? json::object() : load_json_file(o.config_file);
    if (!cfg.is_object())
        throw sll::ConfigError("config must be a JSON object");
    if (cfg.contains("experiment") && cfg.at("experiment") != name)
        throw sll::ConfigError("config is for experiment " + cfg.at("experiment").dump()
                               + ", not " + name);
    cfg["experiment"] = name;
    if (!o.params.empty())
        cfg.update(parse_params(o.params));
    if (!o.query.empty())
        cfg["query"] = o.query;
    if (sub.count("--seed"))
        cfg["seed"] = o.seed;
    if (sub.count("--replicates"))
        cfg["replicates"] = o.replicates;
    if (sub.count("--workers"))
        cfg["workers"] = o.workers;
    if (sub.count("--out"))
        cfg["output_path"] = o.out;
    const auto config = sll::ExperimentConfig::from_json(cfg);
    return finish(sll::run(config), config.output_path);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Scaling limits of critical clusters: simulation, exact limits and verification", "sll"};
    app.set_version_flag("--version", sll::artifact_version());
    app.require_subcommand(1);

    Options opt;
    for (const auto& name : sll::experiment_names())
    {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        add_run_options(sub, opt);
        if (name == "limits")
            sub->add_option("--query", opt.query, "kolmogorov, yaglom_mean, sbm_moment, ...");
    }

    std::string suite;
    bool list = false;
    auto* verify = app.add_subcommand("verify", "run a verification suite");
    verify->add_option("suite", suite, "suite id");
    verify->add_flag("--list", list, "list the available suites");
    verify->add_option("--seed", opt.seed, "random seed");
    verify->add_option("--workers", opt.workers, "worker threads");
    verify->add_option("--out", opt.out, "append the JSON-lines record to this file");

    std::string csv_in;
    std::string csv_out;
    auto* csv = app.add_subcommand("csv", "convert a JSON-lines record file to CSV");
    csv->add_option("input", csv_in, "JSON-lines file")->required()->check(CLI::ExistingFile);
    csv->add_option("--out", csv_out, "CSV file (default: standard output)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        return app.exit(e) == 0 ? sll::exit_ok : sll::exit_config_error;
    }

    try
    {
        if (verify->parsed())
        {
            if (list)
            {
                for (const auto& s : sll::list_suites())
                {
                    std::cout << s.id << "\t" << s.description;
                    if (!s.criteria.empty())
                    {
                        std::cout << "\t[criteria";
                        for (int c : s.criteria)
                            std::cout << ' ' << c;
                        std::cout << ']';
                    }
                    std::cout << '\n';
                }
                return sll::exit_ok;
            }
            if (suite.empty())
                throw sll::ConfigError("verify needs a suite id (see sll verify --list)");
            return finish(sll::verify_suite(suite, {opt.seed, opt.workers}), opt.out);
        }
        if (csv->parsed())
        {
            std::ifstream in(csv_in);
            if (csv_out.empty())
            {
                sll::jsonl_to_csv(in, std::cout);
            }
            else
            {
                std::ofstream out(csv_out);
                if (!out)
                    throw sll::ConfigError("cannot write " + csv_out);
                sll::jsonl_to_csv(in, out);
            }
            return sll::exit_ok;
        }
        for (auto* sub : app.get_subcommands())
            return run_experiment(sub->get_name(), *sub, opt);
    }
    catch (const sll::ConfigError& e)
    {
        std::cerr << "sll: " << e.what() << '\n';
        emit_error("config", e.what(), opt.out);
        return sll::exit_config_error;
    }
    catch (const std::exception& e)
    {
        std::cerr << "sll: " << e.what() << '\n';
        emit_error("runtime", e.what(), opt.out);
        return sll::exit_config_error;
    }
    return sll::exit_config_error;
}

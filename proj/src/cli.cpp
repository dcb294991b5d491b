#include "mtekit/cli.hpp"
#include "mtekit/config.hpp"
#include "mtekit/error.hpp"
#include "mtekit/pipeline.hpp"
#include "mtekit/simulation.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <json.hpp>

namespace mtekit {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json coefficient_table(const std::vector<std::string> &names, const Eigen::VectorXd &b, const Eigen::VectorXd &se) {
    ordered_json t = ordered_json::object();
    for (std::size_t j = 0; j < names.size(); ++j)
        t[names[j]] = {{"estimate", number(b[static_cast<Eigen::Index>(j)])},
                       {"se", number(se[static_cast<Eigen::Index>(j)])}};
    return t;
}

ordered_json linear_json(const LinearFit &fit) {
    ordered_json j;
    j["coefficients"] = coefficient_table(fit.names, fit.coefficients, fit.standard_errors());
    j["se_type"] = to_string(fit.se_type);
    j["n"] = fit.n;
    if (fit.se_type == SeType::cluster) j["n_clusters"] = fit.n_clusters;
    j["r_squared"] = number(fit.r_squared);
    if (fit.first_stage_F) j["first_stage_F"] = number(*fit.first_stage_F);
    j["warnings"] = fit.warnings;
    return j;
}

ordered_json effects_json(const TreatmentEffects &effects) {
    ordered_json j = ordered_json::object();
    for (const auto &p : effects.parameters) {
        j[p.name] = {{"estimate", number(p.value)},
                     {"ci_lo", p.ci_lo ? number(*p.ci_lo) : ordered_json(nullptr)},
                     {"ci_hi", p.ci_hi ? number(*p.ci_hi) : ordered_json(nullptr)},
                     {"truncated_mass", number(p.truncated_mass)}};
    }
    return j;
}

ordered_json bootstrap_json(const BootstrapDraws &d, const std::optional<std::string> &cluster, bool reselect) {
    ordered_json modes = ordered_json::object();
    for (const auto &[msg, count] : d.failure_modes) modes[msg] = count;
    return {{"B", d.replications},
            {"seed", d.seed},
            {"successful", d.replicates.size()},
            {"failures", d.failures},
            {"failure_modes", modes},
            {"cluster", cluster ? ordered_json(*cluster) : ordered_json(nullptr)},
            {"bandwidth", reselect ? "reselected per replicate" : "pinned to the point estimate"},
            {"interval", "95% highest posterior density"}};
}

Dataset load_dataset(const RunConfig &cfg) {
    if (cfg.dataset.empty()) throw InputError("no dataset given (--dataset or config key 'dataset')");
    RoleMap roles = cfg.roles.role_map();
    Dataset data = load_csv(cfg.dataset, roles);
    if (cfg.food_groups) {
        data = build_food_outcomes(data, *cfg.food_groups);
    } else if (outcome_is_derived(roles)) {
        throw InputError("outcome '" + roles.outcome() + "' is built from food groups, but no food_groups map was given");
    }
    return data;
}

void print_summary(const SummaryTable &t, std::ostream &out) {
    out << "n treated " << t.n_treated << ", control " << t.n_control << " (" << t.dropped << " of " << t.raw_rows
        << " rows dropped)\n";
    out << std::left << std::setw(24) << "variable" << std::right << std::setw(14) << "treated mean" << std::setw(12)
        << "sd" << std::setw(14) << "control mean" << std::setw(12) << "sd" << "\n";
    auto sd = [](const StratumStats &s) { return s.sd ? fmt(*s.sd) : std::string("-"); };
    out << std::setprecision(4);
    for (const auto &r : t.rows) {
        out << std::left << std::setw(24) << r.variable << std::right << std::setw(14) << r.treated.mean
            << std::setw(12) << sd(r.treated).substr(0, 10) << std::setw(14) << r.control.mean << std::setw(12)
            << sd(r.control).substr(0, 10) << "\n";
    }
}

void write_summary_csv(const SummaryTable &t, const std::string &path) {
    std::string text = "stratum,variable,n,mean,sd\n";
    for (const char *stratum : {"treated", "control"}) {
        for (const auto &r : t.rows) {
            const StratumStats &s = std::string(stratum) == "treated" ? r.treated : r.control;
            text += std::string(stratum) + "," + r.variable + "," + std::to_string(s.n) + "," + fmt(s.mean) + "," +
                    (s.sd ? fmt(*s.sd) : "") + "\n";
        }
    }
    write_text_file(path, text);
}

/// Config echo with an absolute dataset path, so the manifest replays from any directory.
std::string manifest_json(RunConfig cfg) {
    cfg.dataset = fs::absolute(cfg.dataset).lexically_normal().string();
    return run_config_to_json(cfg);
}

int cmd_summarize(const RunConfig &cfg, std::ostream &out) {
    Dataset data = load_dataset(cfg);
    SummaryTable table = summarize(data);
    fs::create_directories(cfg.output_dir);
    write_summary_csv(table, (fs::path(cfg.output_dir) / "summary.csv").string());
    write_text_file((fs::path(cfg.output_dir) / "manifest.json").string(), manifest_json(cfg));
    print_summary(table, out);
    return kExitOk;
}

bool wants(const RunConfig &cfg, EstimatorChoice e) { return cfg.estimator == EstimatorChoice::all || cfg.estimator == e; }

int cmd_fit(const RunConfig &cfg, std::ostream &out) {
    Dataset data = load_dataset(cfg);
    data.require_arms(2);
    const RoleMap &roles = data.roles();
    const bool need_instruments = cfg.estimator != EstimatorChoice::ols;
    if (need_instruments) roles.require_instruments();
    if (cfg.bootstrap.cluster && !data.has_column(*cfg.bootstrap.cluster))
        throw InputError("bootstrap cluster column '" + *cfg.bootstrap.cluster + "' is not a role-mapped column");
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);

    ordered_json report;
    report["schema"] = 1;
    report["toolkit_version"] = MTEKIT_VERSION;
    report["command"] = "fit";
    report["seed"] = cfg.bootstrap.seed;
    report["config"] = ordered_json::parse(run_config_to_json(cfg));
    const auto &prov = data.provenance();
    report["data"] = {{"source", prov.source},
                      {"raw_rows", prov.raw_rows},
                      {"dropped_rows", prov.dropped_rows},
                      {"n", data.n_rows()},
                      {"n_treated", data.n_treated()},
                      {"n_untreated", data.n_untreated()},
                      {"log", prov.log}};
    std::vector<std::string> warnings;
    bool weak = false;

    LinearOptions lin;
    lin.se = cfg.se;
    lin.weak_instrument_threshold = cfg.weak_instrument_threshold;
    std::vector<std::string> ols_regressors{roles.treatment()};
    ols_regressors.insert(ols_regressors.end(), roles.covariates().begin(), roles.covariates().end());

    std::optional<LogitFit> logit;
    if (need_instruments) {
        auto regressors = roles.covariates();
        regressors.insert(regressors.end(), roles.instruments().begin(), roles.instruments().end());
        logit = fit_logit(data, regressors);
        LogitFit restricted = fit_logit(data, roles.covariates());
        auto lr = instrument_joint_test(*logit, restricted);
        ordered_json ame = ordered_json::object();
        for (const auto &[name, value] : average_marginal_derivative(*logit, data)) ame[name] = number(value);
        report["first_stage"] = {
            {"logit",
             {{"coefficients", coefficient_table(logit->names(), logit->coefficients, logit->standard_errors())},
              {"log_likelihood", logit->log_likelihood},
              {"iterations", logit->iterations},
              {"n", logit->n_obs}}},
            {"average_marginal_derivatives", ame},
            {"instrument_joint_test", {{"chi_square", lr.chi_square}, {"df", lr.df}, {"p_value", lr.p_value}}}};
    }

    if (wants(cfg, EstimatorChoice::ols)) report["ols"] = linear_json(fit_ols(data, roles.outcome(), ols_regressors, lin));

    if (wants(cfg, EstimatorChoice::iv)) {
        InstrumentSet z;
        if (cfg.instrument_mode == InstrumentMode::distance) {
            z.mode = InstrumentMode::distance;
            z.columns = roles.instruments();
            z.values = data.matrix(z.columns);
        } else {
            auto with = cfg.interact_with.empty() ? roles.covariates() : cfg.interact_with;
            z = build_instrument_set(data, cfg.instrument_mode, roles.instruments().front(), with, &*logit);
        }
        LinearFit iv = fit_2sls(data, roles.outcome(), roles.treatment(), z, roles.covariates(), lin);
        report["iv"] = linear_json(iv);
        report["iv"]["instrument_mode"] = to_string(z.mode);
        report["iv"]["instruments"] = z.columns;
        if (!iv.warnings.empty()) weak = true;
        warnings.insert(warnings.end(), iv.warnings.begin(), iv.warnings.end());
    }

    MteOptions mo;
    mo.v_grid = make_v_grid(cfg.v_grid.lo, cfg.v_grid.hi, cfg.v_grid.step);
    mo.bandwidth = cfg.bandwidth;
    mo.trim = cfg.trim;
    mo.threads = cfg.threads;
    if (need_instruments)
        mo.policy = PolicyShift{cfg.policy_column.value_or(roles.instruments().front()), cfg.policy_shift};
    BootstrapOptions bo;
    bo.replications = cfg.bootstrap.replications;
    bo.seed = cfg.bootstrap.seed;
    bo.cluster = cfg.bootstrap.cluster;
    bo.threads = cfg.threads;

    if (wants(cfg, EstimatorChoice::mte)) {
        SemiparametricResult r = estimate_semiparametric(data, mo);
        ordered_json m;
        m["bandwidth"] = r.fit.bandwidth;
        if (r.fit.selection.cross_validated) {
            m["bandwidth_selection"] = {{"method", "leave-one-out, largest candidate within one SE of the best"},
                                        {"candidates", r.fit.selection.candidates},
                                        {"scores", ordered_json::array()}};
            for (double s : r.fit.selection.scores) m["bandwidth_selection"]["scores"].push_back(number(s));
        } else {
            m["bandwidth_selection"] = {{"method", "fixed"}};
        }
        m["support"] = {{"lo", r.support.lo}, {"hi", r.support.hi}};
        m["trim"] = cfg.trim;
        m["n_used"] = r.fit.n_used;
        m["n_excluded"] = r.fit.n_excluded;
        m["beta0"] = coefficient_table(r.fit.covariates, r.fit.beta0, r.fit.beta0_se());
        m["beta_gap"] = coefficient_table(r.fit.covariates, r.fit.beta_gap, r.fit.beta_gap_se());
        m["eval_point"] = {{"convention", "covariate means of the estimation sample"},
                           {"values", ordered_json::object()}};
        for (std::size_t j = 0; j < r.fit.covariates.size(); ++j)
            m["eval_point"]["values"][r.fit.covariates[j]] = r.curve.eval_point[static_cast<Eigen::Index>(j)];
        m["policy"] = {{"column", mo.policy->column},
                       {"shift", mo.policy->shift},
                       {"mean_p_base", r.scores.mean()},
                       {"mean_p_policy", r.policy_scores->mean()}};
        if (bo.replications > 0) {
            MteOptions rep = mo;
            rep.threads = 1;
            if (!cfg.bootstrap.reselect_bandwidth) rep.bandwidth = r.fit.bandwidth;
            const Eigen::VectorXd x = r.curve.eval_point;
            Pipeline pipeline = [rep, x](const Dataset &d) {
                auto s = estimate_semiparametric(d, rep, x);
                return flatten(s.effects, s.curve);
            };
            BootstrapDraws draws = bootstrap(pipeline, data, bo);
            attach_intervals(r.effects, r.curve, draws);
            m["bootstrap"] = bootstrap_json(draws, bo.cluster, cfg.bootstrap.reselect_bandwidth);
            if (cfg.bootstrap.write_draws) {
                write_draws_csv(draws, (dir / "mte_bootstrap_draws.csv").string());
                m["bootstrap"]["draws_csv"] = "mte_bootstrap_draws.csv";
            }
        }
        m["treatment_effects"] = effects_json(r.effects);
        m["treated_share"] = r.effects.treated_share;
        m["curve_csv"] = "mte_curve.csv";
        write_curve_csv(r.curve, (dir / "mte_curve.csv").string());
        report["mte"] = m;
    }

    if (wants(cfg, EstimatorChoice::normal)) {
        NormalResult r = estimate_normal(data, mo);
        const auto &f = r.fit;
        ordered_json m;
        m["selection"] = coefficient_table(f.selection_names, f.gamma, f.gamma_se());
        m["beta1"] = coefficient_table(f.outcome_names, f.beta1, f.beta1_se());
        m["beta0"] = coefficient_table(f.outcome_names, f.beta0, f.beta0_se());
        m["sigma1"] = {{"estimate", f.sigma1}, {"se", number(f.sigma1_se())}};
        m["sigma0"] = {{"estimate", f.sigma0}, {"se", number(f.sigma0_se())}};
        m["rho1"] = {{"estimate", f.rho1}, {"se", number(f.rho1_se())}};
        m["rho0"] = {{"estimate", f.rho0}, {"se", number(f.rho0_se())}};
        m["log_likelihood"] = f.log_likelihood;
        m["iterations"] = f.iterations;
        m["warnings"] = f.warnings;
        warnings.insert(warnings.end(), f.warnings.begin(), f.warnings.end());
        m["eval_point"] = {{"convention", "covariate means of the full sample"}, {"values", ordered_json::object()}};
        for (std::size_t j = 0; j < roles.covariates().size(); ++j)
            m["eval_point"]["values"][roles.covariates()[j]] = r.curve.eval_point[static_cast<Eigen::Index>(j)];
        if (bo.replications > 0) {
            MteOptions rep = mo;
            rep.threads = 1;
            const Eigen::VectorXd x = r.curve.eval_point;
            Pipeline pipeline = [rep, x](const Dataset &d) {
                auto s = estimate_normal(d, rep, x);
                return flatten(s.effects, s.curve);
            };
            BootstrapDraws draws = bootstrap(pipeline, data, bo);
            attach_intervals(r.effects, r.curve, draws);
            m["bootstrap"] = bootstrap_json(draws, bo.cluster, false);
            if (cfg.bootstrap.write_draws) {
                write_draws_csv(draws, (dir / "normal_bootstrap_draws.csv").string());
                m["bootstrap"]["draws_csv"] = "normal_bootstrap_draws.csv";
            }
        }
        m["treatment_effects"] = effects_json(r.effects);
        m["curve_csv"] = "normal_mte_curve.csv";
        write_curve_csv(r.curve, (dir / "normal_mte_curve.csv").string());
        report["normal"] = m;
    }

    report["warnings"] = warnings;
    write_text_file((dir / "report.json").string(), report.dump(2) + "\n");
    write_text_file((dir / "manifest.json").string(), manifest_json(cfg));

    out << "wrote " << (dir / "report.json").string() << "\n";
    out << std::setprecision(4);
    if (report.contains("ols"))
        out << "OLS  " << roles.treatment() << ": " << report["ols"]["coefficients"][roles.treatment()]["estimate"] << "\n";
    if (report.contains("iv"))
        out << "2SLS " << roles.treatment() << ": " << report["iv"]["coefficients"][roles.treatment()]["estimate"]
            << " (first-stage F " << report["iv"]["first_stage_F"] << ")\n";
    for (const char *model : {"mte", "normal"}) {
        if (!report.contains(model)) continue;
        out << model << ":";
        for (const auto &[name, p] : report[model]["treatment_effects"].items()) out << " " << name << "=" << p["estimate"];
        out << "\n";
    }
    for (const auto &w : warnings) out << "warning: " << w << "\n";
    return weak && cfg.fail_on_weak_instrument ? kExitWarning : kExitOk;
}

struct SimulateSettings {
    RoyModelSpec spec;
    std::size_t n = 0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_simulate(const SimulateSettings &s, std::ostream &out) {
    Simulated sim = generate(s.spec, s.n, s.seed);
    const fs::path prefix(s.out);
    if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
    const std::string data_path = s.out + ".csv";
    write_csv(sim.data, data_path);
    write_truth_csv(sim.truth, s.out + ".truth.csv");

    RunConfig fit;
    fit.dataset = fs::path(data_path).filename().string();
    fit.roles.outcome = s.spec.outcome;
    fit.roles.treatment = s.spec.treatment;
    for (const auto &v : s.spec.covariates) fit.roles.covariates.push_back(v.name);
    for (const auto &v : s.spec.instruments) fit.roles.instruments.push_back(v.name);
    if (s.spec.clusters) fit.roles.cluster = s.spec.cluster_column;
    fit.output_dir = prefix.filename().string() + "_fit";
    write_text_file(s.out + ".config.json", run_config_to_json(fit));

    ordered_json manifest;
    manifest["schema"] = 1;
    manifest["toolkit_version"] = MTEKIT_VERSION;
    manifest["command"] = "simulate";
    manifest["spec"] = ordered_json::parse(spec_to_json(s.spec));
    manifest["n"] = s.n;
    manifest["seed"] = s.seed;
    manifest["out"] = s.out;
    write_text_file(s.out + ".manifest.json", manifest.dump(2) + "\n");

    out << "wrote " << data_path << " (" << s.n << " rows, " << sim.data.n_treated() << " treated), "
        << s.out << ".truth.csv\n";
    return kExitOk;
}

SimulateSettings simulate_settings(const std::string &config_path, const std::optional<std::string> &spec,
                                   const std::optional<std::size_t> &n, const std::optional<std::uint64_t> &seed,
                                   const std::optional<std::string> &out_prefix) {
    ordered_json j = ordered_json::object();
    if (!config_path.empty()) {
        try {
            j = ordered_json::parse(read_text_file(config_path));
        } catch (const nlohmann::json::exception &e) {
            throw InputError(std::string("invalid simulate config: ") + e.what());
        }
        if (!j.is_object()) throw InputError("simulate config must be a JSON object");
        for (const auto &[key, value] : j.items())
            if (key != "schema" && key != "toolkit_version" && key != "command" && key != "spec" && key != "n" &&
                key != "seed" && key != "out")
                throw InputError("unknown config key 'config." + key + "'");
    }
    SimulateSettings s;
    try {
        if (spec) s.spec = load_spec(*spec);
        else if (j.contains("spec") && j["spec"].is_string()) s.spec = load_spec(j["spec"].get<std::string>());
        else if (j.contains("spec")) s.spec = spec_from_json(j["spec"].dump());
        else throw InputError("simulate needs --spec (a preset name or a spec JSON file)");
        s.n = n ? *n : j.value("n", std::size_t{0});
        s.seed = seed ? *seed : j.value("seed", std::uint64_t{1});
        s.out = out_prefix ? *out_prefix : j.value("out", std::string());
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("invalid simulate config: ") + e.what());
    }
    if (s.n < 1) throw InputError("simulate needs --n >= 1");
    if (s.out.empty()) throw InputError("simulate needs --out <prefix>");
    return s;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Marginal treatment effect toolkit", "mtekit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(MTEKIT_VERSION));

    // Flag values land in a JSON overlay applied on top of --config.
    std::string config_path;
    std::optional<std::string> dataset, outcome, treatment, cluster, household_size, output_dir, estimator,
        instrument_mode, policy_column, se, bootstrap_cluster, fail_on_weak;
    std::vector<std::string> covariates, instruments, items, interact_with;
    std::optional<double> policy_shift, v_lo, v_hi, v_step, bandwidth, trim, weak_threshold;
    std::optional<std::size_t> bootstrap_b;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool reselect = false, write_draws = false;

    auto add_data_flags = [&](CLI::App *cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration; flags override its values");
        cmd->add_option("--dataset", dataset, "CSV file with a header row");
        cmd->add_option("--outcome", outcome, "outcome column");
        cmd->add_option("--treatment", treatment, "0/1 treatment column");
        cmd->add_option("--covariates", covariates, "comma-separated covariate columns")->delimiter(',');
        cmd->add_option("--instruments", instruments, "comma-separated instrument columns")->delimiter(',');
        cmd->add_option("--cluster", cluster, "cluster id column");
        cmd->add_option("--household-size", household_size, "household size column");
        cmd->add_option("--items", items, "comma-separated item expenditure columns")->delimiter(',');
        cmd->add_option("-o,--output-dir", output_dir, "directory for outputs");
        cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
    };

    CLI::App *summarize_cmd = app.add_subcommand("summarize", "stratified summary statistics");
    add_data_flags(summarize_cmd);

    CLI::App *fit_cmd = app.add_subcommand("fit", "OLS, 2SLS, semiparametric MTE and normal selection model");
    add_data_flags(fit_cmd);
    fit_cmd->add_option("--estimator", estimator, "ols | iv | mte | normal | all");
    fit_cmd->add_option("--instrument-mode", instrument_mode, "distance | z_by_x_interactions | propensity_score");
    fit_cmd->add_option("--interact-with", interact_with, "columns interacted with the instrument")->delimiter(',');
    fit_cmd->add_option("--policy-shift", policy_shift, "proportional cut of the policy column, in (0, 1)");
    fit_cmd->add_option("--policy-column", policy_column, "instrument shifted by the policy");
    fit_cmd->add_option("--v-lo", v_lo, "first v-grid point");
    fit_cmd->add_option("--v-hi", v_hi, "last v-grid point");
    fit_cmd->add_option("--v-step", v_step, "v-grid spacing");
    fit_cmd->add_option("--bandwidth", bandwidth, "fixed local linear bandwidth (default: cross-validated)");
    fit_cmd->add_option("--trim", trim, "share trimmed from each tail of each arm's scores");
    fit_cmd->add_option("--se", se, "classical | robust_hc1 | cluster");
    fit_cmd->add_option("--weak-instrument-threshold", weak_threshold, "first-stage F warning threshold");
    fit_cmd->add_option("--fail-on-weak-instrument", fail_on_weak, "true | false: exit 3 on weak instruments");
    fit_cmd->add_option("-B,--bootstrap", bootstrap_b, "bootstrap replications (0 skips)");
    fit_cmd->add_option("--seed", seed, "bootstrap master seed");
    fit_cmd->add_option("--bootstrap-cluster", bootstrap_cluster, "resample whole clusters of this column");
    fit_cmd->add_flag("--reselect-bandwidth", reselect, "cross-validate the bandwidth in every replicate");
    fit_cmd->add_flag("--write-draws", write_draws, "dump bootstrap draws to CSV");

    CLI::App *simulate_cmd = app.add_subcommand("simulate", "generate data from a generalized Roy model");
    std::optional<std::string> spec, out_prefix;
    std::optional<std::size_t> n_rows;
    std::optional<std::uint64_t> sim_seed;
    simulate_cmd->add_option("--config", config_path, "simulate manifest to replay");
    simulate_cmd->add_option("--spec", spec, "preset name or spec JSON file");
    simulate_cmd->add_option("--n", n_rows, "rows to generate");
    simulate_cmd->add_option("--seed", sim_seed, "random seed");
    simulate_cmd->add_option("--out", out_prefix, "output prefix; writes <prefix>.csv and <prefix>.truth.csv");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (simulate_cmd->parsed())
            return cmd_simulate(simulate_settings(config_path, spec, n_rows, sim_seed, out_prefix), out);

        ordered_json j = ordered_json::object();
        if (!config_path.empty()) {
            try {
                j = ordered_json::parse(read_text_file(config_path));
            } catch (const nlohmann::json::exception &e) {
                throw InputError(std::string("invalid config JSON: ") + e.what());
            }
            if (!j.is_object()) throw InputError("config must be a JSON object");
            // A relative dataset path in a config file is relative to that file.
            if (j.contains("dataset") && j["dataset"].is_string()) {
                fs::path p(j["dataset"].get<std::string>());
                if (p.is_relative()) j["dataset"] = (fs::path(config_path).parent_path() / p).string();
            }
        }
        auto set = [&](const char *pointer, const auto &value) { j[ordered_json::json_pointer(pointer)] = value; };
        if (dataset) set("/dataset", *dataset);
        if (outcome) set("/roles/outcome", *outcome);
        if (treatment) set("/roles/treatment", *treatment);
        if (!covariates.empty()) set("/roles/covariates", covariates);
        if (!instruments.empty()) set("/roles/instruments", instruments);
        if (cluster) set("/roles/cluster", *cluster);
        if (household_size) set("/roles/household_size", *household_size);
        if (!items.empty()) set("/roles/item_expenditure", items);
        if (output_dir) set("/output_dir", *output_dir);
        if (threads) set("/threads", *threads);
        if (estimator) set("/estimator", *estimator);
        if (instrument_mode) set("/instrument_mode", *instrument_mode);
        if (!interact_with.empty()) set("/interact_with", interact_with);
        if (policy_shift) set("/policy_shift", *policy_shift);
        if (policy_column) set("/policy_column", *policy_column);
        if (v_lo) set("/v_grid/lo", *v_lo);
        if (v_hi) set("/v_grid/hi", *v_hi);
        if (v_step) set("/v_grid/step", *v_step);
        if (bandwidth) set("/bandwidth", *bandwidth);
        if (trim) set("/trim", *trim);
        if (se) set("/se", *se);
        if (weak_threshold) set("/weak_instrument_threshold", *weak_threshold);
        if (fail_on_weak) {
            if (*fail_on_weak != "true" && *fail_on_weak != "false")
                throw InputError("--fail-on-weak-instrument expects true or false");
            set("/fail_on_weak_instrument", *fail_on_weak == "true");
        }
        if (bootstrap_b) set("/bootstrap/B", *bootstrap_b);
        if (seed) set("/bootstrap/seed", *seed);
        if (bootstrap_cluster) set("/bootstrap/cluster", *bootstrap_cluster);
        if (reselect) set("/bootstrap/reselect_bandwidth", true);
        if (write_draws) set("/bootstrap/write_draws", true);

        RunConfig cfg = parse_run_config(j.dump());
        if (summarize_cmd->parsed()) return cmd_summarize(cfg, out);
        return cmd_fit(cfg, out);
    } catch (const InputError &e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericalError &e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const fs::filesystem_error &e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception &e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
}

} // namespace mtekit

#include "mtekit/config.hpp"
#include "mtekit/error.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mtekit {

using nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) throw InputError(where + " must be a JSON object");
    for (const auto &[key, value] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return key == a; }))
            throw InputError("unknown config key '" + where + "." + key + "'");
}

template <class T> void read(const ordered_json &j, const char *key, T &target) {
    if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

template <class T> void read(const ordered_json &j, const char *key, std::optional<T> &target) {
    if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

template <class T> ordered_json optional_json(const std::optional<T> &v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

} // namespace

std::string_view to_string(EstimatorChoice e) {
    switch (e) {
    case EstimatorChoice::ols: return "ols";
    case EstimatorChoice::iv: return "iv";
    case EstimatorChoice::mte: return "mte";
    case EstimatorChoice::normal: return "normal";
    case EstimatorChoice::all: return "all";
    }
    return "unknown";
}

EstimatorChoice estimator_from_string(std::string_view name) {
    for (auto e : {EstimatorChoice::ols, EstimatorChoice::iv, EstimatorChoice::mte, EstimatorChoice::normal,
                   EstimatorChoice::all})
        if (to_string(e) == name) return e;
    throw InputError("unknown estimator '" + std::string(name) + "' (expected ols, iv, mte, normal or all)");
}

RoleMap RolesConfig::role_map() const {
    if (outcome.empty()) throw InputError("config needs roles.outcome");
    if (treatment.empty()) throw InputError("config needs roles.treatment");
    std::vector<ColumnRole> r{{outcome, Role::outcome}, {treatment, Role::treatment}};
    for (const auto &c : covariates) r.push_back({c, Role::covariate});
    for (const auto &c : instruments) r.push_back({c, Role::instrument});
    for (const auto &c : item_expenditure) r.push_back({c, Role::item_expenditure});
    if (cluster) r.push_back({*cluster, Role::cluster});
    if (household_size) r.push_back({*household_size, Role::household_size});
    return RoleMap(r);
}

void RunConfig::validate() const {
    if (!(policy_shift > 0.0 && policy_shift < 1.0)) throw InputError("policy_shift must lie in (0, 1)");
    if (!(trim >= 0.0 && trim < 0.5)) throw InputError("trim must lie in [0, 0.5)");
    if (bandwidth && !(*bandwidth > 0.0)) throw InputError("bandwidth must be positive");
    if (!(v_grid.step > 0.0 && v_grid.lo > 0.0 && v_grid.hi < 1.0 && v_grid.lo <= v_grid.hi))
        throw InputError("v_grid needs 0 < lo <= hi < 1 and a positive step");
    if (bootstrap.replications != 0 && bootstrap.replications < 50)
        throw InputError("bootstrap.B must be 0 (skip) or at least 50");
    if (!(weak_instrument_threshold >= 0.0)) throw InputError("weak_instrument_threshold must be non-negative");
}

RunConfig parse_run_config(const std::string &json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("invalid config JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"schema", "toolkit_version", "dataset", "roles", "food_groups", "estimator", "instrument_mode",
                    "interact_with", "policy_shift", "policy_column", "v_grid", "bandwidth", "trim", "se",
                    "weak_instrument_threshold", "fail_on_weak_instrument", "bootstrap", "threads", "output_dir"},
                   "config");
    RunConfig c;
    try {
        if (j.contains("schema") && j.at("schema").get<int>() != 1)
            throw InputError("unsupported config schema " + j.at("schema").dump());
        read(j, "dataset", c.dataset);
        if (j.contains("roles")) {
            const auto &r = j.at("roles");
            reject_unknown(r,
                           {"outcome", "treatment", "covariates", "instruments", "cluster", "household_size",
                            "item_expenditure"},
                           "roles");
            read(r, "outcome", c.roles.outcome);
            read(r, "treatment", c.roles.treatment);
            read(r, "covariates", c.roles.covariates);
            read(r, "instruments", c.roles.instruments);
            read(r, "item_expenditure", c.roles.item_expenditure);
            read(r, "cluster", c.roles.cluster);
            read(r, "household_size", c.roles.household_size);
        }
        if (j.contains("food_groups") && !j.at("food_groups").is_null()) {
            const auto &f = j.at("food_groups");
            reject_unknown(f, {"categories", "annualization", "default_annualization"}, "food_groups");
            FoodGroupMap map;
            for (const auto &[cat, group] : f.at("categories").items())
                map.groups[cat] = food_group_from_string(group.get<std::string>());
            if (f.contains("annualization"))
                for (const auto &[cat, factor] : f.at("annualization").items()) map.annualization[cat] = factor.get<double>();
            read(f, "default_annualization", map.default_annualization);
            c.food_groups = map;
        }
        if (j.contains("estimator")) c.estimator = estimator_from_string(j.at("estimator").get<std::string>());
        if (j.contains("instrument_mode"))
            c.instrument_mode = instrument_mode_from_string(j.at("instrument_mode").get<std::string>());
        read(j, "interact_with", c.interact_with);
        read(j, "policy_shift", c.policy_shift);
        read(j, "policy_column", c.policy_column);
        if (j.contains("v_grid")) {
            const auto &g = j.at("v_grid");
            reject_unknown(g, {"lo", "hi", "step"}, "v_grid");
            read(g, "lo", c.v_grid.lo);
            read(g, "hi", c.v_grid.hi);
            read(g, "step", c.v_grid.step);
        }
        read(j, "bandwidth", c.bandwidth);
        read(j, "trim", c.trim);
        if (j.contains("se")) c.se = se_type_from_string(j.at("se").get<std::string>());
        read(j, "weak_instrument_threshold", c.weak_instrument_threshold);
        read(j, "fail_on_weak_instrument", c.fail_on_weak_instrument);
        if (j.contains("bootstrap")) {
            const auto &b = j.at("bootstrap");
            reject_unknown(b, {"B", "seed", "cluster", "reselect_bandwidth", "write_draws"}, "bootstrap");
            read(b, "B", c.bootstrap.replications);
            read(b, "seed", c.bootstrap.seed);
            read(b, "cluster", c.bootstrap.cluster);
            read(b, "reselect_bandwidth", c.bootstrap.reselect_bandwidth);
            read(b, "write_draws", c.bootstrap.write_draws);
        }
        read(j, "threads", c.threads);
        read(j, "output_dir", c.output_dir);
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("invalid config value: ") + e.what());
    }
    c.validate();
    return c;
}

std::string run_config_to_json(const RunConfig &c) {
    ordered_json j;
    j["schema"] = 1;
    j["toolkit_version"] = MTEKIT_VERSION;
    j["dataset"] = c.dataset;
    ordered_json r;
    r["outcome"] = c.roles.outcome;
    r["treatment"] = c.roles.treatment;
    r["covariates"] = c.roles.covariates;
    r["instruments"] = c.roles.instruments;
    r["item_expenditure"] = c.roles.item_expenditure;
    r["cluster"] = optional_json(c.roles.cluster);
    r["household_size"] = optional_json(c.roles.household_size);
    j["roles"] = r;
    if (c.food_groups) {
        ordered_json f, cats = ordered_json::object(), ann = ordered_json::object();
        for (const auto &[cat, g] : c.food_groups->groups)
            cats[cat] = g == FoodGroup::healthy ? "healthy" : g == FoodGroup::unhealthy ? "unhealthy" : "excluded";
        for (const auto &[cat, a] : c.food_groups->annualization) ann[cat] = a;
        f["categories"] = cats;
        f["annualization"] = ann;
        f["default_annualization"] = c.food_groups->default_annualization;
        j["food_groups"] = f;
    } else {
        j["food_groups"] = nullptr;
    }
    j["estimator"] = to_string(c.estimator);
    j["instrument_mode"] = to_string(c.instrument_mode);
    j["interact_with"] = c.interact_with;
    j["policy_shift"] = c.policy_shift;
    j["policy_column"] = optional_json(c.policy_column);
    j["v_grid"] = {{"lo", c.v_grid.lo}, {"hi", c.v_grid.hi}, {"step", c.v_grid.step}};
    j["bandwidth"] = optional_json(c.bandwidth);
    j["trim"] = c.trim;
    j["se"] = to_string(c.se);
    j["weak_instrument_threshold"] = c.weak_instrument_threshold;
    j["fail_on_weak_instrument"] = c.fail_on_weak_instrument;
    j["bootstrap"] = {{"B", c.bootstrap.replications},
                      {"seed", c.bootstrap.seed},
                      {"cluster", optional_json(c.bootstrap.cluster)},
                      {"reselect_bandwidth", c.bootstrap.reselect_bandwidth},
                      {"write_draws", c.bootstrap.write_draws}};
    j["threads"] = c.threads;
    j["output_dir"] = c.output_dir;
    return j.dump(2) + "\n";
}

std::string read_text_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

} // namespace mtekit

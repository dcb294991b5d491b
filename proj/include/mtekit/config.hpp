#pragma once

#include "mtekit/dataset.hpp"
#include "mtekit/linear.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mtekit {

enum class EstimatorChoice { ols, iv, mte, normal, all };
std::string_view to_string(EstimatorChoice e);
EstimatorChoice estimator_from_string(std::string_view name);

struct RolesConfig {
    std::string outcome, treatment;
    std::vector<std::string> covariates, instruments, item_expenditure;
    std::optional<std::string> cluster, household_size;

    RoleMap role_map() const;
};

struct GridConfig {
    double lo = 0.01, hi = 0.99, step = 0.01;
};

struct BootstrapConfig {
    std::size_t replications = 250; ///< 0 skips the bootstrap
    std::uint64_t seed = 20240101;
    std::optional<std::string> cluster;
    bool reselect_bandwidth = false;
    bool write_draws = false;
};

/// Everything a `summarize` or `fit` run needs; serializes back to the JSON it was read from.
struct RunConfig {
    std::string dataset;
    RolesConfig roles;
    std::optional<FoodGroupMap> food_groups;
    EstimatorChoice estimator = EstimatorChoice::all;
    InstrumentMode instrument_mode = InstrumentMode::distance;
    std::vector<std::string> interact_with; ///< defaults to the covariates
    double policy_shift = 0.15;
    std::optional<std::string> policy_column; ///< defaults to the first instrument
    GridConfig v_grid;
    std::optional<double> bandwidth;
    double trim = 0.01;
    SeType se = SeType::robust_hc1;
    double weak_instrument_threshold = 10.0;
    bool fail_on_weak_instrument = true;
    BootstrapConfig bootstrap;
    unsigned threads = 0;
    std::string output_dir = "mtekit_out";

    /// Throws InputError on out-of-range values.
    void validate() const;
};

/** Parses a JSON run configuration; every key is optional except where a run needs it, and
 * unknown keys anywhere are rejected.
 */
RunConfig parse_run_config(const std::string &json_text);
/// Fully resolved configuration including schema and toolkit version.
std::string run_config_to_json(const RunConfig &config);

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &text);

} // namespace mtekit

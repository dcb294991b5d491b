#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtekit {

enum class Role { outcome, treatment, covariate, instrument, cluster, household_size, item_expenditure };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct ColumnRole {
    std::string name;
    Role role;
};

/** Validated assignment of column names to estimation roles.
 *
 * Exactly one outcome and one treatment; at most one cluster and one household size column.
 * Covariates, instruments and item expenditures keep the order in which they were declared.
 */
class RoleMap {
  public:
    RoleMap() = default;
    explicit RoleMap(const std::vector<ColumnRole> &roles);

    const std::string &outcome() const { return outcome_; }
    const std::string &treatment() const { return treatment_; }
    const std::vector<std::string> &covariates() const { return covariates_; }
    const std::vector<std::string> &instruments() const { return instruments_; }
    const std::optional<std::string> &cluster() const { return cluster_; }
    const std::optional<std::string> &household_size() const { return household_size_; }
    const std::vector<std::string> &item_expenditure() const { return items_; }

    /// Every role-mapped column name, in declaration order, without duplicates.
    std::vector<std::string> columns() const;
    std::vector<ColumnRole> entries() const { return entries_; }

    /// Same map with the outcome column replaced.
    RoleMap with_outcome(const std::string &name) const;

    /// Throws InputError unless at least one instrument is declared.
    void require_instruments() const;

  private:
    std::vector<ColumnRole> entries_;
    std::string outcome_, treatment_;
    std::vector<std::string> covariates_, instruments_, items_;
    std::optional<std::string> cluster_, household_size_;
};

/// Where a Dataset came from and what happened to it on the way in.
struct Provenance {
    std::string source;
    std::size_t raw_rows = 0;
    std::size_t dropped_rows = 0;
    std::vector<std::string> log;
};

/** Immutable table of role-tagged numeric columns.
 *
 * Construction validates that every role-mapped column exists, holds no missing values, and that
 * the treatment column is exactly 0/1. Columns are shared between copies, so deriving a dataset
 * with an extra column or a row subset never mutates the original.
 */
class Dataset {
  public:
    Dataset() = default;
    Dataset(RoleMap roles, std::vector<std::string> names, std::vector<std::vector<double>> columns,
            Provenance provenance = {});

    std::size_t n_rows() const { return n_rows_; }
    const RoleMap &roles() const { return roles_; }
    const Provenance &provenance() const { return provenance_; }
    const std::vector<std::string> &column_names() const { return names_; }

    bool has_column(std::string_view name) const;
    /// Throws InputError naming the column when absent.
    std::span<const double> column(std::string_view name) const;
    Eigen::VectorXd vector(std::string_view name) const;
    /// Columns stacked side by side, in the order given.
    Eigen::MatrixXd matrix(const std::vector<std::string> &names) const;

    std::span<const double> outcome() const { return column(roles_.outcome()); }
    std::span<const double> treatment() const { return column(roles_.treatment()); }

    std::size_t n_treated() const;
    std::size_t n_untreated() const { return n_rows_ - n_treated(); }
    /// Throws InputError unless each treatment arm has at least `minimum` rows.
    void require_arms(std::size_t minimum = 2) const;

    Dataset with_column(const std::string &name, std::vector<double> values) const;
    Dataset with_roles(RoleMap roles) const;
    Dataset select_rows(std::span<const std::size_t> rows, std::string note = {}) const;
    Dataset with_log(std::string entry, std::size_t newly_dropped = 0) const;

  private:
    std::size_t index_of(std::string_view name) const;
    void validate() const;

    RoleMap roles_;
    std::vector<std::string> names_;
    std::vector<std::shared_ptr<const std::vector<double>>> columns_;
    std::size_t n_rows_ = 0;
    Provenance provenance_;
};

/** Reads a comma-separated file with a header row.
 *
 * Only role-mapped columns are parsed. Empty cells, `NA` and `NaN` count as missing, and rows
 * missing any role-mapped value are dropped (the count lands in the provenance). Any other
 * non-numeric cell is an error carrying its line number, as is a treatment value outside {0, 1}.
 */
Dataset load_csv(const std::string &path, const RoleMap &roles);

/// Writes every column at shortest round-trip precision.
void write_csv(const Dataset &data, const std::string &path);

enum class FoodGroup { healthy, unhealthy, excluded };

/// Category of each item-expenditure column and how many recall periods make a year.
struct FoodGroupMap {
    std::map<std::string, FoodGroup> groups;
    std::map<std::string, double> annualization;
    double default_annualization = 52.0;

    double factor(const std::string &category) const;
};

FoodGroup food_group_from_string(std::string_view name);

inline constexpr const char *kHealthyOutcome = "log_healthy_pc";
inline constexpr const char *kUnhealthyOutcome = "log_unhealthy_pc";

/// Per-category columns on disk are item expenditures; the outcome column is derived later.
bool outcome_is_derived(const RoleMap &roles);

/** Adds log annual per-capita healthy and unhealthy food spending.
 *
 * Rows with a non-positive household size are dropped. When the role-mapped outcome is one of the
 * two derived columns, households with zero spending in that group are dropped too; otherwise a
 * zero-spend cell is left missing in the auxiliary column.
 */
Dataset build_food_outcomes(const Dataset &raw, const FoodGroupMap &map);

struct StratumStats {
    std::size_t n = 0;
    double mean = 0.0;
    std::optional<double> sd; ///< absent when n < 2
};

struct SummaryRow {
    std::string variable;
    StratumStats treated;
    StratumStats control;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
    std::size_t n_treated = 0;
    std::size_t n_control = 0;
    std::size_t dropped = 0;
    std::size_t raw_rows = 0;
};

/// Mean and n-1 standard deviation of every role-mapped column within each treatment arm.
SummaryTable summarize(const Dataset &data);

} // namespace mtekit

#include "mtekit/dataset.hpp"
#include "mtekit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace mtekit {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string join(const std::vector<std::string> &items, const char *sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::vector<std::string> split_line(const std::string &line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    for (auto &s : cells) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    }
    return cells;
}

bool is_missing_token(const std::string &cell) {
    return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan";
}

std::optional<double> parse_number(const std::string &cell) {
    double value = 0.0;
    const char *first = cell.data();
    const char *last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return value;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace

std::string_view to_string(Role role) {
    switch (role) {
    case Role::outcome: return "outcome";
    case Role::treatment: return "treatment";
    case Role::covariate: return "covariate";
    case Role::instrument: return "instrument";
    case Role::cluster: return "cluster";
    case Role::household_size: return "household_size";
    case Role::item_expenditure: return "item_expenditure";
    }
    return "unknown";
}

Role role_from_string(std::string_view name) {
    for (Role r : {Role::outcome, Role::treatment, Role::covariate, Role::instrument, Role::cluster,
                   Role::household_size, Role::item_expenditure})
        if (to_string(r) == name) return r;
    throw InputError("unknown column role '" + std::string(name) + "'");
}

RoleMap::RoleMap(const std::vector<ColumnRole> &roles) : entries_(roles) {
    std::set<std::string> seen;
    int n_outcome = 0, n_treatment = 0;
    for (const auto &[name, role] : roles) {
        if (name.empty()) throw InputError("role map contains an empty column name");
        if (!seen.insert(name).second) throw InputError("column '" + name + "' is assigned more than one role");
        switch (role) {
        case Role::outcome: outcome_ = name; ++n_outcome; break;
        case Role::treatment: treatment_ = name; ++n_treatment; break;
        case Role::covariate: covariates_.push_back(name); break;
        case Role::instrument: instruments_.push_back(name); break;
        case Role::item_expenditure: items_.push_back(name); break;
        case Role::cluster:
            if (cluster_) throw InputError("more than one cluster column declared");
            cluster_ = name;
            break;
        case Role::household_size:
            if (household_size_) throw InputError("more than one household_size column declared");
            household_size_ = name;
            break;
        }
    }
    if (n_outcome != 1) throw InputError("role map needs exactly one outcome column, got " + std::to_string(n_outcome));
    if (n_treatment != 1)
        throw InputError("role map needs exactly one treatment column, got " + std::to_string(n_treatment));
}

std::vector<std::string> RoleMap::columns() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto &e : entries_) out.push_back(e.name);
    return out;
}

RoleMap RoleMap::with_outcome(const std::string &name) const {
    auto entries = entries_;
    for (auto &e : entries)
        if (e.role == Role::outcome) e.name = name;
    return RoleMap(entries);
}

void RoleMap::require_instruments() const {
    if (instruments_.empty()) throw InputError("at least one instrument column is required for IV/MTE estimation");
}

bool outcome_is_derived(const RoleMap &roles) {
    return !roles.item_expenditure().empty() &&
           (roles.outcome() == kHealthyOutcome || roles.outcome() == kUnhealthyOutcome);
}

Dataset::Dataset(RoleMap roles, std::vector<std::string> names, std::vector<std::vector<double>> columns,
                 Provenance provenance)
    : roles_(std::move(roles)), names_(std::move(names)), provenance_(std::move(provenance)) {
    if (names_.size() != columns.size()) throw InputError("column name count does not match column count");
    n_rows_ = columns.empty() ? 0 : columns.front().size();
    for (auto &c : columns) {
        if (c.size() != n_rows_) throw InputError("columns have unequal lengths");
        columns_.push_back(std::make_shared<const std::vector<double>>(std::move(c)));
    }
    std::set<std::string> unique(names_.begin(), names_.end());
    if (unique.size() != names_.size()) throw InputError("duplicate column names");
    validate();
}

void Dataset::validate() const {
    const bool derived = outcome_is_derived(roles_);
    for (const auto &name : roles_.columns()) {
        if (derived && name == roles_.outcome() && !has_column(name)) continue;
        auto col = column(name);
        for (std::size_t i = 0; i < col.size(); ++i)
            if (!std::isfinite(col[i]))
                throw InputError("column '" + name + "' has a missing or non-finite value at row " + std::to_string(i));
    }
    auto s = column(roles_.treatment());
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] != 0.0 && s[i] != 1.0)
            throw InputError("treatment column '" + roles_.treatment() + "' has value " + format_double(s[i]) +
                             " outside {0,1} at row " + std::to_string(i));
}

bool Dataset::has_column(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Dataset::index_of(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw InputError("missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

std::span<const double> Dataset::column(std::string_view name) const {
    return *columns_[index_of(name)];
}

Eigen::VectorXd Dataset::vector(std::string_view name) const {
    auto c = column(name);
    return Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
}

Eigen::MatrixXd Dataset::matrix(const std::vector<std::string> &names) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n_rows_), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = vector(names[j]);
    return m;
}

std::size_t Dataset::n_treated() const {
    auto s = treatment();
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), 1.0));
}

void Dataset::require_arms(std::size_t minimum) const {
    std::size_t t = n_treated(), u = n_untreated();
    if (t < minimum || u < minimum)
        throw InputError("need at least " + std::to_string(minimum) + " rows per treatment arm (treated " +
                         std::to_string(t) + ", untreated " + std::to_string(u) + ")");
}

Dataset Dataset::with_column(const std::string &name, std::vector<double> values) const {
    if (values.size() != n_rows_) throw InputError("new column '" + name + "' has the wrong length");
    Dataset out = *this;
    auto it = std::find(out.names_.begin(), out.names_.end(), name);
    auto ptr = std::make_shared<const std::vector<double>>(std::move(values));
    if (it == out.names_.end()) {
        out.names_.push_back(name);
        out.columns_.push_back(std::move(ptr));
    } else {
        out.columns_[static_cast<std::size_t>(it - out.names_.begin())] = std::move(ptr);
    }
    out.validate();
    return out;
}

Dataset Dataset::with_roles(RoleMap roles) const {
    Dataset out = *this;
    out.roles_ = std::move(roles);
    out.validate();
    return out;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows, std::string note) const {
    Dataset out;
    out.roles_ = roles_;
    out.names_ = names_;
    out.provenance_ = provenance_;
    out.n_rows_ = rows.size();
    for (const auto &col : columns_) {
        std::vector<double> c(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] >= n_rows_) throw InputError("row index out of range");
            c[i] = (*col)[rows[i]];
        }
        out.columns_.push_back(std::make_shared<const std::vector<double>>(std::move(c)));
    }
    if (!note.empty()) out.provenance_.log.push_back(std::move(note));
    return out;
}

Dataset Dataset::with_log(std::string entry, std::size_t newly_dropped) const {
    Dataset out = *this;
    out.provenance_.log.push_back(std::move(entry));
    out.provenance_.dropped_rows += newly_dropped;
    return out;
}

Dataset load_csv(const std::string &path, const RoleMap &roles) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw InputError("'" + path + "' is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    auto header = split_line(line);

    const bool derived = outcome_is_derived(roles);
    std::vector<std::string> wanted;
    for (const auto &name : roles.columns())
        if (!(derived && name == roles.outcome())) wanted.push_back(name);

    std::vector<std::size_t> positions;
    std::vector<std::string> missing;
    for (const auto &name : wanted) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) missing.push_back(name);
        else positions.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    if (!missing.empty()) throw InputError("missing column(s) in '" + path + "': " + join(missing));

    const std::string &treatment = roles.treatment();
    std::vector<std::vector<double>> columns(wanted.size());
    std::size_t raw = 0, dropped = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++raw;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw InputError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        std::vector<double> row(wanted.size());
        bool complete = true;
        for (std::size_t j = 0; j < wanted.size(); ++j) {
            const auto &cell = cells[positions[j]];
            if (is_missing_token(cell)) {
                row[j] = kMissing;
                complete = false;
                continue;
            }
            auto v = parse_number(cell);
            if (!v || !std::isfinite(*v))
                throw InputError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + cell +
                                 "' in column '" + wanted[j] + "'");
            if (wanted[j] == treatment && *v != 0.0 && *v != 1.0)
                throw InputError(path + ":" + std::to_string(line_no) + ": treatment '" + treatment + "' is " + cell +
                                 ", expected 0 or 1 (data row " + std::to_string(raw) + ")");
            row[j] = *v;
        }
        if (!complete) {
            ++dropped;
            continue;
        }
        for (std::size_t j = 0; j < wanted.size(); ++j) columns[j].push_back(row[j]);
    }

    Provenance prov;
    prov.source = path;
    prov.raw_rows = raw;
    prov.dropped_rows = dropped;
    prov.log.push_back("loaded " + std::to_string(raw) + " rows from " + path);
    prov.log.push_back("dropped " + std::to_string(dropped) + " rows with missing role-mapped values");
    return Dataset(roles, std::move(wanted), std::move(columns), std::move(prov));
}

void write_csv(const Dataset &data, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    const auto &names = data.column_names();
    out << join(names, ",") << '\n';
    std::vector<std::span<const double>> cols;
    for (const auto &n : names) cols.push_back(data.column(n));
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            if (j) out << ',';
            out << format_double(cols[j][i]);
        }
        out << '\n';
    }
}

FoodGroup food_group_from_string(std::string_view name) {
    if (name == "healthy") return FoodGroup::healthy;
    if (name == "unhealthy") return FoodGroup::unhealthy;
    if (name == "excluded") return FoodGroup::excluded;
    throw InputError("unknown food group '" + std::string(name) + "' (expected healthy, unhealthy or excluded)");
}

double FoodGroupMap::factor(const std::string &category) const {
    auto it = annualization.find(category);
    double f = it == annualization.end() ? default_annualization : it->second;
    if (!(f > 0.0) || !std::isfinite(f))
        throw InputError("annualization factor for '" + category + "' must be strictly positive");
    return f;
}

Dataset build_food_outcomes(const Dataset &raw, const FoodGroupMap &map) {
    const RoleMap &roles = raw.roles();
    if (roles.item_expenditure().empty()) throw InputError("no item_expenditure columns declared");
    if (!roles.household_size()) throw InputError("a household_size column is required to build per-capita outcomes");

    // Sorted category order makes the sums independent of column order.
    std::vector<std::string> items = roles.item_expenditure();
    std::sort(items.begin(), items.end());
    std::vector<std::string> unmapped;
    for (const auto &c : items)
        if (!map.groups.count(c)) unmapped.push_back(c);
    if (!unmapped.empty()) throw InputError("unmapped food categories: " + join(unmapped));

    const std::size_t n = raw.n_rows();
    std::vector<double> healthy(n, 0.0), unhealthy(n, 0.0);
    for (const auto &c : items) {
        FoodGroup g = map.groups.at(c);
        if (g == FoodGroup::excluded) continue;
        double f = map.factor(c);
        auto col = raw.column(c);
        auto &target = g == FoodGroup::healthy ? healthy : unhealthy;
        for (std::size_t i = 0; i < n; ++i) target[i] += col[i] * f;
    }

    auto size = raw.column(*roles.household_size());
    std::vector<double> log_h(n), log_u(n);
    std::vector<std::size_t> keep;
    std::size_t bad_size = 0, zero_spend = 0;
    const bool derived = outcome_is_derived(roles);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(size[i] > 0.0)) {
            ++bad_size;
            continue;
        }
        log_h[i] = healthy[i] > 0.0 ? std::log(healthy[i] / size[i]) : kMissing;
        log_u[i] = unhealthy[i] > 0.0 ? std::log(unhealthy[i] / size[i]) : kMissing;
        if (derived) {
            double active = roles.outcome() == kHealthyOutcome ? log_h[i] : log_u[i];
            if (std::isnan(active)) {
                ++zero_spend;
                continue;
            }
        }
        keep.push_back(i);
    }

    Dataset out = raw;
    std::vector<double> kh(keep.size()), ku(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        kh[k] = log_h[keep[k]];
        ku[k] = log_u[keep[k]];
    }
    out = out.select_rows(keep);
    out = out.with_column(kHealthyOutcome, std::move(kh)).with_column(kUnhealthyOutcome, std::move(ku));
    out = out.with_log("dropped " + std::to_string(bad_size) + " rows with non-positive household size", bad_size);
    out = out.with_log("dropped " + std::to_string(zero_spend) + " rows with zero spending in the outcome food group",
                       zero_spend);
    return out;
}

SummaryTable summarize(const Dataset &data) {
    SummaryTable table;
    auto s = data.treatment();
    table.n_treated = data.n_treated();
    table.n_control = data.n_untreated();
    table.dropped = data.provenance().dropped_rows;
    table.raw_rows = data.provenance().raw_rows ? data.provenance().raw_rows : data.n_rows();

    auto stats = [&](std::span<const double> x, double arm) {
        StratumStats st;
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (s[i] == arm && !std::isnan(x[i])) {
                sum += x[i];
                ++st.n;
            }
        if (st.n == 0) {
            st.mean = kMissing;
            return st;
        }
        st.mean = sum / static_cast<double>(st.n);
        if (st.n >= 2) {
            double ss = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (s[i] == arm && !std::isnan(x[i])) ss += (x[i] - st.mean) * (x[i] - st.mean);
            st.sd = std::sqrt(ss / static_cast<double>(st.n - 1));
        }
        return st;
    };

    std::vector<std::string> vars;
    auto add = [&](const std::string &v) {
        if (data.has_column(v) && std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
    };
    add(data.roles().outcome());
    if (outcome_is_derived(data.roles())) {
        add(kHealthyOutcome);
        add(kUnhealthyOutcome);
    }
    for (const auto &c : data.roles().covariates()) add(c);
    for (const auto &c : data.roles().instruments()) add(c);
    if (data.roles().household_size()) add(*data.roles().household_size());
    for (const auto &c : data.roles().item_expenditure()) add(c);

    for (const auto &v : vars) {
        auto x = data.column(v);
        table.rows.push_back({v, stats(x, 1.0), stats(x, 0.0)});
    }
    return table;
}

} // namespace mtekit

#include "mtekit/simulation.hpp"
#include "mtekit/error.hpp"
#include "mtekit/normal_selection.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

namespace mtekit {

using nlohmann::ordered_json;

namespace {

std::string_view to_string(Distribution d) {
    switch (d) {
    case Distribution::normal: return "normal";
    case Distribution::uniform: return "uniform";
    case Distribution::bernoulli: return "bernoulli";
    }
    return "unknown";
}

VariableSpec normal(std::string name, double mean, double sd) { return {std::move(name), Distribution::normal, mean, sd}; }
VariableSpec uniform(std::string name, double lo, double hi) { return {std::move(name), Distribution::uniform, lo, hi}; }
VariableSpec bernoulli(std::string name, double p) { return {std::move(name), Distribution::bernoulli, p, 0.0}; }

double mean_of(const VariableSpec &v) {
    switch (v.distribution) {
    case Distribution::normal: return v.a;
    case Distribution::uniform: return 0.5 * (v.a + v.b);
    case Distribution::bernoulli: return v.a;
    }
    return 0.0;
}

Eigen::Matrix3d covariance(double var1, double var0, double var_s, double c10, double c1s, double c0s) {
    Eigen::Matrix3d s;
    s << var1, c10, c1s, c10, var0, c0s, c1s, c0s, var_s;
    return s;
}

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void reject_unknown(const ordered_json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) throw InputError(where + " must be a JSON object");
    for (const auto &[key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return key == a; }))
            throw InputError("unknown key '" + key + "' in " + where);
    }
}

Eigen::VectorXd vector_of(const ordered_json &j, const std::string &what) {
    if (!j.is_array()) throw InputError(what + " must be an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

ordered_json variable_json(const VariableSpec &v) {
    ordered_json j;
    j["name"] = v.name;
    j["distribution"] = to_string(v.distribution);
    switch (v.distribution) {
    case Distribution::normal: j["mean"] = v.a; j["sd"] = v.b; break;
    case Distribution::uniform: j["low"] = v.a; j["high"] = v.b; break;
    case Distribution::bernoulli: j["p"] = v.a; break;
    }
    return j;
}

VariableSpec variable_from(const ordered_json &j) {
    reject_unknown(j, {"name", "distribution", "mean", "sd", "low", "high", "p"}, "variable spec");
    VariableSpec v;
    v.name = j.at("name").get<std::string>();
    const auto dist = j.at("distribution").get<std::string>();
    if (dist == "normal") {
        v = normal(v.name, j.value("mean", 0.0), j.value("sd", 1.0));
        if (!(v.b > 0.0)) throw InputError("variable '" + v.name + "' needs a positive sd");
    } else if (dist == "uniform") {
        v = uniform(v.name, j.at("low").get<double>(), j.at("high").get<double>());
        if (!(v.b > v.a)) throw InputError("variable '" + v.name + "' needs low < high");
    } else if (dist == "bernoulli") {
        v = bernoulli(v.name, j.at("p").get<double>());
        if (!(v.a > 0.0 && v.a < 1.0)) throw InputError("variable '" + v.name + "' needs p in (0, 1)");
    } else {
        throw InputError("unknown distribution '" + dist + "' for variable '" + v.name + "'");
    }
    return v;
}

} // namespace

void RoyModelSpec::validate() const {
    const auto kx = static_cast<Eigen::Index>(covariates.size());
    const auto kz = static_cast<Eigen::Index>(instruments.size());
    if (beta0.size() != kx || beta1.size() != kx)
        throw InputError("spec '" + name + "': beta0 and beta1 need one entry per covariate");
    if (lambda.size() != 1 + kx + kz)
        throw InputError("spec '" + name + "': lambda needs intercept, covariate and instrument entries");
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw InputError("spec '" + name + "': sigma is not symmetric");
    if (!(sigma(2, 2) > 0.0)) throw InputError("spec '" + name + "': Var(Us) must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(sigma);
    if (eig.eigenvalues().minCoeff() < -1e-12) throw InputError("spec '" + name + "': sigma is not positive semi-definite");
    std::set<std::string> names{outcome, treatment};
    if (clusters) names.insert(cluster_column);
    for (const auto *group : {&covariates, &instruments})
        for (const auto &v : *group)
            if (!names.insert(v.name).second) throw InputError("spec '" + name + "': duplicate column '" + v.name + "'");
}

RoleMap RoyModelSpec::roles() const {
    std::vector<ColumnRole> r{{outcome, Role::outcome}, {treatment, Role::treatment}};
    for (const auto &v : covariates) r.push_back({v.name, Role::covariate});
    for (const auto &v : instruments) r.push_back({v.name, Role::instrument});
    if (clusters) r.push_back({cluster_column, Role::cluster});
    return RoleMap(r);
}

Simulated generate(const RoyModelSpec &spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw InputError("simulation needs n >= 1");
    spec.validate();
    const std::size_t kx = spec.covariates.size(), kz = spec.instruments.size();

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(spec.sigma);
    const Eigen::Matrix3d root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const double sd_s = std::sqrt(spec.sigma(2, 2));

    std::mt19937_64 engine(seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](const VariableSpec &v) {
        switch (v.distribution) {
        case Distribution::normal: return v.a + v.b * std_normal(engine);
        case Distribution::uniform: return v.a + (v.b - v.a) * unit(engine);
        case Distribution::bernoulli: return unit(engine) < v.a ? 1.0 : 0.0;
        }
        return 0.0;
    };

    std::vector<std::vector<double>> cols(kx + kz + 2 + (spec.clusters ? 1 : 0), std::vector<double>(n));
    Truth truth;
    truth.p.resize(n);
    truth.v.resize(n);
    truth.gain.resize(n);
    truth.ate_x.resize(n);
    Eigen::VectorXd x(static_cast<Eigen::Index>(kx)), z(static_cast<Eigen::Index>(kz));
    const Eigen::VectorXd gap = spec.beta1 - spec.beta0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kx; ++j) x[static_cast<Eigen::Index>(j)] = draw(spec.covariates[j]);
        for (std::size_t j = 0; j < kz; ++j) z[static_cast<Eigen::Index>(j)] = draw(spec.instruments[j]);
        Eigen::Vector3d e;
        for (int k = 0; k < 3; ++k) e[k] = std_normal(engine);
        const Eigen::Vector3d u = root * e;

        const double index = spec.lambda[0] + spec.lambda.segment(1, static_cast<Eigen::Index>(kx)).dot(x) +
                             spec.lambda.tail(static_cast<Eigen::Index>(kz)).dot(z);
        const double s = index - u[2] > 0.0 ? 1.0 : 0.0;
        const double y1 = spec.alpha1 + spec.beta1.dot(x) + u[0];
        const double y0 = spec.alpha0 + spec.beta0.dot(x) + u[1];

        cols[0][i] = s * y1 + (1.0 - s) * y0;
        cols[1][i] = s;
        for (std::size_t j = 0; j < kx; ++j) cols[2 + j][i] = x[static_cast<Eigen::Index>(j)];
        for (std::size_t j = 0; j < kz; ++j) cols[2 + kx + j][i] = z[static_cast<Eigen::Index>(j)];
        if (spec.clusters) cols.back()[i] = static_cast<double>(i * spec.clusters / n);

        truth.p[i] = normal_cdf(index / sd_s);
        truth.v[i] = normal_cdf(u[2] / sd_s);
        truth.gain[i] = y1 - y0;
        truth.ate_x[i] = spec.alpha1 - spec.alpha0 + gap.dot(x);
    }

    std::vector<std::string> names{spec.outcome, spec.treatment};
    for (const auto &v : spec.covariates) names.push_back(v.name);
    for (const auto &v : spec.instruments) names.push_back(v.name);
    if (spec.clusters) names.push_back(spec.cluster_column);
    Provenance prov;
    prov.source = "simulated:" + spec.name + ":n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
    prov.raw_rows = n;
    return {Dataset(spec.roles(), names, std::move(cols), prov), std::move(truth)};
}

double true_mte(const RoyModelSpec &spec, const Eigen::VectorXd &x, double v) {
    if (!(v > 0.0 && v < 1.0)) throw InputError("v must lie strictly inside (0, 1)");
    if (x.size() != spec.beta1.size()) throw InputError("x has the wrong number of covariates for this spec");
    const double slope = (spec.sigma(0, 2) - spec.sigma(1, 2)) / std::sqrt(spec.sigma(2, 2));
    return spec.alpha1 - spec.alpha0 + x.dot(spec.beta1 - spec.beta0) + slope * normal_quantile(v);
}

double true_propensity(const RoyModelSpec &spec, const Eigen::VectorXd &x, const Eigen::VectorXd &z) {
    const auto kx = x.size();
    if (kx != spec.beta1.size() || 1 + kx + z.size() != spec.lambda.size())
        throw InputError("covariates or instruments have the wrong dimension for this spec");
    const double index = spec.lambda[0] + spec.lambda.segment(1, kx).dot(x) + spec.lambda.tail(z.size()).dot(z);
    return normal_cdf(index / std::sqrt(spec.sigma(2, 2)));
}

Eigen::VectorXd covariate_means(const RoyModelSpec &spec) {
    Eigen::VectorXd m(static_cast<Eigen::Index>(spec.covariates.size()));
    for (std::size_t j = 0; j < spec.covariates.size(); ++j) m[static_cast<Eigen::Index>(j)] = mean_of(spec.covariates[j]);
    return m;
}

std::vector<RoyModelSpec> presets() {
    std::vector<RoyModelSpec> out;

    RoyModelSpec gains;
    gains.name = "selection-on-gains";
    gains.covariates = {normal("x1", 0.0, 1.0), bernoulli("x2", 0.5)};
    gains.instruments = {normal("z", 0.0, 1.0)};
    gains.alpha0 = 1.0;
    gains.alpha1 = 1.1;
    gains.beta0 = Eigen::Vector2d(0.3, 0.1);
    gains.beta1 = Eigen::Vector2d(0.4, 0.1);
    gains.lambda = Eigen::Vector4d(0.0, 0.3, 0.2, 1.0);
    // People with high Us (reluctant to enrol) gain less: Cov(U1, Us) < Cov(U0, Us).
    gains.sigma = covariance(0.01, 0.01, 1.0, 0.0025, -0.06, 0.04);
    out.push_back(gains);

    RoyModelSpec flat = gains;
    flat.name = "homogeneous";
    flat.beta1 = flat.beta0;
    flat.sigma = covariance(0.0064, 0.0064, 1.0, 0.0032, -0.04, -0.04);
    out.push_back(flat);

    RoyModelSpec paper;
    paper.name = "paper-like";
    paper.covariates = {uniform("age", 16.0, 24.0), bernoulli("employed", 0.4), bernoulli("father_higher_edu", 0.2),
                        bernoulli("rural", 0.5)};
    paper.instruments = {uniform("distance", 0.0, 30.0)};
    paper.alpha0 = 12.0;
    paper.alpha1 = 12.3;
    paper.beta0.resize(4);
    paper.beta0 << 0.01, 0.05, 0.1, -0.1;
    paper.beta1.resize(4);
    paper.beta1 << 0.01, 0.05, 0.05, -0.05;
    paper.lambda.resize(6);
    paper.lambda << 1.6, 0.0, -0.2, 0.8, -0.3, -0.08;
    paper.sigma = covariance(0.16, 0.2025, 1.0, 0.09, -0.12, 0.09);
    paper.clusters = 300;
    out.push_back(paper);
    return out;
}

RoyModelSpec preset(const std::string &name) {
    for (auto &p : presets())
        if (p.name == name) return p;
    throw InputError("unknown preset '" + name + "' (known: homogeneous, selection-on-gains, paper-like)");
}

std::string spec_to_json(const RoyModelSpec &spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["covariates"] = ordered_json::array();
    for (const auto &v : spec.covariates) j["covariates"].push_back(variable_json(v));
    j["instruments"] = ordered_json::array();
    for (const auto &v : spec.instruments) j["instruments"].push_back(variable_json(v));
    j["alpha0"] = spec.alpha0;
    j["alpha1"] = spec.alpha1;
    j["beta0"] = std::vector<double>(spec.beta0.data(), spec.beta0.data() + spec.beta0.size());
    j["beta1"] = std::vector<double>(spec.beta1.data(), spec.beta1.data() + spec.beta1.size());
    j["lambda"] = std::vector<double>(spec.lambda.data(), spec.lambda.data() + spec.lambda.size());
    j["sigma"] = ordered_json::array();
    for (int r = 0; r < 3; ++r) j["sigma"].push_back({spec.sigma(r, 0), spec.sigma(r, 1), spec.sigma(r, 2)});
    j["clusters"] = spec.clusters;
    j["outcome"] = spec.outcome;
    j["treatment"] = spec.treatment;
    j["cluster_column"] = spec.cluster_column;
    return j.dump(2) + "\n";
}

RoyModelSpec spec_from_json(const std::string &text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("invalid spec JSON: ") + e.what());
    }
    reject_unknown(j, {"name", "covariates", "instruments", "alpha0", "alpha1", "beta0", "beta1", "lambda", "sigma",
                       "clusters", "outcome", "treatment", "cluster_column"},
                   "Roy model spec");
    RoyModelSpec spec;
    try {
        spec.name = j.value("name", std::string("custom"));
        for (const auto &v : j.value("covariates", ordered_json::array())) spec.covariates.push_back(variable_from(v));
        for (const auto &v : j.at("instruments")) spec.instruments.push_back(variable_from(v));
        spec.alpha0 = j.at("alpha0").get<double>();
        spec.alpha1 = j.at("alpha1").get<double>();
        spec.beta0 = vector_of(j.value("beta0", ordered_json::array()), "beta0");
        spec.beta1 = vector_of(j.value("beta1", ordered_json::array()), "beta1");
        spec.lambda = vector_of(j.at("lambda"), "lambda");
        const auto &s = j.at("sigma");
        if (!s.is_array() || s.size() != 3) throw InputError("sigma must be a 3x3 array");
        for (int r = 0; r < 3; ++r) {
            if (!s[static_cast<std::size_t>(r)].is_array() || s[static_cast<std::size_t>(r)].size() != 3)
                throw InputError("sigma must be a 3x3 array");
            for (int c = 0; c < 3; ++c) spec.sigma(r, c) = s[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
        }
        spec.clusters = j.value("clusters", std::size_t{0});
        spec.outcome = j.value("outcome", spec.outcome);
        spec.treatment = j.value("treatment", spec.treatment);
        spec.cluster_column = j.value("cluster_column", spec.cluster_column);
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("invalid spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

RoyModelSpec load_spec(const std::string &name_or_path) {
    for (const auto &p : presets())
        if (p.name == name_or_path) return p;
    if (!std::filesystem::exists(name_or_path))
        throw InputError("'" + name_or_path + "' is neither a preset nor a spec file");
    std::ifstream in(name_or_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return spec_from_json(ss.str());
}

void write_truth_csv(const Truth &truth, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "row,true_p,true_v,gain,ate_x\n";
    for (std::size_t i = 0; i < truth.p.size(); ++i)
        out << i << ',' << fmt(truth.p[i]) << ',' << fmt(truth.v[i]) << ',' << fmt(truth.gain[i]) << ','
            << fmt(truth.ate_x[i]) << '\n';
}

double ks_uniform(std::vector<double> values) {
    if (values.empty()) throw InputError("KS statistic of an empty sample");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double f = std::clamp(values[i], 0.0, 1.0);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

} // namespace mtekit

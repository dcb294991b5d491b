#include "mtekit/inference.hpp"
#include "mtekit/error.hpp"
#include "mtekit/local_linear.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace mtekit {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) {
    return splitmix64(master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(r) + 1));
}

std::vector<std::size_t> resample_units(std::size_t n_units, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::vector<std::size_t> out(draws);
    for (auto &d : out) {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        d = std::min(static_cast<std::size_t>(u * static_cast<double>(n_units)), n_units - 1);
    }
    return out;
}

Resample resample(const Dataset &data, const std::optional<std::string> &cluster, std::uint64_t seed) {
    Resample out;
    const std::size_t n = data.n_rows();
    if (n == 0) throw InputError("cannot resample an empty dataset");
    if (!cluster) {
        out.rows = resample_units(n, n, seed);
        return out;
    }
    auto ids = data.column(*cluster);
    std::set<double> distinct(ids.begin(), ids.end());
    std::vector<double> units(distinct.begin(), distinct.end());
    std::map<double, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[ids[i]].push_back(i);
    auto picks = resample_units(units.size(), units.size(), seed);
    for (std::size_t g = 0; g < picks.size(); ++g) {
        for (std::size_t row : members[units[picks[g]]]) {
            out.rows.push_back(row);
            out.cluster_ids.push_back(static_cast<double>(g));
        }
    }
    return out;
}

const std::vector<double> &BootstrapDraws::of(const std::string &name) const {
    auto it = draws.find(name);
    if (it == draws.end()) throw InputError("no bootstrap draws for '" + name + "'");
    return it->second;
}

BootstrapDraws bootstrap(const Pipeline &pipeline, const Dataset &data, const BootstrapOptions &options) {
    if (options.replications < 50)
        throw InputError("bootstrap needs at least 50 replications, got " + std::to_string(options.replications));
    if (options.cluster && !data.has_column(*options.cluster))
        throw InputError("cluster column '" + *options.cluster + "' is absent");

    const std::size_t b = options.replications;
    std::vector<std::optional<Estimates>> results(b);
    std::vector<std::string> errors(b);
    parallel_for(
        b,
        [&](std::size_t r) {
            try {
                Resample s = resample(data, options.cluster, replicate_seed(options.seed, r));
                Dataset replicate = data.select_rows(s.rows);
                if (options.cluster) replicate = replicate.with_column(*options.cluster, std::move(s.cluster_ids));
                results[r] = pipeline(replicate);
            } catch (const Error &e) {
                errors[r] = e.what();
            }
        },
        options.threads);

    BootstrapDraws out;
    out.replications = b;
    out.seed = options.seed;
    for (std::size_t r = 0; r < b; ++r) {
        if (!results[r]) {
            ++out.failures;
            ++out.failure_modes[errors[r]];
            continue;
        }
        if (out.names.empty())
            for (const auto &[name, value] : *results[r]) out.names.push_back(name);
        out.replicates.push_back(r);
        for (const auto &[name, value] : *results[r]) out.draws[name].push_back(value);
    }
    if (static_cast<double>(out.failures) > options.max_failure_share * static_cast<double>(b)) {
        std::string modes;
        for (const auto &[msg, count] : out.failure_modes) modes += "\n  " + std::to_string(count) + "x " + msg;
        throw NumericalError(std::to_string(out.failures) + " of " + std::to_string(b) +
                             " bootstrap replicates failed:" + modes);
    }
    return out;
}

std::pair<double, double> hpd_interval(std::span<const double> draws, double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("HPD level must lie in (0, 1)");
    std::vector<double> s;
    s.reserve(draws.size());
    for (double d : draws)
        if (!std::isnan(d)) s.push_back(d);
    if (s.size() < 10) throw InputError("HPD interval needs at least 10 draws, got " + std::to_string(s.size()));
    std::sort(s.begin(), s.end());
    const auto m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(s.size()) - 1e-9));
    std::size_t best = 0;
    for (std::size_t i = 1; i + m <= s.size(); ++i)
        if (s[i + m - 1] - s[i] < s[best + m - 1] - s[best]) best = i;
    return {s[best], s[best + m - 1]};
}

void write_draws_csv(const BootstrapDraws &draws, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "replicate,parameter,value\n";
    char buf[64];
    for (std::size_t k = 0; k < draws.replicates.size(); ++k) {
        for (const auto &name : draws.names) {
            const double v = draws.of(name)[k];
            out << draws.replicates[k] << ',' << name << ',';
            if (!std::isnan(v)) {
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
                out.write(buf, ptr - buf);
            }
            out << '\n';
        }
    }
}

} // namespace mtekit

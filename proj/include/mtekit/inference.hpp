#pragma once

#include "mtekit/dataset.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mtekit {

/// Named scalar results of one pipeline run, in reporting order.
using Estimates = std::vector<std::pair<std::string, double>>;
using Pipeline = std::function<Estimates(const Dataset &)>;

struct BootstrapOptions {
    std::size_t replications = 250;
    std::uint64_t seed = 1;
    /// Resample whole clusters identified by this column.
    std::optional<std::string> cluster;
    unsigned threads = 0;
    double max_failure_share = 0.2;
};

/** Replicate estimates of every named quantity.
 *
 * Failed replicates are dropped from `draws` and counted in `failures`, grouped by message in
 * `failure_modes`. `replicates` lists the indices of the successful ones.
 */
struct BootstrapDraws {
    std::vector<std::string> names;
    std::map<std::string, std::vector<double>> draws;
    std::vector<std::size_t> replicates;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
    std::size_t failures = 0;
    std::map<std::string, std::size_t> failure_modes;

    const std::vector<double> &of(const std::string &name) const;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Seed of replicate r: splitmix64(master + 0x9E3779B97F4A7C15 * (r + 1)).
std::uint64_t replicate_seed(std::uint64_t master, std::size_t r);
/// n draws from {0, ..., n_units - 1}: floor(u n_units) with u built from the top 53 bits of mt19937_64.
std::vector<std::size_t> resample_units(std::size_t n_units, std::size_t draws, std::uint64_t seed);

/** Row indices (and relabelled cluster ids) of one bootstrap sample.
 *
 * Without clusters: n rows drawn with replacement. With clusters: as many clusters as exist,
 * drawn with replacement from the sorted distinct ids; each drawn copy gets the draw position as
 * its new id, so repeated clusters stay distinct.
 */
struct Resample {
    std::vector<std::size_t> rows;
    std::vector<double> cluster_ids;
};
Resample resample(const Dataset &data, const std::optional<std::string> &cluster, std::uint64_t seed);

/** Runs `pipeline` on `replications` resamples of `data`.
 *
 * \throws InputError when fewer than 50 replications are requested
 * \throws NumericalError listing the failure modes when more than 20% of replicates fail
 */
BootstrapDraws bootstrap(const Pipeline &pipeline, const Dataset &data, const BootstrapOptions &options);

/** Shortest window of sorted draws holding ceil(level B) of them; ties go to the lowest window.
 *
 * NaN draws are ignored. \throws InputError with fewer than 10 usable draws
 */
std::pair<double, double> hpd_interval(std::span<const double> draws, double level = 0.95);

/// Columns replicate, parameter, value.
void write_draws_csv(const BootstrapDraws &draws, const std::string &path);

} // namespace mtekit

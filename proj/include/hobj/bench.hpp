#pragma once

#include <hobj/types.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hobj {

struct BenchConfig {
    std::vector<Index> lengths{1024, 2048, 4096, 8192, 16384, 32768, 65536};
    Index state = 16;
    Index channels = 8;
    std::vector<std::string> impls{"sequential", "chunked", "streaming"};
    Index chunk = 64;
    int repeats = 3; // best-of
    bool single_precision = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BenchRow {
    Index length = 0, state = 0, channels = 0;
    std::string impl;
    double seconds = 0;
    double elements_per_sec = 0; // L * D * N state updates per second
    double max_rel_error = 0;    // against scan_sequential in double precision
};

/// Times discretize_zoh followed by the scan kernel on seeded random inputs. Each repeat
/// averages over a batch of at least 20 ms; the best repeat is reported.
std::vector<BenchRow> run_scan_bench(const BenchConfig& cfg);

/// Least-squares slope of log(seconds) against log(L) for one implementation;
/// empty when fewer than two distinct lengths were measured.
std::optional<double> fit_time_exponent(const std::vector<BenchRow>& rows, const std::string& impl);

std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_table(const std::vector<BenchRow>& rows);

} // namespace hobj

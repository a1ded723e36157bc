#include <hobj/bench.hpp>

#include <hobj/error.hpp>
#include <hobj/rng.hpp>
#include <hobj/scan.hpp>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace hobj {

void BenchConfig::validate() const
{
    if (lengths.empty())
        throw ConfigError("scan-bench needs at least one length");
    for (Index l : lengths)
        if (l < 1)
            throw ConfigError("scan-bench lengths must be positive");
    if (state < 1 || channels < 1 || chunk < 1 || repeats < 1)
        throw ConfigError("scan-bench state, channels, chunk and repeats must be positive");
    for (const auto& i : impls)
        if (i != "sequential" && i != "chunked" && i != "streaming")
            throw ConfigError("unknown scan implementation '" + i + "' (expected sequential, chunked or streaming)");
}

namespace {

template <typename Scalar>
BenchRow time_impl(const std::string& impl, const RowMatrixXd& x, const RowMatrixXd& a, const RowMatrixXd& b, const RowMatrixXd& c, const RowMatrixXd& delta, Index chunk, int repeats, const RowMatrixXd& reference)
{
    const RowMatrix<Scalar> xs = x.cast<Scalar>(), as = a.cast<Scalar>(), bs = b.cast<Scalar>(), cs = c.cast<Scalar>(), ds = delta.cast<Scalar>();
    RowMatrix<Scalar> y;
    const auto run = [&] {
        if (impl == "streaming") {
            y = scan::scan_streaming<Scalar>(xs, as, bs, cs, ds);
        } else {
            const auto dp = scan::discretize_zoh<Scalar>(as, bs, ds);
            y = impl == "sequential" ? scan::scan_sequential<Scalar>(xs, dp, cs) : scan::scan_chunked<Scalar>(xs, dp, cs, std::nullopt, chunk);
        }
    };
    // Short sequences finish in well under a millisecond, so each repeat loops the kernel
    // for at least kMinBatch and records the mean per call.
    constexpr double kMinBatch = 0.02;
    run();
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        long calls = 0;
        double elapsed = 0;
        do {
            run();
            ++calls;
            elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } while (elapsed < kMinBatch);
        best = std::min(best, elapsed / static_cast<double>(calls));
    }
    BenchRow row;
    row.length = x.rows();
    row.channels = x.cols();
    row.state = a.cols();
    row.impl = impl;
    row.seconds = best;
    row.elements_per_sec = static_cast<double>(row.length * row.channels * row.state) / best;
    row.max_rel_error = scan::max_relative_error(y.template cast<double>(), reference);
    return row;
}

} // namespace

std::vector<BenchRow> run_scan_bench(const BenchConfig& cfg)
{
    cfg.validate();
    std::vector<BenchRow> rows;
    for (std::size_t li = 0; li < cfg.lengths.size(); ++li) {
        const Index l = cfg.lengths[li], d = cfg.channels, n = cfg.state;
        SplitMix64 rng = SplitMix64::stream(cfg.seed, li);
        const auto fill = [&rng](Index r, Index c, double lo, double hi) {
            RowMatrixXd m(r, c);
            for (Index i = 0; i < m.size(); ++i)
                m.data()[i] = rng.uniform(lo, hi);
            return m;
        };
        const RowMatrixXd x = fill(l, d, -1, 1), a = fill(d, n, -2, -0.1), b = fill(l, n, -1, 1), c = fill(l, n, -1, 1), delta = fill(l, d, 1e-3, 0.1);
        const RowMatrixXd reference = scan::scan_sequential<double>(x, scan::discretize_zoh<double>(a, b, delta), c);
        for (const auto& impl : cfg.impls)
            rows.push_back(cfg.single_precision ? time_impl<float>(impl, x, a, b, c, delta, cfg.chunk, cfg.repeats, reference) : time_impl<double>(impl, x, a, b, c, delta, cfg.chunk, cfg.repeats, reference));
    }
    return rows;
}

std::optional<double> fit_time_exponent(const std::vector<BenchRow>& rows, const std::string& impl)
{
    std::vector<double> lx, ly;
    std::set<Index> distinct;
    for (const auto& r : rows)
        if (r.impl == impl) {
            lx.push_back(std::log(static_cast<double>(r.length)));
            ly.push_back(std::log(r.seconds));
            distinct.insert(r.length);
        }
    if (distinct.size() < 2)
        return std::nullopt;
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxy / sxx;
}

std::string bench_csv(const std::vector<BenchRow>& rows)
{
    std::ostringstream os;
    os << "L,N,D,implementation,wall_time_s,elements_per_s,max_rel_err\n";
    os << std::setprecision(9);
    for (const auto& r : rows)
        os << r.length << ',' << r.state << ',' << r.channels << ',' << r.impl << ',' << r.seconds << ',' << r.elements_per_sec << ',' << r.max_rel_error << '\n';
    return os.str();
}

std::string bench_table(const std::vector<BenchRow>& rows)
{
    std::ostringstream os;
    os << std::left << std::setw(8) << "L" << std::setw(5) << "N" << std::setw(5) << "D" << std::setw(12) << "impl" << std::right << std::setw(14) << "time [s]" << std::setw(14) << "elem/s" << std::setw(14) << "max rel err" << '\n';
    for (const auto& r : rows)
        os << std::left << std::setw(8) << r.length << std::setw(5) << r.state << std::setw(5) << r.channels << std::setw(12) << r.impl << std::right << std::scientific << std::setprecision(3) << std::setw(14) << r.seconds << std::setw(14) << r.elements_per_sec << std::setw(14) << r.max_rel_error << std::defaultfloat << '\n';
    return os.str();
}

} // namespace hobj

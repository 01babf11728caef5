#ifndef AMRLITE_SCAN_HPP
#define AMRLITE_SCAN_HPP

// Chunked prefix sums over callables, and the counting-sort and stream
// compaction helpers built on them.

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

#include "core_index.hpp"

namespace amrlite {

enum class ScanKind { inclusive, exclusive };

struct ScanOptions
{
    std::int64_t chunk = 4096;
    int nthreads = 1;
};

/// reader(i) supplies element i and may be called more than once per index;
/// writer(i, partial) receives the running sum.  Chunks are reduced, their
/// totals scanned, and each chunk rescanned from its offset.  Exact for
/// integral T; for floating T the association differs from a left fold.
template <class T, class Reader, class Writer>
T prefix_scan(std::int64_t n, Reader&& reader, Writer&& writer, ScanKind kind, const ScanOptions& opt = {})
{
    if (n <= 0) return T{};
    const std::int64_t chunk = std::max<std::int64_t>(1, opt.chunk);
    const std::int64_t nchunks = (n + chunk - 1) / chunk;
    std::vector<T> totals(static_cast<std::size_t>(nchunks), T{});

    auto run = [&](auto&& body) {
        const int nt = static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(opt.nthreads, nchunks)));
        if (nt == 1) {
            for (std::int64_t c = 0; c < nchunks; ++c) body(c);
            return;
        }
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back([&, t] {
                for (std::int64_t c = t; c < nchunks; c += nt) body(c);
            });
        for (auto& th : pool) th.join();
    };

    run([&](std::int64_t c) {
        T s{};
        const std::int64_t e = std::min(n, (c + 1) * chunk);
        for (std::int64_t i = c * chunk; i < e; ++i) s += reader(i);
        totals[static_cast<std::size_t>(c)] = s;
    });
    std::vector<T> offsets(static_cast<std::size_t>(nchunks), T{});
    T total{};
    for (std::int64_t c = 0; c < nchunks; ++c) {
        offsets[static_cast<std::size_t>(c)] = total;
        total += totals[static_cast<std::size_t>(c)];
    }
    run([&](std::int64_t c) {
        T s = offsets[static_cast<std::size_t>(c)];
        const std::int64_t e = std::min(n, (c + 1) * chunk);
        for (std::int64_t i = c * chunk; i < e; ++i) {
            const T v = reader(i);
            if (kind == ScanKind::exclusive) {
                writer(i, s);
                s += v;
            } else {
                s += v;
                writer(i, s);
            }
        }
    });
    return total;
}

struct BinPermutation
{
    std::vector<std::int64_t> counts;
    std::vector<std::int64_t> offsets;
    std::vector<std::int64_t> permutation; // permutation[k] = original index at sorted slot k
};

/// Stable counting sort of indices by bin id.
inline BinPermutation bin_permutation(const std::vector<int>& bins, int nbins, const ScanOptions& opt = {})
{
    if (nbins < 0) throw Error("bin_permutation: nbins must be >= 0");
    BinPermutation r;
    r.counts.assign(static_cast<std::size_t>(nbins), 0);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const int b = bins[i];
        if (b < 0 || b >= nbins) throw Error("bin_permutation: bin id " + std::to_string(b) + " at index " + std::to_string(i) + " out of range");
        ++r.counts[static_cast<std::size_t>(b)];
    }
    r.offsets.assign(static_cast<std::size_t>(nbins), 0);
    prefix_scan<std::int64_t>(
        nbins, [&](std::int64_t i) { return r.counts[static_cast<std::size_t>(i)]; },
        [&](std::int64_t i, std::int64_t s) { r.offsets[static_cast<std::size_t>(i)] = s; }, ScanKind::exclusive, opt);
    r.permutation.assign(bins.size(), 0);
    std::vector<std::int64_t> cursor = r.offsets;
    for (std::size_t i = 0; i < bins.size(); ++i) r.permutation[static_cast<std::size_t>(cursor[static_cast<std::size_t>(bins[i])]++)] = static_cast<std::int64_t>(i);
    return r;
}

struct Compaction
{
    std::int64_t kept = 0;
    std::vector<std::int64_t> indices; // compact: kept indices; partition: full permutation
};

/// Indices i with pred(i), in order.
template <class Pred>
Compaction compact(std::int64_t n, Pred&& pred, const ScanOptions& opt = {})
{
    std::vector<unsigned char> flag(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
    for (std::int64_t i = 0; i < n; ++i) flag[static_cast<std::size_t>(i)] = pred(i) ? 1 : 0;
    std::vector<std::int64_t> slot(flag.size());
    Compaction c;
    c.kept = prefix_scan<std::int64_t>(
        n, [&](std::int64_t i) { return static_cast<std::int64_t>(flag[static_cast<std::size_t>(i)]); },
        [&](std::int64_t i, std::int64_t s) { slot[static_cast<std::size_t>(i)] = s; }, ScanKind::exclusive, opt);
    c.indices.assign(static_cast<std::size_t>(c.kept), 0);
    for (std::int64_t i = 0; i < n; ++i)
        if (flag[static_cast<std::size_t>(i)]) c.indices[static_cast<std::size_t>(slot[static_cast<std::size_t>(i)])] = i;
    return c;
}

/// Stable partition: indices with pred(i) first, then the rest.
template <class Pred>
Compaction partition(std::int64_t n, Pred&& pred, const ScanOptions& opt = {})
{
    std::vector<unsigned char> flag(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
    for (std::int64_t i = 0; i < n; ++i) flag[static_cast<std::size_t>(i)] = pred(i) ? 1 : 0;
    Compaction yes = compact(n, [&](std::int64_t i) { return flag[static_cast<std::size_t>(i)] != 0; }, opt);
    Compaction no = compact(n, [&](std::int64_t i) { return flag[static_cast<std::size_t>(i)] == 0; }, opt);
    yes.indices.insert(yes.indices.end(), no.indices.begin(), no.indices.end());
    return yes;
}

} // namespace amrlite

#endif // AMRLITE_SCAN_HPP

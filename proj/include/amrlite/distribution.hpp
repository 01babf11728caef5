#ifndef AMRLITE_DISTRIBUTION_HPP
#define AMRLITE_DISTRIBUTION_HPP

// Box-to-rank assignment: Morton space-filling-curve and knapsack (LPT)
// strategies, plus load-balance statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "box_array.hpp"

namespace amrlite {

class DistributionMapping
{
  public:
    DistributionMapping() = default;
    DistributionMapping(std::vector<int> owner, int nranks) : owner_(std::move(owner)), nranks_(nranks)
    {
        if (nranks_ < 1) throw Error("DistributionMapping: nranks must be >= 1");
        for (int r : owner_)
            if (r < 0 || r >= nranks_) throw Error("DistributionMapping: owner " + std::to_string(r) + " out of range");
    }

    /// Everything on rank 0.
    static DistributionMapping single_rank(int nboxes) { return DistributionMapping(std::vector<int>(static_cast<std::size_t>(nboxes), 0), 1); }

    int size() const noexcept { return static_cast<int>(owner_.size()); }
    int nranks() const noexcept { return nranks_; }
    int operator[](int i) const { return owner_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& owners() const noexcept { return owner_; }

    std::vector<int> boxes_of(int rank) const
    {
        std::vector<int> v;
        for (int i = 0; i < size(); ++i)
            if (owner_[static_cast<std::size_t>(i)] == rank) v.push_back(i);
        return v;
    }

    friend bool operator==(const DistributionMapping&, const DistributionMapping&) = default;

  private:
    std::vector<int> owner_;
    int nranks_ = 1;
};

/// Per-box costs; the default is the cell count of each box.
using CostVector = std::vector<double>;

template <int D>
CostVector cell_count_costs(const BoxArray<D>& ba)
{
    CostVector c;
    c.reserve(ba.size());
    for (const auto& b : ba) c.push_back(static_cast<double>(b.num_cells()));
    return c;
}

/// Bits available per dimension in a 64-bit Morton key.
template <int D>
constexpr int morton_bits() noexcept
{
    return D == 1 ? 63 : (D == 2 ? 31 : 21);
}

/// Interleave the bits of (p - domain.lo); dimension 0 occupies the least
/// significant slot of each group.
template <int D>
std::uint64_t morton_key(const IntVect<D>& p, const Box<D>& domain)
{
    constexpr int bits = morton_bits<D>();
    std::uint64_t key = 0;
    for (int d = 0; d < D; ++d) {
        const std::int64_t c = static_cast<std::int64_t>(p[d]) - domain.lo(d);
        if (c < 0 || c >= (std::int64_t{1} << bits)) {
            throw Error("morton_key: coordinate " + p.str() + " outside key range of " + domain.str());
        }
        for (int b = 0; b < bits; ++b) {
            if ((c >> b) & 1) key |= std::uint64_t{1} << (b * D + d);
        }
    }
    return key;
}

/// Floor midpoint used to place a box on the curve.
template <int D>
IntVect<D> sfc_center(const Box<D>& b)
{
    IntVect<D> c;
    for (int d = 0; d < D; ++d) c[d] = floor_div(b.lo(d) + b.hi(d), 2);
    return c;
}

/// Box indices in curve order (ties broken by index).
template <int D>
std::vector<int> morton_order(const BoxArray<D>& ba)
{
    const Box<D> dom = ba.minimal_box();
    std::vector<std::pair<std::uint64_t, int>> keyed;
    keyed.reserve(ba.size());
    for (int i = 0; i < ba.size(); ++i) keyed.emplace_back(morton_key(sfc_center(convert(ba[i], IndexType<D>::cell())), convert(dom, IndexType<D>::cell())), i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<int> order;
    order.reserve(keyed.size());
    for (auto& k : keyed) order.push_back(k.second);
    return order;
}

/// Split an ordered sequence of costs into nranks contiguous runs by greedy
/// accumulation toward the running target (r+1)*total/nranks.  Every rank
/// receives at least one item while items remain.
inline std::vector<int> greedy_contiguous_split(const std::vector<double>& ordered_costs, int nranks)
{
    const int n = static_cast<int>(ordered_costs.size());
    std::vector<int> rank_of(static_cast<std::size_t>(n), 0);
    const double total = std::accumulate(ordered_costs.begin(), ordered_costs.end(), 0.0);
    int idx = 0;
    double cum = 0.0;
    for (int r = 0; r < nranks && idx < n; ++r) {
        const int ranks_after = nranks - r - 1;
        if (ranks_after == 0) {
            for (; idx < n; ++idx) rank_of[static_cast<std::size_t>(idx)] = r;
            break;
        }
        const double target = total * (r + 1) / nranks;
        rank_of[static_cast<std::size_t>(idx)] = r;
        cum += ordered_costs[static_cast<std::size_t>(idx++)];
        while (idx < n && (n - idx) > ranks_after) {
            const double c = ordered_costs[static_cast<std::size_t>(idx)];
            if (cum + c <= target) {
                rank_of[static_cast<std::size_t>(idx++)] = r;
                cum += c;
                continue;
            }
            if (cum + c - target < target - cum) {
                rank_of[static_cast<std::size_t>(idx++)] = r;
                cum += c;
            }
            break;
        }
    }
    return rank_of;
}

template <int D>
DistributionMapping sfc_distribute(const BoxArray<D>& ba, const CostVector& cost, int nranks)
{
    if (nranks < 1) throw Error("sfc_distribute: nranks must be >= 1");
    if (static_cast<int>(cost.size()) != ba.size()) throw Error("sfc_distribute: cost length mismatch");
    const auto order = morton_order(ba);
    std::vector<double> ordered;
    ordered.reserve(order.size());
    for (int i : order) ordered.push_back(cost[static_cast<std::size_t>(i)]);
    const auto split = greedy_contiguous_split(ordered, nranks);
    std::vector<int> owner(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) owner[static_cast<std::size_t>(order[k])] = split[k];
    return DistributionMapping(std::move(owner), nranks);
}

template <int D>
DistributionMapping sfc_distribute(const BoxArray<D>& ba, int nranks)
{
    return sfc_distribute(ba, cell_count_costs(ba), nranks);
}

namespace detail {

/// Move or swap single items between the heaviest rank and the others while
/// that strictly lowers the heavier of the two loads.
inline void refine_knapsack(const CostVector& cost, std::vector<int>& owner, std::vector<double>& load)
{
    const int nranks = static_cast<int>(load.size());
    const int max_iter = 64 * static_cast<int>(cost.size()) + 64;
    std::vector<std::vector<int>> items(static_cast<std::size_t>(nranks));
    for (std::size_t i = 0; i < owner.size(); ++i) items[static_cast<std::size_t>(owner[i])].push_back(static_cast<int>(i));
    for (int iter = 0; iter < max_iter; ++iter) {
        const int h = static_cast<int>(std::max_element(load.begin(), load.end()) - load.begin());
        const double lh = load[static_cast<std::size_t>(h)];
        double best = lh;
        int best_l = -1, best_a = -1, best_b = -1;
        for (int l = 0; l < nranks; ++l) {
            if (l == h) continue;
            const double ll = load[static_cast<std::size_t>(l)];
            for (int a : items[static_cast<std::size_t>(h)]) {
                const double ca = cost[static_cast<std::size_t>(a)];
                const double moved = std::max(lh - ca, ll + ca);
                if (moved < best) {
                    best = moved;
                    best_l = l, best_a = a, best_b = -1;
                }
                for (int b : items[static_cast<std::size_t>(l)]) {
                    const double cb = cost[static_cast<std::size_t>(b)];
                    if (cb >= ca) continue;
                    const double swapped = std::max(lh - ca + cb, ll + ca - cb);
                    if (swapped < best) {
                        best = swapped;
                        best_l = l, best_a = a, best_b = b;
                    }
                }
            }
        }
        if (best_l < 0) return;
        auto erase = [](std::vector<int>& v, int x) { v.erase(std::find(v.begin(), v.end(), x)); };
        const double ca = cost[static_cast<std::size_t>(best_a)];
        erase(items[static_cast<std::size_t>(h)], best_a);
        items[static_cast<std::size_t>(best_l)].push_back(best_a);
        owner[static_cast<std::size_t>(best_a)] = best_l;
        load[static_cast<std::size_t>(h)] -= ca;
        load[static_cast<std::size_t>(best_l)] += ca;
        if (best_b >= 0) {
            const double cb = cost[static_cast<std::size_t>(best_b)];
            erase(items[static_cast<std::size_t>(best_l)], best_b);
            items[static_cast<std::size_t>(h)].push_back(best_b);
            owner[static_cast<std::size_t>(best_b)] = h;
            load[static_cast<std::size_t>(best_l)] -= cb;
            load[static_cast<std::size_t>(h)] += cb;
        }
    }
}

} // namespace detail

/// Longest-processing-time greedy: heaviest item first onto the least loaded
/// rank, ties to the lower rank id.  A refinement pass of single moves and
/// pairwise swaps off the heaviest rank follows (disable with refine=false).
inline DistributionMapping knapsack_distribute(const CostVector& cost, int nranks, bool refine = true)
{
    if (nranks < 1) throw Error("knapsack_distribute: nranks must be >= 1");
    std::vector<int> order(cost.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cost[static_cast<std::size_t>(a)] > cost[static_cast<std::size_t>(b)]; });
    std::vector<double> load(static_cast<std::size_t>(nranks), 0.0);
    std::vector<int> owner(cost.size(), 0);
    for (int i : order) {
        const auto r = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
        owner[static_cast<std::size_t>(i)] = static_cast<int>(r);
        load[r] += cost[static_cast<std::size_t>(i)];
    }
    if (refine) detail::refine_knapsack(cost, owner, load);
    return DistributionMapping(std::move(owner), nranks);
}

struct LoadStats
{
    std::vector<double> load;
    double max_load = 0.0;
    double mean_load = 0.0;
    double efficiency = 1.0;
};

inline LoadStats load_stats(const DistributionMapping& dm, const CostVector& cost)
{
    if (static_cast<int>(cost.size()) != dm.size()) throw Error("load_stats: cost length mismatch");
    LoadStats s;
    s.load.assign(static_cast<std::size_t>(dm.nranks()), 0.0);
    for (int i = 0; i < dm.size(); ++i) s.load[static_cast<std::size_t>(dm[i])] += cost[static_cast<std::size_t>(i)];
    s.max_load = *std::max_element(s.load.begin(), s.load.end());
    s.mean_load = std::accumulate(s.load.begin(), s.load.end(), 0.0) / dm.nranks();
    s.efficiency = s.max_load > 0.0 ? s.mean_load / s.max_load : 1.0;
    return s;
}

} // namespace amrlite

#endif // AMRLITE_DISTRIBUTION_HPP

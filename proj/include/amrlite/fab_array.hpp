#ifndef AMRLITE_FAB_ARRAY_HPP
#define AMRLITE_FAB_ARRAY_HPP

// FabArray: one Fab per box of a BoxArray, each owned by the rank given in a
// DistributionMapping.  Ghost exchange (fill_boundary), inter-array copy
// (parallel_copy) and ghost summation (sum_boundary) run over a Transport as
// supersteps: data crossing ranks is packed into a single buffer per
// (src rank, dst rank) pair, data staying on a rank is copied directly.
// Records are applied in plan order, so results do not depend on the
// distribution mapping.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "box_array.hpp"
#include "distribution.hpp"
#include "fab.hpp"
#include "transport.hpp"

namespace amrlite {

/// Domain box plus per-direction periodicity, used to generate periodic images.
template <int D>
struct Periodicity
{
    Box<D> domain;
    std::array<bool, D> periodic{};

    static Periodicity none(const Box<D>& dom = Box<D>()) { return Periodicity{dom, {}}; }
    static Periodicity all(const Box<D>& dom)
    {
        Periodicity p{dom, {}};
        p.periodic.fill(true);
        return p;
    }

    bool any() const noexcept
    {
        for (bool b : periodic)
            if (b) return true;
        return false;
    }

    /// Zero shift first, then every combination of +-L in periodic directions.
    std::vector<IntVect<D>> shifts() const
    {
        std::vector<IntVect<D>> out{IntVect<D>(0)};
        Box<D> range(IntVect<D>(-1), IntVect<D>(1));
        for_each_cell(range, [&](const IntVect<D>& s) {
            if (s == IntVect<D>(0)) return;
            IntVect<D> v(0);
            for (int d = 0; d < D; ++d) {
                if (s[d] != 0 && !periodic[d]) return;
                v[d] = s[d] * domain.length(d);
            }
            out.push_back(v);
        });
        return out;
    }

    /// Map p into the domain along periodic directions.
    IntVect<D> wrap(IntVect<D> p) const
    {
        for (int d = 0; d < D; ++d) {
            if (!periodic[d]) continue;
            const int L = domain.length(d);
            p[d] = domain.lo(d) + ((p[d] - domain.lo(d)) % L + L) % L;
        }
        return p;
    }

    std::string key() const
    {
        std::string s = domain.str();
        for (bool b : periodic) s += b ? 'P' : '-';
        return s;
    }
};

/// One congruent copy: src_box in src_index maps onto dst_box in dst_index.
template <int D>
struct CopyRecord
{
    int src_index = 0;
    int dst_index = 0;
    Box<D> src_box;
    Box<D> dst_box;
};

template <int D>
struct CommPlan
{
    std::vector<CopyRecord<D>> records;
};

/// Process-wide instrumentation counters.
struct CommCounters
{
    static std::atomic<std::int64_t>& plans_built()
    {
        static std::atomic<std::int64_t> n{0};
        return n;
    }
};

namespace detail {

template <int D>
void sort_records(std::vector<CopyRecord<D>>& recs)
{
    std::stable_sort(recs.begin(), recs.end(), [](const CopyRecord<D>& a, const CopyRecord<D>& b) {
        if (a.dst_index != b.dst_index) return a.dst_index < b.dst_index;
        if (a.dst_box.lo() != b.dst_box.lo()) return lex_less(a.dst_box.lo(), b.dst_box.lo());
        return a.src_index < b.src_index;
    });
}

template <int D>
std::string content_key(const BoxArray<D>& ba)
{
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& b : ba) {
        for (int d = 0; d < D; ++d) {
            h = (h ^ static_cast<std::uint32_t>(b.lo(d))) * 1099511628211ull;
            h = (h ^ static_cast<std::uint32_t>(b.hi(d))) * 1099511628211ull;
        }
    }
    return std::to_string(ba.size()) + ":" + std::to_string(h);
}

} // namespace detail

template <int D>
CommPlan<D> make_fill_boundary_plan(const BoxArray<D>& ba, int ngrow, const Periodicity<D>& period)
{
    CommPlan<D> plan;
    if (ngrow <= 0) return plan;
    const auto shifts = period.shifts();
    for (int i = 0; i < ba.size(); ++i) {
        const Box<D> gbox = grow(ba[i], ngrow);
        for (const auto& s : shifts) {
            for (auto& [j, ov] : ba.intersections(shift(gbox, -s))) {
                if (j == i && s == IntVect<D>(0)) continue;
                plan.records.push_back({j, i, ov, shift(ov, s)});
            }
        }
    }
    detail::sort_records(plan.records);
    return plan;
}

template <int D>
CommPlan<D> make_copy_plan(const BoxArray<D>& dst, int dst_ngrow, const BoxArray<D>& src, const Periodicity<D>& period)
{
    CommPlan<D> plan;
    const auto shifts = period.shifts();
    for (int i = 0; i < dst.size(); ++i) {
        const Box<D> region = grow(dst[i], dst_ngrow);
        for (const auto& s : shifts) {
            for (auto& [j, ov] : src.intersections(shift(region, -s))) plan.records.push_back({j, i, ov, shift(ov, s)});
        }
    }
    detail::sort_records(plan.records);
    return plan;
}

template <int D, class T = double>
class FabArray
{
  public:
    using value_type = T;

    FabArray() = default;
    FabArray(BoxArray<D> ba, DistributionMapping dm, int ncomp, int ngrow, T init = T{})
        : ba_(std::move(ba)), dm_(std::move(dm)), ncomp_(ncomp), ngrow_(ngrow)
    {
        if (dm_.size() != ba_.size()) throw Error("FabArray: DistributionMapping size does not match BoxArray");
        fabs_.reserve(static_cast<std::size_t>(ba_.size()));
        for (int i = 0; i < ba_.size(); ++i) fabs_.emplace_back(ba_[i], ncomp, ngrow, init);
    }

    const BoxArray<D>& box_array() const noexcept { return ba_; }
    const DistributionMapping& distribution_map() const noexcept { return dm_; }
    int ncomp() const noexcept { return ncomp_; }
    int ngrow() const noexcept { return ngrow_; }
    int size() const noexcept { return ba_.size(); }
    int nranks() const noexcept { return dm_.nranks(); }
    int owner(int i) const { return dm_[i]; }
    IndexType<D> ixtype() const noexcept { return ba_.ixtype(); }

    Fab<D, T>& fab(int i) { return fabs_.at(static_cast<std::size_t>(i)); }
    const Fab<D, T>& fab(int i) const { return fabs_.at(static_cast<std::size_t>(i)); }
    Fab<D, T>& operator[](int i) { return fab(i); }
    const Fab<D, T>& operator[](int i) const { return fab(i); }

    /// Box indices held by `rank`, in index order.
    std::vector<int> local_indices(int rank) const { return dm_.boxes_of(rank); }

    void set_val(T v)
    {
        for (auto& f : fabs_) f.set_val(v);
    }

    /// Set every ghost cell (not the valid region) of every Fab.
    void set_ghost(T v)
    {
        for (auto& f : fabs_) {
            for (const auto& b : complement_in(f.grown_box(), BoxArray<D>(f.box())))
                for (int n = 0; n < ncomp_; ++n) f.set_val(v, b, n, 1);
        }
    }

    /// Per-box partial of comp over valid cells combined in box-index order.
    T sum_valid(int comp = 0) const
    {
        T total{};
        for (const auto& f : fabs_) {
            T part{};
            for_each_cell(f.box(), [&](const IntVect<D>& p) { part += f(p, comp); });
            total += part;
        }
        return total;
    }

    friend bool bit_identical(const FabArray& a, const FabArray& b, bool include_ghosts = true)
    {
        if (a.size() != b.size() || a.ncomp_ != b.ncomp_) return false;
        for (int i = 0; i < a.size(); ++i) {
            const auto& fa = a.fab(i);
            const auto& fb = b.fab(i);
            if (fa.box() != fb.box()) return false;
            if (include_ghosts) {
                if (fa.ngrow() != fb.ngrow()) return false;
                if (std::memcmp(fa.data().data(), fb.data().data(), fa.size() * sizeof(T)) != 0) return false;
            } else {
                bool same = true;
                for (int n = 0; n < a.ncomp_ && same; ++n)
                    for_each_cell(fa.box(), [&](const IntVect<D>& p) {
                        if (std::memcmp(&fa(p, n), &fb(p, n), sizeof(T)) != 0) same = false;
                    });
                if (!same) return false;
            }
        }
        return true;
    }

  private:
    BoxArray<D> ba_;
    DistributionMapping dm_;
    int ncomp_ = 0;
    int ngrow_ = 0;
    std::vector<Fab<D, T>> fabs_;
};

namespace detail {

/// Execute a plan.  In copy mode, src(src_box) -> dst(dst_box).  In add-back
/// mode the direction is reversed and values accumulate: dst(dst_box) is
/// added into src(src_box).
template <int D, class T, bool AddBack>
void execute_plan(const CommPlan<D>& plan, FabArray<D, T>* dst, const FabArray<D, T>* src_const,
                  int scomp, int dcomp, int nc, Transport& tr)
{
    const int R = tr.nranks();
    if (dst->nranks() > R || src_const->nranks() > R) throw Error("Transport has fewer ranks than the distribution mapping");
    // In add-back mode the "sender" is the owner of dst_box and the receiver
    // is the owner of src_box.
    auto sender = [&](const CopyRecord<D>& r) { return AddBack ? dst->owner(r.dst_index) : src_const->owner(r.src_index); };
    auto receiver = [&](const CopyRecord<D>& r) { return AddBack ? src_const->owner(r.src_index) : dst->owner(r.dst_index); };

    const int tag = tr.next_tag();
    const std::size_t nrec = plan.records.size();
    std::vector<std::size_t> offset(nrec, 0);

    // Pack: one buffer per (sender, receiver) pair, records in plan order.
    std::map<std::pair<int, int>, Buffer> outgoing;
    for (std::size_t k = 0; k < nrec; ++k) {
        const auto& r = plan.records[k];
        const int s = sender(r), t = receiver(r);
        if (s == t) continue;
        Buffer& buf = outgoing[{s, t}];
        offset[k] = buf.size();
        if constexpr (AddBack)
            dst->fab(r.dst_index).pack(buf, r.dst_box, dcomp, nc);
        else
            src_const->fab(r.src_index).pack(buf, r.src_box, scomp, nc);
    }
    for (auto& [pair, buf] : outgoing) tr.send(pair.first, pair.second, tag, std::move(buf));

    // Unpack: every receiver drains its mailbox, then applies records in plan order.
    std::map<std::pair<int, int>, Buffer> incoming;
    for (int t = 0; t < R; ++t)
        for (auto& m : tr.receive_all(t, tag)) incoming[{m.src, m.dst}] = std::move(m.data);

    for (std::size_t k = 0; k < nrec; ++k) {
        const auto& r = plan.records[k];
        const int s = sender(r), t = receiver(r);
        if constexpr (AddBack) {
            auto& target = const_cast<FabArray<D, T>*>(src_const)->fab(r.src_index);
            if (s == t) {
                target.add_from(dst->fab(r.dst_index), r.dst_box, dcomp, r.src_box, scomp, nc);
            } else {
                auto it = incoming.find({s, t});
                if (it == incoming.end()) throw Error("missing message from rank " + std::to_string(s) + " to rank " + std::to_string(t));
                std::size_t off = offset[k];
                target.template unpack<true>(it->second, off, r.src_box, scomp, nc);
            }
        } else {
            auto& target = dst->fab(r.dst_index);
            if (s == t) {
                target.copy_from(src_const->fab(r.src_index), r.src_box, scomp, r.dst_box, dcomp, nc);
            } else {
                auto it = incoming.find({s, t});
                if (it == incoming.end()) throw Error("missing message from rank " + std::to_string(s) + " to rank " + std::to_string(t));
                std::size_t off = offset[k];
                target.template unpack<false>(it->second, off, r.dst_box, dcomp, nc);
            }
        }
    }
}

template <int D, class T>
void require_cell(const FabArray<D, T>& fa, const char* what)
{
    if (!fa.ixtype().is_cell()) throw Error(std::string(what) + ": only cell-centered FabArrays are supported");
}

} // namespace detail

/// Cached ghost-exchange plan for (ba, ngrow, periodicity).
template <int D>
std::shared_ptr<const CommPlan<D>> fill_boundary_plan(const BoxArray<D>& ba, int ngrow, const Periodicity<D>& period)
{
    const std::string key = "fb:" + std::to_string(ngrow) + ":" + period.key();
    return ba.template cached<CommPlan<D>>(key, [&] {
        ++CommCounters::plans_built();
        return make_fill_boundary_plan(ba, ngrow, period);
    });
}

/// Fill every ghost cell that overlaps another box's valid region (or its
/// periodic image) with that valid value.  Other ghosts are left untouched.
template <int D, class T>
void fill_boundary(FabArray<D, T>& fa, Transport& tr, const Periodicity<D>& period = Periodicity<D>::none(), int ngrow = -1)
{
    detail::require_cell(fa, "fill_boundary");
    const int ng = ngrow < 0 ? fa.ngrow() : std::min(ngrow, fa.ngrow());
    if (ng == 0) return;
    auto plan = fill_boundary_plan(fa.box_array(), ng, period);
    detail::execute_plan<D, T, false>(*plan, &fa, &fa, 0, 0, fa.ncomp(), tr);
}

/// Add each ghost cell's value into the valid cell it overlaps (periodic images
/// included).  Ghost values are unspecified afterwards.
template <int D, class T>
void sum_boundary(FabArray<D, T>& fa, Transport& tr, const Periodicity<D>& period = Periodicity<D>::none())
{
    detail::require_cell(fa, "sum_boundary");
    if (fa.ngrow() < 1) throw Error("sum_boundary: FabArray has no ghost cells");
    auto plan = fill_boundary_plan(fa.box_array(), fa.ngrow(), period);
    detail::execute_plan<D, T, true>(*plan, &fa, &fa, 0, 0, fa.ncomp(), tr);
}

/// dst(valid + dst_ngrow ghosts) <- src(valid) wherever they overlap.
template <int D, class T>
void parallel_copy(FabArray<D, T>& dst, const FabArray<D, T>& src, Transport& tr, int scomp, int dcomp, int ncomp,
                   int dst_ngrow = 0, const Periodicity<D>& period = Periodicity<D>::none())
{
    detail::require_cell(dst, "parallel_copy");
    detail::require_cell(src, "parallel_copy");
    if (scomp < 0 || dcomp < 0 || scomp + ncomp > src.ncomp() || dcomp + ncomp > dst.ncomp()) {
        throw Error("parallel_copy: incompatible component counts (src " + std::to_string(src.ncomp()) + ", dst " + std::to_string(dst.ncomp()) + ")");
    }
    if (dst_ngrow > dst.ngrow()) throw Error("parallel_copy: dst_ngrow exceeds destination ghost width");
    const std::string key = "pc:" + detail::content_key(src.box_array()) + ":" + std::to_string(dst_ngrow) + ":" + period.key();
    auto plan = dst.box_array().template cached<CommPlan<D>>(key, [&] {
        ++CommCounters::plans_built();
        return make_copy_plan(dst.box_array(), dst_ngrow, src.box_array(), period);
    });
    detail::execute_plan<D, T, false>(*plan, &dst, &src, scomp, dcomp, ncomp, tr);
}

template <int D, class T>
void parallel_copy(FabArray<D, T>& dst, const FabArray<D, T>& src, Transport& tr)
{
    if (src.ncomp() != dst.ncomp()) throw Error("parallel_copy: incompatible component counts");
    parallel_copy(dst, src, tr, 0, 0, src.ncomp());
}

/// Partition b into tiles cut at multiples of tile_size from b.lo().
template <int D>
std::vector<Box<D>> tiles_of(const Box<D>& b, const IntVect<D>& tile_size)
{
    for (int d = 0; d < D; ++d)
        if (tile_size[d] < 1) throw Error("tile size must be >= 1");
    return max_size(BoxArray<D>(b), tile_size).boxes();
}

/// Tile size that disables tiling.
template <int D>
IntVect<D> no_tiling()
{
    return IntVect<D>(std::numeric_limits<int>::max() / 4);
}

/// Invoke body(box_index, tile) once per tile of every box owned by `rank`.
template <int D, class T, class F>
void iterate_tiles(const FabArray<D, T>& fa, int rank, const IntVect<D>& tile_size, F&& body)
{
    for (int i : fa.local_indices(rank))
        for (const auto& t : tiles_of(fa.box_array()[i], tile_size)) body(i, t);
}

/// All ranks in turn.
template <int D, class T, class F>
void iterate_tiles(const FabArray<D, T>& fa, const IntVect<D>& tile_size, F&& body)
{
    for (int r = 0; r < fa.nranks(); ++r) iterate_tiles(fa, r, tile_size, body);
}

enum class ReduceOp { sum, min, max };

/// Reduction of one component over valid cells.  Per-box partials travel to
/// rank 0 and are combined in box-index order, so the result does not depend
/// on the distribution mapping.
template <int D, class T>
T reduce(const FabArray<D, T>& fa, ReduceOp op, int comp, Transport& tr)
{
    if (comp < 0 || comp >= fa.ncomp()) throw Error("reduce: component out of range");
    auto combine = [op](T a, T b) -> T {
        switch (op) {
        case ReduceOp::sum: return a + b;
        case ReduceOp::min: return std::min(a, b);
        case ReduceOp::max: return std::max(a, b);
        }
        return a;
    };
    const T identity = op == ReduceOp::sum ? T{} : (op == ReduceOp::min ? std::numeric_limits<T>::max() : std::numeric_limits<T>::lowest());
    std::vector<T> partial(static_cast<std::size_t>(fa.size()), identity);
    const int tag = tr.next_tag();
    for (int r = 0; r < fa.nranks(); ++r) {
        Buffer buf;
        for (int i : fa.local_indices(r)) {
            T part = identity;
            const auto& f = fa.fab(i);
            for_each_cell(f.box(), [&](const IntVect<D>& p) { part = combine(part, f(p, comp)); });
            if (r == 0) {
                partial[static_cast<std::size_t>(i)] = part;
            } else {
                detail::append_pod(buf, static_cast<std::int32_t>(i));
                detail::append_pod(buf, part);
            }
        }
        if (r != 0 && !buf.empty()) tr.send(r, 0, tag, std::move(buf));
    }
    for (auto& m : tr.receive_all(0, tag)) {
        std::size_t off = 0;
        while (off < m.data.size()) {
            const auto i = detail::read_pod<std::int32_t>(m.data, off);
            partial[static_cast<std::size_t>(i)] = detail::read_pod<T>(m.data, off);
        }
    }
    T result = identity;
    for (T p : partial) result = combine(result, p);
    return result;
}

} // namespace amrlite

#endif // AMRLITE_FAB_ARRAY_HPP

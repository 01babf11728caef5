#ifndef AMRLITE_BOX_ARRAY_HPP
#define AMRLITE_BOX_ARRAY_HPP

// BoxArray: an ordered, non-overlapping collection of boxes describing one
// level's decomposition.  Copies share the same immutable box list, the
// lazily-built intersection hash and a cache of communication metadata keyed
// on the array's identity.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core_index.hpp"

namespace amrlite {

/// Uniform binning of boxes with the component-wise maximum box extent as bin size.
template <int D>
class BoxHash
{
  public:
    BoxHash() = default;

    /// `cell_boxes` must all be cell-centered and non-empty.
    explicit BoxHash(const std::vector<Box<D>>& cell_boxes)
    {
        if (cell_boxes.empty()) return;
        bin_ = IntVect<D>(1);
        origin_ = cell_boxes.front().lo();
        for (const auto& b : cell_boxes) {
            bin_ = elementwise_max(bin_, b.length());
            origin_ = elementwise_min(origin_, b.lo());
        }
        for (int i = 0; i < static_cast<int>(cell_boxes.size()); ++i) {
            for_each_cell(key_range(cell_boxes[i]), [&](const IntVect<D>& k) { map_[k].push_back(i); });
        }
    }

    const IntVect<D>& bin_size() const noexcept { return bin_; }
    std::size_t num_bins() const noexcept { return map_.size(); }

    /// Box indices registered in `key`, or nullptr.
    const std::vector<int>* bin(const IntVect<D>& key) const
    {
        auto it = map_.find(key);
        return it == map_.end() ? nullptr : &it->second;
    }

    /// Range of bin keys touched by a cell box.
    Box<D> key_range(const Box<D>& cell_box) const
    {
        return Box<D>(floor_div(cell_box.lo() - origin_, bin_), floor_div(cell_box.hi() - origin_, bin_));
    }

    /// Candidate box indices whose bins overlap `cell_box`, sorted and unique.
    std::vector<int> candidates(const Box<D>& cell_box, std::int64_t* bins_examined = nullptr) const
    {
        std::vector<int> out;
        if (map_.empty() || cell_box.empty()) {
            if (bins_examined) *bins_examined = 0;
            return out;
        }
        const Box<D> keys = key_range(cell_box);
        if (bins_examined) *bins_examined = keys.num_cells();
        for_each_cell(keys, [&](const IntVect<D>& k) {
            if (const auto* v = bin(k)) out.insert(out.end(), v->begin(), v->end());
        });
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

  private:
    IntVect<D> bin_{1};
    IntVect<D> origin_{0};
    std::unordered_map<IntVect<D>, std::vector<int>> map_;
};

template <int D>
struct BoxArrayCheck
{
    bool ok = true;
    int first = -1;
    int second = -1;
    std::string message;
};

template <int D>
class BoxArray
{
  public:
    using value_type = Box<D>;

    BoxArray() : rep_(std::make_shared<Rep>()) {}

    explicit BoxArray(std::vector<Box<D>> boxes) : rep_(std::make_shared<Rep>())
    {
        if (!boxes.empty()) rep_->ixtype = boxes.front().ixtype();
        rep_->boxes = std::move(boxes);
    }

    explicit BoxArray(const Box<D>& b) : BoxArray(std::vector<Box<D>>{b}) {}

    int size() const noexcept { return static_cast<int>(rep_->boxes.size()); }
    bool empty() const noexcept { return rep_->boxes.empty(); }
    const Box<D>& operator[](int i) const { return rep_->boxes[static_cast<std::size_t>(i)]; }
    const std::vector<Box<D>>& boxes() const noexcept { return rep_->boxes; }
    auto begin() const noexcept { return rep_->boxes.begin(); }
    auto end() const noexcept { return rep_->boxes.end(); }
    IndexType<D> ixtype() const noexcept { return rep_->ixtype; }

    /// Cell-centered version of box i.
    Box<D> cell_box(int i) const { return convert((*this)[i], IndexType<D>::cell()); }

    /// Identity of the shared representation; copies compare equal here.
    std::uintptr_t id() const noexcept { return reinterpret_cast<std::uintptr_t>(rep_.get()); }

    friend bool operator==(const BoxArray& a, const BoxArray& b)
    {
        return a.rep_ == b.rep_ || (a.ixtype() == b.ixtype() && a.boxes() == b.boxes());
    }

    std::int64_t num_cells() const
    {
        std::int64_t n = 0;
        for (const auto& b : rep_->boxes) n += b.num_cells();
        return n;
    }

    Box<D> minimal_box() const
    {
        Box<D> r = Box<D>::empty_box(ixtype());
        for (const auto& b : rep_->boxes) r = bounding_box(r, b);
        return r;
    }

    const BoxHash<D>& hash() const
    {
        std::call_once(rep_->hash_once, [this] {
            std::vector<Box<D>> cells;
            cells.reserve(rep_->boxes.size());
            for (const auto& b : rep_->boxes) {
                if (b.empty()) throw Error("BoxArray::hash: empty box in array");
                cells.push_back(convert(b, IndexType<D>::cell()));
            }
            rep_->hash = std::make_unique<BoxHash<D>>(cells);
            ++hashes_built();
        });
        return *rep_->hash;
    }

    /// Every (index, overlap) pair with a non-empty overlap, ordered by index.
    std::vector<std::pair<int, Box<D>>> intersections(const Box<D>& q, std::int64_t* bins_examined = nullptr) const
    {
        if (q.ixtype() != ixtype() && !empty()) {
            throw Error("BoxArray::intersections: index type mismatch " + q.str());
        }
        std::vector<std::pair<int, Box<D>>> out;
        if (q.empty() || empty()) {
            if (bins_examined) *bins_examined = 0;
            return out;
        }
        // A node-typed box covers one more index than its cell box; widen the
        // lookup on the low side so abutting boxes are found.
        IntVect<D> lo = q.lo();
        for (int d = 0; d < D; ++d)
            if (q.ixtype().node_centered(d)) lo[d] -= 1;
        const Box<D> lookup(lo, q.hi());
        for (int i : hash().candidates(lookup, bins_examined)) {
            Box<D> ov = intersect((*this)[i], q);
            if (!ov.empty()) out.emplace_back(i, ov);
        }
        return out;
    }

    /// Indices of boxes intersecting q.
    std::vector<int> intersecting_indices(const Box<D>& q) const
    {
        std::vector<int> out;
        for (auto& [i, b] : intersections(q)) out.push_back(i);
        return out;
    }

    /// Index of the box containing cell p, if any.
    std::optional<int> find(const IntVect<D>& p) const
    {
        Box<D> q(p, p, ixtype());
        for (auto& [i, b] : intersections(q)) return i;
        return std::nullopt;
    }

    /// True iff every index of q lies in some box.
    bool contains(const Box<D>& q) const
    {
        if (q.empty()) return true;
        if (q.ixtype() != ixtype()) throw Error("BoxArray::contains: index type mismatch " + q.str());
        auto ov = intersections(q);
        if (ixtype().is_cell()) {
            std::int64_t n = 0;
            for (auto& [i, b] : ov) n += b.num_cells();
            return n == q.num_cells();
        }
        std::vector<char> mask(static_cast<std::size_t>(q.num_cells()), 0);
        for (auto& [i, b] : ov) for_each_cell(b, [&](const IntVect<D>& p) { mask[q.index(p)] = 1; });
        return std::all_of(mask.begin(), mask.end(), [](char c) { return c != 0; });
    }

    bool contains(const IntVect<D>& p) const { return find(p).has_value(); }

    /// Uniform index type and pairwise-disjoint (as cell regions) boxes.
    BoxArrayCheck<D> validate() const
    {
        BoxArrayCheck<D> r;
        for (int i = 0; i < size(); ++i) {
            if ((*this)[i].ixtype() != ixtype()) {
                r = {false, 0, i, "index type mismatch between box 0 and box " + std::to_string(i)};
                return r;
            }
            if ((*this)[i].empty()) {
                r = {false, i, i, "box " + std::to_string(i) + " is empty"};
                return r;
            }
        }
        for (int i = 0; i < size(); ++i) {
            const Box<D> ci = cell_box(i);
            for (int j : hash().candidates(ci)) {
                if (j <= i) continue;
                if (ci.intersects(cell_box(j))) {
                    r = {false, i, j, "boxes " + std::to_string(i) + " " + (*this)[i].str() + " and " + std::to_string(j) + " " + (*this)[j].str() + " overlap"};
                    return r;
                }
            }
        }
        return r;
    }

    void validate_or_throw() const
    {
        auto r = validate();
        if (!r.ok) throw Error("BoxArray invalid: " + r.message);
    }

    /// Shared per-array cache of derived metadata (communication plans etc.).
    template <class T, class Factory>
    std::shared_ptr<const T> cached(const std::string& key, Factory&& make) const
    {
        std::lock_guard<std::mutex> lock(rep_->cache_mutex);
        auto it = rep_->cache.find(key);
        if (it != rep_->cache.end()) return std::static_pointer_cast<const T>(it->second);
        std::shared_ptr<const T> v = std::make_shared<const T>(make());
        rep_->cache.emplace(key, v);
        return v;
    }

    std::string str() const
    {
        std::string s = "BoxArray[" + std::to_string(size()) + "]{";
        for (int i = 0; i < size(); ++i) s += (i ? ", " : "") + (*this)[i].str();
        return s + "}";
    }

    /// Process-wide count of hash constructions (instrumentation).
    static std::atomic<std::int64_t>& hashes_built()
    {
        static std::atomic<std::int64_t> n{0};
        return n;
    }

  private:
    struct Rep
    {
        std::vector<Box<D>> boxes;
        IndexType<D> ixtype{};
        std::once_flag hash_once;
        std::unique_ptr<BoxHash<D>> hash;
        std::mutex cache_mutex;
        std::unordered_map<std::string, std::shared_ptr<const void>> cache;
    };
    std::shared_ptr<Rep> rep_;
};

template <int D>
BoxArray<D> refine(const BoxArray<D>& ba, const IntVect<D>& r)
{
    std::vector<Box<D>> v;
    v.reserve(ba.size());
    for (const auto& b : ba) v.push_back(refine(b, r));
    return BoxArray<D>(std::move(v));
}

template <int D>
BoxArray<D> coarsen(const BoxArray<D>& ba, const IntVect<D>& r)
{
    std::vector<Box<D>> v;
    v.reserve(ba.size());
    for (const auto& b : ba) v.push_back(coarsen(b, r));
    return BoxArray<D>(std::move(v));
}

template <int D>
BoxArray<D> convert(const BoxArray<D>& ba, IndexType<D> t)
{
    std::vector<Box<D>> v;
    v.reserve(ba.size());
    for (const auto& b : ba) v.push_back(convert(b, t));
    BoxArray<D> r(std::move(v));
    return r;
}

/// Chop every box into pieces no longer than m, cutting at multiples of m
/// measured from the box's own lo corner.
template <int D>
BoxArray<D> max_size(const BoxArray<D>& ba, const IntVect<D>& m)
{
    for (int d = 0; d < D; ++d)
        if (m[d] < 1) throw Error("max_size: chunk size must be >= 1");
    std::vector<Box<D>> out;
    for (const auto& b : ba) {
        IntVect<D> nchunk;
        for (int d = 0; d < D; ++d) nchunk[d] = (b.length(d) + m[d] - 1) / m[d];
        for_each_cell(Box<D>(IntVect<D>(0), nchunk - IntVect<D>::unit()), [&](const IntVect<D>& c) {
            IntVect<D> lo = b.lo() + c * m;
            IntVect<D> hi = elementwise_min(lo + m - IntVect<D>::unit(), b.hi());
            out.emplace_back(lo, hi, b.ixtype());
        });
    }
    return BoxArray<D>(std::move(out));
}

template <int D>
BoxArray<D> max_size(const BoxArray<D>& ba, int m)
{
    return max_size(ba, IntVect<D>(m));
}

/// Remove boxes for which `fully_covered` is true; survivors keep their order.
template <int D, class Pred>
BoxArray<D> prune(const BoxArray<D>& ba, Pred&& fully_covered)
{
    std::vector<Box<D>> out;
    for (const auto& b : ba)
        if (!fully_covered(b)) out.push_back(b);
    return BoxArray<D>(std::move(out));
}

/// Decompose `region` minus the union of `ba` into disjoint boxes.
template <int D>
std::vector<Box<D>> complement_in(const Box<D>& region, const BoxArray<D>& ba)
{
    std::vector<Box<D>> pieces{region};
    for (auto& [i, ov] : ba.intersections(region)) {
        std::vector<Box<D>> next;
        for (const auto& p : pieces) {
            if (!p.intersects(ov)) {
                next.push_back(p);
                continue;
            }
            Box<D> rest = p;
            for (int d = 0; d < D; ++d) {
                if (rest.lo(d) < ov.lo(d)) {
                    IntVect<D> hi = rest.hi();
                    hi[d] = ov.lo(d) - 1;
                    next.emplace_back(rest.lo(), hi, rest.ixtype());
                    IntVect<D> lo = rest.lo();
                    lo[d] = ov.lo(d);
                    rest = Box<D>(lo, rest.hi(), rest.ixtype());
                }
                if (rest.hi(d) > ov.hi(d)) {
                    IntVect<D> lo = rest.lo();
                    lo[d] = ov.hi(d) + 1;
                    next.emplace_back(lo, rest.hi(), rest.ixtype());
                    IntVect<D> hi = rest.hi();
                    hi[d] = ov.hi(d);
                    rest = Box<D>(rest.lo(), hi, rest.ixtype());
                }
            }
        }
        pieces = std::move(next);
    }
    return pieces;
}

} // namespace amrlite

#endif // AMRLITE_BOX_ARRAY_HPP

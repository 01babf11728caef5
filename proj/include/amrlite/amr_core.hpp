#ifndef AMRLITE_AMR_CORE_HPP
#define AMRLITE_AMR_CORE_HPP

// Level hierarchy, tagging, Berger-Rigoutsos clustering, proper nesting and
// regridding.
//
// Grids for level l+1 are generated on a lattice: level l coarsened by
// g = max(1, blocking_factor / ref_ratio).  One lattice cell refines to one
// blocking_factor block at level l+1, so every output box is aligned by
// construction and no post-hoc rounding is needed.  Efficiency and minimum
// box size are therefore measured in lattice cells.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "box_array.hpp"
#include "config.hpp"
#include "distribution.hpp"
#include "fab_array.hpp"
#include "geometry.hpp"

namespace amrlite {

template <int D>
struct GridGenParams
{
    IntVect<D> max_grid_size{IntVect<D>(32)};
    IntVect<D> blocking_factor{IntVect<D>(8)};
    double grid_eff = 0.7;
    int max_level = 0;
    std::vector<IntVect<D>> ref_ratio;
    int n_error_buf = 1;
    int n_proper = 1;

    /// Ratio between level l and l+1; the last entry repeats, default 2.
    IntVect<D> ratio(int l) const
    {
        if (ref_ratio.empty()) return IntVect<D>(2);
        return ref_ratio[static_cast<std::size_t>(std::min<int>(l, static_cast<int>(ref_ratio.size()) - 1))];
    }

    /// Lattice factor used when building level l+1 from level l.
    IntVect<D> lattice(int l) const
    {
        const IntVect<D> r = ratio(l);
        IntVect<D> g;
        for (int d = 0; d < D; ++d) g[d] = std::max(1, blocking_factor[d] / r[d]);
        return g;
    }

    void check() const
    {
        if (!(grid_eff > 0.0 && grid_eff <= 1.0)) throw Error("grid_eff must lie in (0, 1]");
        if (max_level < 0) throw Error("max_level must be >= 0");
        if (n_error_buf < 0 || n_proper < 1) throw Error("n_error_buf must be >= 0 and n_proper >= 1");
        for (int d = 0; d < D; ++d) {
            if (blocking_factor[d] < 1) throw Error("blocking_factor must be >= 1");
            if (max_grid_size[d] % blocking_factor[d] != 0) throw Error("blocking_factor must divide max_grid_size");
        }
        for (int l = 0; l < std::max(1, max_level); ++l) {
            const IntVect<D> r = ratio(l);
            for (int d = 0; d < D; ++d) {
                if (r[d] < 1) throw Error("ref_ratio must be >= 1");
                if (blocking_factor[d] % r[d] != 0 && r[d] % blocking_factor[d] != 0)
                    throw Error("ref_ratio and blocking_factor must divide one another");
            }
        }
    }

    /// Reads amr.max_level, amr.ref_ratio, amr.max_grid_size,
    /// amr.blocking_factor, amr.grid_eff, amr.n_error_buf, amr.n_proper.
    static GridGenParams from_config(const Config& c)
    {
        GridGenParams p;
        p.max_level = c.get<int>("amr.max_level", p.max_level);
        p.max_grid_size = c.get_intvect<D>("amr.max_grid_size", p.max_grid_size);
        p.blocking_factor = c.get_intvect<D>("amr.blocking_factor", p.blocking_factor);
        p.grid_eff = c.get<double>("amr.grid_eff", p.grid_eff);
        p.n_error_buf = c.get<int>("amr.n_error_buf", p.n_error_buf);
        p.n_proper = c.get<int>("amr.n_proper", p.n_proper);
        if (c.has("amr.ref_ratio")) {
            for (int r : c.get_list<int>("amr.ref_ratio")) p.ref_ratio.push_back(IntVect<D>(r));
        }
        p.check();
        return p;
    }
};

/// Dense boolean mask over a box.
template <int D>
class CellMask
{
  public:
    CellMask() = default;
    explicit CellMask(const Box<D>& b, bool init = false)
        : box_(b), v_(static_cast<std::size_t>(b.num_cells()), static_cast<unsigned char>(init))
    {
    }

    const Box<D>& box() const noexcept { return box_; }
    bool operator()(const IntVect<D>& p) const { return box_.contains(p) && v_[static_cast<std::size_t>(box_.index(p))]; }
    void set(const IntVect<D>& p, bool on = true)
    {
        if (box_.contains(p)) v_[static_cast<std::size_t>(box_.index(p))] = on;
    }
    void set(const Box<D>& b, bool on)
    {
        const Box<D> r = intersect(b, box_);
        if (!r.empty()) for_each_cell(r, [&](const IntVect<D>& p) { v_[static_cast<std::size_t>(box_.index(p))] = on; });
    }
    bool any(const Box<D>& b) const
    {
        const Box<D> r = intersect(b, box_);
        bool found = false;
        if (!r.empty()) for_each_cell(r, [&](const IntVect<D>& p) { found = found || v_[static_cast<std::size_t>(box_.index(p))]; });
        return found;
    }
    bool all(const Box<D>& b) const
    {
        if (!box_.contains(b)) return false;
        bool ok = true;
        for_each_cell(b, [&](const IntVect<D>& p) { ok = ok && v_[static_cast<std::size_t>(box_.index(p))]; });
        return ok;
    }
    std::int64_t count() const { return std::count(v_.begin(), v_.end(), 1); }

    /// Set cells in x-fastest order.
    std::vector<IntVect<D>> cells() const
    {
        std::vector<IntVect<D>> out;
        for (std::size_t k = 0; k < v_.size(); ++k)
            if (v_[k]) out.push_back(box_.at(static_cast<std::int64_t>(k)));
        return out;
    }

    void merge(const CellMask& o)
    {
        for (auto& p : o.cells()) set(p);
    }

  private:
    Box<D> box_;
    std::vector<unsigned char> v_;
};

namespace detail {

/// Grow every set cell by n in each direction (clipped to the mask box).
template <int D>
CellMask<D> dilate(const CellMask<D>& m, int n)
{
    CellMask<D> cur = m;
    if (n <= 0) return cur;
    for (int d = 0; d < D; ++d) {
        CellMask<D> next(cur.box());
        for (auto& p : cur.cells()) {
            IntVect<D> lo = p, hi = p;
            lo[d] -= n;
            hi[d] += n;
            next.set(Box<D>(lo, hi), true);
        }
        cur = std::move(next);
    }
    return cur;
}

/// Greedy decomposition of a mask into disjoint boxes: starting at the first
/// set cell in x-fastest order, extend along dimension 0, then 1, ...
template <int D>
std::vector<Box<D>> mask_to_boxes(CellMask<D> m)
{
    std::vector<Box<D>> out;
    for (auto& p : m.cells()) {
        if (!m(p)) continue;
        Box<D> b(p, p);
        for (int d = 0; d < D; ++d) {
            while (true) {
                IntVect<D> lo = b.lo(), hi = b.hi();
                lo[d] = hi[d] = b.hi(d) + 1;
                const Box<D> slab(lo, hi);
                if (!m.all(slab)) break;
                IntVect<D> nh = b.hi();
                ++nh[d];
                b = Box<D>(b.lo(), nh);
            }
        }
        m.set(b, false);
        out.push_back(b);
    }
    return out;
}

template <int D>
Box<D> tag_bounding_box(const std::vector<IntVect<D>>& tags)
{
    IntVect<D> lo = tags.front(), hi = tags.front();
    for (auto& t : tags) {
        lo = elementwise_min(lo, t);
        hi = elementwise_max(hi, t);
    }
    return Box<D>(lo, hi);
}

/// Berger-Rigoutsos on an explicit tag list (no duplicates).
template <int D>
void br_recurse(std::vector<IntVect<D>> tags, double eff, const IntVect<D>& max_ext, std::vector<Box<D>>& out)
{
    if (tags.empty()) return;
    const Box<D> bb = tag_bounding_box(tags);
    const double e = static_cast<double>(tags.size()) / static_cast<double>(bb.num_cells());
    bool fits = true;
    for (int d = 0; d < D; ++d) fits = fits && bb.length(d) <= max_ext[d];
    if (bb.num_cells() == 1 || (e >= eff && fits)) {
        out.push_back(bb);
        return;
    }

    std::array<std::vector<int>, D> sig;
    for (int d = 0; d < D; ++d) sig[d].assign(static_cast<std::size_t>(bb.length(d)), 0);
    for (auto& t : tags)
        for (int d = 0; d < D; ++d) ++sig[d][static_cast<std::size_t>(t[d] - bb.lo(d))];

    int cut_dim = -1, cut_at = 0;

    // Widest zero-signature hole; ties to the lower index, then lower dimension.
    int best_w = 0, best_pos = 0;
    for (int d = 0; d < D; ++d) {
        const int n = bb.length(d);
        for (int i = 0; i < n;) {
            if (sig[d][static_cast<std::size_t>(i)] != 0) {
                ++i;
                continue;
            }
            int j = i;
            while (j < n && sig[d][static_cast<std::size_t>(j)] == 0) ++j;
            const int w = j - i, pos = bb.lo(d) + i;
            if (w > best_w || (w == best_w && pos < best_pos)) {
                best_w = w, best_pos = pos;
                cut_dim = d, cut_at = pos;
            }
            i = j;
        }
    }

    // Strongest sign change of the second difference; ties nearer the middle.
    if (cut_dim < 0 && e < eff) {
        int best_s = 0, best_mid = 0;
        for (int d = 0; d < D; ++d) {
            const int n = bb.length(d);
            if (n < 4) continue;
            auto s = [&](int i) { return sig[d][static_cast<std::size_t>(i)]; };
            std::vector<int> lap(static_cast<std::size_t>(n), 0);
            for (int i = 1; i < n - 1; ++i) lap[static_cast<std::size_t>(i)] = s(i + 1) - 2 * s(i) + s(i - 1);
            for (int i = 1; i + 1 < n - 1; ++i) {
                const int a = lap[static_cast<std::size_t>(i)], b = lap[static_cast<std::size_t>(i + 1)];
                if (static_cast<long>(a) * b >= 0) continue;
                const int strength = std::abs(b - a);
                const int mid = std::abs(2 * (i + 1) - n);
                if (strength > best_s || (strength == best_s && mid < best_mid)) {
                    best_s = strength, best_mid = mid;
                    cut_dim = d, cut_at = bb.lo(d) + i + 1;
                }
            }
        }
    }

    // Bisection: the dimension most over its limit if too large, else the longest.
    if (cut_dim < 0) {
        double worst = -1.0;
        for (int d = 0; d < D; ++d) {
            if (bb.length(d) < 2) continue;
            const double key = fits ? bb.length(d) : static_cast<double>(bb.length(d)) / max_ext[d];
            if (key > worst) {
                worst = key;
                cut_dim = d;
            }
        }
        cut_at = bb.lo(cut_dim) + bb.length(cut_dim) / 2;
    }

    std::vector<IntVect<D>> left, right;
    for (auto& t : tags) (t[cut_dim] < cut_at ? left : right).push_back(t);
    tags.clear();
    tags.shrink_to_fit();
    br_recurse(std::move(left), eff, max_ext, out);
    br_recurse(std::move(right), eff, max_ext, out);
}

/// Lattice cells c such that every level cell of grow(refine(c, g), buffer)
/// inside the domain is covered by `coarse`.
template <int D>
CellMask<D> nesting_lattice(const BoxArray<D>& coarse, const Box<D>& domain, int buffer, const IntVect<D>& g)
{
    const Box<D> ldom = coarsen(domain, g);
    std::int64_t covered = 0;
    for (const auto& b : coarse) covered += intersect(b, domain).num_cells();
    if (covered == domain.num_cells()) return CellMask<D>(ldom, true);

    CellMask<D> uncovered(domain, true);
    for (const auto& b : coarse) uncovered.set(b, false);
    const CellMask<D> reach = dilate(uncovered, buffer);
    CellMask<D> ok(ldom);
    for_each_cell(ldom, [&](const IntVect<D>& c) {
        if (!reach.any(refine(Box<D>(c, c), g))) ok.set(c);
    });
    return ok;
}

} // namespace detail

/// Cluster tagged level-l cells into boxes for level l+1, returned at level l
/// index space.  Boxes are unions of g-blocks (see header comment); refine
/// by params.ratio(level) to obtain the new level.
template <int D>
BoxArray<D> cluster_tags(const std::vector<IntVect<D>>& tags, const GridGenParams<D>& params, const Box<D>& level_domain, int level = 0)
{
    if (tags.empty()) return BoxArray<D>();
    const IntVect<D> g = params.lattice(level);
    const IntVect<D> r = params.ratio(level);
    std::vector<IntVect<D>> lat;
    lat.reserve(tags.size());
    for (auto& t : tags) {
        if (!level_domain.contains(t)) throw Error("cluster_tags: tag " + t.str() + " outside " + level_domain.str());
        lat.push_back(floor_div(t, g));
    }
    std::sort(lat.begin(), lat.end(), [](auto& a, auto& b) { return lex_less(a, b); });
    lat.erase(std::unique(lat.begin(), lat.end()), lat.end());
    IntVect<D> max_ext;
    for (int d = 0; d < D; ++d) max_ext[d] = std::max(1, params.max_grid_size[d] / (g[d] * r[d]));
    std::vector<Box<D>> boxes;
    detail::br_recurse(std::move(lat), params.grid_eff, max_ext, boxes);
    for (auto& b : boxes) b = intersect(refine(b, g), level_domain);
    return BoxArray<D>(std::move(boxes));
}

/// True when grow(coarsen(F, ratio), buffer) restricted to the domain is
/// covered by `coarse` for every fine box F.
template <int D>
bool properly_nested(const BoxArray<D>& fine, const BoxArray<D>& coarse, const IntVect<D>& ratio, const Box<D>& coarse_domain, int buffer)
{
    for (const auto& f : fine) {
        const Box<D> need = intersect(grow(coarsen(f, ratio), buffer), coarse_domain);
        if (!coarse.contains(need)) return false;
    }
    return true;
}

/// Clip fine boxes so that they satisfy properly_nested.  Fine cells that
/// cannot be kept are counted in *dropped_cells.
template <int D>
BoxArray<D> enforce_proper_nesting(const BoxArray<D>& fine, const BoxArray<D>& coarse, const IntVect<D>& ratio, const Box<D>& coarse_domain,
                                   int buffer, std::int64_t* dropped_cells = nullptr)
{
    if (buffer < 1) throw Error("enforce_proper_nesting: buffer must be >= 1");
    const CellMask<D> ok = detail::nesting_lattice(coarse, coarse_domain, buffer, IntVect<D>::unit());
    std::vector<Box<D>> out;
    std::int64_t dropped = 0;
    for (const auto& f : fine) {
        const Box<D> c = coarsen(f, ratio);
        if (ok.all(c)) {
            out.push_back(f);
            continue;
        }
        CellMask<D> piece(c);
        for_each_cell(c, [&](const IntVect<D>& p) { piece.set(p, ok(p)); });
        std::int64_t kept = 0;
        for (auto& b : detail::mask_to_boxes(piece)) {
            const Box<D> fb = intersect(refine(b, ratio), f);
            if (fb.empty()) continue;
            kept += fb.num_cells();
            out.push_back(fb);
        }
        dropped += f.num_cells() - kept;
    }
    if (dropped_cells) *dropped_cells = dropped;
    return BoxArray<D>(std::move(out));
}

template <int D>
using TagFn = std::function<bool(int level, const IntVect<D>& cell)>;

template <int D>
using TagField = FabArray<D, char>;

/// Evaluate tag_fn on every valid cell of a level.
template <int D>
TagField<D> make_tag_field(const BoxArray<D>& ba, const DistributionMapping& dm, int level, const TagFn<D>& tag_fn)
{
    TagField<D> tf(ba, dm, 1, 0, 0);
    for (int i = 0; i < tf.size(); ++i) {
        auto& f = tf[i];
        for_each_cell(ba[i], [&](const IntVect<D>& p) { f(p, 0) = tag_fn(level, p) ? 1 : 0; });
    }
    return tf;
}

template <int D>
class AmrHierarchy
{
  public:
    AmrHierarchy(const Geometry<D>& geom0, const GridGenParams<D>& params, int nranks) : params_(params), nranks_(nranks)
    {
        params_.check();
        if (nranks < 1) throw Error("AmrHierarchy: nranks must be >= 1");
        geom_.push_back(geom0);
        for (int l = 0; l < params_.max_level; ++l) geom_.push_back(geom_.back().refine(params_.ratio(l)));
        const Box<D>& dom = geom0.domain();
        for (int d = 0; d < D; ++d)
            if (dom.length(d) % params_.blocking_factor[d] != 0) throw Error("AmrHierarchy: domain not divisible by blocking_factor");
        BoxArray<D> ba0 = max_size(BoxArray<D>(dom), params_.max_grid_size);
        set_level(0, ba0, sfc_distribute(ba0, nranks_));
    }

    int finest_level() const noexcept { return static_cast<int>(ba_.size()) - 1; }
    int max_level() const noexcept { return params_.max_level; }
    int nranks() const noexcept { return nranks_; }
    const GridGenParams<D>& params() const noexcept { return params_; }
    const Geometry<D>& geom(int l) const { return geom_.at(static_cast<std::size_t>(l)); }
    const BoxArray<D>& box_array(int l) const { return ba_.at(static_cast<std::size_t>(l)); }
    const DistributionMapping& dmap(int l) const { return dm_.at(static_cast<std::size_t>(l)); }
    IntVect<D> ref_ratio(int l) const { return params_.ratio(l); }

    void set_level(int l, const BoxArray<D>& ba, const DistributionMapping& dm)
    {
        if (l < 0 || l > params_.max_level || l > finest_level() + 1) throw Error("set_level: level out of range");
        if (dm.size() != ba.size()) throw Error("set_level: DistributionMapping size mismatch");
        if (l == finest_level() + 1) {
            ba_.push_back(ba);
            dm_.push_back(dm);
        } else {
            ba_[static_cast<std::size_t>(l)] = ba;
            dm_[static_cast<std::size_t>(l)] = dm;
        }
    }

    void truncate(int finest)
    {
        ba_.resize(static_cast<std::size_t>(finest + 1));
        dm_.resize(static_cast<std::size_t>(finest + 1));
    }

    /// Tags discarded by nesting in the most recent grid generation.
    std::int64_t dropped_tags() const noexcept { return dropped_tags_; }
    void note_dropped(std::int64_t n) noexcept { dropped_tags_ += n; }
    void reset_dropped() noexcept { dropped_tags_ = 0; }

  private:
    GridGenParams<D> params_;
    int nranks_;
    std::vector<Geometry<D>> geom_;
    std::vector<BoxArray<D>> ba_;
    std::vector<DistributionMapping> dm_;
    std::int64_t dropped_tags_ = 0;
};

namespace detail {

template <int D>
CellMask<D> collect_tags(const BoxArray<D>& ba, const Box<D>& domain, int level, const TagFn<D>& tag_fn)
{
    CellMask<D> m(domain);
    for (const auto& b : ba)
        for_each_cell(b, [&](const IntVect<D>& p) {
            if (tag_fn(level, p)) m.set(p);
        });
    return m;
}

/// Tags (level l index space) -> level l+1 BoxArray.
template <int D>
BoxArray<D> grids_from_tags(const CellMask<D>& tags, const BoxArray<D>& level_ba, const Box<D>& domain, const GridGenParams<D>& params,
                            int level, std::int64_t* dropped)
{
    const IntVect<D> g = params.lattice(level);
    const IntVect<D> r = params.ratio(level);
    const CellMask<D> buffered = dilate(tags, params.n_error_buf);
    const CellMask<D> ok = nesting_lattice(level_ba, domain, params.n_proper, g);

    CellMask<D> lat(coarsen(domain, g));
    std::int64_t lost = 0;
    for (auto& p : buffered.cells()) {
        const IntVect<D> c = floor_div(p, g);
        if (ok(c))
            lat.set(c);
        else if (tags(p))
            ++lost;
    }
    if (dropped) *dropped += lost;

    IntVect<D> max_ext;
    for (int d = 0; d < D; ++d) max_ext[d] = std::max(1, params.max_grid_size[d] / (g[d] * r[d]));
    std::vector<Box<D>> boxes;
    br_recurse(lat.cells(), params.grid_eff, max_ext, boxes);

    std::vector<Box<D>> out;
    for (auto& b : boxes) {
        if (ok.all(b)) {
            out.push_back(refine(refine(b, g), r));
            continue;
        }
        CellMask<D> piece(b);
        for_each_cell(b, [&](const IntVect<D>& p) { piece.set(p, ok(p)); });
        for (auto& q : mask_to_boxes(piece))
            if (lat.any(q)) out.push_back(refine(refine(q, g), r));
    }
    return BoxArray<D>(std::move(out));
}

} // namespace detail

/// New level l+1 BoxArray from tags on level l of the hierarchy.
template <int D>
BoxArray<D> make_new_grids(AmrHierarchy<D>& hier, int level, const TagFn<D>& tag_fn)
{
    if (level >= hier.max_level()) throw Error("make_new_grids: level must be below max_level");
    if (level > hier.finest_level()) throw Error("make_new_grids: level does not exist");
    const Box<D>& dom = hier.geom(level).domain();
    const CellMask<D> tags = detail::collect_tags(hier.box_array(level), dom, level, tag_fn);
    std::int64_t dropped = 0;
    auto ba = detail::grids_from_tags(tags, hier.box_array(level), dom, hier.params(), level, &dropped);
    hier.note_dropped(dropped);
    return ba;
}

template <int D>
struct LevelChange
{
    int level = 0;
    bool existed = false;
    bool exists = false;
    BoxArray<D> old_ba, new_ba;
    DistributionMapping old_dm, new_dm;
};

/// Rebuild levels base+1 .. max_level.  Tags found on existing finer levels
/// are pushed down first so each new level covers the regions its finer
/// level will need; grids are then generated bottom-up.  Unchanged levels
/// keep their DistributionMapping, others get an SFC mapping.  Returned
/// changes (ascending level) tell the caller which data to rebuild.
template <int D>
std::vector<LevelChange<D>> regrid(AmrHierarchy<D>& hier, int base, const TagFn<D>& tag_fn)
{
    const int old_finest = hier.finest_level();
    if (base < 0 || base > old_finest) throw Error("regrid: base level out of range");
    const int maxl = hier.max_level();
    if (base >= maxl) return {};
    const auto& P = hier.params();
    hier.reset_dropped();

    // Finer tags are pushed down from a candidate hierarchy.  When a pass
    // creates levels the candidate lacked, it is repeated with the new grids
    // as candidate so a fresh build matches a rebuild of its own output.
    std::vector<BoxArray<D>> cand;
    for (int l = 0; l <= old_finest; ++l) cand.push_back(hier.box_array(l));
    std::vector<BoxArray<D>> nba;
    std::int64_t dropped = 0;
    for (int pass = 0; pass <= maxl; ++pass) {
        const int cand_finest = static_cast<int>(cand.size()) - 1;
        std::vector<CellMask<D>> constraint;
        for (int l = 0; l < maxl; ++l) constraint.emplace_back(hier.geom(l).domain());
        for (int l = std::min(cand_finest, maxl - 1); l > base; --l) {
            CellMask<D> t = detail::collect_tags(cand[static_cast<std::size_t>(l)], hier.geom(l).domain(), l, tag_fn);
            t.merge(constraint[static_cast<std::size_t>(l)]);
            const IntVect<D> g = P.lattice(l);
            const int reach = P.n_error_buf + g.max_component() + P.n_proper;
            const IntVect<D> r = P.ratio(l - 1);
            auto& below = constraint[static_cast<std::size_t>(l - 1)];
            for (auto& p : t.cells()) below.set(coarsen(grow(Box<D>(p, p), reach), r), true);
        }

        nba.assign(cand.begin(), cand.begin() + base + 1);
        dropped = 0;
        for (int l = base; l < maxl; ++l) {
            const Box<D>& dom = hier.geom(l).domain();
            CellMask<D> t = detail::collect_tags(nba.back(), dom, l, tag_fn);
            t.merge(constraint[static_cast<std::size_t>(l)]);
            BoxArray<D> fine = detail::grids_from_tags(t, nba.back(), dom, P, l, &dropped);
            if (fine.empty()) break;
            nba.push_back(fine);
        }
        if (static_cast<int>(nba.size()) <= static_cast<int>(cand.size())) break;
        cand = nba;
    }

    std::vector<LevelChange<D>> changes;
    const int new_finest = static_cast<int>(nba.size()) - 1;
    for (int l = base + 1; l <= std::max(old_finest, new_finest); ++l) {
        LevelChange<D> ch;
        ch.level = l;
        ch.existed = l <= old_finest;
        ch.exists = l <= new_finest;
        if (ch.existed) {
            ch.old_ba = hier.box_array(l);
            ch.old_dm = hier.dmap(l);
        }
        if (ch.exists) {
            ch.new_ba = nba[static_cast<std::size_t>(l)];
            ch.new_dm = (ch.existed && ch.old_ba == ch.new_ba) ? ch.old_dm : sfc_distribute(ch.new_ba, hier.nranks());
        }
        if (ch.existed && ch.exists && ch.old_ba == ch.new_ba) continue;
        changes.push_back(ch);
    }
    hier.truncate(std::min(old_finest, new_finest));
    for (int l = base + 1; l <= new_finest; ++l) {
        const auto& ba = nba[static_cast<std::size_t>(l)];
        if (l <= hier.finest_level() && hier.box_array(l) == ba) continue;
        hier.set_level(l, ba, sfc_distribute(ba, hier.nranks()));
    }
    hier.note_dropped(dropped);
    return changes;
}

/// Empty string when the hierarchy satisfies validation, nesting, blocking
/// factor and max_grid_size constraints; otherwise a description.
template <int D>
std::string check_hierarchy(const AmrHierarchy<D>& hier)
{
    const auto& P = hier.params();
    for (int l = 0; l <= hier.finest_level(); ++l) {
        const auto& ba = hier.box_array(l);
        auto v = ba.validate();
        if (!v.ok) return "level " + std::to_string(l) + ": " + v.message;
        for (const auto& b : ba) {
            if (!hier.geom(l).domain().contains(b)) return "level " + std::to_string(l) + ": box " + b.str() + " outside domain";
            for (int d = 0; d < D; ++d) {
                if (b.length(d) > P.max_grid_size[d]) return "level " + std::to_string(l) + ": box " + b.str() + " exceeds max_grid_size";
                if (b.length(d) % P.blocking_factor[d] != 0 || (b.lo(d) - hier.geom(l).domain().lo(d)) % P.blocking_factor[d] != 0)
                    return "level " + std::to_string(l) + ": box " + b.str() + " not aligned to blocking_factor";
            }
        }
        if (l > 0 && !properly_nested(ba, hier.box_array(l - 1), hier.ref_ratio(l - 1), hier.geom(l - 1).domain(), P.n_proper))
            return "level " + std::to_string(l) + " is not properly nested in level " + std::to_string(l - 1);
    }
    return {};
}

} // namespace amrlite

#endif // AMRLITE_AMR_CORE_HPP

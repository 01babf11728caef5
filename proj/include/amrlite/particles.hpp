#ifndef AMRLITE_PARTICLES_HPP
#define AMRLITE_PARTICLES_HPP

// Particle containers keyed by (level, grid, tile), redistribution, neighbor
// halos and lists, and particle/mesh transfer.
//
// Storage: each tile keeps particle-major records (position, id, origin
// rank) next to component-major arrays for the schema's extra reals and
// ints.  Cells are half-open, [lo, hi).  After a redistribute every tile is
// ordered by (origin_rank, id), so container contents do not depend on the
// number of ranks or on message arrival order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include "amr_core.hpp"
#include "fab_array.hpp"
#include "geometry.hpp"
#include "scan.hpp"
#include "transport.hpp"

namespace amrlite {

template <int D>
struct ParticleRecord
{
    RealVect<D> pos{};
    std::int64_t id = 0;
    int origin_rank = 0;
    friend bool operator==(const ParticleRecord&, const ParticleRecord&) = default;
};

struct ParticleSchema
{
    int nreal = 0;
    int nint = 0;
};

template <int D>
class ParticleTile
{
  public:
    ParticleTile() = default;
    explicit ParticleTile(const ParticleSchema& s)
        : reals_(static_cast<std::size_t>(s.nreal)), ints_(static_cast<std::size_t>(s.nint))
    {
    }

    std::size_t size() const noexcept { return recs_.size(); }
    bool empty() const noexcept { return recs_.empty(); }
    int nreal() const noexcept { return static_cast<int>(reals_.size()); }
    int nint() const noexcept { return static_cast<int>(ints_.size()); }

    ParticleRecord<D>& rec(std::size_t i) { return recs_[i]; }
    const ParticleRecord<D>& rec(std::size_t i) const { return recs_[i]; }
    const std::vector<ParticleRecord<D>>& records() const noexcept { return recs_; }
    double& real(int c, std::size_t i) { return reals_[static_cast<std::size_t>(c)][i]; }
    double real(int c, std::size_t i) const { return reals_[static_cast<std::size_t>(c)][i]; }
    int& integer(int c, std::size_t i) { return ints_[static_cast<std::size_t>(c)][i]; }
    int integer(int c, std::size_t i) const { return ints_[static_cast<std::size_t>(c)][i]; }
    const std::vector<double>& real_array(int c) const { return reals_[static_cast<std::size_t>(c)]; }
    const std::vector<int>& int_array(int c) const { return ints_[static_cast<std::size_t>(c)]; }

    void push_back(const ParticleRecord<D>& r, std::span<const double> re = {}, std::span<const int> in = {})
    {
        recs_.push_back(r);
        for (std::size_t c = 0; c < reals_.size(); ++c) reals_[c].push_back(c < re.size() ? re[c] : 0.0);
        for (std::size_t c = 0; c < ints_.size(); ++c) ints_[c].push_back(c < in.size() ? in[c] : 0);
    }

    void push_back_from(const ParticleTile& o, std::size_t i)
    {
        recs_.push_back(o.recs_[i]);
        for (std::size_t c = 0; c < reals_.size(); ++c) reals_[c].push_back(o.reals_[c][i]);
        for (std::size_t c = 0; c < ints_.size(); ++c) ints_[c].push_back(o.ints_[c][i]);
    }

    /// new[k] = old[perm[k]]
    void reorder(const std::vector<std::int64_t>& perm)
    {
        auto apply = [&](auto& v) {
            std::remove_reference_t<decltype(v)> out;
            out.reserve(perm.size());
            for (auto k : perm) out.push_back(v[static_cast<std::size_t>(k)]);
            v = std::move(out);
        };
        apply(recs_);
        for (auto& a : reals_) apply(a);
        for (auto& a : ints_) apply(a);
    }

    void sort_canonical()
    {
        std::vector<std::int64_t> perm(recs_.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::sort(perm.begin(), perm.end(), [&](auto a, auto b) {
            const auto& ra = recs_[static_cast<std::size_t>(a)];
            const auto& rb = recs_[static_cast<std::size_t>(b)];
            return std::tie(ra.origin_rank, ra.id) < std::tie(rb.origin_rank, rb.id);
        });
        reorder(perm);
    }

    friend bool operator==(const ParticleTile&, const ParticleTile&) = default;

  private:
    std::vector<ParticleRecord<D>> recs_;
    std::vector<std::vector<double>> reals_;
    std::vector<std::vector<int>> ints_;
};

struct TileKey
{
    int level = 0;
    int grid = 0;
    int tile = 0;
    auto operator<=>(const TileKey&) const = default;
};

template <int D>
struct Located
{
    int level = 0;
    int grid = 0;
    IntVect<D> cell;
};

struct RedistributeOptions
{
    enum class Mode { global, local };
    Mode mode = Mode::global;
    int local_cells = -1;  // local mode reach k; -1: half the largest box extent
    int lev_min = 0;
    int lev_max = -1;      // -1: finest
    int nbuffer = 0;       // levels outside [lev_min, lev_max]: particles within this many cells of their grid stay put
};

template <int D>
class ParticleContainer
{
  public:
    ParticleContainer(std::vector<Geometry<D>> geom, std::vector<BoxArray<D>> ba, std::vector<DistributionMapping> dm, ParticleSchema schema = {},
                      IntVect<D> tile_size = IntVect<D>(1 << 20))
        : geom_(std::move(geom)), ba_(std::move(ba)), dm_(std::move(dm)), schema_(schema), tile_size_(tile_size)
    {
        if (ba_.empty() || geom_.size() != ba_.size() || dm_.size() != ba_.size()) throw Error("ParticleContainer: per-level inputs disagree");
        for (std::size_t l = 0; l < ba_.size(); ++l)
            if (dm_[l].size() != ba_[l].size() || dm_[l].nranks() != dm_[0].nranks()) throw Error("ParticleContainer: DistributionMapping mismatch");
        next_id_.assign(static_cast<std::size_t>(nranks()), 0);
    }

    static ParticleContainer from_hierarchy(const AmrHierarchy<D>& h, ParticleSchema schema = {}, IntVect<D> tile_size = IntVect<D>(1 << 20))
    {
        std::vector<Geometry<D>> g;
        std::vector<BoxArray<D>> b;
        std::vector<DistributionMapping> m;
        for (int l = 0; l <= h.finest_level(); ++l) g.push_back(h.geom(l)), b.push_back(h.box_array(l)), m.push_back(h.dmap(l));
        return ParticleContainer(g, b, m, schema, tile_size);
    }

    int num_levels() const noexcept { return static_cast<int>(ba_.size()); }
    int nranks() const noexcept { return dm_[0].nranks(); }
    const Geometry<D>& geom(int l) const { return geom_.at(static_cast<std::size_t>(l)); }
    const BoxArray<D>& box_array(int l) const { return ba_.at(static_cast<std::size_t>(l)); }
    const DistributionMapping& dmap(int l) const { return dm_.at(static_cast<std::size_t>(l)); }
    const ParticleSchema& schema() const noexcept { return schema_; }
    const IntVect<D>& tile_size() const noexcept { return tile_size_; }
    std::uint64_t version() const noexcept { return version_; }
    int owner(const TileKey& k) const { return dmap(k.level)[k.grid]; }

    int num_tiles(int level, int grid) const
    {
        const Box<D>& b = box_array(level)[grid];
        int n = 1;
        for (int d = 0; d < D; ++d) n *= (b.length(d) + tile_size_[d] - 1) / tile_size_[d];
        return n;
    }

    int tile_index(int level, int grid, const IntVect<D>& cell) const
    {
        const Box<D>& b = box_array(level)[grid];
        int idx = 0, stride = 1;
        for (int d = 0; d < D; ++d) {
            const int nt = (b.length(d) + tile_size_[d] - 1) / tile_size_[d];
            idx += ((cell[d] - b.lo(d)) / tile_size_[d]) * stride;
            stride *= nt;
        }
        return idx;
    }

    Box<D> tile_box(const TileKey& k) const { return tiles_of(box_array(k.level)[k.grid], tile_size_)[static_cast<std::size_t>(k.tile)]; }

    /// Map into the domain along periodic directions; error outside otherwise.
    RealVect<D> wrap(RealVect<D> x) const
    {
        const auto& g = geom_[0];
        for (int d = 0; d < D; ++d) {
            const double lo = g.prob_lo()[d], hi = g.prob_hi()[d], L = hi - lo;
            if (g.is_periodic(d)) {
                if (x[d] < lo || x[d] >= hi) {
                    x[d] = lo + std::fmod(x[d] - lo, L);
                    if (x[d] < lo) x[d] += L;
                    if (x[d] >= hi) x[d] = lo;
                }
            } else if (!(x[d] >= lo && x[d] < hi)) {
                throw Error("particle position outside the non-periodic domain in direction " + std::to_string(d));
            }
        }
        return x;
    }

    /// Cell of x at level l, clamped against round-off at the upper edge.
    IntVect<D> cell_at(int l, const RealVect<D>& x) const
    {
        const auto& g = geom(l);
        IntVect<D> c = g.cell_of(x);
        for (int d = 0; d < D; ++d) c[d] = std::clamp(c[d], g.domain().lo(d), g.domain().hi(d));
        return c;
    }

    /// Finest level in [lev_min, lev_max] whose grids contain the position.
    Located<D> locate(const RealVect<D>& pos, int lev_min = 0, int lev_max = -1) const
    {
        const RealVect<D> x = wrap(pos);
        if (lev_max < 0 || lev_max >= num_levels()) lev_max = num_levels() - 1;
        for (int l = lev_max; l >= lev_min; --l) {
            const IntVect<D> c = cell_at(l, x);
            if (auto g = box_array(l).find(c)) return Located<D>{l, *g, c};
        }
        throw Error("locate: no grid contains position (cell " + cell_at(lev_min, x).str() + " at level " + std::to_string(lev_min) + ")");
    }

    /// Create a particle on `rank`; ids are unique per origin rank.
    std::int64_t add_particle(int rank, const RealVect<D>& pos, std::span<const double> reals = {}, std::span<const int> ints = {})
    {
        const std::int64_t id = ++next_id_.at(static_cast<std::size_t>(rank));
        ParticleRecord<D> r{wrap(pos), id, rank};
        const auto loc = locate(r.pos);
        tile(TileKey{loc.level, loc.grid, tile_index(loc.level, loc.grid, loc.cell)}).push_back(r, reals, ints);
        ++version_;
        return id;
    }

    /// Place an existing particle (e.g. one read back from disk) where
    /// locate() puts it, keeping its id and origin rank.
    void insert_particle(const ParticleRecord<D>& r, std::span<const double> reals = {}, std::span<const int> ints = {})
    {
        ParticleRecord<D> rec = r;
        rec.pos = wrap(rec.pos);
        const auto loc = locate(rec.pos);
        tile(TileKey{loc.level, loc.grid, tile_index(loc.level, loc.grid, loc.cell)}).push_back(rec, reals, ints);
        if (rec.origin_rank >= 0 && rec.origin_rank < nranks()) {
            auto& next = next_id_[static_cast<std::size_t>(rec.origin_rank)];
            next = std::max(next, rec.id);
        }
        ++version_;
    }

    /// Sort every tile by (origin_rank, id).
    void canonicalize()
    {
        for (auto& [k, t] : tiles_) t.sort_canonical();
        ++version_;
    }

    ParticleTile<D>& tile(const TileKey& k)
    {
        auto it = tiles_.find(k);
        if (it == tiles_.end()) it = tiles_.emplace(k, ParticleTile<D>(schema_)).first;
        return it->second;
    }
    const std::map<TileKey, ParticleTile<D>>& tiles() const noexcept { return tiles_; }
    std::map<TileKey, ParticleTile<D>>& tiles() noexcept { return tiles_; }

    std::int64_t total_count() const
    {
        std::int64_t n = 0;
        for (auto& [k, t] : tiles_) n += static_cast<std::int64_t>(t.size());
        return n;
    }

    /// Empty string when every particle sits in the tile locate() names.
    std::string check_placement() const
    {
        for (auto& [k, t] : tiles_)
            for (std::size_t i = 0; i < t.size(); ++i) {
                const auto loc = locate(t.rec(i).pos);
                const TileKey want{loc.level, loc.grid, tile_index(loc.level, loc.grid, loc.cell)};
                if (want != k) return "particle " + std::to_string(t.rec(i).id) + " stored in the wrong tile";
            }
        return {};
    }

    void redistribute(Transport& tr, const RedistributeOptions& opt = {});

    void mark_modified() noexcept { ++version_; }

  private:
    std::vector<Geometry<D>> geom_;
    std::vector<BoxArray<D>> ba_;
    std::vector<DistributionMapping> dm_;
    ParticleSchema schema_;
    IntVect<D> tile_size_;
    std::map<TileKey, ParticleTile<D>> tiles_;
    std::vector<std::int64_t> next_id_;
    std::uint64_t version_ = 0;
};

namespace detail {

template <int D>
void pack_particle(Buffer& buf, const ParticleTile<D>& t, std::size_t i)
{
    append_pod(buf, t.rec(i));
    for (int c = 0; c < t.nreal(); ++c) append_pod(buf, t.real(c, i));
    for (int c = 0; c < t.nint(); ++c) append_pod(buf, t.integer(c, i));
}

template <int D>
void unpack_particle(const Buffer& buf, std::size_t& off, ParticleTile<D>& t, const ParticleSchema& s)
{
    const auto r = read_pod<ParticleRecord<D>>(buf, off);
    std::vector<double> re(static_cast<std::size_t>(s.nreal));
    std::vector<int> in(static_cast<std::size_t>(s.nint));
    for (auto& v : re) v = read_pod<double>(buf, off);
    for (auto& v : in) v = read_pod<int>(buf, off);
    t.push_back(r, re, in);
}

} // namespace detail

/// Move every particle to the (level, grid, tile) locate() names, on the
/// owning rank.  Negative-id particles are dropped.  One message per
/// (src, dst) rank pair.
template <int D>
void ParticleContainer<D>::redistribute(Transport& tr, const RedistributeOptions& opt)
{
    const int R = nranks();
    if (tr.nranks() != R) throw Error("redistribute: transport rank count differs from the container's");
    const int lev_max = opt.lev_max < 0 ? num_levels() - 1 : std::min(opt.lev_max, num_levels() - 1);
    const int tag = tr.next_tag();

    std::map<TileKey, ParticleTile<D>> next;
    std::vector<Buffer> out(static_cast<std::size_t>(R) * static_cast<std::size_t>(R));
    std::vector<std::int64_t> violators;

    for (int r = 0; r < R; ++r) {
        for (auto& [k, t] : tiles_) {
            if (owner(k) != r) continue;
            const bool in_range = k.level >= opt.lev_min && k.level <= lev_max;
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (t.rec(i).id < 0) continue;
                TileKey dst = k;
                ParticleRecord<D> rec = t.rec(i);
                rec.pos = wrap(rec.pos);
                const Box<D>& old_box = box_array(k.level)[k.grid];
                const IntVect<D> here = cell_at(k.level, rec.pos);
                if (opt.mode == RedistributeOptions::Mode::local) {
                    int kc = opt.local_cells;
                    if (kc < 0) {
                        kc = 0;
                        for (const auto& b : box_array(k.level))
                            for (int d = 0; d < D; ++d) kc = std::max(kc, b.length(d));
                        kc = std::max(1, kc / 2);
                    }
                    // displacement measured before the periodic wrap
                    if (!grow(old_box, kc).contains(geom(k.level).cell_of(t.rec(i).pos))) violators.push_back(rec.id);
                }
                if (!in_range && grow(old_box, opt.nbuffer).contains(here)) {
                    // excluded level, inside the tolerance band: leave in place
                    if (old_box.contains(here)) dst.tile = tile_index(k.level, k.grid, here);
                } else {
                    Located<D> loc;
                    try {
                        loc = locate(rec.pos, opt.lev_min, lev_max);
                    } catch (const Error&) {
                        loc = locate(rec.pos);
                    }
                    dst = TileKey{loc.level, loc.grid, tile_index(loc.level, loc.grid, loc.cell)};
                }
                const int dr = owner(dst);
                if (dr == r) {
                    auto it = next.find(dst);
                    if (it == next.end()) it = next.emplace(dst, ParticleTile<D>(schema_)).first;
                    it->second.push_back_from(t, i);
                    it->second.rec(it->second.size() - 1) = rec;
                } else {
                    auto& buf = out[static_cast<std::size_t>(r * R + dr)];
                    detail::append_pod(buf, dst);
                    ParticleTile<D> one(schema_);
                    one.push_back_from(t, i);
                    one.rec(0) = rec;
                    detail::pack_particle(buf, one, 0);
                }
            }
        }
    }
    if (!violators.empty()) {
        std::string ids;
        for (std::size_t n = 0; n < violators.size() && n < 16; ++n) ids += (n ? ", " : "") + std::to_string(violators[n]);
        throw Error("redistribute: local mode violated by " + std::to_string(violators.size()) + " particle(s): " + ids);
    }
    for (int s = 0; s < R; ++s)
        for (int d = 0; d < R; ++d) {
            auto& buf = out[static_cast<std::size_t>(s * R + d)];
            if (!buf.empty()) tr.send(s, d, tag, std::move(buf));
        }
    for (int d = 0; d < R; ++d)
        for (auto& m : tr.receive_all(d, tag)) {
            std::size_t off = 0;
            while (off < m.data.size()) {
                const auto k = detail::read_pod<TileKey>(m.data, off);
                auto it = next.find(k);
                if (it == next.end()) it = next.emplace(k, ParticleTile<D>(schema_)).first;
                detail::unpack_particle(m.data, off, it->second, schema_);
            }
        }
    for (auto it = next.begin(); it != next.end();) {
        if (it->second.empty())
            it = next.erase(it);
        else
            (it++)->second.sort_canonical();
    }
    tiles_ = std::move(next);
    ++version_;
}

/// Copies of particles from other grids (and periodic images) lying within
/// nghost cells of each grid's valid region, with provenance.
template <int D>
struct NeighborHalo
{
    struct Source
    {
        TileKey key;
        std::int64_t index = 0;
        RealVect<D> shift{};
    };
    int level = 0;
    int nghost = 0;
    std::uint64_t version = 0;
    std::map<int, ParticleTile<D>> ghosts;
    std::map<int, std::vector<Source>> sources;

    std::int64_t size() const
    {
        std::int64_t n = 0;
        for (auto& [g, t] : ghosts) n += static_cast<std::int64_t>(t.size());
        return n;
    }
};

namespace detail {

template <int D>
void check_halo(const ParticleContainer<D>& pc, const NeighborHalo<D>& h, const char* what)
{
    if (h.version != pc.version()) throw Error(std::string(what) + ": halo is stale (container changed since fill_neighbors)");
}

/// Enumerate halo entries in canonical order: (dst grid, shift, src grid, tile, index).
template <int D, class F>
void for_each_halo_entry(const ParticleContainer<D>& pc, int level, int nghost, F&& f)
{
    const auto& ba = pc.box_array(level);
    const auto& g = pc.geom(level);
    const auto per = g.periodicity();
    const auto shifts = per.shifts();
    for (int gi = 0; gi < ba.size(); ++gi) {
        const Box<D> region = grow(ba[gi], nghost);
        for (std::size_t si = 0; si < shifts.size(); ++si) {
            const IntVect<D>& s = shifts[si];
            RealVect<D> dx;
            for (int d = 0; d < D; ++d) dx[d] = s[d] * g.cell_size(d);
            for (auto& [j, ov] : ba.intersections(shift(region, -s))) {
                if (j == gi && si == 0) continue;
                const TileKey lo{level, j, 0}, hi{level, j + 1, 0};
                for (auto it = pc.tiles().lower_bound(lo); it != pc.tiles().end() && it->first < hi; ++it) {
                    const auto& t = it->second;
                    for (std::size_t i = 0; i < t.size(); ++i)
                        if (ov.contains(pc.cell_at(level, t.rec(i).pos))) f(gi, it->first, i, dx);
                }
            }
        }
    }
}

} // namespace detail

template <int D>
NeighborHalo<D> fill_neighbors(const ParticleContainer<D>& pc, int nghost, Transport& tr, int level = 0)
{
    if (nghost < 0) throw Error("fill_neighbors: nghost must be >= 0");
    const int R = pc.nranks();
    const int tag = tr.next_tag();
    NeighborHalo<D> h;
    h.level = level;
    h.nghost = nghost;
    h.version = pc.version();
    std::vector<Buffer> out(static_cast<std::size_t>(R * R));
    std::int64_t seq = 0;
    detail::for_each_halo_entry(pc, level, nghost, [&](int gi, const TileKey& k, std::size_t i, const RealVect<D>& shift) {
        const int src = pc.owner(k), dst = pc.dmap(level)[gi];
        auto& buf = out[static_cast<std::size_t>(src * R + dst)];
        detail::append_pod(buf, gi);
        detail::append_pod(buf, seq++);
        detail::append_pod(buf, typename NeighborHalo<D>::Source{k, static_cast<std::int64_t>(i), shift});
        ParticleTile<D> one(pc.schema());
        one.push_back_from(pc.tiles().at(k), i);
        for (int d = 0; d < D; ++d) one.rec(0).pos[d] += shift[d];
        detail::pack_particle(buf, one, 0);
    });
    for (int s = 0; s < R; ++s)
        for (int d = 0; d < R; ++d)
            if (!out[static_cast<std::size_t>(s * R + d)].empty()) tr.send(s, d, tag, std::move(out[static_cast<std::size_t>(s * R + d)]));

    std::map<int, std::vector<std::tuple<std::int64_t, typename NeighborHalo<D>::Source, ParticleTile<D>>>> staged;
    for (int d = 0; d < R; ++d)
        for (auto& m : tr.receive_all(d, tag)) {
            std::size_t off = 0;
            while (off < m.data.size()) {
                const int gi = detail::read_pod<int>(m.data, off);
                const auto sq = detail::read_pod<std::int64_t>(m.data, off);
                const auto src = detail::read_pod<typename NeighborHalo<D>::Source>(m.data, off);
                ParticleTile<D> one(pc.schema());
                detail::unpack_particle(m.data, off, one, pc.schema());
                staged[gi].emplace_back(sq, src, std::move(one));
            }
        }
    for (auto& [gi, v] : staged) {
        std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return std::get<0>(a) < std::get<0>(b); });
        auto& gt = h.ghosts.emplace(gi, ParticleTile<D>(pc.schema())).first->second;
        auto& srcs = h.sources[gi];
        for (auto& e : v) {
            gt.push_back_from(std::get<2>(e), 0);
            srcs.push_back(std::get<1>(e));
        }
    }
    return h;
}

/// Refresh ghost payloads from their owners, keeping membership.
template <int D>
void update_neighbors(const ParticleContainer<D>& pc, NeighborHalo<D>& h, Transport& tr)
{
    detail::check_halo(pc, h, "update_neighbors");
    const int R = pc.nranks();
    const int tag = tr.next_tag();
    std::vector<Buffer> out(static_cast<std::size_t>(R * R));
    for (auto& [gi, srcs] : h.sources)
        for (std::size_t k = 0; k < srcs.size(); ++k) {
            const auto& s = srcs[k];
            const int from = pc.owner(s.key), to = pc.dmap(h.level)[gi];
            auto& buf = out[static_cast<std::size_t>(from * R + to)];
            detail::append_pod(buf, gi);
            detail::append_pod(buf, static_cast<std::int64_t>(k));
            ParticleTile<D> one(pc.schema());
            one.push_back_from(pc.tiles().at(s.key), static_cast<std::size_t>(s.index));
            for (int d = 0; d < D; ++d) one.rec(0).pos[d] += s.shift[d];
            detail::pack_particle(buf, one, 0);
        }
    for (int s = 0; s < R; ++s)
        for (int d = 0; d < R; ++d)
            if (!out[static_cast<std::size_t>(s * R + d)].empty()) tr.send(s, d, tag, std::move(out[static_cast<std::size_t>(s * R + d)]));
    for (int d = 0; d < R; ++d)
        for (auto& m : tr.receive_all(d, tag)) {
            std::size_t off = 0;
            while (off < m.data.size()) {
                const int gi = detail::read_pod<int>(m.data, off);
                const auto k = static_cast<std::size_t>(detail::read_pod<std::int64_t>(m.data, off));
                ParticleTile<D> one(pc.schema());
                detail::unpack_particle(m.data, off, one, pc.schema());
                auto& gt = h.ghosts.at(gi);
                gt.rec(k) = one.rec(0);
                for (int c = 0; c < gt.nreal(); ++c) gt.real(c, k) = one.real(c, 0);
                for (int c = 0; c < gt.nint(); ++c) gt.integer(c, k) = one.integer(c, 0);
            }
        }
}

/// Owner real component comp += sum of its ghost copies' values, added in
/// (grid, ghost index) order.
template <int D>
void sum_neighbors(ParticleContainer<D>& pc, const NeighborHalo<D>& h, int comp, Transport& tr)
{
    detail::check_halo(pc, h, "sum_neighbors");
    if (comp < 0 || comp >= pc.schema().nreal) throw Error("sum_neighbors: real component out of range");
    const int R = pc.nranks();
    const int tag = tr.next_tag();
    std::vector<Buffer> out(static_cast<std::size_t>(R * R));
    for (auto& [gi, srcs] : h.sources)
        for (std::size_t k = 0; k < srcs.size(); ++k) {
            const auto& s = srcs[k];
            const int from = pc.dmap(h.level)[gi], to = pc.owner(s.key);
            auto& buf = out[static_cast<std::size_t>(from * R + to)];
            detail::append_pod(buf, gi);
            detail::append_pod(buf, static_cast<std::int64_t>(k));
            detail::append_pod(buf, s.key);
            detail::append_pod(buf, s.index);
            detail::append_pod(buf, h.ghosts.at(gi).real(comp, k));
        }
    for (int s = 0; s < R; ++s)
        for (int d = 0; d < R; ++d)
            if (!out[static_cast<std::size_t>(s * R + d)].empty()) tr.send(s, d, tag, std::move(out[static_cast<std::size_t>(s * R + d)]));
    std::vector<std::tuple<int, std::int64_t, TileKey, std::int64_t, double>> contrib;
    for (int d = 0; d < R; ++d)
        for (auto& m : tr.receive_all(d, tag)) {
            std::size_t off = 0;
            while (off < m.data.size()) {
                const int gi = detail::read_pod<int>(m.data, off);
                const auto k = detail::read_pod<std::int64_t>(m.data, off);
                const auto key = detail::read_pod<TileKey>(m.data, off);
                const auto idx = detail::read_pod<std::int64_t>(m.data, off);
                const auto v = detail::read_pod<double>(m.data, off);
                contrib.emplace_back(gi, k, key, idx, v);
            }
        }
    std::sort(contrib.begin(), contrib.end(), [](auto& a, auto& b) { return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b)); });
    for (auto& [gi, k, key, idx, v] : contrib) pc.tile(key).real(comp, static_cast<std::size_t>(idx)) += v;
}

/// Per grid: candidate partners of each owned particle among owned and halo
/// particles of that grid, stored as CSR rows.  Combined index space: owned
/// particles (tiles in key order) first, then halo ghosts.
template <int D>
struct NeighborList
{
    struct GridList
    {
        std::vector<TileKey> owned_key;
        std::vector<std::int64_t> owned_index;
        std::vector<std::int64_t> offsets;
        std::vector<std::int64_t> nbrs;
        std::int64_t n_owned() const { return static_cast<std::int64_t>(owned_key.size()); }
    };
    std::map<int, GridList> grids;
};

template <int D>
using PairPredicate = std::function<bool(const ParticleRecord<D>&, const ParticleRecord<D>&)>;

/// Bin owned + halo particles with bins no smaller than cutoff and test only
/// the 3^D surrounding bins.  The default predicate is |xi - xj| <= cutoff.
template <int D>
NeighborList<D> build_neighbor_list(const ParticleContainer<D>& pc, const NeighborHalo<D>& h, double cutoff, PairPredicate<D> pred = {})
{
    detail::check_halo(pc, h, "build_neighbor_list");
    const auto& g = pc.geom(h.level);
    for (int d = 0; d < D; ++d)
        if (h.nghost * g.cell_size(d) < cutoff) throw Error("build_neighbor_list: halo of " + std::to_string(h.nghost) + " cells is narrower than the cutoff");
    if (!pred) {
        const double c2 = cutoff * cutoff;
        pred = [c2](const ParticleRecord<D>& a, const ParticleRecord<D>& b) {
            double r2 = 0.0;
            for (int d = 0; d < D; ++d) r2 += (a.pos[d] - b.pos[d]) * (a.pos[d] - b.pos[d]);
            return r2 <= c2;
        };
    }
    NeighborList<D> nl;
    const auto& ba = pc.box_array(h.level);
    for (int gi = 0; gi < ba.size(); ++gi) {
        auto& gl = nl.grids[gi];
        std::vector<ParticleRecord<D>> parts;
        const TileKey lo{h.level, gi, 0}, hi{h.level, gi + 1, 0};
        for (auto it = pc.tiles().lower_bound(lo); it != pc.tiles().end() && it->first < hi; ++it)
            for (std::size_t i = 0; i < it->second.size(); ++i) {
                gl.owned_key.push_back(it->first);
                gl.owned_index.push_back(static_cast<std::int64_t>(i));
                parts.push_back(it->second.rec(i));
            }
        if (auto it = h.ghosts.find(gi); it != h.ghosts.end()) parts.insert(parts.end(), it->second.records().begin(), it->second.records().end());

        const Box<D> region = grow(ba[gi], h.nghost);
        const RealVect<D> x0 = g.node_position(region.lo());
        IntVect<D> nb;
        RealVect<D> bs;
        for (int d = 0; d < D; ++d) {
            const double ext = region.length(d) * g.cell_size(d);
            nb[d] = std::max(1, static_cast<int>(std::floor(ext / cutoff)));
            bs[d] = ext / nb[d];
        }
        const Box<D> bins(IntVect<D>(0), nb - IntVect<D>::unit());
        auto bin_of = [&](const ParticleRecord<D>& p) {
            IntVect<D> b;
            for (int d = 0; d < D; ++d) b[d] = std::clamp(static_cast<int>(std::floor((p.pos[d] - x0[d]) / bs[d])), 0, nb[d] - 1);
            return b;
        };
        std::vector<int> ids(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i) ids[i] = static_cast<int>(bins.index(bin_of(parts[i])));
        const auto bp = bin_permutation(ids, static_cast<int>(bins.num_cells()));

        gl.offsets.assign(1, 0);
        for (std::int64_t i = 0; i < gl.n_owned(); ++i) {
            const auto& pi = parts[static_cast<std::size_t>(i)];
            const IntVect<D> b = bin_of(pi);
            std::vector<std::int64_t> row;
            for_each_cell(intersect(Box<D>(b - IntVect<D>::unit(), b + IntVect<D>::unit()), bins), [&](const IntVect<D>& nbin) {
                const auto bid = static_cast<std::size_t>(bins.index(nbin));
                const auto beg = bp.offsets[bid], end = beg + bp.counts[bid];
                for (auto s = beg; s < end; ++s) {
                    const auto j = bp.permutation[static_cast<std::size_t>(s)];
                    if (j != i && pred(pi, parts[static_cast<std::size_t>(j)])) row.push_back(j);
                }
            });
            std::sort(row.begin(), row.end());
            gl.nbrs.insert(gl.nbrs.end(), row.begin(), row.end());
            gl.offsets.push_back(static_cast<std::int64_t>(gl.nbrs.size()));
        }
    }
    return nl;
}

enum class DepositKernel { ngp, cic };

inline int kernel_radius(DepositKernel k) noexcept { return k == DepositKernel::cic ? 1 : 0; }

/// Calls f(cell, weight) for each mesh cell the kernel touches.  CIC uses
/// cell-centered weights.
template <int D, class F>
void kernel_stencil(const Geometry<D>& g, const std::type_identity_t<RealVect<D>>& x, DepositKernel k, F&& f)
{
    if (k == DepositKernel::ngp) {
        f(g.cell_of(x), 1.0);
        return;
    }
    IntVect<D> i0;
    RealVect<D> fr;
    for (int d = 0; d < D; ++d) {
        const double l = (x[d] - g.prob_lo()[d]) / g.cell_size(d) - 0.5;
        const double fl = std::floor(l);
        i0[d] = g.domain().lo(d) + static_cast<int>(fl);
        fr[d] = l - fl;
    }
    for (int corner = 0; corner < (1 << D); ++corner) {
        IntVect<D> c = i0;
        double w = 1.0;
        for (int d = 0; d < D; ++d) {
            const int bit = (corner >> d) & 1;
            c[d] += bit;
            w *= bit ? fr[d] : 1.0 - fr[d];
        }
        f(c, w);
    }
}

/// Deposit particle weights (real component weight_comp, or 1 if negative)
/// onto mesh component mesh_comp.  Each tile deposits into a private buffer
/// covering the tile plus the kernel radius; buffers are added in tile order
/// and ghosts folded with sum_boundary.  When mesh and particles use
/// different grids the deposit happens on the particle grids and is then
/// copied onto the mesh.
template <int D>
void particle_to_mesh(const ParticleContainer<D>& pc, FabArray<D>& mesh, int weight_comp, DepositKernel k, Transport& tr, int level = 0,
                      int mesh_comp = 0)
{
    const int rad = kernel_radius(k);
    const auto& g = pc.geom(level);
    const bool dual = !(mesh.box_array() == pc.box_array(level) && mesh.distribution_map() == pc.dmap(level));
    if (!dual && mesh.ngrow() < rad) throw Error("particle_to_mesh: mesh needs at least " + std::to_string(rad) + " ghost cell(s) for this kernel");
    if (weight_comp >= pc.schema().nreal) throw Error("particle_to_mesh: weight component out of range");
    FabArray<D> tmp(pc.box_array(level), pc.dmap(level), 1, std::max(rad, 1), 0.0);
    const auto& ba = pc.box_array(level);
    for (int gi = 0; gi < ba.size(); ++gi) {
        const TileKey lo{level, gi, 0}, hi{level, gi + 1, 0};
        for (auto it = pc.tiles().lower_bound(lo); it != pc.tiles().end() && it->first < hi; ++it) {
            const auto& t = it->second;
            Fab<D> buf(pc.tile_box(it->first), 1, rad, 0.0);
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double w = weight_comp >= 0 ? t.real(weight_comp, i) : 1.0;
                kernel_stencil(g, t.rec(i).pos, k, [&](const IntVect<D>& c, double kw) {
                    if (!buf.grown_box().contains(c)) throw Error("particle_to_mesh: particle " + std::to_string(t.rec(i).id) + " lies outside its tile; redistribute first");
                    buf(c, 0) += w * kw;
                });
            }
            tmp[gi].add_from(buf, buf.grown_box(), 0, buf.grown_box(), 0, 1);
        }
    }
    sum_boundary(tmp, tr, g.periodicity());
    if (dual) {
        parallel_copy(mesh, tmp, tr, 0, mesh_comp, 1);
    } else {
        for (int gi = 0; gi < mesh.size(); ++gi) mesh[gi].copy_from(tmp[gi], ba[gi], 0, ba[gi], mesh_comp, 1);
    }
}

/// Interpolate mesh component mesh_comp to each particle, writing real
/// component dst_comp.  Ghost data comes from a parallel_copy of the valid
/// mesh (periodic images included) onto the particle grids.
template <int D>
void mesh_to_particle(ParticleContainer<D>& pc, const FabArray<D>& mesh, int mesh_comp, DepositKernel k, Transport& tr, int dst_comp, int level = 0)
{
    const int rad = kernel_radius(k);
    if (dst_comp < 0 || dst_comp >= pc.schema().nreal) throw Error("mesh_to_particle: destination component out of range");
    const auto& g = pc.geom(level);
    FabArray<D> tmp(pc.box_array(level), pc.dmap(level), 1, std::max(rad, 1), 0.0);
    parallel_copy(tmp, mesh, tr, mesh_comp, 0, 1, tmp.ngrow(), g.periodicity());
    for (auto& [key, t] : pc.tiles()) {
        if (key.level != level) continue;
        const auto& f = tmp[key.grid];
        for (std::size_t i = 0; i < t.size(); ++i) {
            double v = 0.0;
            kernel_stencil(g, t.rec(i).pos, k, [&](const IntVect<D>& c, double kw) { v += kw * f(c, 0); });
            t.real(dst_comp, i) = v;
        }
    }
}

/// Distinct other boxes within one cell of each box (periodic images
/// included, the box itself excluded).
template <int D>
std::vector<int> box_neighbor_counts(const BoxArray<D>& ba, const Periodicity<D>& per)
{
    std::vector<int> out;
    for (int i = 0; i < ba.size(); ++i) {
        std::vector<int> seen;
        for (const auto& s : per.shifts())
            for (auto& [j, ov] : ba.intersections(shift(grow(ba[i], 1), -s))) {
                (void)ov;
                if (j == i && s == IntVect<D>(0)) continue;
                if (j != i) seen.push_back(j);
            }
        std::sort(seen.begin(), seen.end());
        out.push_back(static_cast<int>(std::unique(seen.begin(), seen.end()) - seen.begin()));
    }
    return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Uniform value in [-1, 1) determined by (seed, origin rank, id, step, d).
inline double hashed_uniform(std::uint64_t seed, int origin, std::int64_t id, int step, int d) noexcept
{
    std::uint64_t h = detail::splitmix64(seed);
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(origin));
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(id));
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(step));
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(d));
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

/// Move every particle by up to max_cells cells per direction, with a
/// displacement that depends only on the particle and the step.
template <int D>
void random_walk(ParticleContainer<D>& pc, std::uint64_t seed, int step, double max_cells, int level = 0)
{
    const auto& g = pc.geom(level);
    for (auto& [k, t] : pc.tiles())
        for (std::size_t i = 0; i < t.size(); ++i) {
            auto& r = t.rec(i);
            for (int d = 0; d < D; ++d) r.pos[d] += max_cells * g.cell_size(d) * hashed_uniform(seed, r.origin_rank, r.id, step, d);
        }
    pc.mark_modified();
}

} // namespace amrlite

#endif // AMRLITE_PARTICLES_HPP

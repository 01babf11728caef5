#ifndef AMRLITE_COARSE_FINE_HPP
#define AMRLITE_COARSE_FINE_HPP

// Inter-level operations: coarse-to-fine interpolation, average_down,
// fill_patch and the flux register.
//
// Flux sign convention: a face flux is positive when it carries the
// conserved quantity from low to high index along its direction, and a
// conservative update reads u(c) -= dt/dx * (F(c + e_d) - F(c)).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "amr_core.hpp"
#include "fab_array.hpp"
#include "geometry.hpp"
#include "transport.hpp"

namespace amrlite {

enum class InterpKind { piecewise_constant, linear_limited };
enum class AverageMode { average, injection };

namespace detail {

constexpr double unset_value = std::numeric_limits<double>::quiet_NaN();

inline double minmod(double a, double b) noexcept
{
    if (a * b <= 0.0) return 0.0;
    return std::abs(a) < std::abs(b) ? a : b;
}

/// Region reachable inside the domain: unbounded along periodic directions.
template <int D>
Box<D> domain_extension(const Periodicity<D>& per)
{
    IntVect<D> lo = per.domain.lo(), hi = per.domain.hi();
    for (int d = 0; d < D; ++d)
        if (per.periodic[d]) lo[d] = -(1 << 28), hi[d] = 1 << 28;
    return Box<D>(lo, hi);
}

/// Parts of region not covered by ba or its periodic images.
template <int D>
std::vector<Box<D>> uncovered(const Box<D>& region, const BoxArray<D>& ba, const Periodicity<D>& per)
{
    std::vector<Box<D>> cover;
    for (const auto& s : per.shifts())
        for (auto& [j, ov] : ba.intersections(shift(region, -s))) cover.push_back(shift(ov, s));
    if (cover.empty()) return {region};
    return complement_in(region, BoxArray<D>(std::move(cover)));
}

/// Copy valid data of src (and periodic images) into every overlapping cell of out.
template <int D>
void gather_valid(const FabArray<D>& src, Fab<D>& out, const Periodicity<D>& per)
{
    const Box<D> region = out.grown_box();
    for (const auto& s : per.shifts())
        for (auto& [j, ov] : src.box_array().intersections(shift(region, -s))) out.copy_from(src[j], ov, 0, shift(ov, s), 0, out.ncomp());
}

/// (1-w) a + w b, returning an exact copy at the end points.
template <int D>
void blend_into(Fab<D>& a, const Fab<D>& b, double w)
{
    if (w == 0.0) return;
    auto da = a.data();
    auto db = b.data();
    if (w == 1.0) {
        std::copy(db.begin(), db.end(), da.begin());
        return;
    }
    for (std::size_t k = 0; k < da.size(); ++k) da[k] = (1.0 - w) * da[k] + w * db[k];
}

} // namespace detail

/// Interpolate crse (coarse index space, NaN marks unavailable data) onto
/// fine_region of fine.  Linear slopes are minmod-limited per direction and
/// then scaled jointly so no child leaves the range spanned by the parent
/// and its face neighbours.
template <int D>
void interp_fab(const Fab<D>& crse, Fab<D>& fine, const Box<D>& fine_region, const IntVect<D>& ratio, InterpKind kind)
{
    const int nc = std::min(crse.ncomp(), fine.ncomp());
    const Box<D>& cb = crse.grown_box();
    auto avail = [&](const IntVect<D>& c, int n) { return cb.contains(c) && !std::isnan(crse(c, n)); };
    for_each_cell(fine_region, [&](const IntVect<D>& p) {
        const IntVect<D> c = floor_div(p, ratio);
        for (int n = 0; n < nc; ++n) {
            if (!avail(c, n)) throw Error("interp_c2f: coarse parent " + c.str() + " of fine cell " + p.str() + " is not covered");
            const double v = crse(c, n);
            if (kind == InterpKind::piecewise_constant) {
                fine(p, n) = v;
                continue;
            }
            std::array<double, D> slope{}, off{};
            double vmin = v, vmax = v, dev = 0.0;
            for (int d = 0; d < D; ++d) {
                const IntVect<D> e = IntVect<D>::basis(d);
                const bool has_lo = avail(c - e, n), has_hi = avail(c + e, n);
                if (has_lo) vmin = std::min(vmin, crse(c - e, n)), vmax = std::max(vmax, crse(c - e, n));
                if (has_hi) vmin = std::min(vmin, crse(c + e, n)), vmax = std::max(vmax, crse(c + e, n));
                slope[d] = (has_lo && has_hi) ? detail::minmod(crse(c + e, n) - v, v - crse(c - e, n)) : 0.0;
                off[d] = ((p[d] - c[d] * ratio[d]) + 0.5) / ratio[d] - 0.5;
                dev += std::abs(slope[d]) * (0.5 - 0.5 / ratio[d]);
            }
            double alpha = 1.0;
            if (dev > 0.0) alpha = std::min({1.0, (vmax - v) / dev, (v - vmin) / dev});
            double f = v;
            for (int d = 0; d < D; ++d) f += alpha * slope[d] * off[d];
            fine(p, n) = f;
        }
    });
}

/// Fine values on fine_region interpolated from the valid data of crse.
template <int D>
Fab<D> interp_c2f(const FabArray<D>& crse, const Box<D>& fine_region, const IntVect<D>& ratio, InterpKind kind,
                  const Periodicity<D>& crse_period = Periodicity<D>::none())
{
    Fab<D> ctmp(coarsen(fine_region, ratio), crse.ncomp(), 1, detail::unset_value);
    detail::gather_valid(crse, ctmp, crse_period);
    Fab<D> out(fine_region, crse.ncomp(), 0);
    interp_fab(ctmp, out, fine_region, ratio, kind);
    return out;
}

/// Replace coarse cells covered by the fine level with the mean of their
/// children (or the lowest-corner child for injection).
template <int D>
void average_down(const FabArray<D>& fine, FabArray<D>& crse, const IntVect<D>& ratio, AverageMode mode, Transport& tr)
{
    if (fine.ncomp() != crse.ncomp()) throw Error("average_down: component count mismatch");
    const int nc = fine.ncomp();
    const auto& fba = fine.box_array();
    const BoxArray<D> cba = *fba.template cached<BoxArray<D>>("coarsen:" + ratio.str(), [&] { return coarsen(fba, ratio); });
    FabArray<D> tmp(cba, fine.distribution_map(), nc, 0);
    const double inv = 1.0 / static_cast<double>(ratio.product());
    for (int i = 0; i < tmp.size(); ++i) {
        const auto& f = fine[i];
        auto& t = tmp[i];
        for_each_cell(cba[i], [&](const IntVect<D>& c) {
            const Box<D> kids = refine(Box<D>(c, c), ratio);
            for (int n = 0; n < nc; ++n) {
                if (mode == AverageMode::injection) {
                    t(c, n) = f(kids.lo(), n);
                    continue;
                }
                double s = 0.0;
                for_each_cell(kids, [&](const IntVect<D>& p) { s += f(p, n); });
                t(c, n) = s * inv;
            }
        });
    }
    parallel_copy(crse, tmp, tr, 0, 0, nc);
}

/// Fill valid and ghost cells of dst.  Cells covered by fine_src (valid data,
/// periodic images included) are copied from it; other in-domain cells are
/// interpolated from (1-w) crse_old + w crse_new; cells outside the domain
/// follow bc.  fine_src may be dst itself or null.
template <int D>
void fill_patch(FabArray<D>& dst, const FabArray<D>* fine_src, const FabArray<D>& crse_old, const FabArray<D>& crse_new, double w,
                const IntVect<D>& ratio, InterpKind kind, const Geometry<D>& fine_geom, const Geometry<D>& crse_geom,
                const BoundaryRecord<D>& bc, Transport& tr)
{
    if (!(w >= 0.0 && w <= 1.0)) throw Error("fill_patch: time weight must lie in [0, 1]");
    const int nc = dst.ncomp();
    const auto fper = fine_geom.periodicity();
    const auto cper = crse_geom.periodicity();
    const auto& dba = dst.box_array();

    // Coarse data around each destination box, fetched by parallel_copy.
    const std::string key = "cf-halo:" + ratio.str() + ":" + std::to_string(dst.ngrow());
    const BoxArray<D> hba = *dba.template cached<BoxArray<D>>(key, [&] {
        std::vector<Box<D>> v;
        for (const auto& b : dba) v.push_back(grow(coarsen(grow(b, dst.ngrow()), ratio), 1));
        return BoxArray<D>(std::move(v));
    });
    FabArray<D> cold(hba, dst.distribution_map(), nc, 0, detail::unset_value);
    parallel_copy(cold, crse_old, tr, 0, 0, nc, 0, cper);
    if (w != 0.0) {
        FabArray<D> cnew(hba, dst.distribution_map(), nc, 0, detail::unset_value);
        parallel_copy(cnew, crse_new, tr, 0, 0, nc, 0, cper);
        for (int i = 0; i < cold.size(); ++i) detail::blend_into(cold[i], cnew[i], w);
    }

    const Box<D> reach = detail::domain_extension(fper);
    for (int i = 0; i < dst.size(); ++i) {
        const Box<D> g = dst[i].grown_box();
        const auto holes = fine_src ? detail::uncovered(g, fine_src->box_array(), fper) : std::vector<Box<D>>{g};
        for (const auto& h : holes) {
            const Box<D> r = intersect(h, reach);
            if (!r.empty()) interp_fab(cold[i], dst[i], r, ratio, kind);
        }
    }
    if (fine_src == &dst)
        fill_boundary(dst, tr, fper);
    else if (fine_src)
        parallel_copy(dst, *fine_src, tr, 0, 0, nc, dst.ngrow(), fper);
    apply_physical_bc(dst, fine_geom, bc);
}

/// Single-Fab form: fill region of dst reading all inputs directly.
template <int D>
void fill_patch(Fab<D>& dst, const Box<D>& region, const FabArray<D>* fine_src, const FabArray<D>& crse_old, const FabArray<D>& crse_new,
                double w, const IntVect<D>& ratio, InterpKind kind, const Geometry<D>& fine_geom, const Geometry<D>& crse_geom,
                const BoundaryRecord<D>& bc)
{
    if (!(w >= 0.0 && w <= 1.0)) throw Error("fill_patch: time weight must lie in [0, 1]");
    const auto fper = fine_geom.periodicity();
    const auto cper = crse_geom.periodicity();
    Fab<D> ctmp(grow(coarsen(region, ratio), 1), crse_old.ncomp(), 0, detail::unset_value);
    detail::gather_valid(crse_old, ctmp, cper);
    if (w != 0.0) {
        Fab<D> cnew(ctmp.box(), crse_new.ncomp(), 0, detail::unset_value);
        detail::gather_valid(crse_new, cnew, cper);
        detail::blend_into(ctmp, cnew, w);
    }
    const Box<D> reach = detail::domain_extension(fper);
    const auto holes = fine_src ? detail::uncovered(region, fine_src->box_array(), fper) : std::vector<Box<D>>{region};
    for (const auto& h : holes) {
        const Box<D> r = intersect(h, reach);
        if (!r.empty()) interp_fab(ctmp, dst, r, ratio, kind);
    }
    if (fine_src) {
        for (const auto& s : fper.shifts())
            for (auto& [j, ov] : fine_src->box_array().intersections(shift(region, -s))) dst.copy_from((*fine_src)[j], ov, 0, shift(ov, s), 0, dst.ncomp());
    }
    Fab<D> view(region, dst.ncomp(), 0);
    view.copy_from(dst, region, 0, region, 0, dst.ncomp());
    apply_physical_bc(view, fine_geom, bc);
    dst.copy_from(view, region, 0, region, 0, dst.ncomp());
}

/// New level data after a regrid: old fine data where the grids overlap,
/// interpolation from crse elsewhere.
template <int D>
FabArray<D> remake_level(const FabArray<D>* old_fine, const BoxArray<D>& new_ba, const DistributionMapping& new_dm, const FabArray<D>& crse,
                         const IntVect<D>& ratio, InterpKind kind, const Geometry<D>& fine_geom, const Geometry<D>& crse_geom,
                         const BoundaryRecord<D>& bc, Transport& tr, int ngrow)
{
    FabArray<D> nf(new_ba, new_dm, crse.ncomp(), ngrow);
    fill_patch(nf, old_fine, crse, crse, 0.0, ratio, kind, fine_geom, crse_geom, bc, tr);
    return nf;
}

/// Coarse/fine flux mismatch on the coarse faces bounding the fine level.
template <int D>
class FluxRegister
{
  public:
    struct Face
    {
        int dim;
        int side;          // 0: coarse cell below the fine region, 1: above
        IntVect<D> cface;  // face index (node index along dim) on the fine side
        IntVect<D> ccell;  // uncovered coarse cell, periodically wrapped
        IntVect<D> cflux;  // same face seen from ccell (wrapped)
        int fine_box;
        std::vector<double> val;
    };

    FluxRegister() = default;
    FluxRegister(const BoxArray<D>& fine_ba, const IntVect<D>& ratio, const Geometry<D>& crse_geom, int ncomp)
        : ratio_(ratio), ncomp_(ncomp), cgeom_(crse_geom)
    {
        const auto per = crse_geom.periodicity();
        const Box<D>& dom = crse_geom.domain();
        const BoxArray<D> cfba = coarsen(fine_ba, ratio);
        for (int i = 0; i < fine_ba.size(); ++i) {
            if (refine(cfba[i], ratio) != fine_ba[i]) throw Error("FluxRegister: fine box " + fine_ba[i].str() + " is not ratio-aligned");
        }
        auto covered = [&](const IntVect<D>& c) {
            for (const auto& s : per.shifts())
                if (cfba.contains(c - s)) return true;
            return false;
        };
        for (int i = 0; i < cfba.size(); ++i) {
            const Box<D>& cb = cfba[i];
            for (int d = 0; d < D; ++d)
                for (int side = 0; side < 2; ++side) {
                    IntVect<D> lo = cb.lo(), hi = cb.hi();
                    const int plane = side == 0 ? cb.lo(d) - 1 : cb.hi(d) + 1;
                    lo[d] = hi[d] = plane;
                    for_each_cell(Box<D>(lo, hi), [&](const IntVect<D>& oc) {
                        if (!per.periodic[d] && (oc[d] < dom.lo(d) || oc[d] > dom.hi(d))) return;
                        const IntVect<D> w = per.wrap(oc);
                        if (covered(w)) return;
                        IntVect<D> face = oc;
                        face[d] = side == 0 ? cb.lo(d) : cb.hi(d) + 1;
                        IntVect<D> cflux = w;
                        if (side == 0) cflux[d] += 1;
                        faces_.push_back(Face{d, side, face, w, cflux, i, std::vector<double>(static_cast<std::size_t>(ncomp), 0.0)});
                    });
                }
        }
    }

    const std::vector<Face>& faces() const noexcept { return faces_; }
    int ncomp() const noexcept { return ncomp_; }
    void set_val(double v)
    {
        for (auto& f : faces_) std::fill(f.val.begin(), f.val.end(), v);
    }

    /// reg -= scale * coarse flux.  flux[d] is face-typed along d on the coarse BoxArray.
    void crse_add(const std::array<const FabArray<D>*, D>& flux, double scale)
    {
        check_faces(flux, "crse_add");
        for (auto& f : faces_) {
            const FabArray<D>& fl = *flux[static_cast<std::size_t>(f.dim)];
            const int j = find_face_box(fl.box_array(), f.cflux, f.ccell);
            for (int n = 0; n < ncomp_; ++n) f.val[static_cast<std::size_t>(n)] -= scale * fl[j](f.cflux, n);
        }
    }

    /// reg += scale * mean of the ratio^(D-1) fine fluxes on each coarse face.
    void fine_add(const std::array<const FabArray<D>*, D>& flux, double scale)
    {
        check_faces(flux, "fine_add");
        for (auto& f : faces_) {
            const auto& fab = (*flux[static_cast<std::size_t>(f.dim)])[f.fine_box];
            IntVect<D> lo, hi;
            for (int d = 0; d < D; ++d) {
                if (d == f.dim) {
                    lo[d] = hi[d] = f.cface[d] * ratio_[d];
                } else {
                    lo[d] = f.cface[d] * ratio_[d];
                    hi[d] = lo[d] + ratio_[d] - 1;
                }
            }
            const Box<D> fb(lo, hi);
            const double inv = 1.0 / static_cast<double>(fb.num_cells());
            for (int n = 0; n < ncomp_; ++n) {
                double s = 0.0;
                for_each_cell(fb, [&](const IntVect<D>& p) { s += fab(p, n); });
                f.val[static_cast<std::size_t>(n)] += scale * s * inv;
            }
        }
    }

    /// Coarse cell next to each face += sign * reg * dt_over_dx, where sign
    /// is +1 when the cell lies above the fine region.
    void reflux(FabArray<D>& crse, double dt_over_dx) const
    {
        for (const auto& f : faces_) {
            const auto j = crse.box_array().find(f.ccell);
            if (!j) throw Error("reflux: coarse cell " + f.ccell.str() + " is not on the coarse level");
            const double sgn = f.side == 1 ? 1.0 : -1.0;
            for (int n = 0; n < ncomp_; ++n) crse[*j](f.ccell, n) += sgn * f.val[static_cast<std::size_t>(n)] * dt_over_dx;
        }
    }

  private:
    void check_faces(const std::array<const FabArray<D>*, D>& flux, const char* what) const
    {
        for (int d = 0; d < D; ++d) {
            if (!flux[static_cast<std::size_t>(d)] || flux[static_cast<std::size_t>(d)]->ixtype() != IndexType<D>::face(d))
                throw Error(std::string(what) + ": flux " + std::to_string(d) + " must be face-centered along that direction");
            if (flux[static_cast<std::size_t>(d)]->ncomp() < ncomp_) throw Error(std::string(what) + ": too few flux components");
        }
    }

    /// Flux box holding the face as seen from the outside coarse cell.
    static int find_face_box(const BoxArray<D>& ba, const IntVect<D>& face, const IntVect<D>& cell)
    {
        int best = -1;
        for (auto& [j, ov] : ba.intersections(Box<D>(face, face, ba.ixtype()))) {
            (void)ov;
            if (ba.cell_box(j).contains(cell)) return j;
            if (best < 0 || j < best) best = j;
        }
        if (best < 0) throw Error("FluxRegister: no coarse flux covers face " + face.str());
        return best;
    }

    IntVect<D> ratio_;
    int ncomp_ = 1;
    Geometry<D> cgeom_;
    std::vector<Face> faces_;
};

} // namespace amrlite

#endif // AMRLITE_COARSE_FINE_HPP

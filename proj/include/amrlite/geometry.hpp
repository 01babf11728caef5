#ifndef AMRLITE_GEOMETRY_HPP
#define AMRLITE_GEOMETRY_HPP

// Geometry maps a level's index space onto physical coordinates; a
// BoundaryRecord names the condition applied at each domain side.

#include <array>
#include <cmath>
#include <string>

#include "core_index.hpp"
#include "fab_array.hpp"

namespace amrlite {

template <int D>
using RealVect = std::array<double, D>;

template <int D>
class Geometry
{
  public:
    Geometry() = default;
    Geometry(const Box<D>& domain, const RealVect<D>& prob_lo, const RealVect<D>& prob_hi, std::array<bool, D> periodic = {})
        : domain_(domain), prob_lo_(prob_lo), prob_hi_(prob_hi), periodic_(periodic)
    {
        if (domain.empty() || !domain.ixtype().is_cell()) throw Error("Geometry: domain must be a non-empty cell box");
        for (int d = 0; d < D; ++d) {
            dx_[d] = (prob_hi[d] - prob_lo[d]) / domain.length(d);
            if (!(dx_[d] > 0.0)) throw Error("Geometry: prob_hi must exceed prob_lo");
        }
    }

    const Box<D>& domain() const noexcept { return domain_; }
    const RealVect<D>& prob_lo() const noexcept { return prob_lo_; }
    const RealVect<D>& prob_hi() const noexcept { return prob_hi_; }
    const RealVect<D>& cell_size() const noexcept { return dx_; }
    double cell_size(int d) const noexcept { return dx_[d]; }
    double cell_volume() const noexcept
    {
        double v = 1.0;
        for (double h : dx_) v *= h;
        return v;
    }
    bool is_periodic(int d) const noexcept { return periodic_[d]; }
    const std::array<bool, D>& periodic() const noexcept { return periodic_; }
    Periodicity<D> periodicity() const { return Periodicity<D>{domain_, periodic_}; }

    RealVect<D> cell_center(const IntVect<D>& c) const noexcept
    {
        RealVect<D> x;
        for (int d = 0; d < D; ++d) x[d] = prob_lo_[d] + (c[d] - domain_.lo(d) + 0.5) * dx_[d];
        return x;
    }

    /// Physical position of node index n.
    RealVect<D> node_position(const IntVect<D>& n) const noexcept
    {
        RealVect<D> x;
        for (int d = 0; d < D; ++d) x[d] = prob_lo_[d] + (n[d] - domain_.lo(d)) * dx_[d];
        return x;
    }

    /// Cell containing x (half-open cells [lo, hi)).
    IntVect<D> cell_of(const RealVect<D>& x) const noexcept
    {
        IntVect<D> c;
        for (int d = 0; d < D; ++d) c[d] = domain_.lo(d) + static_cast<int>(std::floor((x[d] - prob_lo_[d]) / dx_[d]));
        return c;
    }

    /// Geometry of the level refined by r.
    Geometry refine(const IntVect<D>& r) const { return Geometry(amrlite::refine(domain_, r), prob_lo_, prob_hi_, periodic_); }

  private:
    Box<D> domain_;
    RealVect<D> prob_lo_{};
    RealVect<D> prob_hi_{};
    RealVect<D> dx_{};
    std::array<bool, D> periodic_{};
};

enum class BcType { periodic, external_value, extrapolate };

/// Boundary condition per dimension and side (0 = low, 1 = high).
template <int D>
struct BoundaryRecord
{
    std::array<std::array<BcType, 2>, D> type{};
    std::array<std::array<double, 2>, D> value{};

    static BoundaryRecord from_geometry(const Geometry<D>& g, BcType non_periodic = BcType::extrapolate)
    {
        BoundaryRecord r;
        for (int d = 0; d < D; ++d)
            for (int s = 0; s < 2; ++s) r.type[d][s] = g.is_periodic(d) ? BcType::periodic : non_periodic;
        return r;
    }

    void check(const Geometry<D>& g) const
    {
        for (int d = 0; d < D; ++d)
            for (int s = 0; s < 2; ++s)
                if ((type[d][s] == BcType::periodic) != g.is_periodic(d))
                    throw Error("BoundaryRecord: periodic tag in direction " + std::to_string(d) + " disagrees with Geometry");
    }
};

/// Fill cells of f outside the domain in non-periodic directions: an
/// external value, or a copy of the nearest in-domain cell (extrapolate).
template <int D>
void apply_physical_bc(Fab<D>& f, const Geometry<D>& geom, const BoundaryRecord<D>& bc)
{
    const Box<D>& dom = geom.domain();
    for_each_cell(f.grown_box(), [&](const IntVect<D>& p) {
        IntVect<D> q = p;
        bool outside = false;
        int ext_dim = -1, ext_side = 0;
        for (int d = 0; d < D; ++d) {
            if (geom.is_periodic(d)) continue;
            const int side = p[d] < dom.lo(d) ? 0 : (p[d] > dom.hi(d) ? 1 : -1);
            if (side < 0) continue;
            q[d] = side == 0 ? dom.lo(d) : dom.hi(d);
            outside = true;
            if (bc.type[d][side] == BcType::external_value && ext_dim < 0) ext_dim = d, ext_side = side;
        }
        if (!outside) return;
        for (int n = 0; n < f.ncomp(); ++n) {
            if (ext_dim >= 0)
                f(p, n) = bc.value[ext_dim][ext_side];
            else if (f.grown_box().contains(q))
                f(p, n) = f(q, n);
        }
    });
}

/// Must follow a fill_boundary so that in-domain neighbours are current.
template <int D>
void apply_physical_bc(FabArray<D>& fa, const Geometry<D>& geom, const BoundaryRecord<D>& bc)
{
    bc.check(geom);
    for (int i = 0; i < fa.size(); ++i) apply_physical_bc(fa[i], geom, bc);
}

} // namespace amrlite

#endif // AMRLITE_GEOMETRY_HPP

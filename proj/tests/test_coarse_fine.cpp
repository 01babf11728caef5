#include <gtest/gtest.h>

#include <cmath>

#include "amrlite/coarse_fine.hpp"
#include "test_support.hpp"

using namespace amrlite;
using amrlite::testing::Rng;
using amrlite::testing::uniform_int;
using amrlite::testing::uniform_real;

namespace {

using V2 = IntVect<2>;
using B2 = Box<2>;

FabArray<2> single(const B2& b, int ngrow = 0)
{
    return FabArray<2>(BoxArray<2>(b), DistributionMapping::single_rank(1), 1, ngrow);
}

template <int D>
FabArray<D> random_field(const BoxArray<D>& ba, int nranks, Rng& rng, int ngrow = 0)
{
    std::vector<int> owner;
    for (int i = 0; i < ba.size(); ++i) owner.push_back(i % nranks);
    FabArray<D> fa(ba, DistributionMapping(owner, nranks), 1, ngrow);
    for (int i = 0; i < fa.size(); ++i) for_each_cell(ba[i], [&](const IntVect<D>& p) { fa[i](p, 0) = uniform_real(rng, -1.0, 1.0); });
    return fa;
}

Geometry<2> geom(const B2& dom, bool periodic)
{
    return Geometry<2>(dom, {0.0, 0.0}, {1.0, 1.0}, {periodic, periodic});
}

// Two-path oracle: interpolate the whole region from coarse, then overwrite
// any cell found (by linear search, periodic images included) in a fine box.
Fab<2> fill_oracle(const B2& region, const FabArray<2>& fine, const FabArray<2>& crse, const V2& r, InterpKind kind, const Geometry<2>& fg,
                   const Geometry<2>& cg)
{
    Fab<2> out = interp_c2f(crse, region, r, kind, cg.periodicity());
    const B2& dom = fg.domain();
    for_each_cell(region, [&](const V2& p) {
        V2 q = p;
        for (int d = 0; d < 2; ++d)
            if (fg.is_periodic(d)) q[d] = ((q[d] - dom.lo(d)) % dom.length(d) + dom.length(d)) % dom.length(d) + dom.lo(d);
        for (int j = 0; j < fine.size(); ++j)
            if (fine.box_array()[j].contains(q)) out(p, 0) = fine[j](q, 0);
    });
    return out;
}

} // namespace

TEST(Interp, PiecewiseConstantChildren)
{
    auto c = single(B2({0, 0}, {3, 3}));
    c.set_val(5.0);
    for (auto kind : {InterpKind::piecewise_constant, InterpKind::linear_limited}) {
        auto f = interp_c2f(c, B2({0, 0}, {7, 7}), V2(2), kind);
        for_each_cell(B2({0, 0}, {7, 7}), [&](const V2& p) { EXPECT_EQ(f(p, 0), 5.0); });
    }
    c[0]({1, 1}, 0) = 9.0;
    auto f = interp_c2f(c, B2({2, 2}, {3, 3}), V2(2), InterpKind::piecewise_constant);
    for_each_cell(B2({2, 2}, {3, 3}), [&](const V2& p) { EXPECT_EQ(f(p, 0), 9.0); });
}

TEST(Interp, LinearRampQuarterOffsets)
{
    auto c = single(B2({0, 0}, {7, 3}));
    for_each_cell(c.box_array()[0], [&](const V2& p) { c[0](p, 0) = p[0]; });
    auto f = interp_c2f(c, B2({2, 0}, {13, 7}), V2(2), InterpKind::linear_limited);
    for (int i = 1; i <= 6; ++i)
        for (int j = 0; j < 8; ++j) {
            EXPECT_DOUBLE_EQ(f({2 * i, j}, 0), i - 0.25);
            EXPECT_DOUBLE_EQ(f({2 * i + 1, j}, 0), i + 0.25);
        }
}

TEST(Interp, UncoveredParentThrows)
{
    auto c = single(B2({0, 0}, {3, 3}));
    EXPECT_THROW(interp_c2f(c, B2({6, 6}, {9, 9}), V2(2), InterpKind::piecewise_constant), Error);
}

TEST(Interp, LinearHasNoNewExtrema)
{
    Rng rng(12);
    for (int r : {2, 3, 4}) {
        Box<3> cb(IntVect<3>(0), IntVect<3>(5));
        FabArray<3> c(BoxArray<3>(cb), DistributionMapping::single_rank(1), 1, 0);
        for_each_cell(cb, [&](const IntVect<3>& p) { c[0](p, 0) = uniform_real(rng, -1, 1) + 0.3 * (p[0] + p[1] + p[2]); });
        const Box<3> fr = refine(Box<3>(IntVect<3>(1), IntVect<3>(4)), IntVect<3>(r));
        auto f = interp_c2f(c, fr, IntVect<3>(r), InterpKind::linear_limited);
        for_each_cell(fr, [&](const IntVect<3>& p) {
            const IntVect<3> par = floor_div(p, IntVect<3>(r));
            double lo = c[0](par, 0), hi = lo;
            for (int d = 0; d < 3; ++d)
                for (int s : {-1, 1}) {
                    const double v = c[0](par + IntVect<3>::basis(d) * s, 0);
                    lo = std::min(lo, v), hi = std::max(hi, v);
                }
            EXPECT_GE(f(p, 0), lo - 1e-14);
            EXPECT_LE(f(p, 0), hi + 1e-14);
        });
    }
}

TEST(AverageDown, MeanAndInjection)
{
    auto fine = single(B2({0, 0}, {1, 1}));
    fine[0]({0, 0}, 0) = 1, fine[0]({1, 0}, 0) = 2, fine[0]({0, 1}, 0) = 3, fine[0]({1, 1}, 0) = 4;
    auto crse = single(B2({0, 0}, {1, 1}));
    crse.set_val(-1.0);
    Transport tr(1);
    average_down(fine, crse, V2(2), AverageMode::average, tr);
    EXPECT_EQ(crse[0]({0, 0}, 0), 2.5);
    EXPECT_EQ(crse[0]({1, 1}, 0), -1.0);
    average_down(fine, crse, V2(2), AverageMode::injection, tr);
    EXPECT_EQ(crse[0]({0, 0}, 0), 1.0);
}

TEST(AverageDown, InverseOfInterpolation)
{
    Rng rng(4);
    BoxArray<2> cba(std::vector<B2>{B2({0, 0}, {7, 7}), B2({8, 0}, {15, 7})});
    auto crse = random_field(cba, 2, rng);
    BoxArray<2> fba(std::vector<B2>{B2({4, 4}, {11, 11}), B2({12, 4}, {23, 11})});
    for (auto kind : {InterpKind::piecewise_constant, InterpKind::linear_limited}) {
        FabArray<2> fine(fba, DistributionMapping({1, 0}, 2), 1, 0);
        for (int i = 0; i < fine.size(); ++i) {
            auto f = interp_c2f(crse, fba[i], V2(2), kind);
            fine[i].copy_from(f, fba[i], 0, fba[i], 0, 1);
        }
        FabArray<2> back(cba, crse.distribution_map(), 1, 0);
        for (int i = 0; i < 2; ++i) back[i].copy_from(crse[i], cba[i], 0, cba[i], 0, 1);
        Transport tr(2);
        average_down(fine, back, V2(2), AverageMode::average, tr);
        for (int i = 0; i < 2; ++i)
            for_each_cell(cba[i], [&](const V2& p) {
                if (kind == InterpKind::piecewise_constant)
                    EXPECT_EQ(back[i](p, 0), crse[i](p, 0));
                else
                    EXPECT_NEAR(back[i](p, 0), crse[i](p, 0), 1e-15);
            });
    }
}

TEST(FillPatch, PureCopyWhenFineCovers)
{
    Rng rng(1);
    const B2 cdom({0, 0}, {7, 7});
    auto cg = geom(cdom, true), fg = geom(refine(cdom, V2(2)), true);
    auto crse = random_field(BoxArray<2>(cdom), 1, rng);
    auto fine = random_field(BoxArray<2>(fg.domain()), 1, rng);
    auto bc = BoundaryRecord<2>::from_geometry(fg);
    for (double w : {0.0, 1.0}) {
        Fab<2> dst(B2({3, 3}, {9, 9}), 1, 0, -5.0);
        fill_patch(dst, dst.box(), &fine, crse, crse, w, V2(2), InterpKind::linear_limited, fg, cg, bc);
        for_each_cell(dst.box(), [&](const V2& p) { EXPECT_EQ(dst(p, 0), fine[0](p, 0)); });
    }
}

TEST(FillPatch, PureInterpolationOutsideFine)
{
    Rng rng(2);
    const B2 cdom({0, 0}, {15, 15});
    auto cg = geom(cdom, false), fg = geom(refine(cdom, V2(2)), false);
    auto crse = random_field(BoxArray<2>(cdom), 1, rng);
    auto fine = random_field(BoxArray<2>(B2({0, 0}, {7, 7})), 1, rng);
    auto bc = BoundaryRecord<2>::from_geometry(fg);
    const B2 region({12, 12}, {23, 23});
    Fab<2> dst(region, 1, 0);
    fill_patch(dst, region, &fine, crse, crse, 0.0, V2(2), InterpKind::linear_limited, fg, cg, bc);
    auto ref = interp_c2f(crse, region, V2(2), InterpKind::linear_limited);
    for_each_cell(region, [&](const V2& p) { EXPECT_EQ(dst(p, 0), ref(p, 0)); });
}

TEST(FillPatch, MixedRegionMatchesTwoPathOracle)
{
    Rng rng(3);
    for (bool periodic : {false, true}) {
        const B2 cdom({0, 0}, {15, 15});
        auto cg = geom(cdom, periodic), fg = geom(refine(cdom, V2(2)), periodic);
        auto crse = random_field(BoxArray<2>(max_size(BoxArray<2>(cdom), 8)), 1, rng);
        BoxArray<2> fba(std::vector<B2>{B2({0, 0}, {7, 15}), B2({8, 8}, {15, 15}), B2({24, 0}, {31, 7})});
        auto fine = random_field(fba, 1, rng);
        auto bc = BoundaryRecord<2>::from_geometry(fg);
        for (int trial = 0; trial < 10; ++trial) {
            const int x = uniform_int(rng, periodic ? -4 : 0, 20), y = uniform_int(rng, periodic ? -4 : 0, 20);
            const B2 region({x, y}, {x + 11, y + 11});
            Fab<2> dst(region, 1, 0);
            fill_patch(dst, region, &fine, crse, crse, 0.0, V2(2), InterpKind::linear_limited, fg, cg, bc);
            auto ref = fill_oracle(region, fine, crse, V2(2), InterpKind::linear_limited, fg, cg);
            for_each_cell(region, [&](const V2& p) { EXPECT_EQ(dst(p, 0), ref(p, 0)) << p; });
        }
    }
}

TEST(FillPatch, TimeInterpolationIsLinear)
{
    const B2 cdom({0, 0}, {7, 7});
    auto cg = geom(cdom, true), fg = geom(refine(cdom, V2(2)), true);
    auto a = single(cdom), b = single(cdom);
    a.set_val(1.0), b.set_val(3.0);
    Fab<2> dst(B2({0, 0}, {3, 3}), 1, 0);
    fill_patch<2>(dst, dst.box(), nullptr, a, b, 0.25, V2(2), InterpKind::piecewise_constant, fg, cg, BoundaryRecord<2>::from_geometry(fg));
    for_each_cell(dst.box(), [&](const V2& p) { EXPECT_DOUBLE_EQ(dst(p, 0), 1.5); });
    EXPECT_THROW(fill_patch<2>(dst, dst.box(), nullptr, a, b, 1.5, V2(2), InterpKind::piecewise_constant, fg, cg, BoundaryRecord<2>::from_geometry(fg)),
                 Error);
}

TEST(FillPatch, FabArrayFormMatchesSingleFabAcrossRanks)
{
    const B2 cdom({0, 0}, {15, 15});
    for (bool periodic : {false, true}) {
        auto cg = geom(cdom, periodic), fg = geom(refine(cdom, V2(2)), periodic);
        auto bc = BoundaryRecord<2>::from_geometry(fg);
        BoxArray<2> cba = max_size(BoxArray<2>(cdom), 8);
        BoxArray<2> fba(std::vector<B2>{B2({0, 0}, {7, 15}), B2({8, 8}, {15, 15}), B2({24, 0}, {31, 7}), B2({16, 24}, {23, 31})});
        std::vector<FabArray<2>> results;
        for (int R : {1, 2, 4}) {
            Rng rng(77);
            auto crse = random_field(cba, R, rng);
            auto fine = random_field(fba, R, rng, 2);
            Transport tr(R);
            fill_patch(fine, &fine, crse, crse, 0.0, V2(2), InterpKind::linear_limited, fg, cg, bc, tr);
            for (int i = 0; i < fine.size(); ++i) {
                Fab<2> ref(fine[i].grown_box(), 1, 0);
                ref.copy_from(fine[i], fba[i], 0, fba[i], 0, 1);
                fill_patch(ref, ref.box(), &fine, crse, crse, 0.0, V2(2), InterpKind::linear_limited, fg, cg, bc);
                for_each_cell(ref.box(), [&](const V2& p) { ASSERT_EQ(ref(p, 0), fine[i](p, 0)) << p << " R=" << R; });
            }
            results.push_back(std::move(fine));
        }
        EXPECT_TRUE(bit_identical(results[0], results[1]));
        EXPECT_TRUE(bit_identical(results[0], results[2]));
    }
}

TEST(FillPatch, UncoverableCellThrows)
{
    const B2 cdom({0, 0}, {15, 15});
    auto cg = geom(cdom, false), fg = geom(refine(cdom, V2(2)), false);
    auto crse = single(B2({0, 0}, {7, 7}));
    Fab<2> dst(B2({20, 20}, {23, 23}), 1, 0);
    EXPECT_THROW(fill_patch<2>(dst, dst.box(), nullptr, crse, crse, 0.0, V2(2), InterpKind::piecewise_constant, fg, cg,
                               BoundaryRecord<2>::from_geometry(fg)),
                 Error);
}

TEST(RemakeLevel, KeepsOldDataAndInterpolatesNewCells)
{
    Rng rng(5);
    const B2 cdom({0, 0}, {15, 15});
    auto cg = geom(cdom, false), fg = geom(refine(cdom, V2(2)), false);
    auto bc = BoundaryRecord<2>::from_geometry(fg);
    auto crse = random_field(max_size(BoxArray<2>(cdom), 8), 2, rng);
    auto old = random_field(BoxArray<2>(B2({8, 8}, {15, 15})), 2, rng);
    BoxArray<2> nba(std::vector<B2>{B2({12, 8}, {19, 15}), B2({4, 16}, {11, 23})});
    Transport tr(2);
    auto nf = remake_level(&old, nba, sfc_distribute(nba, 2), crse, V2(2), InterpKind::linear_limited, fg, cg, bc, tr, 1);
    for (int i = 0; i < nf.size(); ++i) {
        auto ref = fill_oracle(nba[i], old, crse, V2(2), InterpKind::linear_limited, fg, cg);
        for_each_cell(nba[i], [&](const V2& p) { EXPECT_EQ(nf[i](p, 0), ref(p, 0)); });
    }
}

namespace {

struct TwoLevel
{
    B2 cdom{{0, 0}, {7, 7}};
    Geometry<2> cg{cdom, {0.0, 0.0}, {1.0, 1.0}, {true, true}};
    BoxArray<2> cba{cdom};
    BoxArray<2> fba{B2({4, 4}, {7, 7})};
    std::array<FabArray<2>, 2> cflux, fflux;

    TwoLevel()
    {
        for (int d = 0; d < 2; ++d) {
            cflux[static_cast<std::size_t>(d)] = FabArray<2>(convert(cba, IndexType<2>::face(d)), DistributionMapping::single_rank(1), 1, 0);
            fflux[static_cast<std::size_t>(d)] = FabArray<2>(convert(fba, IndexType<2>::face(d)), DistributionMapping::single_rank(1), 1, 0);
        }
    }
    std::array<const FabArray<2>*, 2> c() const { return {&cflux[0], &cflux[1]}; }
    std::array<const FabArray<2>*, 2> f() const { return {&fflux[0], &fflux[1]}; }
};

} // namespace

TEST(FluxRegister, FaceCountMatchesBruteForce)
{
    TwoLevel t;
    FluxRegister<2> fr(t.fba, V2(2), t.cg, 1);
    // Coarse-fine faces: uncovered coarse cell next to a covered one.
    const B2 cov = coarsen(t.fba[0], V2(2));
    int n = 0;
    for_each_cell(t.cdom, [&](const V2& c) {
        if (cov.contains(c)) return;
        for (int d = 0; d < 2; ++d)
            for (int s : {-1, 1})
                if (cov.contains(c + V2::basis(d) * s)) ++n;
    });
    EXPECT_EQ(static_cast<int>(fr.faces().size()), n);
    EXPECT_EQ(n, 8);
}

TEST(FluxRegister, MatchingFluxesCancel)
{
    TwoLevel t;
    for (auto& fa : t.cflux) fa.set_val(1.5);
    for (auto& fa : t.fflux) fa.set_val(1.5);
    FluxRegister<2> fr(t.fba, V2(2), t.cg, 1);
    fr.crse_add(t.c(), 1.0);
    fr.fine_add(t.f(), 0.5);
    fr.fine_add(t.f(), 0.5);
    for (auto& f : fr.faces()) EXPECT_EQ(f.val[0], 0.0);
}

TEST(FluxRegister, CoarseOnlyAndFineAverage)
{
    TwoLevel t;
    for (auto& fa : t.cflux) fa.set_val(2.0);
    FluxRegister<2> fr(t.fba, V2(2), t.cg, 1);
    fr.crse_add(t.c(), 1.0);
    for (auto& f : fr.faces()) EXPECT_EQ(f.val[0], -2.0);

    fr.set_val(0.0);
    // Low x-face of coarse cell (2,2): fine faces (4,4) and (4,5).
    t.fflux[0][0]({4, 4}, 0) = 1.0;
    t.fflux[0][0]({4, 5}, 0) = 3.0;
    fr.fine_add(t.f(), 1.0);
    int hits = 0;
    for (auto& f : fr.faces())
        if (f.dim == 0 && f.cface == V2{2, 2}) {
            EXPECT_EQ(f.val[0], 2.0);
            ++hits;
        }
    EXPECT_EQ(hits, 1);
}

TEST(FluxRegister, WrongFaceTypeThrows)
{
    TwoLevel t;
    FluxRegister<2> fr(t.fba, V2(2), t.cg, 1);
    FabArray<2> cell(t.cba, DistributionMapping::single_rank(1), 1, 0);
    EXPECT_THROW(fr.crse_add({&cell, &t.cflux[1]}, 1.0), Error);
}

TEST(FluxRegister, RefluxTouchesOnlyAdjacentCells)
{
    TwoLevel t;
    FluxRegister<2> fr(t.fba, V2(2), t.cg, 1);
    FabArray<2> u(t.cba, DistributionMapping::single_rank(1), 1, 0, 1.0);
    fr.reflux(u, 0.5);
    for_each_cell(t.cdom, [&](const V2& p) { EXPECT_EQ(u[0](p, 0), 1.0); });

    // One face carrying r: one coarse cell changes by r * dt_over_dx.
    FluxRegister<2> one(t.fba, V2(2), t.cg, 1);
    auto& faces = const_cast<std::vector<FluxRegister<2>::Face>&>(one.faces());
    int pick = -1;
    for (int k = 0; k < static_cast<int>(faces.size()); ++k)
        if (faces[static_cast<std::size_t>(k)].side == 1) pick = k;
    ASSERT_GE(pick, 0);
    faces[static_cast<std::size_t>(pick)].val[0] = 3.0;
    one.reflux(u, 0.5);
    int changed = 0;
    for_each_cell(t.cdom, [&](const V2& p) {
        if (u[0](p, 0) != 1.0) {
            ++changed;
            EXPECT_EQ(p, faces[static_cast<std::size_t>(pick)].ccell);
            EXPECT_EQ(u[0](p, 0), 1.0 + 1.5);
        }
    });
    EXPECT_EQ(changed, 1);
}

TEST(FluxRegister, PeriodicWrapAndMisalignedBox)
{
    TwoLevel t;
    BoxArray<2> edge(B2({0, 0}, {3, 15}));
    FluxRegister<2> fr(edge, V2(2), t.cg, 1);
    for (auto& f : fr.faces()) EXPECT_TRUE(t.cdom.contains(f.ccell));
    EXPECT_THROW(FluxRegister<2>(BoxArray<2>(B2({1, 0}, {4, 3})), V2(2), t.cg, 1), Error);
}

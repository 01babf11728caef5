#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "amrlite/amr_core.hpp"
#include "test_support.hpp"

using namespace amrlite;
using amrlite::testing::Rng;
using amrlite::testing::uniform_int;

namespace {

template <int D>
using CellSet = std::set<std::array<int, D>>;

// Independent postcondition checker for clustering output.
template <int D>
::testing::AssertionResult check_cover(const BoxArray<D>& ba, const std::type_identity_t<CellSet<D>>& tags, const Box<D>& domain)
{
    CellSet<D> covered;
    for (const auto& b : ba) {
        if (!domain.contains(b)) return ::testing::AssertionFailure() << b << " outside domain";
        for (auto& c : amrlite::testing::cell_set(b)) {
            if (!covered.insert(c).second) return ::testing::AssertionFailure() << "overlap at " << IntVect<D>(c);
        }
    }
    for (auto& t : tags)
        if (!covered.count(t)) return ::testing::AssertionFailure() << "tag " << IntVect<D>(t) << " uncovered";
    return ::testing::AssertionSuccess();
}

// Brute-force nesting check: every cell of grow(coarsen(F), buffer) inside
// the domain is a cell of some coarse box.
template <int D>
bool nested_oracle(const BoxArray<D>& fine, const BoxArray<D>& coarse, const IntVect<D>& ratio, const Box<D>& domain, int buffer)
{
    CellSet<D> cov;
    for (const auto& b : coarse)
        for (auto& c : amrlite::testing::cell_set(b)) cov.insert(c);
    for (const auto& f : fine) {
        IntVect<D> lo, hi;
        for (int d = 0; d < D; ++d) {
            lo[d] = static_cast<int>(std::floor(static_cast<double>(f.lo(d)) / ratio[d])) - buffer;
            hi[d] = static_cast<int>(std::floor(static_cast<double>(f.hi(d)) / ratio[d])) + buffer;
        }
        for (auto& c : amrlite::testing::cell_set(Box<D>(lo, hi))) {
            if (!domain.contains(IntVect<D>(c))) continue;
            if (!cov.count(c)) return false;
        }
    }
    return true;
}

GridGenParams<2> params2(int bf, int mgs, int max_level = 1)
{
    GridGenParams<2> p;
    p.blocking_factor = IntVect<2>(bf);
    p.max_grid_size = IntVect<2>(mgs);
    p.max_level = max_level;
    p.ref_ratio = {IntVect<2>(2)};
    return p;
}

std::vector<IntVect<2>> to_vec(const CellSet<2>& s)
{
    std::vector<IntVect<2>> v;
    for (auto& c : s) v.emplace_back(c);
    return v;
}

Geometry<2> unit_geom(int n, bool periodic = false)
{
    return Geometry<2>(Box<2>({0, 0}, {n - 1, n - 1}), {0.0, 0.0}, {1.0, 1.0}, {periodic, periodic});
}

} // namespace

TEST(Geometry, CellSizeAndLookup)
{
    Geometry<2> g(Box<2>({0, 0}, {31, 15}), {-1.0, 0.0}, {1.0, 0.5});
    EXPECT_DOUBLE_EQ(g.cell_size(0), 2.0 / 32);
    EXPECT_DOUBLE_EQ(g.cell_size(1), 0.5 / 16);
    EXPECT_EQ(g.cell_of(g.cell_center({5, 7})), (IntVect<2>{5, 7}));
    EXPECT_THROW(Geometry<2>(Box<2>({0, 0}, {3, 3}), {1.0, 0.0}, {1.0, 1.0}), Error);
    auto f = g.refine(IntVect<2>(2));
    EXPECT_EQ(f.domain(), Box<2>({0, 0}, {63, 31}));
    EXPECT_DOUBLE_EQ(f.cell_size(0), g.cell_size(0) / 2);
}

TEST(Geometry, BoundaryRecordConsistency)
{
    auto g = unit_geom(8, true);
    auto bc = BoundaryRecord<2>::from_geometry(g);
    EXPECT_NO_THROW(bc.check(g));
    bc.type[0][1] = BcType::extrapolate;
    EXPECT_THROW(bc.check(g), Error);
}

TEST(Geometry, PhysicalBoundaryFill)
{
    auto g = unit_geom(4);
    auto bc = BoundaryRecord<2>::from_geometry(g, BcType::extrapolate);
    bc.type[0][0] = BcType::external_value;
    bc.value[0][0] = -7.0;
    BoxArray<2> ba(Box<2>({0, 0}, {3, 3}));
    FabArray<2> fa(ba, DistributionMapping::single_rank(1), 1, 1);
    for_each_cell(ba[0], [&](const IntVect<2>& p) { fa[0](p, 0) = p[0] + 10 * p[1]; });
    apply_physical_bc(fa, g, bc);
    EXPECT_EQ(fa[0]({-1, 2}, 0), -7.0);
    EXPECT_EQ(fa[0]({4, 2}, 0), 3.0 + 20.0);
    EXPECT_EQ(fa[0]({2, 4}, 0), 2.0 + 30.0);
    EXPECT_EQ(fa[0]({4, 4}, 0), 33.0);
}

TEST(AmrConfig, ParamsFromConfig)
{
    auto c = Config::from_string("# grid\namr.max_level = 2\namr.ref_ratio = 2 4\namr.max_grid_size=64\namr.blocking_factor = 8\namr.grid_eff = 0.8\n");
    auto p = GridGenParams<2>::from_config(c);
    EXPECT_EQ(p.max_level, 2);
    EXPECT_EQ(p.ratio(1), IntVect<2>(4));
    EXPECT_EQ(p.ratio(5), IntVect<2>(4));
    EXPECT_EQ(p.max_grid_size, IntVect<2>(64));
    EXPECT_DOUBLE_EQ(p.grid_eff, 0.8);
    EXPECT_EQ(p.n_error_buf, 1);
    EXPECT_THROW(GridGenParams<2>::from_config(Config::from_string("amr.max_grid_size = 12\namr.blocking_factor = 8")), Error);
    EXPECT_THROW(Config::from_string("novalue"), Error);
    EXPECT_THROW(Config::from_string("x = abc").get<int>("x"), Error);
}

TEST(MaskToBoxes, ExactDisjointCover)
{
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        CellMask<2> m(Box<2>({0, 0}, {15, 15}));
        CellSet<2> want;
        for (int k = 0; k < 60; ++k) {
            IntVect<2> p{uniform_int(rng, 0, 15), uniform_int(rng, 0, 15)};
            m.set(p);
            want.insert(p.array());
        }
        auto boxes = detail::mask_to_boxes(m);
        CellSet<2> got;
        for (auto& b : boxes)
            for (auto& c : amrlite::testing::cell_set(b)) EXPECT_TRUE(got.insert(c).second);
        EXPECT_EQ(got, want);
    }
}

TEST(Cluster, RectangleIsReturnedExactly)
{
    CellSet<2> tags = amrlite::testing::cell_set(Box<2>({2, 3}, {5, 6}));
    auto ba = cluster_tags(to_vec(tags), params2(1, 16), Box<2>({0, 0}, {15, 15}));
    ASSERT_EQ(ba.size(), 1);
    EXPECT_EQ(ba[0], Box<2>({2, 3}, {5, 6}));
}

TEST(Cluster, NoTagsGivesEmpty)
{
    EXPECT_TRUE(cluster_tags<2>({}, params2(1, 16), Box<2>({0, 0}, {7, 7})).empty());
}

TEST(Cluster, SeparatedClustersGetSeparateBoxes)
{
    CellSet<2> a{{0, 0}, {1, 0}}, b{{6, 6}, {7, 7}};
    CellSet<2> tags = a;
    tags.insert(b.begin(), b.end());
    const Box<2> dom({0, 0}, {7, 7});
    auto ba = cluster_tags(to_vec(tags), params2(1, 8), dom);
    EXPECT_GE(ba.size(), 2);
    EXPECT_TRUE(check_cover(ba, tags, dom));
    for (const auto& box : ba) {
        int na = 0, nb = 0;
        for (auto& c : amrlite::testing::cell_set(box)) na += static_cast<int>(a.count(c)), nb += static_cast<int>(b.count(c));
        EXPECT_TRUE(na == 0 || nb == 0) << box;
        EXPECT_GE(static_cast<double>(na + nb) / box.num_cells(), 0.7) << box;
    }
}

TEST(Cluster, DiagonalMeetsEfficiency)
{
    CellSet<2> tags;
    for (int i = 0; i < 16; ++i) tags.insert({i, i});
    const Box<2> dom({0, 0}, {15, 15});
    auto ba = cluster_tags(to_vec(tags), params2(1, 16), dom);
    EXPECT_TRUE(check_cover(ba, tags, dom));
    for (const auto& box : ba) {
        int n = 0;
        for (auto& c : amrlite::testing::cell_set(box)) n += static_cast<int>(tags.count(c));
        EXPECT_LE(box.num_cells(), static_cast<std::int64_t>(std::ceil(n / 0.7))) << box;
    }
}

TEST(Cluster, HoleCutSeparatesBars)
{
    // Two vertical bars with a two-column gap: one cut at the hole.
    CellSet<2> tags = amrlite::testing::cell_set(Box<2>({0, 0}, {1, 7}));
    for (auto& c : amrlite::testing::cell_set(Box<2>({4, 0}, {5, 7}))) tags.insert(c);
    auto ba = cluster_tags(to_vec(tags), params2(1, 16), Box<2>({0, 0}, {7, 7}));
    ASSERT_EQ(ba.size(), 2);
    EXPECT_EQ(ba[0], Box<2>({0, 0}, {1, 7}));
    EXPECT_EQ(ba[1], Box<2>({4, 0}, {5, 7}));
}

TEST(Cluster, RandomTagSetsSatisfyPostconditions)
{
    Rng rng(17);
    const Box<2> dom({0, 0}, {63, 63});
    auto p = params2(4, 16);
    const IntVect<2> g = p.lattice(0);
    for (int trial = 0; trial < 50; ++trial) {
        CellSet<2> tags;
        const int nblob = uniform_int(rng, 1, 4);
        for (int k = 0; k < nblob; ++k) {
            const int cx = uniform_int(rng, 4, 59), cy = uniform_int(rng, 4, 59), r = uniform_int(rng, 1, 6);
            for (int j = cy - r; j <= cy + r; ++j)
                for (int i = cx - r; i <= cx + r; ++i)
                    if ((i - cx) * (i - cx) + (j - cy) * (j - cy) <= r * r && dom.contains(IntVect<2>{i, j})) tags.insert({i, j});
        }
        auto ba = cluster_tags(to_vec(tags), p, dom);
        ASSERT_TRUE(check_cover(ba, tags, dom));
        // Lattice-level efficiency and refined-level size/alignment.
        CellSet<2> lat;
        for (auto& t : tags) lat.insert({t[0] >= 0 ? t[0] / g[0] : -1, t[1] >= 0 ? t[1] / g[1] : -1});
        for (const auto& b : ba) {
            const Box<2> f = refine(b, IntVect<2>(2));
            for (int d = 0; d < 2; ++d) {
                EXPECT_EQ(f.length(d) % 4, 0);
                EXPECT_EQ(f.lo(d) % 4, 0);
                EXPECT_LE(f.length(d), 16);
            }
            const Box<2> lb = coarsen(b, g);
            int n = 0;
            for (auto& c : amrlite::testing::cell_set(lb)) n += static_cast<int>(lat.count(c));
            EXPECT_TRUE(lb.num_cells() == 1 || static_cast<double>(n) / lb.num_cells() >= 0.7) << b;
        }
    }
}

TEST(Cluster, Deterministic3D)
{
    Rng rng(2);
    CellSet<3> tags;
    for (int k = 0; k < 200; ++k) tags.insert({uniform_int(rng, 0, 15), uniform_int(rng, 0, 15), uniform_int(rng, 0, 15)});
    std::vector<IntVect<3>> v;
    for (auto& c : tags) v.emplace_back(c);
    GridGenParams<3> p;
    p.blocking_factor = IntVect<3>(2);
    p.max_grid_size = IntVect<3>(8);
    const Box<3> dom(IntVect<3>(0), IntVect<3>(15));
    auto a = cluster_tags(v, p, dom);
    std::reverse(v.begin(), v.end());
    auto b = cluster_tags(v, p, dom);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(check_cover(a, tags, dom));
}

TEST(Nesting, InteriorUnchanged)
{
    BoxArray<2> coarse(Box<2>({0, 0}, {15, 15}));
    BoxArray<2> fine(Box<2>({8, 8}, {15, 15}));
    auto out = enforce_proper_nesting(fine, coarse, IntVect<2>(2), Box<2>({0, 0}, {31, 31}), 1);
    EXPECT_EQ(out, fine);
    EXPECT_TRUE(properly_nested(out, coarse, IntVect<2>(2), Box<2>({0, 0}, {31, 31}), 1));
}

TEST(Nesting, PhysicalBoundaryExempt)
{
    const Box<2> dom({0, 0}, {15, 15});
    BoxArray<2> coarse(std::vector<Box<2>>{Box<2>({0, 0}, {7, 7})});
    BoxArray<2> fine(Box<2>({0, 0}, {11, 11}));
    EXPECT_TRUE(properly_nested(fine, coarse, IntVect<2>(2), dom, 1));
    EXPECT_TRUE(nested_oracle(fine, coarse, IntVect<2>(2), dom, 1));
    EXPECT_EQ(enforce_proper_nesting(fine, coarse, IntVect<2>(2), dom, 1), fine);
}

TEST(Nesting, OverhangIsClipped)
{
    Rng rng(8);
    const Box<2> dom({0, 0}, {31, 31});
    for (int trial = 0; trial < 40; ++trial) {
        auto cboxes = amrlite::testing::random_disjoint_boxes<2>(rng, 4, 8, 10);
        BoxArray<2> coarse(cboxes);
        auto fboxes = amrlite::testing::random_disjoint_boxes<2>(rng, 8, 8, 12);
        BoxArray<2> fine(fboxes);
        std::int64_t dropped = 0;
        auto out = enforce_proper_nesting(fine, coarse, IntVect<2>(2), dom, 1, &dropped);
        EXPECT_TRUE(nested_oracle(out, coarse, IntVect<2>(2), dom, 1));
        EXPECT_TRUE(properly_nested(out, coarse, IntVect<2>(2), dom, 1));
        EXPECT_EQ(properly_nested(fine, coarse, IntVect<2>(2), dom, 1), nested_oracle(fine, coarse, IntVect<2>(2), dom, 1));
        EXPECT_EQ(out.num_cells() + dropped, fine.num_cells());
        EXPECT_TRUE(out.validate().ok);
    }
}

TEST(MakeNewGrids, NoTagsGivesEmptyLevel)
{
    AmrHierarchy<2> h(unit_geom(32), params2(4, 16), 2);
    auto ba = make_new_grids<2>(h, 0, [](int, const IntVect<2>&) { return false; });
    EXPECT_TRUE(ba.empty());
}

TEST(MakeNewGrids, SingleTagGivesBlockedBox)
{
    AmrHierarchy<2> h(unit_geom(32), params2(4, 16), 1);
    const IntVect<2> t{13, 6};
    auto p = h.params();
    p.n_error_buf = 0;
    AmrHierarchy<2> h0(unit_geom(32), p, 1);
    for (auto* hp : {&h, &h0}) {
        auto ba = make_new_grids<2>(*hp, 0, [&](int, const IntVect<2>& c) { return c == t; });
        ASSERT_GE(ba.size(), 1);
        bool has = false;
        for (const auto& b : ba) {
            for (int d = 0; d < 2; ++d) {
                EXPECT_GE(b.length(d), 4);
                EXPECT_EQ(b.length(d) % 4, 0);
                EXPECT_EQ(b.lo(d) % 4, 0);
            }
            has = has || b.contains(refine(Box<2>(t, t), IntVect<2>(2)));
        }
        EXPECT_TRUE(has);
        EXPECT_TRUE(properly_nested(ba, hp->box_array(0), IntVect<2>(2), hp->geom(0).domain(), 1));
    }
}

TEST(MakeNewGrids, FullTagsCoverRefinedDomain)
{
    AmrHierarchy<2> h(unit_geom(32), params2(4, 16), 1);
    auto ba = make_new_grids<2>(h, 0, [](int, const IntVect<2>&) { return true; });
    EXPECT_EQ(ba.num_cells(), 64 * 64);
    EXPECT_TRUE(ba.validate().ok);
    for (const auto& b : ba)
        for (int d = 0; d < 2; ++d) EXPECT_LE(b.length(d), 16);
}

TEST(Regrid, BaseAtMaxLevelIsNoop)
{
    AmrHierarchy<2> h(unit_geom(32), params2(4, 16, 1), 1);
    auto tag = [](int, const IntVect<2>& c) { return c[0] < 8; };
    regrid<2>(h, 0, tag);
    ASSERT_EQ(h.finest_level(), 1);
    auto before = h.box_array(1);
    EXPECT_TRUE(regrid<2>(h, 1, tag).empty());
    EXPECT_EQ(h.box_array(1), before);
}

TEST(Regrid, UnchangedTagsGiveIdenticalGrids)
{
    auto p = params2(4, 16, 2);
    auto blob = [](int lev, const IntVect<2>& c) {
        const double s = 1 << lev;
        const double x = (c[0] + 0.5) / s - 20.0, y = (c[1] + 0.5) / s - 12.0;
        return x * x + y * y < 16.0;
    };
    AmrHierarchy<2> a(unit_geom(48), p, 3), b(unit_geom(48), p, 3);
    regrid<2>(a, 0, blob);
    regrid<2>(b, 0, blob);
    ASSERT_EQ(a.finest_level(), 2);
    for (int l = 0; l <= 2; ++l) EXPECT_EQ(a.box_array(l), b.box_array(l));
    EXPECT_EQ(check_hierarchy(a), "");
    auto ch = regrid<2>(a, 0, blob);
    EXPECT_TRUE(ch.empty());
    for (int l = 0; l <= 2; ++l) EXPECT_EQ(a.box_array(l), b.box_array(l));
}

TEST(Regrid, MovingBlobIsTracked)
{
    auto p = params2(4, 16, 2);
    AmrHierarchy<2> h(unit_geom(64), p, 4);
    for (int step = 0; step < 8; ++step) {
        const double cx = 12.0 + 5.0 * step, cy = 30.0;
        auto blob = [&](int lev, const IntVect<2>& c) {
            const double s = 1 << lev;
            const double x = (c[0] + 0.5) / s - cx, y = (c[1] + 0.5) / s - cy;
            return x * x + y * y < 9.0;
        };
        regrid<2>(h, 0, blob);
        ASSERT_EQ(check_hierarchy(h), "") << "step " << step;
        for (int l = 1; l <= h.finest_level(); ++l)
            EXPECT_TRUE(nested_oracle(h.box_array(l), h.box_array(l - 1), IntVect<2>(2), h.geom(l - 1).domain(), 1));
        ASSERT_EQ(h.finest_level(), 2);
        // Every finest-level tag is covered at the finest level.
        for_each_cell(h.geom(2).domain(), [&](const IntVect<2>& c) {
            if (blob(2, c)) EXPECT_TRUE(h.box_array(2).contains(c)) << "step " << step << " cell " << c;
        });
    }
}

TEST(Regrid, RandomBlobsKeepHierarchyValid3D)
{
    Rng rng(44);
    GridGenParams<3> p;
    p.blocking_factor = IntVect<3>(4);
    p.max_grid_size = IntVect<3>(16);
    p.max_level = 2;
    p.ref_ratio = {IntVect<3>(2)};
    Geometry<3> g(Box<3>(IntVect<3>(0), IntVect<3>(23)), {0, 0, 0}, {1, 1, 1});
    AmrHierarchy<3> h(g, p, 4);
    for (int trial = 0; trial < 5; ++trial) {
        const double cx = uniform_int(rng, 4, 20), cy = uniform_int(rng, 4, 20), cz = uniform_int(rng, 4, 20);
        auto blob = [&](int lev, const IntVect<3>& c) {
            const double s = 1 << lev;
            double r2 = 0;
            const double ctr[3] = {cx, cy, cz};
            for (int d = 0; d < 3; ++d) r2 += std::pow((c[d] + 0.5) / s - ctr[d], 2);
            return r2 < 6.0;
        };
        regrid<3>(h, 0, blob);
        EXPECT_EQ(check_hierarchy(h), "");
        for (int l = 1; l <= h.finest_level(); ++l)
            EXPECT_TRUE(nested_oracle(h.box_array(l), h.box_array(l - 1), IntVect<3>(2), h.geom(l - 1).domain(), 1));
    }
}

TEST(TagField, MatchesTagFunction)
{
    BoxArray<2> ba(std::vector<Box<2>>{Box<2>({0, 0}, {3, 3}), Box<2>({4, 0}, {7, 3})});
    auto tf = make_tag_field<2>(ba, DistributionMapping({0, 1}, 2), 0, [](int, const IntVect<2>& c) { return c[0] == c[1]; });
    int n = 0;
    for (int i = 0; i < tf.size(); ++i) for_each_cell(ba[i], [&](const IntVect<2>& c) { n += tf[i](c, 0); });
    EXPECT_EQ(n, 4);
}

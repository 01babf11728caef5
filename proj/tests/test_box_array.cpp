#include <gtest/gtest.h>

#include <set>

#include "amrlite/box_array.hpp"
#include "test_support.hpp"

using namespace amrlite;
using amrlite::testing::Rng;

using B1 = Box<1>;
using B2 = Box<2>;
using V1 = IntVect<1>;
using V2 = IntVect<2>;

namespace {

BoxArray<2> uniform_grid(int nper, int size)
{
    std::vector<B2> v;
    for (int j = 0; j < nper; ++j)
        for (int i = 0; i < nper; ++i) v.emplace_back(V2{i * size, j * size}, V2{i * size + size - 1, j * size + size - 1});
    return BoxArray<2>(v);
}

template <int D>
std::set<std::pair<int, std::string>> brute_force(const BoxArray<D>& ba, const Box<D>& q)
{
    std::set<std::pair<int, std::string>> s;
    for (int i = 0; i < ba.size(); ++i) {
        // Independent overlap: per-dimension max/min without calling intersect().
        IntVect<D> lo, hi;
        bool ok = true;
        for (int d = 0; d < D; ++d) {
            lo[d] = std::max(ba[i].lo(d), q.lo(d));
            hi[d] = std::min(ba[i].hi(d), q.hi(d));
            ok = ok && lo[d] <= hi[d];
        }
        if (ok) s.emplace(i, Box<D>(lo, hi).str());
    }
    return s;
}

} // namespace

TEST(BoxArray, ValidateExamples)
{
    EXPECT_TRUE(BoxArray<1>({B1(V1{0}, V1{3}), B1(V1{4}, V1{7})}).validate().ok);
    auto bad = BoxArray<1>({B1(V1{0}, V1{3}), B1(V1{3}, V1{5})}).validate();
    EXPECT_FALSE(bad.ok);
    EXPECT_EQ(bad.first, 0);
    EXPECT_EQ(bad.second, 1);
    EXPECT_TRUE(BoxArray<1>().validate().ok);
}

TEST(BoxArray, ValidateMixedIndexTypes)
{
    BoxArray<2> ba({B2({0, 0}, {3, 3}), convert(B2({4, 0}, {7, 3}), IndexType<2>::node())});
    EXPECT_FALSE(ba.validate().ok);
    EXPECT_THROW(ba.validate_or_throw(), Error);
}

TEST(BoxArray, HashUniformGridOneIndexPerBin)
{
    auto ba = uniform_grid(4, 8);
    const auto& h = ba.hash();
    EXPECT_EQ(h.bin_size(), (V2{8, 8}));
    EXPECT_EQ(h.num_bins(), 16u);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            const auto* bin = h.bin(V2{i, j});
            ASSERT_NE(bin, nullptr);
            EXPECT_EQ(bin->size(), 1u);
        }
}

TEST(BoxArray, HashSingleBoxAndMixedSizes)
{
    BoxArray<2> one(B2({0, 0}, {5, 5}));
    EXPECT_EQ(one.hash().num_bins(), 1u);
    BoxArray<2> mixed({B2({0, 0}, {3, 3}), B2({4, 0}, {19, 15})});
    EXPECT_EQ(mixed.hash().bin_size(), (V2{16, 16}));
}

TEST(BoxArray, HashIsBuiltOnceAndCached)
{
    auto ba = uniform_grid(3, 4);
    const auto before = BoxArray<2>::hashes_built().load();
    ba.intersections(B2({0, 0}, {1, 1}));
    BoxArray<2> copy = ba;
    copy.intersections(B2({5, 5}, {6, 6}));
    EXPECT_EQ(BoxArray<2>::hashes_built().load(), before + 1);
}

TEST(BoxArray, IntersectionsExamples)
{
    auto ba = uniform_grid(4, 8);
    EXPECT_EQ(ba.intersections(B2({0, 0}, {31, 31})).size(), 16u);
    BoxArray<1> gap({B1(V1{0}, V1{3}), B1(V1{8}, V1{11})});
    EXPECT_TRUE(gap.intersections(B1(V1{4}, V1{7})).empty());
}

TEST(BoxArray, IntersectionsMatchBruteForce)
{
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        BoxArray<2> ba(amrlite::testing::random_disjoint_boxes<2>(rng, 8, 8, 64));
        ASSERT_TRUE(ba.validate().ok);
        const auto bin = ba.hash().bin_size();
        for (int k = 0; k < 5; ++k) {
            const auto q = amrlite::testing::random_box<2>(rng, -4, 64, std::max(1, bin.min_component()));
            std::int64_t bins = 0;
            std::set<std::pair<int, std::string>> got;
            for (auto& [i, b] : ba.intersections(q, &bins)) got.emplace(i, b.str());
            ASSERT_EQ(got, brute_force(ba, q));
            ASSERT_LE(bins, 9);
        }
    }
}

TEST(BoxArray, NodeTypedIntersectionsSeeSharedNodes)
{
    BoxArray<1> cells({B1(V1{0}, V1{3}), B1(V1{4}, V1{7})});
    auto nodes = convert(cells, IndexType<1>::node());
    auto hits = nodes.intersections(B1(V1{4}, V1{4}, IndexType<1>::node()));
    EXPECT_EQ(hits.size(), 2u);
}

TEST(BoxArray, ContainsBoxExamples)
{
    BoxArray<1> ba({B1(V1{0}, V1{3}), B1(V1{4}, V1{7})});
    EXPECT_TRUE(ba.contains(B1(V1{2}, V1{5})));
    EXPECT_FALSE(ba.contains(B1(V1{6}, V1{9})));
    EXPECT_TRUE(ba.contains(B1()));
}

TEST(BoxArray, MaxSizeExamples)
{
    auto out = max_size(BoxArray<1>(B1(V1{0}, V1{9})), 4);
    ASSERT_EQ(out.size(), 3);
    EXPECT_EQ(out[0], B1(V1{0}, V1{3}));
    EXPECT_EQ(out[1], B1(V1{4}, V1{7}));
    EXPECT_EQ(out[2], B1(V1{8}, V1{9}));
    auto same = max_size(BoxArray<1>(B1(V1{0}, V1{2})), 4);
    ASSERT_EQ(same.size(), 1);
    EXPECT_EQ(same[0], B1(V1{0}, V1{2}));
}

TEST(BoxArray, MaxSizePreservesCoverage)
{
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        BoxArray<2> ba(amrlite::testing::random_disjoint_boxes<2>(rng, 4, 16, 16));
        const int m = amrlite::testing::uniform_int(rng, 1, 6);
        auto out = max_size(ba, m);
        ASSERT_TRUE(out.validate().ok);
        std::set<std::array<int, 2>> before, after;
        for (const auto& b : ba) for (auto& c : amrlite::testing::cell_set(b)) before.insert(c);
        for (const auto& b : out) {
            ASSERT_LE(b.length().max_component(), m);
            for (auto& c : amrlite::testing::cell_set(b)) after.insert(c);
        }
        ASSERT_EQ(before, after);
    }
}

TEST(BoxArray, PruneExamples)
{
    auto ba = uniform_grid(2, 4);
    auto keep = prune(ba, [](const B2&) { return false; });
    EXPECT_EQ(keep, ba);
    EXPECT_TRUE(prune(ba, [](const B2&) { return true; }).empty());
    auto some = prune(ba, [](const B2& b) { return b.lo(0) == 0; });
    ASSERT_EQ(some.size(), 2);
    EXPECT_EQ(some[0], ba[1]);
    EXPECT_EQ(some[1], ba[3]);
}

TEST(BoxArray, ComplementIn)
{
    BoxArray<2> ba(B2({2, 2}, {3, 3}));
    auto pieces = complement_in(B2({0, 0}, {5, 5}), ba);
    std::int64_t n = 0;
    for (auto& p : pieces) {
        EXPECT_FALSE(p.intersects(ba[0]));
        n += p.num_cells();
    }
    EXPECT_EQ(n, 36 - 4);
}

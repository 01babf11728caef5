#include <gtest/gtest.h>

#include <unistd.h>

#include "amrlite/plotfile.hpp"
#include "test_support.hpp"

using namespace amrlite;
using amrlite::testing::Rng;
using amrlite::testing::uniform_real;

namespace {

using V2 = IntVect<2>;
using B2 = Box<2>;

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("amrlite_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::map<std::string, std::vector<char>> tree_bytes(const fs::path& root)
{
    std::map<std::string, std::vector<char>> m;
    for (auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) {
            std::ifstream is(e.path(), std::ios::binary);
            m[fs::relative(e.path(), root).string()] = std::vector<char>(std::istreambuf_iterator<char>(is), {});
        }
    return m;
}

DistributionMapping round_robin(int n, int R)
{
    std::vector<int> owner;
    for (int i = 0; i < n; ++i) owner.push_back(i % R);
    return DistributionMapping(owner, R);
}

struct TwoLevels
{
    Geometry<2> g0{B2(V2(0), V2(31)), {0.0, 0.0}, {1.0, 1.0}, {true, false}};
    Geometry<2> g1 = g0.refine(V2(2));
    std::vector<FabArray<2>> data;

    explicit TwoLevels(int R, std::uint64_t seed = 1)
    {
        const auto ba0 = max_size(BoxArray<2>(g0.domain()), 16);
        const BoxArray<2> ba1(std::vector<B2>{B2(V2{8, 8}, V2{23, 23}), B2(V2{32, 40}, V2{47, 47})});
        data.emplace_back(ba0, round_robin(ba0.size(), R), 2, 1, -7.0);
        data.emplace_back(ba1, round_robin(ba1.size(), R), 2, 1, -7.0);
        Rng rng(seed);
        for (auto& fa : data)
            for (int i = 0; i < fa.size(); ++i)
                for (int n = 0; n < 2; ++n) for_each_cell(fa.box_array()[i], [&](const V2& p) { fa[i](p, n) = uniform_real(rng, -1, 1); });
    }

    PlotfileView<2> view() const
    {
        return PlotfileView<2>{{g0, g1}, {V2(2), V2(1)}, {&data[0], &data[1]}, {"rho", "phi"}, 0.125, 7};
    }
};

} // namespace

TEST(Plotfile, RoundTripIsBitIdentical)
{
    const auto dir = scratch("roundtrip");
    TwoLevels t(3);
    write_plotfile(dir, t.view()).wait();
    const auto p = read_plotfile<2>(dir, -1, 1);
    EXPECT_EQ(p.time, 0.125);
    EXPECT_EQ(p.step, 7);
    EXPECT_EQ(p.names, (std::vector<std::string>{"rho", "phi"}));
    ASSERT_EQ(p.data.size(), 2u);
    for (int l = 0; l < 2; ++l) {
        EXPECT_EQ(p.geom[l].domain(), (l ? t.g1 : t.g0).domain());
        EXPECT_EQ(p.geom[l].cell_size(), (l ? t.g1 : t.g0).cell_size());
        EXPECT_EQ(p.geom[l].periodic(), t.g0.periodic());
        EXPECT_TRUE(p.data[l].box_array() == t.data[l].box_array());
        EXPECT_TRUE(p.data[l].distribution_map() == t.data[l].distribution_map());
        EXPECT_TRUE(bit_identical(p.data[l], t.data[l], false));
    }
    // different rank count on read
    const auto one = read_plotfile<2>(dir, 1);
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < one.data[l].size(); ++i)
            for (int n = 0; n < 2; ++n)
                for_each_cell(one.data[l].box_array()[i], [&](const V2& c) { ASSERT_EQ(one.data[l][i](c, n), t.data[l][i](c, n)); });
    fs::remove_all(dir);
}

TEST(Plotfile, StaticWavesAndWriterCounts)
{
    const auto a = scratch("wave1"), b = scratch("wave2");
    TwoLevels t(4);
    const auto s1 = write_plotfile(a, t.view(), OutputMode::static_writers(1)).wait();
    const auto s2 = write_plotfile(b, t.view(), OutputMode::static_writers(2)).wait();
    EXPECT_EQ(s1.waves, 4);
    EXPECT_EQ(s1.max_concurrent, 1);
    EXPECT_EQ(s2.waves, 2);
    EXPECT_EQ(s2.max_concurrent, 2);
    EXPECT_EQ(tree_bytes(a), tree_bytes(b));
    EXPECT_THROW(write_plotfile(a, t.view(), OutputMode::static_writers(0)), Error);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Plotfile, AsyncWritesTheSnapshot)
{
    const auto a = scratch("async"), s = scratch("sync");
    TwoLevels t(2);
    write_plotfile(s, t.view()).wait();
    auto h = write_plotfile(a, t.view(), OutputMode::asynchronous());
    for (auto& fa : t.data)
        for (int i = 0; i < fa.size(); ++i) fa[i].set_val(99.0);
    h.wait();
    EXPECT_TRUE(h.ready());
    EXPECT_EQ(tree_bytes(a), tree_bytes(s));
    fs::remove_all(a);
    fs::remove_all(s);
}

TEST(Plotfile, BadInputsAreReported)
{
    const auto dir = scratch("bad");
    TwoLevels t(2);
    auto v = t.view();
    v.names = {"two words", "x"};
    EXPECT_THROW(write_plotfile(dir, v), Error);
    write_plotfile(dir, t.view()).wait();
    fs::resize_file(dir / "Level_1" / "Cell_D_00000", 10);
    EXPECT_THROW(read_plotfile<2>(dir), Error);
    EXPECT_THROW(read_plotfile<3>(dir), Error);
    EXPECT_THROW(read_plotfile<2>(dir / "nowhere"), Error);
    fs::remove_all(dir);
}

namespace {

ParticleContainer<2> particle_box(int R)
{
    const Geometry<2> g(B2(V2(0), V2(31)), {0.0, 0.0}, {1.0, 1.0}, {true, true});
    const auto ba = max_size(BoxArray<2>(g.domain()), 8);
    return ParticleContainer<2>({g}, {ba}, {round_robin(ba.size(), R)}, {2, 1}, V2(4));
}

std::multiset<std::tuple<int, std::int64_t, double, double, double, double, int>> particle_set(const ParticleContainer<2>& pc)
{
    std::multiset<std::tuple<int, std::int64_t, double, double, double, double, int>> s;
    for (auto& [k, t] : pc.tiles())
        for (std::size_t i = 0; i < t.size(); ++i)
            s.emplace(t.rec(i).origin_rank, t.rec(i).id, t.rec(i).pos[0], t.rec(i).pos[1], t.real(0, i), t.real(1, i), t.integer(0, i));
    return s;
}

} // namespace

TEST(Particles, EmptyContainerWritesHeaderOnly)
{
    const auto dir = scratch("pempty");
    write_particles(dir, particle_box(2));
    const auto files = tree_bytes(dir);
    ASSERT_EQ(files.size(), 1u);
    EXPECT_EQ(files.begin()->first, "particles/Header");
    auto back = particle_box(1);
    read_particles(dir, back);
    EXPECT_EQ(back.total_count(), 0);
    fs::remove_all(dir);
}

TEST(Particles, RoundTripAcrossRankCounts)
{
    const auto dir = scratch("pround");
    auto pc = particle_box(4);
    Rng rng(3);
    for (int n = 0; n < 10000; ++n) {
        const double re[2] = {uniform_real(rng, -1, 1), uniform_real(rng, 0, 5)};
        const int in[1] = {n % 17};
        pc.add_particle(n % 4, {uniform_real(rng, 0, 1), uniform_real(rng, 0, 1)}, re, in);
    }
    Transport tr(4);
    pc.redistribute(tr);
    write_particles(dir, pc);
    auto same = particle_box(4);
    read_particles(dir, same);
    EXPECT_EQ(same.tiles(), pc.tiles());
    auto one = particle_box(1);
    read_particles(dir, one);
    EXPECT_EQ(particle_set(one), particle_set(pc));
    EXPECT_EQ(one.check_placement(), "");

    const Geometry<2> g(B2(V2(0), V2(31)), {0.0, 0.0}, {1.0, 1.0}, {true, true});
    ParticleContainer<2> wrong({g}, {BoxArray<2>(g.domain())}, {DistributionMapping::single_rank(1)}, {1, 1});
    EXPECT_THROW(read_particles(dir, wrong), Error);
    fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripWithUserBlobAndRanks)
{
    const auto dir = scratch("chk");
    const Geometry<2> g(B2(V2(0), V2(31)), {0.0, 0.0}, {1.0, 1.0}, {true, true});
    GridGenParams<2> p;
    p.max_level = 1;
    p.max_grid_size = V2(16);
    AmrHierarchy<2> h(g, p, 3);
    const BoxArray<2> ba1(std::vector<B2>{B2(V2{16, 16}, V2{31, 31}), B2(V2{32, 16}, V2{47, 31})});
    h.set_level(1, ba1, round_robin(2, 3));
    std::vector<FabArray<2>> data;
    Rng rng(9);
    for (int l = 0; l < 2; ++l) {
        data.emplace_back(h.box_array(l), h.dmap(l), 1, 2);
        for (int i = 0; i < data[l].size(); ++i) for_each_cell(h.box_array(l)[i], [&](const V2& c) { data[l][i](c, 0) = uniform_real(rng, 0, 1); });
    }
    std::vector<char> blob{'a', '\0', 'z', static_cast<char>(0xff)};
    write_checkpoint<2>(dir, h, {&data[0], &data[1]}, {"u"}, 10, 0.5, blob);
    auto c = read_checkpoint<2>(dir, -1, 2);
    EXPECT_EQ(c.step, 10);
    EXPECT_EQ(c.time, 0.5);
    EXPECT_EQ(c.user, blob);
    ASSERT_EQ(c.hier->finest_level(), 1);
    EXPECT_TRUE(c.hier->box_array(1) == ba1);
    EXPECT_TRUE(c.hier->dmap(1) == h.dmap(1));
    EXPECT_EQ(c.hier->params().max_grid_size, V2(16));
    for (int l = 0; l < 2; ++l) EXPECT_TRUE(bit_identical(c.data[l], data[l], false));

    auto c1 = read_checkpoint<2>(dir, 1);
    EXPECT_EQ(c1.hier->nranks(), 1);
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < c1.data[l].size(); ++i)
            for_each_cell(c1.data[l].box_array()[i], [&](const V2& x) { ASSERT_EQ(c1.data[l][i](x, 0), data[l][i](x, 0)); });

    std::string head;
    {
        std::ifstream is(dir / "Header");
        head.assign(std::istreambuf_iterator<char>(is), {});
    }
    head.replace(head.find(" 1\n"), 3, " 9\n");
    detail::write_file(dir / "Header", head);
    EXPECT_THROW(read_checkpoint<2>(dir), Error);
    fs::remove_all(dir);
}

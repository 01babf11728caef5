#include <gtest/gtest.h>

#include <sstream>

#include "commands.hpp"

using namespace amrlite;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("amrlite_cli_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST(Cli, BalanceEqualCostsAreFullyEfficient)
{
    std::ostringstream log;
    const auto rep = amrcli::run_balance<2>(Config::from_string("seed = 1\nbalance.cost = equal\nbalance.n_cell = 64\nbalance.max_grid_size = 8"), {4, 16}, log);
    std::istringstream in(rep.summary_csv);
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line.substr(line.rfind(',') + 1), "1") << line;
        ++rows;
    }
    EXPECT_EQ(rows, 4);
}

TEST(Cli, BalanceKnapsackNotWorseThanSfc)
{
    std::ostringstream log;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Config c = Config::from_string("balance.cost = random\nbalance.n_cell = 64\nbalance.max_grid_size = 8");
        c.set("seed", std::to_string(seed));
        const auto rep = amrcli::run_balance<2>(c, {3, 8}, log);
        std::istringstream in(rep.summary_csv);
        std::string line;
        std::getline(in, line);
        double sfc = 0.0;
        while (std::getline(in, line)) {
            const double eff = std::stod(line.substr(line.rfind(',') + 1));
            if (line.rfind("sfc", 0) == 0)
                sfc = eff;
            else
                EXPECT_GE(eff, sfc);
        }
    }
}

TEST(Cli, SliceOfConstantFieldIsUniform)
{
    const auto dir = scratch("slice");
    const Geometry<3> g(Box<3>(IntVect<3>(0), IntVect<3>(7)), {0, 0, 0}, {1, 1, 1});
    const BoxArray<3> ba = max_size(BoxArray<3>(g.domain()), 4);
    FabArray<3> fa(ba, sfc_distribute(ba, 2), 1, 0, 2.5);
    PlotfileView<3> v{{g}, {IntVect<3>(2)}, {&fa}, {"phi"}, 0.0, 0};
    write_plotfile(dir / "plt", v).wait();

    const auto pf = read_plotfile<3>(dir / "plt");
    const auto img = amrcli::slice_level(pf, 0, 0, 1, 3);
    EXPECT_EQ(img.width, 8);
    EXPECT_EQ(img.height, 8);
    const auto ppm = amrcli::slice_ppm(img);
    const std::string head = "P6\n8 8\n255\n";
    ASSERT_EQ(ppm.size(), head.size() + 8 * 8 * 3);
    EXPECT_EQ(ppm.substr(0, head.size()), head);
    for (std::size_t k = head.size(); k < ppm.size(); ++k) ASSERT_EQ(ppm[k], ppm[head.size()]);
    const auto csv = amrcli::slice_csv(img);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "2.5,2.5,2.5,2.5,2.5,2.5,2.5,2.5");
    EXPECT_THROW(amrcli::slice_level(pf, 0, 0, 1, 8), Error);
    EXPECT_THROW(amrcli::slice_level(pf, 1, 0, 1, 3), Error);
    EXPECT_THROW(read_plotfile<3>(dir / "missing"), Error);
    fs::remove_all(dir);
}

TEST(Cli, SliceOrientation)
{
    const Geometry<2> g(Box<2>(IntVect<2>(0), IntVect<2>{2, 1}), {0, 0}, {1, 1});
    const BoxArray<2> ba(g.domain());
    FabArray<2> fa(ba, DistributionMapping::single_rank(1), 1, 0);
    for_each_cell(g.domain(), [&](const IntVect<2>& p) { fa[0](p) = p[0] + 10 * p[1]; });
    Plotfile<2> pf;
    pf.geom = {g};
    pf.ref_ratio = {IntVect<2>(2)};
    pf.data.push_back(std::move(fa));
    const auto img = amrcli::slice_level(pf, 0, 0, 2, 0);
    EXPECT_EQ(amrcli::slice_csv(img), "0,1,2\n10,11,12\n");
    const auto ppm = amrcli::slice_ppm(img);
    const std::size_t h = std::string("P6\n3 2\n255\n").size();
    // Top image row is the highest j; values map linearly onto 0..255.
    EXPECT_EQ(static_cast<unsigned char>(ppm[h]), 213);  // 255 * 10 / 12
    EXPECT_EQ(static_cast<unsigned char>(ppm[h + 3 * 3]), 0);
    EXPECT_EQ(static_cast<unsigned char>(ppm[h + 3 * 3 + 6]), 43);  // 255 * 2 / 12
}

TEST(Cli, EbVolumeStableAcrossJitterSeeds)
{
    std::ostringstream log;
    Config c;
    c.set("eb.n_cell", "64");
    c.set("seed", "1");
    const auto a = amrcli::run_eb<3>(c, log);
    c.set("seed", "2");
    const auto b = amrcli::run_eb<3>(c, log);
    EXPECT_GT(a.fluid_volume, 7.0);
    EXPECT_LT(std::abs(a.fluid_volume - b.fluid_volume) / a.fluid_volume, 0.01);
    EXPECT_EQ(a.regular + a.cut + a.covered, 64 * 64 * 64);
}

TEST(Cli, PbenchProperties)
{
    std::ostringstream log;
    const auto rows = amrcli::run_pbench<3>(Config::from_string("seed = 4\npbench.steps = 20\npbench.n_cell = 32\npbench.max_grid_size = 8"), {1, 4, 16}, log);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].messages, 0);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.matches_single_rank);
        EXPECT_EQ(r.particles, 8192);
        EXPECT_EQ(r.checksum, rows[0].checksum);
    }
    EXPECT_GT(rows[1].messages, 0);
    EXPECT_GE(64 / rows[2].nranks, 4);
    EXPECT_EQ(rows[2].interior_boxes, 64);
    EXPECT_EQ(rows[2].interior_min_neighbors, 26);
    EXPECT_EQ(rows[2].interior_max_neighbors, 26);
    EXPECT_LE(rows[2].mean_neighbor_ranks, 16.0);
}

TEST(Cli, PbenchOpenDomainInteriorGrids)
{
    std::ostringstream log;
    const auto rows = amrcli::run_pbench<3>(Config::from_string("seed = 4\npbench.steps = 0\npbench.periodic = 0\npbench.particles_per_cell = 0.01"), {16}, log);
    // 4x4x4 grids: the 2x2x2 core is interior.
    EXPECT_EQ(rows[0].interior_boxes, 8);
    EXPECT_EQ(rows[0].interior_min_neighbors, 26);
}

TEST(Cli, AdvectWritesPlotfilesAndConserves)
{
    const auto dir = scratch("advect");
    std::ostringstream log;
    Config c = Config::from_string("seed = 1\ngeom.n_cell = 32\nadv.n_steps = 12\nadv.plot_int = 4\nio.mode = async\nadv.chk_int = 6\n");
    const auto rep = amrcli::run_advect<2>(c, 2, dir, log);
    EXPECT_EQ(rep.steps, 12);
    EXPECT_EQ(rep.plotfiles, (std::vector<std::string>{"plt00000", "plt00004", "plt00008", "plt00012"}));
    EXPECT_NEAR(rep.final_sum, rep.initial_sum, 1e-12 * rep.initial_sum);
    EXPECT_TRUE(fs::exists(dir / "chk00012" / "Header"));
    const auto pf = read_plotfile<2>(dir / "plt00012");
    EXPECT_EQ(pf.step, 12);
    EXPECT_EQ(pf.data.size(), 2u);

    c.set("adv.restart", (dir / "chk00006").string());
    c.set("adv.n_steps", "6");
    const auto rep2 = amrcli::run_advect<2>(c, 2, dir / "restart", log);
    EXPECT_EQ(rep2.final_sum, rep.final_sum);
    fs::remove_all(dir);
}

TEST(Cli, MissingSeedIsAnError)
{
    std::ostringstream log;
    EXPECT_THROW(amrcli::run_balance<2>(Config{}, {4}, log), Error);
    EXPECT_THROW(amrcli::run_eb<3>(Config{}, log), Error);
}

// amrcli: advection demo, particle benchmark, load-balance, EB and slice reports.
//
//   amrcli <advect|pbench|balance|eb> [--config FILE] [--nranks N] [--seed S] [--out DIR] [--key=value ...]
//   amrcli slice PLOTFILE [--axis A] [--index I] [--level L] [--comp C] [--out PREFIX]
//
// Exit codes: 0 ok, 1 user error, 2 internal error.

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace amrcli;

struct Common
{
    std::string config;
    int nranks = 0;
    std::string seed;
    std::string out = ".";
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "key=value configuration file");
    sub->add_option("--nranks", c.nranks, "number of logical ranks");
    sub->add_option("--seed", c.seed, "random seed (overrides the config)");
    sub->add_option("--out", c.out, "output directory");
    sub->allow_extras();
}

// Config file, then --key=value extras, then the dedicated flags.
Config load_config(const Common& c, const std::vector<std::string>& extras)
{
    Config cfg = c.config.empty() ? Config{} : Config::from_file(c.config);
    for (const auto& e : extras) {
        if (e.rfind("--", 0) != 0) throw Error("unexpected argument '" + e + "'");
        const auto eq = e.find('=');
        if (eq == std::string::npos || eq == 2) throw Error("override '" + e + "' must look like --key=value");
        cfg.set(e.substr(2, eq - 2), e.substr(eq + 1));
    }
    if (!c.seed.empty()) cfg.set("seed", c.seed);
    if (c.nranks > 0) cfg.set("nranks", std::to_string(c.nranks));
    return cfg;
}

int dim_of(const Config& cfg, int fallback)
{
    const int d = cfg.get<int>("dim", fallback);
    if (d != 2 && d != 3) throw Error("dim must be 2 or 3");
    return d;
}

std::vector<int> rank_sweep(int nmax)
{
    std::vector<int> r;
    for (int p = 1; p < nmax; p *= 2) r.push_back(p);
    r.push_back(nmax);
    return r;
}

int cmd_advect(const Config& cfg, const fs::path& out)
{
    const int R = cfg.get<int>("nranks", 1);
    if (dim_of(cfg, 2) == 2)
        run_advect<2>(cfg, R, out, std::cout);
    else
        run_advect<3>(cfg, R, out, std::cout);
    return 0;
}

int cmd_pbench(const Config& cfg, const fs::path& out)
{
    const auto ranks = cfg.has("nranks") ? rank_sweep(cfg.get<int>("nranks")) : std::vector<int>{};
    const auto rows = dim_of(cfg, 3) == 2 ? run_pbench<2>(cfg, ranks, std::cout) : run_pbench<3>(cfg, ranks, std::cout);
    write_text(out / "pbench.csv", pbench_csv(rows));
    for (const auto& r : rows)
        if (!r.matches_single_rank) throw std::runtime_error("pbench: particle multiset differs from the single-rank run");
    return 0;
}

int cmd_balance(const Config& cfg, const fs::path& out)
{
    const auto ranks = cfg.has("nranks") ? std::vector<int>{cfg.get<int>("nranks")} : std::vector<int>{};
    const auto rep = dim_of(cfg, 2) == 2 ? run_balance<2>(cfg, ranks, std::cout) : run_balance<3>(cfg, ranks, std::cout);
    write_text(out / "balance.csv", rep.summary_csv);
    write_text(out / "balance_loads.csv", rep.loads_csv);
    return 0;
}

int cmd_eb(const Config& cfg, const fs::path& out)
{
    const auto rep = dim_of(cfg, 3) == 2 ? run_eb<2>(cfg, std::cout) : run_eb<3>(cfg, std::cout);
    write_text(out / "eb.csv", rep.csv);
    return 0;
}

template <int D>
void slice_dim(const fs::path& pf, int level, int comp, int axis, int index, const fs::path& prefix)
{
    const auto p = read_plotfile<D>(pf);
    if (index == std::numeric_limits<int>::min()) {
        const auto& dom = p.geom.at(static_cast<std::size_t>(std::max(level, 0))).domain();
        index = D == 3 && axis >= 0 && axis < D ? (dom.lo(axis) + dom.hi(axis)) / 2 : 0;
    }
    const auto img = slice_level(p, level, comp, axis, index);
    write_text(prefix.string() + ".csv", slice_csv(img));
    write_text(prefix.string() + ".ppm", slice_ppm(img));
    std::cout << "slice " << img.width << "x" << img.height << " -> " << prefix.string() << ".csv, .ppm\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"amrlite command-line driver"};
    app.require_subcommand(1);
    Common common;
    auto* adv = app.add_subcommand("advect", "two-level advection with subcycling and refluxing");
    auto* pb = app.add_subcommand("pbench", "particle redistribute benchmark over logical ranks");
    auto* bal = app.add_subcommand("balance", "knapsack vs space-filling-curve load balance report");
    auto* ebc = app.add_subcommand("eb", "embedded boundary volume and pruning report");
    for (auto* s : {adv, pb, bal, ebc}) add_common(s, common);

    auto* sl = app.add_subcommand("slice", "CSV and PPM of one plane of a plotfile");
    std::string plotfile, prefix = "slice";
    int axis = 2, index = std::numeric_limits<int>::min(), level = 0, comp = 0;
    sl->add_option("plotfile", plotfile, "plotfile directory")->required();
    sl->add_option("--axis", axis, "normal direction of the plane (3D)");
    sl->add_option("--index", index, "cell index of the plane along axis (default: middle)");
    sl->add_option("--level", level, "AMR level");
    sl->add_option("--comp", comp, "component");
    sl->add_option("--out", prefix, "output prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (sl->parsed()) {
            const int d = plotfile_dim(plotfile);
            if (d == 2)
                slice_dim<2>(plotfile, level, comp, axis, index, prefix);
            else if (d == 3)
                slice_dim<3>(plotfile, level, comp, axis, index, prefix);
            else
                throw Error("slice: unsupported plotfile dimension " + std::to_string(d));
            return 0;
        }
        CLI::App* sub = app.get_subcommands().front();
        const Config cfg = load_config(common, sub->remaining());
        const fs::path out(common.out);
        if (sub == adv) return cmd_advect(cfg, out);
        if (sub == pb) return cmd_pbench(cfg, out);
        if (sub == bal) return cmd_balance(cfg, out);
        return cmd_eb(cfg, out);
    } catch (const Error& e) {
        std::cerr << "amrcli: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "amrcli: internal error: " << e.what() << "\n";
        return 2;
    }
}

#ifndef AMRCLI_COMMANDS_HPP
#define AMRCLI_COMMANDS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amrlite/advection.hpp"
#include "amrlite/distribution.hpp"
#include "amrlite/eb.hpp"
#include "amrlite/particles.hpp"
#include "amrlite/plotfile.hpp"

namespace amrcli {

using namespace amrlite;
namespace fs = std::filesystem;

inline std::string num(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_text(const fs::path& p, const std::string& s)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
}

inline std::uint64_t require_seed(const Config& c)
{
    if (!c.has("seed")) throw Error("config must set 'seed' (or pass --seed)");
    return c.get<std::uint64_t>("seed");
}

template <int D>
Box<D> cube_domain(const IntVect<D>& n)
{
    return Box<D>(IntVect<D>(0), n - IntVect<D>::unit());
}

// ---------------------------------------------------------------- advect

struct AdvectReport
{
    double initial_sum = 0.0;
    double final_sum = 0.0;
    int steps = 0;
    std::vector<std::string> plotfiles;
    std::string csv;
};

template <int D>
AdvectReport run_advect(const Config& c, int nranks, const fs::path& out, std::ostream& log)
{
    require_seed(c);
    const auto p = AdvectionParams<D>::from_config(c);
    const int nsteps = c.get<int>("adv.n_steps", 100);
    const int plot_int = c.get<int>("adv.plot_int", 0);
    const int chk_int = c.get<int>("adv.chk_int", 0);
    const std::string io = c.get<std::string>("io.mode", "static");
    const int nwriters = c.get<int>("io.nwriters", 1);
    OutputMode mode;
    if (io == "static")
        mode = OutputMode::static_writers(nwriters);
    else if (io == "async")
        mode = OutputMode::asynchronous();
    else
        throw Error("io.mode must be 'static' or 'async'");

    std::unique_ptr<AdvectionSolver<D>> s;
    if (c.has("adv.restart"))
        s = std::make_unique<AdvectionSolver<D>>(p, fs::path(c.get<std::string>("adv.restart")), nranks);
    else
        s = std::make_unique<AdvectionSolver<D>>(p, nranks);

    AdvectReport rep;
    std::ostringstream csv;
    csv << "step,time,sum,rel_change,finest_level,fine_boxes\n";
    rep.initial_sum = s->global_sum();
    auto record = [&] {
        const int f = s->finest_level();
        csv << s->step_index() << "," << num(s->time()) << "," << num(s->global_sum()) << ","
            << num((s->global_sum() - rep.initial_sum) / rep.initial_sum) << "," << f << ","
            << (f > 0 ? s->hierarchy().box_array(f).size() : 0) << "\n";
    };
    std::vector<WriteHandle> pending;
    auto plot = [&] {
        char name[32];
        std::snprintf(name, sizeof name, "plt%05d", s->step_index());
        pending.push_back(write_plotfile<D>(out / name, s->view(), mode));
        rep.plotfiles.push_back(name);
    };
    record();
    plot();
    const int start = s->step_index();
    while (s->step_index() < start + nsteps) {
        s->step();
        record();
        if (plot_int > 0 && s->step_index() % plot_int == 0) plot();
        if (chk_int > 0 && s->step_index() % chk_int == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "chk%05d", s->step_index());
            s->write_checkpoint(out / name);
        }
    }
    if (rep.plotfiles.empty() || plot_int <= 0 || s->step_index() % plot_int != 0) plot();
    for (auto& h : pending) h.wait();
    rep.final_sum = s->global_sum();
    rep.steps = s->step_index() - start;
    rep.csv = csv.str();
    write_text(out / "advect.csv", rep.csv);
    log << "initial sum  " << num(rep.initial_sum) << "\n";
    log << "final sum    " << num(rep.final_sum) << "\n";
    log << "relative change " << num((rep.final_sum - rep.initial_sum) / rep.initial_sum) << " over " << rep.steps << " coarse steps\n";
    log << "plotfiles    " << rep.plotfiles.size() << " in " << out.string() << "\n";
    return rep;
}

// ---------------------------------------------------------------- pbench

struct PbenchRow
{
    int nranks = 1;
    int nboxes = 0;
    double wall_seconds = 0.0;
    std::int64_t messages = 0;  // inter-rank only
    std::int64_t bytes = 0;
    double mean_neighbor_ranks = 0.0;  // distinct owners among a box and its neighbours
    int interior_boxes = 0;
    int interior_min_neighbors = 0;
    int interior_max_neighbors = 0;
    std::int64_t particles = 0;
    std::uint64_t checksum = 0;
    bool matches_single_rank = false;
};

template <int D>
std::vector<std::pair<std::int64_t, RealVect<D>>> particle_multiset(const ParticleContainer<D>& pc)
{
    std::vector<std::pair<std::int64_t, RealVect<D>>> v;
    for (const auto& [k, t] : pc.tiles())
        for (std::size_t i = 0; i < t.size(); ++i) v.emplace_back(t.rec(i).id, t.rec(i).pos);
    std::sort(v.begin(), v.end());
    return v;
}

template <int D>
std::uint64_t multiset_hash(const std::vector<std::pair<std::int64_t, RealVect<D>>>& v)
{
    std::uint64_t h = 0;
    for (const auto& [id, x] : v) {
        h = detail::splitmix64(h ^ static_cast<std::uint64_t>(id));
        for (double c : x) h = detail::splitmix64(h ^ std::bit_cast<std::uint64_t>(c));
    }
    return h;
}

/// Interior boxes touch no non-periodic domain face.
template <int D>
bool interior_box(const Box<D>& b, const Geometry<D>& g)
{
    for (int d = 0; d < D; ++d)
        if (!g.is_periodic(d) && (b.lo(d) == g.domain().lo(d) || b.hi(d) == g.domain().hi(d))) return false;
    return true;
}

template <int D>
std::vector<PbenchRow> run_pbench(const Config& c, std::vector<int> ranks, std::ostream& log)
{
    const std::uint64_t seed = require_seed(c);
    const IntVect<D> n = c.get_intvect<D>("pbench.n_cell", IntVect<D>(32));
    const IntVect<D> mgs = c.get_intvect<D>("pbench.max_grid_size", IntVect<D>(8));
    const int steps = c.get<int>("pbench.steps", 500);
    const double ppc = c.get<double>("pbench.particles_per_cell", 0.25);
    const double max_cells = c.get<double>("pbench.max_cells", 0.5);
    const std::string mode = c.get<std::string>("pbench.mode", "local");
    const IntVect<D> per = c.get_intvect<D>("pbench.periodic", IntVect<D>(1));
    if (ranks.empty()) ranks = c.has("pbench.ranks") ? c.get_list<int>("pbench.ranks") : std::vector<int>{1, 2, 4, 8, 16};

    std::array<bool, D> periodic{};
    RealVect<D> lo{}, hi{};
    for (int d = 0; d < D; ++d) periodic[d] = per[d] != 0, hi[d] = 1.0;
    const Geometry<D> geom(cube_domain<D>(n), lo, hi, periodic);
    const BoxArray<D> ba = max_size(BoxArray<D>(geom.domain()), mgs);
    const auto nbr = box_neighbor_counts(ba, geom.periodicity());

    std::mt19937_64 rng(seed);
    const auto np = static_cast<std::int64_t>(std::llround(ppc * static_cast<double>(geom.domain().num_cells())));
    std::vector<RealVect<D>> start(static_cast<std::size_t>(np));
    for (auto& x : start)
        for (int d = 0; d < D; ++d) x[d] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

    RedistributeOptions opt;
    if (mode == "local")
        opt.mode = RedistributeOptions::Mode::local;
    else if (mode == "global")
        opt.mode = RedistributeOptions::Mode::global;
    else
        throw Error("pbench.mode must be 'local' or 'global'");

    std::vector<PbenchRow> rows;
    std::vector<std::pair<std::int64_t, RealVect<D>>> reference;
    for (int R : ranks) {
        if (R < 1) throw Error("pbench: rank counts must be >= 1");
        const auto dm = sfc_distribute(ba, R);
        ParticleContainer<D> pc({geom}, {ba}, {dm}, ParticleSchema{});
        for (std::int64_t i = 0; i < np; ++i) pc.insert_particle(ParticleRecord<D>{start[static_cast<std::size_t>(i)], i + 1, 0});
        Transport tr(R);
        const auto t0 = std::chrono::steady_clock::now();
        for (int s = 0; s < steps; ++s) {
            random_walk(pc, seed, s, max_cells);
            pc.redistribute(tr, opt);
        }
        const auto t1 = std::chrono::steady_clock::now();

        PbenchRow row;
        row.nranks = R;
        row.nboxes = ba.size();
        row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        for (const auto& [pr, cnt] : tr.stats().pair_messages)
            if (pr.first != pr.second) row.messages += cnt;
        row.bytes = tr.stats().bytes;
        double nr = 0.0;
        row.interior_min_neighbors = 1 << 30;
        for (int i = 0; i < ba.size(); ++i) {
            std::set<int> owners{dm[i]};
            for (const auto& s : geom.periodicity().shifts())
                for (auto& [j, ov] : ba.intersections(shift(grow(ba[i], 1), -s))) {
                    (void)ov;
                    owners.insert(dm[j]);
                }
            nr += static_cast<double>(owners.size());
            if (interior_box(ba[i], geom)) {
                ++row.interior_boxes;
                row.interior_min_neighbors = std::min(row.interior_min_neighbors, nbr[static_cast<std::size_t>(i)]);
                row.interior_max_neighbors = std::max(row.interior_max_neighbors, nbr[static_cast<std::size_t>(i)]);
            }
        }
        if (row.interior_boxes == 0) row.interior_min_neighbors = 0;
        row.mean_neighbor_ranks = nr / ba.size();
        const auto ms = particle_multiset(pc);
        row.particles = static_cast<std::int64_t>(ms.size());
        row.checksum = multiset_hash<D>(ms);
        if (rows.empty()) reference = ms;
        row.matches_single_rank = ms == reference;
        log << "R=" << R << " boxes/rank=" << num(static_cast<double>(ba.size()) / R) << " wall=" << num(row.wall_seconds) << "s messages=" << row.messages
            << " neighbor ranks=" << num(row.mean_neighbor_ranks) << " interior box neighbors=" << row.interior_min_neighbors << ".." << row.interior_max_neighbors
            << (row.matches_single_rank ? "" : " MISMATCH") << "\n";
        rows.push_back(row);
    }
    return rows;
}

inline std::string pbench_csv(const std::vector<PbenchRow>& rows)
{
    std::ostringstream os;
    os << "nranks,nboxes,wall_seconds,messages,bytes,mean_neighbor_ranks,interior_boxes,interior_min_neighbors,interior_max_neighbors,particles,checksum,"
          "matches_single_rank\n";
    for (const auto& r : rows)
        os << r.nranks << "," << r.nboxes << "," << num(r.wall_seconds) << "," << r.messages << "," << r.bytes << "," << num(r.mean_neighbor_ranks) << ","
           << r.interior_boxes << "," << r.interior_min_neighbors << "," << r.interior_max_neighbors << "," << r.particles << "," << r.checksum << ","
           << (r.matches_single_rank ? 1 : 0) << "\n";
    return os.str();
}

// ---------------------------------------------------------------- balance

struct BalanceReport
{
    std::string summary_csv;  // strategy,nranks,max_load,mean_load,efficiency
    std::string loads_csv;    // nranks,rank,sfc_load,knapsack_load
};

template <int D>
BalanceReport run_balance(const Config& c, std::vector<int> ranks, std::ostream& log)
{
    const std::uint64_t seed = require_seed(c);
    const IntVect<D> n = c.get_intvect<D>("balance.n_cell", IntVect<D>(64));
    const IntVect<D> mgs = c.get_intvect<D>("balance.max_grid_size", IntVect<D>(8));
    const std::string kind = c.get<std::string>("balance.cost", "random");
    const double sigma = c.get<double>("balance.sigma", 0.75);
    if (ranks.empty()) ranks = c.has("balance.ranks") ? c.get_list<int>("balance.ranks") : std::vector<int>{4, 8, 16};

    const BoxArray<D> ba = max_size(BoxArray<D>(cube_domain<D>(n)), mgs);
    CostVector cost;
    if (kind == "equal") {
        cost.assign(static_cast<std::size_t>(ba.size()), 1.0);
    } else if (kind == "cells") {
        cost = cell_count_costs(ba);
    } else if (kind == "random") {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, sigma);
        for (int i = 0; i < ba.size(); ++i) cost.push_back(static_cast<double>(ba[i].num_cells()) * std::exp(g(rng)));
    } else {
        throw Error("balance.cost must be 'equal', 'cells' or 'random'");
    }

    BalanceReport rep;
    std::ostringstream sum, loads;
    sum << "strategy,nranks,max_load,mean_load,efficiency\n";
    loads << "nranks,rank,sfc_load,knapsack_load\n";
    for (int R : ranks) {
        const auto sfc = load_stats(sfc_distribute(ba, cost, R), cost);
        const auto ks = load_stats(knapsack_distribute(cost, R), cost);
        sum << "sfc," << R << "," << num(sfc.max_load) << "," << num(sfc.mean_load) << "," << num(sfc.efficiency) << "\n";
        sum << "knapsack," << R << "," << num(ks.max_load) << "," << num(ks.mean_load) << "," << num(ks.efficiency) << "\n";
        log << "nranks " << R << " (" << ba.size() << " boxes)\n  rank        sfc   knapsack\n";
        for (int r = 0; r < R; ++r) {
            const auto rr = static_cast<std::size_t>(r);
            loads << R << "," << r << "," << num(sfc.load[rr]) << "," << num(ks.load[rr]) << "\n";
            log << "  " << std::setw(4) << r << " " << std::setw(10) << std::fixed << std::setprecision(1) << sfc.load[rr] << " " << std::setw(10) << ks.load[rr]
                << "\n";
        }
        log << std::defaultfloat << std::setprecision(6) << "  efficiency  sfc " << sfc.efficiency << "  knapsack " << ks.efficiency << "\n";
    }
    rep.summary_csv = sum.str();
    rep.loads_csv = loads.str();
    return rep;
}

// ---------------------------------------------------------------- eb

inline const char* default_csg = R"(
    sphere = sphere(0.5, [0, 0, 0]);
    cube = box([-0.4, -0.4, -0.4], [0.4, 0.4, 0.4]);
    body = intersection(sphere, cube);
    cx = cylinder(0.25, 0, [0, 0, 0]);
    cy = cylinder(0.25, 1, [0, 0, 0]);
    cz = cylinder(0.25, 2, [0, 0, 0]);
    holes = union(cx, cy, cz);
    difference(body, holes)
)";

struct EbReport
{
    std::int64_t regular = 0, cut = 0, covered = 0, degenerate = 0;
    double fluid_volume = 0.0;
    int boxes = 0;
    int pruned = 0;
    std::string csv;
};

template <int D>
EbReport run_eb(const Config& c, std::ostream& log)
{
    const std::uint64_t seed = require_seed(c);
    std::string text = default_csg;
    if (c.has("eb.csg_file")) {
        std::ifstream in(c.get<std::string>("eb.csg_file"));
        if (!in) throw Error("cannot open " + c.get<std::string>("eb.csg_file"));
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    } else if (c.has("eb.csg")) {
        text = c.get<std::string>("eb.csg");
    }
    const IntVect<D> n = c.get_intvect<D>("eb.n_cell", IntVect<D>(64));
    const double plo = c.get<double>("eb.prob_lo", -1.0), phi = c.get<double>("eb.prob_hi", 1.0);
    const int nsub = c.get<int>("eb.nsub", 4);
    const IntVect<D> mgs = c.get_intvect<D>("eb.max_grid_size", IntVect<D>(16));
    const bool jitter = c.get<bool>("eb.jitter", true);

    RealVect<D> lo, hi;
    for (int d = 0; d < D; ++d) lo[d] = plo, hi[d] = phi;
    const Geometry<D> geom(cube_domain<D>(n), lo, hi);
    auto f = parse_csg<D>(text);
    if (jitter) {
        // Sub-cell offset of the shape relative to the mesh, drawn from the seed.
        std::mt19937_64 rng(seed);
        RealVect<D> off;
        for (int d = 0; d < D; ++d) off[d] = std::uniform_real_distribution<double>(-0.5, 0.5)(rng) * geom.cell_size(d);
        f = eb::translate<D>(f, off);
    }
    const BoxArray<D> full = max_size(BoxArray<D>(geom.domain()), mgs);
    const BoxArray<D> kept = prune(full, covered_box_predicate(f, geom));
    const auto eb = compute_moments(f, geom, kept, DistributionMapping::single_rank(kept.size()), nsub);

    EbReport rep;
    rep.regular = eb.count(EBCellFlag::regular);
    rep.cut = eb.count(EBCellFlag::cut);
    rep.covered = eb.count(EBCellFlag::covered) + (geom.domain().num_cells() - kept.num_cells());
    rep.degenerate = eb.degenerate;
    rep.fluid_volume = eb.fluid_volume();
    rep.boxes = full.size();
    rep.pruned = full.size() - kept.size();
    std::ostringstream os;
    os << "seed,n_cell,nsub,regular,cut,covered,degenerate,fluid_volume,boxes,pruned_boxes\n";
    os << seed << "," << n[0] << "," << nsub << "," << rep.regular << "," << rep.cut << "," << rep.covered << "," << rep.degenerate << "," << num(rep.fluid_volume)
       << "," << rep.boxes << "," << rep.pruned << "\n";
    rep.csv = os.str();
    log << "cells: regular " << rep.regular << ", cut " << rep.cut << ", covered " << rep.covered << "\n";
    log << "fluid volume " << num(rep.fluid_volume) << "\n";
    log << "boxes " << rep.boxes << ", pruned (all covered) " << rep.pruned << "\n";
    return rep;
}

// ---------------------------------------------------------------- slice

struct SliceImage
{
    int width = 0, height = 0;
    std::vector<double> value;  // row-major, row 0 = lowest index
    std::vector<char> valid;
};

template <int D>
SliceImage slice_level(const Plotfile<D>& pf, int level, int comp, int axis, int index)
{
    if (level < 0 || level >= static_cast<int>(pf.data.size())) throw Error("slice: level " + std::to_string(level) + " not in plotfile");
    const auto& fa = pf.data[static_cast<std::size_t>(level)];
    if (comp < 0 || comp >= fa.ncomp()) throw Error("slice: component out of range");
    const Box<D>& dom = pf.geom[static_cast<std::size_t>(level)].domain();
    int a0 = 0, a1 = 1;
    if constexpr (D == 3) {
        if (axis < 0 || axis > 2) throw Error("slice: axis must be 0, 1 or 2");
        if (index < dom.lo(axis) || index > dom.hi(axis)) throw Error("slice: index outside the domain");
        a0 = axis == 0 ? 1 : 0;
        a1 = axis == 2 ? 1 : 2;
    }
    SliceImage img;
    img.width = dom.length(a0);
    img.height = dom.length(a1);
    img.value.assign(static_cast<std::size_t>(img.width) * img.height, 0.0);
    img.valid.assign(img.value.size(), 0);
    for (int i = 0; i < fa.size(); ++i)
        for_each_cell(fa[i].box(), [&](const IntVect<D>& p) {
            if constexpr (D == 3)
                if (p[axis] != index) return;
            const auto k = static_cast<std::size_t>(p[a1] - dom.lo(a1)) * img.width + static_cast<std::size_t>(p[a0] - dom.lo(a0));
            img.value[k] = fa[i](p, comp);
            img.valid[k] = 1;
        });
    return img;
}

inline std::string slice_csv(const SliceImage& img)
{
    std::ostringstream os;
    for (int j = 0; j < img.height; ++j) {
        for (int i = 0; i < img.width; ++i) {
            const auto k = static_cast<std::size_t>(j) * img.width + i;
            if (i) os << ",";
            if (img.valid[k]) os << num(img.value[k]);
        }
        os << "\n";
    }
    return os.str();
}

/// Binary PPM with equal channels; top row is the highest index.
inline std::string slice_ppm(const SliceImage& img)
{
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < img.value.size(); ++k)
        if (img.valid[k]) {
            lo = any ? std::min(lo, img.value[k]) : img.value[k];
            hi = any ? std::max(hi, img.value[k]) : img.value[k];
            any = true;
        }
    std::string s = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    for (int j = img.height - 1; j >= 0; --j)
        for (int i = 0; i < img.width; ++i) {
            const auto k = static_cast<std::size_t>(j) * img.width + i;
            int g = 0;
            if (img.valid[k] && hi > lo) g = static_cast<int>(std::lround(255.0 * (img.value[k] - lo) / (hi - lo)));
            s.append(3, static_cast<char>(static_cast<unsigned char>(g)));
        }
    return s;
}

} // namespace amrcli

#endif // AMRCLI_COMMANDS_HPP

#ifndef AMRLITE_ADVECTION_HPP
#define AMRLITE_ADVECTION_HPP

// Scalar advection on a subcycled AMR hierarchy: first-order upwind fluxes,
// time-interpolated coarse/fine ghost cells, refluxing and tracer particles.

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "amr_core.hpp"
#include "coarse_fine.hpp"
#include "config.hpp"
#include "particles.hpp"
#include "plotfile.hpp"

namespace amrlite {

template <int D>
struct AdvectionParams
{
    IntVect<D> n_cell{IntVect<D>(32)};
    RealVect<D> prob_lo{};
    RealVect<D> prob_hi{};
    std::array<bool, D> periodic{};
    GridGenParams<D> grid;

    RealVect<D> velocity{};
    double cfl = 0.5;
    double dt = 0.0;  // > 0 fixes the coarse step; checked against the CFL limit
    int regrid_int = 4;
    bool reflux = true;
    InterpKind interp = InterpKind::linear_limited;

    RealVect<D> blob_center{};
    double blob_radius = 0.1;
    double blob_amp = 1.0;
    double background = 0.1;
    double tag_threshold = 0.25;  // fraction of blob_amp

    int n_tracers = 0;
    std::uint64_t seed = 1;

    AdvectionParams()
    {
        grid.max_level = 1;
        grid.max_grid_size = IntVect<D>(16);
        grid.blocking_factor = IntVect<D>(4);
        grid.n_error_buf = 2;
        for (int d = 0; d < D; ++d) {
            prob_hi[d] = 1.0;
            periodic[d] = true;
            velocity[d] = d == 0 ? 1.0 : 0.5;
            blob_center[d] = 0.5;
        }
    }

    /// geom.n_cell, geom.prob_lo, geom.prob_hi, geom.periodic, amr.*, and
    /// adv.velocity, adv.cfl, adv.dt, adv.regrid_int, adv.reflux,
    /// adv.interp (linear|constant), adv.blob_center, adv.blob_radius,
    /// adv.blob_amp, adv.background, adv.tag_threshold, adv.n_tracers, seed.
    static AdvectionParams from_config(const Config& c)
    {
        AdvectionParams p;
        p.n_cell = c.get_intvect<D>("geom.n_cell", p.n_cell);
        p.prob_lo = real_vect(c, "geom.prob_lo", p.prob_lo);
        p.prob_hi = real_vect(c, "geom.prob_hi", p.prob_hi);
        const IntVect<D> per = c.get_intvect<D>("geom.periodic", IntVect<D>(1));
        for (int d = 0; d < D; ++d) p.periodic[d] = per[d] != 0;
        p.grid = GridGenParams<D>::from_config(with_grid_defaults(c, p.grid));
        p.velocity = real_vect(c, "adv.velocity", p.velocity);
        p.cfl = c.get<double>("adv.cfl", p.cfl);
        p.dt = c.get<double>("adv.dt", p.dt);
        p.regrid_int = c.get<int>("adv.regrid_int", p.regrid_int);
        p.reflux = c.get<bool>("adv.reflux", p.reflux);
        const auto interp = c.get<std::string>("adv.interp", "linear");
        if (interp == "linear")
            p.interp = InterpKind::linear_limited;
        else if (interp == "constant")
            p.interp = InterpKind::piecewise_constant;
        else
            throw Error("adv.interp must be 'linear' or 'constant'");
        p.blob_center = real_vect(c, "adv.blob_center", p.blob_center);
        p.blob_radius = c.get<double>("adv.blob_radius", p.blob_radius);
        p.blob_amp = c.get<double>("adv.blob_amp", p.blob_amp);
        p.background = c.get<double>("adv.background", p.background);
        p.tag_threshold = c.get<double>("adv.tag_threshold", p.tag_threshold);
        p.n_tracers = c.get<int>("adv.n_tracers", p.n_tracers);
        p.seed = c.get<std::uint64_t>("seed", p.seed);
        return p;
    }

    Geometry<D> geometry() const { return Geometry<D>(Box<D>(IntVect<D>(0), n_cell - IntVect<D>::unit()), prob_lo, prob_hi, periodic); }

  private:
    static RealVect<D> real_vect(const Config& c, const std::string& key, const RealVect<D>& fallback)
    {
        if (!c.has(key)) return fallback;
        const auto v = c.get_list<double>(key);
        if (v.size() != 1 && static_cast<int>(v.size()) != D) throw Error("config key " + key + ": expected 1 or " + std::to_string(D) + " values");
        RealVect<D> r;
        for (int d = 0; d < D; ++d) r[d] = v[v.size() == 1 ? 0 : static_cast<std::size_t>(d)];
        return r;
    }

    static Config with_grid_defaults(Config c, const GridGenParams<D>& g)
    {
        if (!c.has("amr.max_level")) c.set("amr.max_level", std::to_string(g.max_level));
        if (!c.has("amr.max_grid_size")) c.set("amr.max_grid_size", std::to_string(g.max_grid_size[0]));
        if (!c.has("amr.blocking_factor")) c.set("amr.blocking_factor", std::to_string(g.blocking_factor[0]));
        if (!c.has("amr.n_error_buf")) c.set("amr.n_error_buf", std::to_string(g.n_error_buf));
        return c;
    }
};

template <int D>
class AdvectionSolver
{
  public:
    AdvectionSolver(const AdvectionParams<D>& p, int nranks)
        : p_(p), tr_(std::make_unique<Transport>(nranks)), hier_(std::make_unique<AmrHierarchy<D>>(p.geometry(), p.grid, nranks))
    {
        check_params();
        phi_.emplace_back(hier_->box_array(0), hier_->dmap(0), 1, 1);
        init_level(0);
        if (hier_->max_level() > 0) {
            regrid(*hier_, 0, TagFn<D>([&](int l, const IntVect<D>& c) { return tagged(initial_value(hier_->geom(l).cell_center(c))); }));
            for (int l = 1; l <= hier_->finest_level(); ++l) {
                phi_.emplace_back(hier_->box_array(l), hier_->dmap(l), 1, 1);
                init_level(l);
            }
        }
        for (int l = hier_->finest_level(); l > 0; --l) average_down(phi_[l], phi_[l - 1], hier_->ref_ratio(l - 1), AverageMode::average, *tr_);
        rebuild_registers();
        init_tracers();
    }

    /// Resume from a checkpoint written by write_checkpoint().  Physics
    /// parameters come from p; grids, data, step and time from the file.
    AdvectionSolver(const AdvectionParams<D>& p, const std::filesystem::path& chk, int nranks = -1) : p_(p)
    {
        auto c = read_checkpoint<D>(chk, nranks, 1);
        hier_ = std::move(c.hier);
        p_.grid = hier_->params();
        tr_ = std::make_unique<Transport>(hier_->nranks());
        check_params();
        phi_ = std::move(c.data);
        step_ = c.step;
        time_ = c.time;
        rebuild_registers();
        if (p_.n_tracers > 0) {
            make_tracer_container();
            read_particles(chk, *pc_);
        }
    }

    /// One coarse step, regridding first when due.
    void step()
    {
        if (p_.regrid_int > 0 && step_ > 0 && step_ % p_.regrid_int == 0 && hier_->max_level() > 0) do_regrid();
        const double dt = coarse_dt();
        told_.assign(phi_.size(), 0.0);
        dtl_.assign(phi_.size(), 0.0);
        old_.resize(phi_.size());
        advance(0, time_, dt);
        time_ += dt;
        ++step_;
        move_tracers(dt);
    }

    void run(int nsteps)
    {
        for (int i = 0; i < nsteps; ++i) step();
    }

    /// Level-0 integral; equals the composite integral after average_down.
    double global_sum() const { return phi_[0].sum_valid(0) * hier_->geom(0).cell_volume(); }

    double coarse_dt() const
    {
        double rate = 0.0;
        for (int d = 0; d < D; ++d) rate += std::abs(p_.velocity[d]) / hier_->geom(0).cell_size(d);
        if (p_.dt > 0.0) {
            if (p_.dt * rate > 1.0)
                throw Error("CFL violation: dt = " + detail::fmt_real(p_.dt) + " gives Courant number " + detail::fmt_real(p_.dt * rate) + " > 1");
            return p_.dt;
        }
        if (rate == 0.0) {
            double h = hier_->geom(0).cell_size(0);
            for (int d = 1; d < D; ++d) h = std::min(h, hier_->geom(0).cell_size(d));
            return p_.cfl * h;
        }
        return p_.cfl / rate;
    }

    int step_index() const noexcept { return step_; }
    double time() const noexcept { return time_; }
    int finest_level() const noexcept { return hier_->finest_level(); }
    const AmrHierarchy<D>& hierarchy() const noexcept { return *hier_; }
    const FabArray<D>& phi(int l) const { return phi_.at(static_cast<std::size_t>(l)); }
    const ParticleContainer<D>* tracers() const noexcept { return pc_.get(); }
    const TransportStats& transport_stats() const { return tr_->stats(); }
    const AdvectionParams<D>& params() const noexcept { return p_; }

    PlotfileView<D> view() const
    {
        PlotfileView<D> v;
        for (int l = 0; l <= hier_->finest_level(); ++l) {
            v.geom.push_back(hier_->geom(l));
            v.ref_ratio.push_back(hier_->ref_ratio(l));
            v.data.push_back(&phi_[static_cast<std::size_t>(l)]);
        }
        v.names = {"phi"};
        v.time = time_;
        v.step = step_;
        return v;
    }

    void write_checkpoint(const std::filesystem::path& path) const
    {
        std::vector<const FabArray<D>*> data;
        for (const auto& f : phi_) data.push_back(&f);
        amrlite::write_checkpoint<D>(path, *hier_, data, {"phi"}, step_, time_, {}, pc_.get());
    }

  private:
    void check_params() const
    {
        if (!(p_.cfl > 0.0 && p_.cfl <= 1.0)) throw Error("adv.cfl must lie in (0, 1]");
        for (int l = 0; l < hier_->max_level(); ++l) {
            const IntVect<D> r = hier_->ref_ratio(l);
            for (int d = 1; d < D; ++d)
                if (r[d] != r[0]) throw Error("advection needs the same refinement ratio in every direction");
        }
        if (p_.n_tracers > 0)
            for (int d = 0; d < D; ++d)
                if (!p_.periodic[d]) throw Error("tracer particles need a periodic domain");
    }

    double initial_value(const RealVect<D>& x) const
    {
        double r2 = 0.0;
        for (int d = 0; d < D; ++d) r2 += (x[d] - p_.blob_center[d]) * (x[d] - p_.blob_center[d]);
        return p_.background + p_.blob_amp * std::exp(-r2 / (p_.blob_radius * p_.blob_radius));
    }

    bool tagged(double v) const { return v - p_.background > p_.tag_threshold * p_.blob_amp; }

    void init_level(int l)
    {
        auto& fa = phi_[static_cast<std::size_t>(l)];
        const auto& g = hier_->geom(l);
        for (int i = 0; i < fa.size(); ++i)
            for_each_cell(fa[i].box(), [&](const IntVect<D>& c) { fa[i](c) = initial_value(g.cell_center(c)); });
    }

    /// Value used for tagging: the finest level holding data for cell c.
    double tag_value(int l, IntVect<D> c) const
    {
        for (int k = l; k >= 0; --k) {
            if (k < static_cast<int>(phi_.size())) {
                const auto& fa = phi_[static_cast<std::size_t>(k)];
                if (auto j = fa.box_array().find(c)) return fa[*j](c);
            }
            if (k > 0) c = coarsen(Box<D>(c, c), hier_->ref_ratio(k - 1)).lo();
        }
        throw Error("tag_value: cell " + c.str() + " not covered by level 0");
    }

    void do_regrid()
    {
        const auto changes = regrid(*hier_, 0, TagFn<D>([&](int l, const IntVect<D>& c) { return tagged(tag_value(l, c)); }));
        for (const auto& ch : changes) {
            const auto l = static_cast<std::size_t>(ch.level);
            if (!ch.exists) continue;
            if (ch.existed && ch.old_ba == ch.new_ba && ch.old_dm == ch.new_dm) continue;
            const FabArray<D>* old = ch.existed ? &phi_[l] : nullptr;
            auto nf = remake_level(old, ch.new_ba, ch.new_dm, phi_[l - 1], hier_->ref_ratio(ch.level - 1), p_.interp, hier_->geom(ch.level),
                                   hier_->geom(ch.level - 1), bc(ch.level), *tr_, 1);
            if (l < phi_.size())
                phi_[l] = std::move(nf);
            else
                phi_.push_back(std::move(nf));
        }
        phi_.resize(static_cast<std::size_t>(hier_->finest_level() + 1));
        rebuild_registers();
    }

    void rebuild_registers()
    {
        fr_.clear();
        fr_.resize(phi_.size());
        for (int l = 1; l <= hier_->finest_level(); ++l)
            fr_[static_cast<std::size_t>(l)] = FluxRegister<D>(hier_->box_array(l), hier_->ref_ratio(l - 1), hier_->geom(l - 1), 1);
    }

    BoundaryRecord<D> bc(int l) const { return BoundaryRecord<D>::from_geometry(hier_->geom(l)); }

    /// Flux arrays hold u*phi/dx0, so every level shares one scaling and a
    /// level-l update is dt * (dx0/dx_l) * divergence.
    double level_scale(int l) const { return hier_->geom(0).cell_size(0) / hier_->geom(l).cell_size(0); }

    void fill_ghosts(int l, double t)
    {
        const auto s = static_cast<std::size_t>(l);
        auto& U = phi_[s];
        const auto& g = hier_->geom(l);
        if (l == 0) {
            fill_boundary(U, *tr_, g.periodicity());
            apply_physical_bc(U, g, bc(0));
            return;
        }
        const double w = std::clamp((t - told_[s - 1]) / dtl_[s - 1], 0.0, 1.0);
        fill_patch(U, &U, old_[s - 1], phi_[s - 1], w, hier_->ref_ratio(l - 1), p_.interp, g, hier_->geom(l - 1), bc(l), *tr_);
    }

    void advance(int l, double t, double dt)
    {
        const auto s = static_cast<std::size_t>(l);
        fill_ghosts(l, t);
        auto& U = phi_[s];
        const auto& ba = U.box_array();

        std::vector<FabArray<D>> flux;
        for (int d = 0; d < D; ++d) flux.emplace_back(convert(ba, IndexType<D>::face(d)), U.distribution_map(), 1, 0);
        for (int d = 0; d < D; ++d) {
            const double u = p_.velocity[d];
            const double inv_dx0 = 1.0 / hier_->geom(0).cell_size(d);
            const IntVect<D> e = IntVect<D>::basis(d);
            for (int i = 0; i < U.size(); ++i) {
                auto& F = flux[static_cast<std::size_t>(d)][i];
                const auto& Ui = U[i];
                for_each_cell(F.box(), [&](const IntVect<D>& f) { F(f) = u * (u > 0.0 ? Ui(f - e) : Ui(f)) * inv_dx0; });
            }
        }
        std::array<const FabArray<D>*, D> fp;
        for (int d = 0; d < D; ++d) fp[static_cast<std::size_t>(d)] = &flux[static_cast<std::size_t>(d)];

        const bool has_finer = l < hier_->finest_level();
        if (has_finer) {
            old_[s] = U;
            told_[s] = t;
            dtl_[s] = dt;
        }
        const double c = dt * level_scale(l);
        for (int i = 0; i < U.size(); ++i) {
            auto& Ui = U[i];
            for_each_cell(Ui.box(), [&](const IntVect<D>& p) {
                double div = 0.0;
                for (int d = 0; d < D; ++d) {
                    const auto& F = flux[static_cast<std::size_t>(d)][i];
                    div += F(p + IntVect<D>::basis(d)) - F(p);
                }
                Ui(p) -= c * div;
            });
        }

        if (l > 0) fr_[s].fine_add(fp, 1.0 / hier_->ref_ratio(l - 1)[0]);
        if (!has_finer) return;
        auto& reg = fr_[s + 1];
        reg.set_val(0.0);
        reg.crse_add(fp, 1.0);
        const int nsub = hier_->ref_ratio(l)[0];
        const double dtf = dt / nsub;
        for (int k = 0; k < nsub; ++k) advance(l + 1, t + k * dtf, dtf);
        if (p_.reflux) reg.reflux(U, c);
        average_down(phi_[s + 1], U, hier_->ref_ratio(l), AverageMode::average, *tr_);
    }

    void make_tracer_container()
    {
        pc_ = std::make_unique<ParticleContainer<D>>(std::vector<Geometry<D>>{hier_->geom(0)}, std::vector<BoxArray<D>>{hier_->box_array(0)},
                                                     std::vector<DistributionMapping>{hier_->dmap(0)}, ParticleSchema{1, 0});
    }

    void init_tracers()
    {
        if (p_.n_tracers <= 0) return;
        make_tracer_container();
        std::mt19937_64 rng(p_.seed);
        const auto& g = hier_->geom(0);
        for (int n = 0; n < p_.n_tracers; ++n) {
            RealVect<D> x;
            for (int d = 0; d < D; ++d) x[d] = std::uniform_real_distribution<double>(g.prob_lo()[d], g.prob_hi()[d])(rng);
            const auto loc = pc_->locate(x);
            const double v = 0.0;
            pc_->add_particle(hier_->dmap(0)[loc.grid], x, std::span<const double>(&v, 1));
        }
        mesh_to_particle(*pc_, phi_[0], 0, DepositKernel::cic, *tr_, 0);
    }

    void move_tracers(double dt)
    {
        if (!pc_) return;
        for (auto& [k, t] : pc_->tiles())
            for (std::size_t i = 0; i < t.size(); ++i)
                for (int d = 0; d < D; ++d) t.rec(i).pos[d] += p_.velocity[d] * dt;
        pc_->mark_modified();
        pc_->redistribute(*tr_);
        mesh_to_particle(*pc_, phi_[0], 0, DepositKernel::cic, *tr_, 0);
    }

    AdvectionParams<D> p_;
    std::unique_ptr<Transport> tr_;
    std::unique_ptr<AmrHierarchy<D>> hier_;
    std::vector<FabArray<D>> phi_;
    std::vector<FabArray<D>> old_;
    std::vector<double> told_, dtl_;
    std::vector<FluxRegister<D>> fr_;
    std::unique_ptr<ParticleContainer<D>> pc_;
    int step_ = 0;
    double time_ = 0.0;
};

} // namespace amrlite

#endif // AMRLITE_ADVECTION_HPP

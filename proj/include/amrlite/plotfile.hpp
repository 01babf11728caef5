#ifndef AMRLITE_PLOTFILE_HPP
#define AMRLITE_PLOTFILE_HPP

// Plotfiles, particle dumps and checkpoints.  Layout and byte order are
// described in FORMAT.md.

#include <atomic>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <latch>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "amr_core.hpp"
#include "fab_array.hpp"
#include "geometry.hpp"
#include "particles.hpp"

namespace amrlite {

namespace fs = std::filesystem;

inline constexpr const char* plotfile_magic = "amrlite-plotfile";
inline constexpr const char* particle_magic = "amrlite-particles";
inline constexpr const char* checkpoint_magic = "amrlite-checkpoint";
inline constexpr int format_version = 1;

struct OutputMode
{
    enum class Kind { static_pattern, async };
    Kind kind = Kind::static_pattern;
    int nwriters = 1;

    static OutputMode static_writers(int n) { return OutputMode{Kind::static_pattern, n}; }
    static OutputMode asynchronous() { return OutputMode{Kind::async, 1}; }
};

struct WriteStats
{
    int waves = 0;
    int max_concurrent = 0;
    std::int64_t bytes = 0;
};

/// Non-owning description of what to write.
template <int D>
struct PlotfileView
{
    std::vector<Geometry<D>> geom;
    std::vector<IntVect<D>> ref_ratio;  // level l to l+1
    std::vector<const FabArray<D>*> data;
    std::vector<std::string> names;
    double time = 0.0;
    int step = 0;
};

template <int D>
struct Plotfile
{
    std::vector<Geometry<D>> geom;
    std::vector<IntVect<D>> ref_ratio;
    std::vector<FabArray<D>> data;
    std::vector<std::string> names;
    double time = 0.0;
    int step = 0;

    PlotfileView<D> view() const
    {
        PlotfileView<D> v{geom, ref_ratio, {}, names, time, step};
        for (const auto& f : data) v.data.push_back(&f);
        return v;
    }
};

namespace detail {

template <class T>
void put_le(std::vector<char>& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get_le(const std::vector<char>& in, std::size_t& off, const std::string& what)
{
    if (off + sizeof(T) > in.size()) throw Error("truncated data in " + what);
    char b[sizeof(T)];
    std::memcpy(b, in.data() + off, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    off += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

inline void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + p.string() + " for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw Error("write failed: " + p.string());
}

inline void write_file(const fs::path& p, const std::vector<char>& bytes)
{
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + p.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed: " + p.string());
}

inline std::vector<char> read_file(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot open " + p.string());
    return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline void make_dirs(const fs::path& p)
{
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error("cannot create directory " + p.string() + ": " + ec.message());
}

inline std::string fmt_real(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

template <int D>
std::string fmt_iv(const IntVect<D>& v)
{
    std::string s;
    for (int d = 0; d < D; ++d) s += (d ? " " : "") + std::to_string(v[d]);
    return s;
}

template <int D>
std::string fmt_rv(const RealVect<D>& v)
{
    std::string s;
    for (int d = 0; d < D; ++d) s += (d ? " " : "") + fmt_real(v[d]);
    return s;
}

/// Whitespace-token reader over a header file with keyword checks.
class HeaderReader
{
  public:
    HeaderReader(const fs::path& p) : path_(p.string())
    {
        std::ifstream is(p);
        if (!is) throw Error("cannot open header " + path_);
        std::ostringstream ss;
        ss << is.rdbuf();
        in_.str(ss.str());
    }

    std::string word()
    {
        std::string w;
        if (!(in_ >> w)) fail("unexpected end of header");
        return w;
    }
    void keyword(const std::string& k)
    {
        const std::string w = word();
        if (w != k) fail("expected '" + k + "', found '" + w + "'");
    }
    long long integer()
    {
        const std::string w = word();
        try {
            std::size_t n = 0;
            const long long v = std::stoll(w, &n);
            if (n != w.size()) throw std::invalid_argument(w);
            return v;
        } catch (const std::exception&) {
            fail("expected an integer, found '" + w + "'");
        }
    }
    double real()
    {
        const std::string w = word();
        try {
            std::size_t n = 0;
            const double v = std::stod(w, &n);
            if (n != w.size()) throw std::invalid_argument(w);
            return v;
        } catch (const std::exception&) {
            fail("expected a number, found '" + w + "'");
        }
    }
    template <int D>
    IntVect<D> iv()
    {
        IntVect<D> v;
        for (int d = 0; d < D; ++d) v[d] = static_cast<int>(integer());
        return v;
    }
    template <int D>
    RealVect<D> rv()
    {
        RealVect<D> v;
        for (int d = 0; d < D; ++d) v[d] = real();
        return v;
    }
    [[noreturn]] void fail(const std::string& m) const { throw Error("bad header " + path_ + ": " + m); }

  private:
    std::string path_;
    std::istringstream in_;
};

inline std::string rank_file(const char* stem, int rank)
{
    std::ostringstream os;
    os << stem << std::setw(5) << std::setfill('0') << rank;
    return os.str();
}

/// Valid-region bytes of every Fab owned by `rank`, in grid order, each Fab
/// component-major with x fastest.
template <int D>
std::vector<char> rank_payload(const FabArray<D>& fa, int rank)
{
    std::vector<char> out;
    for (int i : fa.distribution_map().boxes_of(rank)) {
        const auto& f = fa[i];
        const Box<D>& b = fa.box_array()[i];
        for (int n = 0; n < fa.ncomp(); ++n) for_each_cell(b, [&](const IntVect<D>& p) { put_le(out, f(p, n)); });
    }
    return out;
}

template <int D>
WriteStats write_plotfile_static(const fs::path& path, const PlotfileView<D>& v, int nwriters)
{
    if (nwriters < 1) throw Error("write_plotfile: nwriters must be >= 1");
    const std::size_t L = v.data.size();
    if (L == 0 || v.geom.size() != L) throw Error("write_plotfile: need one geometry per level");
    const int ncomp = v.data[0]->ncomp();
    const int R = v.data[0]->distribution_map().nranks();
    for (const auto* fa : v.data) {
        if (fa->ncomp() != ncomp) throw Error("write_plotfile: levels differ in component count");
        if (fa->distribution_map().nranks() != R) throw Error("write_plotfile: levels differ in rank count");
        if (!fa->ixtype().is_cell()) throw Error("write_plotfile: only cell-centered data");
    }
    if (!v.names.empty() && static_cast<int>(v.names.size()) != ncomp) throw Error("write_plotfile: one name per component required");
    for (const auto& n : v.names)
        if (n.empty() || n.find_first_of(" \t\n") != std::string::npos) throw Error("write_plotfile: component names must be non-empty words");

    make_dirs(path);
    std::ostringstream h;
    h << plotfile_magic << " " << format_version << "\n";
    h << "dim " << D << "\nendian little\nreal_bytes 8\n";
    h << "time " << fmt_real(v.time) << "\nstep " << v.step << "\n";
    h << "ncomp " << ncomp << "\nnames";
    for (int n = 0; n < ncomp; ++n) h << " " << (v.names.empty() ? "comp" + std::to_string(n) : v.names[static_cast<std::size_t>(n)]);
    h << "\nnlevels " << L << "\nnranks " << R << "\n";
    for (std::size_t l = 0; l < L; ++l) {
        const auto& g = v.geom[l];
        const auto& fa = *v.data[l];
        const IntVect<D> rr = l < v.ref_ratio.size() ? v.ref_ratio[l] : IntVect<D>(1);
        h << "level " << l << "\n";
        h << "domain " << fmt_iv<D>(g.domain().lo()) << " " << fmt_iv<D>(g.domain().hi()) << "\n";
        h << "prob_lo " << fmt_rv<D>(g.prob_lo()) << "\nprob_hi " << fmt_rv<D>(g.prob_hi()) << "\n";
        h << "periodic";
        for (int d = 0; d < D; ++d) h << " " << (g.is_periodic(d) ? 1 : 0);
        h << "\nref_ratio " << fmt_iv<D>(rr) << "\n";
        h << "nboxes " << fa.size() << "\n";
        std::vector<std::int64_t> offset(static_cast<std::size_t>(R), 0);
        for (int i = 0; i < fa.size(); ++i) {
            const Box<D>& b = fa.box_array()[i];
            const int r = fa.distribution_map()[i];
            h << fmt_iv<D>(b.lo()) << " " << fmt_iv<D>(b.hi()) << " rank " << r << " offset " << offset[static_cast<std::size_t>(r)] << "\n";
            offset[static_cast<std::size_t>(r)] += b.num_cells() * ncomp * 8;
        }
        make_dirs(path / ("Level_" + std::to_string(l)));
    }
    write_file(path / "Header", h.str());

    WriteStats st;
    std::atomic<int> active{0}, peak{0};
    std::atomic<std::int64_t> bytes{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));
    auto write_rank = [&](int r) {
        try {
            for (std::size_t l = 0; l < L; ++l) {
                const auto payload = rank_payload(*v.data[l], r);
                write_file(path / ("Level_" + std::to_string(l)) / rank_file("Cell_D_", r), payload);
                bytes += static_cast<std::int64_t>(payload.size());
            }
        } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
        }
    };
    for (int w0 = 0; w0 < R; w0 += nwriters) {
        const int w1 = std::min(R, w0 + nwriters);
        ++st.waves;
        if (w1 - w0 == 1) {
            peak = std::max(peak.load(), 1);
            write_rank(w0);
            continue;
        }
        std::latch all_in(w1 - w0);
        std::vector<std::thread> wave;
        for (int r = w0; r < w1; ++r)
            wave.emplace_back([&, r] {
                const int now = ++active;
                int p = peak.load();
                while (now > p && !peak.compare_exchange_weak(p, now)) {
                }
                all_in.arrive_and_wait();
                write_rank(r);
                --active;
            });
        for (auto& t : wave) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    st.max_concurrent = peak.load();
    st.bytes = bytes.load();
    return st;
}

} // namespace detail

/// Completion handle of an asynchronous write.
class WriteHandle
{
  public:
    WriteHandle() = default;
    explicit WriteHandle(std::shared_future<WriteStats> f) : f_(std::move(f)) {}
    WriteStats wait() const { return f_.valid() ? f_.get() : WriteStats{}; }
    bool ready() const { return !f_.valid() || f_.wait_for(std::chrono::seconds(0)) == std::future_status::ready; }

  private:
    std::shared_future<WriteStats> f_;
};

template <int D>
Plotfile<D> snapshot(const PlotfileView<D>& v)
{
    Plotfile<D> p{v.geom, v.ref_ratio, {}, v.names, v.time, v.step};
    for (const auto* fa : v.data) p.data.push_back(*fa);
    return p;
}

/// One background writer with room for a single pending snapshot; a new
/// write waits for the previous one.
template <int D>
class AsyncPlotWriter
{
  public:
    AsyncPlotWriter() = default;
    AsyncPlotWriter(const AsyncPlotWriter&) = delete;
    AsyncPlotWriter& operator=(const AsyncPlotWriter&) = delete;
    ~AsyncPlotWriter()
    {
        if (pending_.valid()) pending_.wait();
    }

    WriteHandle write(const fs::path& path, const PlotfileView<D>& v)
    {
        if (pending_.valid()) pending_.wait();
        auto snap = std::make_shared<const Plotfile<D>>(snapshot(v));
        pending_ = std::async(std::launch::async, [snap, path] { return detail::write_plotfile_static(path, snap->view(), 1); }).share();
        return WriteHandle(pending_);
    }

  private:
    std::shared_future<WriteStats> pending_;
};

/// Static mode writes in waves of nwriters ranks; async mode copies the data
/// and returns at once through a process-wide writer.
template <int D>
WriteHandle write_plotfile(const fs::path& path, const PlotfileView<D>& v, OutputMode mode = {})
{
    if (mode.kind == OutputMode::Kind::async) {
        static AsyncPlotWriter<D> writer;
        return writer.write(path, v);
    }
    std::promise<WriteStats> p;
    p.set_value(detail::write_plotfile_static(path, v, mode.nwriters));
    return WriteHandle(p.get_future().share());
}

/// Spatial dimension recorded in a plotfile header.
inline int plotfile_dim(const fs::path& path)
{
    detail::HeaderReader hr(path / "Header");
    hr.keyword(plotfile_magic);
    if (hr.integer() != format_version) hr.fail("unsupported version");
    hr.keyword("dim");
    return static_cast<int>(hr.integer());
}

/// Read a plotfile.  nranks < 0 keeps the stored owners; otherwise boxes are
/// redistributed with the space-filling curve.
template <int D>
Plotfile<D> read_plotfile(const fs::path& path, int nranks = -1, int ngrow = 0)
{
    detail::HeaderReader hr(path / "Header");
    hr.keyword(plotfile_magic);
    if (hr.integer() != format_version) hr.fail("unsupported version");
    hr.keyword("dim");
    if (hr.integer() != D) hr.fail("dimension mismatch");
    hr.keyword("endian");
    if (hr.word() != "little") hr.fail("unsupported byte order");
    hr.keyword("real_bytes");
    if (hr.integer() != 8) hr.fail("unsupported real size");
    Plotfile<D> p;
    hr.keyword("time");
    p.time = hr.real();
    hr.keyword("step");
    p.step = static_cast<int>(hr.integer());
    hr.keyword("ncomp");
    const int ncomp = static_cast<int>(hr.integer());
    hr.keyword("names");
    for (int n = 0; n < ncomp; ++n) p.names.push_back(hr.word());
    hr.keyword("nlevels");
    const int L = static_cast<int>(hr.integer());
    hr.keyword("nranks");
    const int R = static_cast<int>(hr.integer());
    if (ncomp < 1 || L < 1 || R < 1) hr.fail("bad counts");
    for (int l = 0; l < L; ++l) {
        hr.keyword("level");
        if (hr.integer() != l) hr.fail("levels out of order");
        hr.keyword("domain");
        const auto lo = hr.iv<D>();
        const auto hi = hr.iv<D>();
        hr.keyword("prob_lo");
        const auto plo = hr.rv<D>();
        hr.keyword("prob_hi");
        const auto phi = hr.rv<D>();
        hr.keyword("periodic");
        std::array<bool, D> per{};
        for (int d = 0; d < D; ++d) per[static_cast<std::size_t>(d)] = hr.integer() != 0;
        hr.keyword("ref_ratio");
        p.ref_ratio.push_back(hr.iv<D>());
        p.geom.emplace_back(Box<D>(lo, hi), plo, phi, per);
        hr.keyword("nboxes");
        const int nb = static_cast<int>(hr.integer());
        std::vector<Box<D>> boxes;
        std::vector<int> owner;
        std::vector<std::int64_t> offset;
        for (int i = 0; i < nb; ++i) {
            const auto blo = hr.iv<D>();
            const auto bhi = hr.iv<D>();
            boxes.emplace_back(blo, bhi);
            hr.keyword("rank");
            owner.push_back(static_cast<int>(hr.integer()));
            hr.keyword("offset");
            offset.push_back(hr.integer());
            if (owner.back() < 0 || owner.back() >= R) hr.fail("owner rank out of range");
        }
        BoxArray<D> ba(boxes);
        const DistributionMapping stored(owner, R);
        const DistributionMapping dm = nranks < 0 ? stored : sfc_distribute(ba, nranks);
        FabArray<D> fa(ba, dm, ncomp, ngrow, 0.0);
        const fs::path dir = path / ("Level_" + std::to_string(l));
        for (int r = 0; r < R; ++r) {
            const auto ids = stored.boxes_of(r);
            if (ids.empty()) continue;
            const fs::path fp = dir / detail::rank_file("Cell_D_", r);
            const auto bytes = detail::read_file(fp);
            std::int64_t expect = 0;
            for (int i : ids) expect += boxes[static_cast<std::size_t>(i)].num_cells() * ncomp * 8;
            if (static_cast<std::int64_t>(bytes.size()) != expect) throw Error("bad plotfile: " + fp.string() + " has the wrong size");
            for (int i : ids) {
                std::size_t off = static_cast<std::size_t>(offset[static_cast<std::size_t>(i)]);
                for (int n = 0; n < ncomp; ++n)
                    for_each_cell(boxes[static_cast<std::size_t>(i)], [&](const IntVect<D>& c) { fa[i](c, n) = detail::get_le<double>(bytes, off, fp.string()); });
            }
        }
        p.data.push_back(std::move(fa));
    }
    return p;
}

/// Writes <path>/particles/Header and one data file per rank and level.
template <int D>
void write_particles(const fs::path& path, const ParticleContainer<D>& pc)
{
    const fs::path dir = path / "particles";
    detail::make_dirs(dir);
    const int R = pc.nranks();
    const auto& schema = pc.schema();

    std::ostringstream h;
    h << particle_magic << " " << format_version << "\n";
    h << "dim " << D << "\nendian little\nnreal " << schema.nreal << "\nnint " << schema.nint << "\n";
    h << "nparticles " << pc.total_count() << "\nnlevels " << pc.num_levels() << "\nnranks " << R << "\n";
    std::size_t ntiles = 0;
    for (auto& [k, t] : pc.tiles()) ntiles += !t.empty();
    h << "ntiles " << ntiles << "\n";

    std::map<std::pair<int, int>, std::vector<char>> files;  // (level, rank)
    for (auto& [k, t] : pc.tiles()) {
        if (t.empty()) continue;
        const int r = pc.owner(k);
        auto& buf = files[{k.level, r}];
        h << k.level << " " << k.grid << " " << k.tile << " rank " << r << " count " << t.size() << " offset " << buf.size() << "\n";
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto& rec = t.rec(i);
            for (int d = 0; d < D; ++d) detail::put_le(buf, rec.pos[d]);
            detail::put_le(buf, static_cast<std::int64_t>(rec.id));
            detail::put_le(buf, static_cast<std::int32_t>(rec.origin_rank));
            for (int c = 0; c < schema.nreal; ++c) detail::put_le(buf, t.real(c, i));
            for (int c = 0; c < schema.nint; ++c) detail::put_le(buf, static_cast<std::int32_t>(t.integer(c, i)));
        }
    }
    detail::write_file(dir / "Header", h.str());
    for (auto& [lr, buf] : files) {
        const fs::path ld = dir / ("Level_" + std::to_string(lr.first));
        detail::make_dirs(ld);
        detail::write_file(ld / detail::rank_file("Part_", lr.second), buf);
    }
}

/// Adds the stored particles to pc, placing each with locate().
template <int D>
void read_particles(const fs::path& path, ParticleContainer<D>& pc)
{
    const fs::path dir = path / "particles";
    detail::HeaderReader hr(dir / "Header");
    hr.keyword(particle_magic);
    if (hr.integer() != format_version) hr.fail("unsupported version");
    hr.keyword("dim");
    if (hr.integer() != D) hr.fail("dimension mismatch");
    hr.keyword("endian");
    if (hr.word() != "little") hr.fail("unsupported byte order");
    hr.keyword("nreal");
    const int nreal = static_cast<int>(hr.integer());
    hr.keyword("nint");
    const int nint = static_cast<int>(hr.integer());
    if (nreal != pc.schema().nreal || nint != pc.schema().nint)
        throw Error("read_particles: schema mismatch (file has " + std::to_string(nreal) + " reals, " + std::to_string(nint) + " ints)");
    hr.keyword("nparticles");
    const auto total = hr.integer();
    hr.keyword("nlevels");
    hr.integer();
    hr.keyword("nranks");
    hr.integer();
    hr.keyword("ntiles");
    const auto ntiles = hr.integer();
    std::map<std::pair<int, int>, std::vector<char>> cache;
    std::int64_t seen = 0;
    std::vector<double> re(static_cast<std::size_t>(nreal));
    std::vector<int> in(static_cast<std::size_t>(nint));
    for (long long n = 0; n < ntiles; ++n) {
        const int level = static_cast<int>(hr.integer());
        hr.integer();
        hr.integer();
        hr.keyword("rank");
        const int r = static_cast<int>(hr.integer());
        hr.keyword("count");
        const auto count = hr.integer();
        hr.keyword("offset");
        std::size_t off = static_cast<std::size_t>(hr.integer());
        auto it = cache.find({level, r});
        const fs::path fp = dir / ("Level_" + std::to_string(level)) / detail::rank_file("Part_", r);
        if (it == cache.end()) it = cache.emplace(std::pair{level, r}, detail::read_file(fp)).first;
        const auto& bytes = it->second;
        for (long long k = 0; k < count; ++k) {
            ParticleRecord<D> rec;
            for (int d = 0; d < D; ++d) rec.pos[d] = detail::get_le<double>(bytes, off, fp.string());
            rec.id = detail::get_le<std::int64_t>(bytes, off, fp.string());
            rec.origin_rank = detail::get_le<std::int32_t>(bytes, off, fp.string());
            for (auto& v : re) v = detail::get_le<double>(bytes, off, fp.string());
            for (auto& v : in) v = detail::get_le<std::int32_t>(bytes, off, fp.string());
            pc.insert_particle(rec, re, in);
            ++seen;
        }
    }
    if (seen != total) throw Error("read_particles: header promises " + std::to_string(total) + " particles, found " + std::to_string(seen));
    pc.canonicalize();
}

// ---------------------------------------------------------------------------
// Checkpoints: hierarchy metadata, level data, optional particles and an
// opaque user payload.
// ---------------------------------------------------------------------------

template <int D>
struct Checkpoint
{
    std::unique_ptr<AmrHierarchy<D>> hier;
    std::vector<FabArray<D>> data;
    std::vector<std::string> names;
    int step = 0;
    double time = 0.0;
    std::vector<char> user;
};

template <int D>
void write_checkpoint(const fs::path& path, const AmrHierarchy<D>& h, const std::vector<const FabArray<D>*>& data, const std::vector<std::string>& names,
                      int step, double time, const std::vector<char>& user = {}, const ParticleContainer<D>* pc = nullptr)
{
    if (static_cast<int>(data.size()) != h.finest_level() + 1) throw Error("write_checkpoint: need data for every level");
    detail::make_dirs(path);
    const auto& p = h.params();
    std::ostringstream os;
    os << checkpoint_magic << " " << format_version << "\n";
    os << "dim " << D << "\nstep " << step << "\ntime " << detail::fmt_real(time) << "\nnranks " << h.nranks() << "\n";
    const auto& g = h.geom(0);
    os << "domain " << detail::fmt_iv<D>(g.domain().lo()) << " " << detail::fmt_iv<D>(g.domain().hi()) << "\n";
    os << "prob_lo " << detail::fmt_rv<D>(g.prob_lo()) << "\nprob_hi " << detail::fmt_rv<D>(g.prob_hi()) << "\nperiodic";
    for (int d = 0; d < D; ++d) os << " " << (g.is_periodic(d) ? 1 : 0);
    os << "\nmax_grid_size " << detail::fmt_iv<D>(p.max_grid_size) << "\nblocking_factor " << detail::fmt_iv<D>(p.blocking_factor);
    os << "\ngrid_eff " << detail::fmt_real(p.grid_eff) << "\nmax_level " << p.max_level << "\nn_error_buf " << p.n_error_buf;
    os << "\nn_proper " << p.n_proper << "\nref_ratio " << p.ref_ratio.size();
    for (const auto& r : p.ref_ratio) os << " " << detail::fmt_iv<D>(r);
    os << "\nfinest_level " << h.finest_level() << "\n";
    for (int l = 0; l <= h.finest_level(); ++l) {
        os << "level " << l << " nboxes " << h.box_array(l).size() << "\n";
        for (int i = 0; i < h.box_array(l).size(); ++i)
            os << detail::fmt_iv<D>(h.box_array(l)[i].lo()) << " " << detail::fmt_iv<D>(h.box_array(l)[i].hi()) << " rank " << h.dmap(l)[i] << "\n";
    }
    detail::write_file(path / "Header", os.str());

    PlotfileView<D> v;
    for (int l = 0; l <= h.finest_level(); ++l) {
        v.geom.push_back(h.geom(l));
        v.ref_ratio.push_back(h.ref_ratio(l));
    }
    v.data = data;
    v.names = names;
    v.time = time;
    v.step = step;
    detail::write_plotfile_static(path / "data", v, 1);
    detail::write_file(path / "userdata.bin", user);
    if (pc) write_particles(path, *pc);
}

/// nranks < 0 restores the stored layout; otherwise every level is
/// redistributed over nranks with the space-filling curve.
template <int D>
Checkpoint<D> read_checkpoint(const fs::path& path, int nranks = -1, int ngrow = 0)
{
    detail::HeaderReader hr(path / "Header");
    hr.keyword(checkpoint_magic);
    const auto ver = hr.integer();
    if (ver != format_version) throw Error("read_checkpoint: version mismatch (file " + std::to_string(ver) + ", expected " + std::to_string(format_version) + ")");
    hr.keyword("dim");
    if (hr.integer() != D) hr.fail("dimension mismatch");
    Checkpoint<D> c;
    hr.keyword("step");
    c.step = static_cast<int>(hr.integer());
    hr.keyword("time");
    c.time = hr.real();
    hr.keyword("nranks");
    const int stored_R = static_cast<int>(hr.integer());
    const int R = nranks < 0 ? stored_R : nranks;
    hr.keyword("domain");
    const auto lo = hr.iv<D>();
    const auto hi = hr.iv<D>();
    hr.keyword("prob_lo");
    const auto plo = hr.rv<D>();
    hr.keyword("prob_hi");
    const auto phi = hr.rv<D>();
    hr.keyword("periodic");
    std::array<bool, D> per{};
    for (int d = 0; d < D; ++d) per[static_cast<std::size_t>(d)] = hr.integer() != 0;
    GridGenParams<D> p;
    hr.keyword("max_grid_size");
    p.max_grid_size = hr.iv<D>();
    hr.keyword("blocking_factor");
    p.blocking_factor = hr.iv<D>();
    hr.keyword("grid_eff");
    p.grid_eff = hr.real();
    hr.keyword("max_level");
    p.max_level = static_cast<int>(hr.integer());
    hr.keyword("n_error_buf");
    p.n_error_buf = static_cast<int>(hr.integer());
    hr.keyword("n_proper");
    p.n_proper = static_cast<int>(hr.integer());
    hr.keyword("ref_ratio");
    const auto nr = hr.integer();
    for (long long i = 0; i < nr; ++i) p.ref_ratio.push_back(hr.iv<D>());
    hr.keyword("finest_level");
    const int finest = static_cast<int>(hr.integer());
    c.hier = std::make_unique<AmrHierarchy<D>>(Geometry<D>(Box<D>(lo, hi), plo, phi, per), p, R);
    for (int l = 0; l <= finest; ++l) {
        hr.keyword("level");
        if (hr.integer() != l) hr.fail("levels out of order");
        hr.keyword("nboxes");
        const int nb = static_cast<int>(hr.integer());
        std::vector<Box<D>> boxes;
        std::vector<int> owner;
        for (int i = 0; i < nb; ++i) {
            const auto blo = hr.iv<D>();
            const auto bhi = hr.iv<D>();
            boxes.emplace_back(blo, bhi);
            hr.keyword("rank");
            owner.push_back(static_cast<int>(hr.integer()));
        }
        BoxArray<D> ba(boxes);
        c.hier->set_level(l, ba, nranks < 0 ? DistributionMapping(owner, stored_R) : sfc_distribute(ba, R));
    }
    auto pf = read_plotfile<D>(path / "data", -1, ngrow);
    if (static_cast<int>(pf.data.size()) != finest + 1) throw Error("read_checkpoint: level count mismatch in " + path.string());
    for (int l = 0; l <= finest; ++l) {
        if (!(pf.data[static_cast<std::size_t>(l)].box_array() == c.hier->box_array(l))) throw Error("read_checkpoint: grids differ from the header");
        if (pf.data[static_cast<std::size_t>(l)].distribution_map() == c.hier->dmap(l)) {
            c.data.push_back(std::move(pf.data[static_cast<std::size_t>(l)]));
        } else {
            const auto& src = pf.data[static_cast<std::size_t>(l)];
            FabArray<D> fa(c.hier->box_array(l), c.hier->dmap(l), src.ncomp(), ngrow, 0.0);
            for (int i = 0; i < fa.size(); ++i) fa[i].copy_from(src[i], src.box_array()[i], 0, src.box_array()[i], 0, src.ncomp());
            c.data.push_back(std::move(fa));
        }
    }
    c.names = pf.names;
    c.user = detail::read_file(path / "userdata.bin");
    return c;
}

} // namespace amrlite

#endif // AMRLITE_PLOTFILE_HPP

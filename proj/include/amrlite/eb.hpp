#ifndef AMRLITE_EB_HPP
#define AMRLITE_EB_HPP

// Embedded boundaries from implicit functions.  Sign convention: f > 0 inside
// the body, f < 0 in the fluid, f == 0 on the surface.  Primitives default to
// a solid body (fluid outside); fluid_inside flips the sign.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "box_array.hpp"
#include "fab_array.hpp"
#include "geometry.hpp"

namespace amrlite {

template <int D>
class ImplicitFunction
{
  public:
    using Fn = std::function<double(const RealVect<D>&)>;

    ImplicitFunction() = default;
    explicit ImplicitFunction(Fn f) : f_(std::make_shared<Fn>(std::move(f))) {}

    double operator()(const RealVect<D>& p) const { return (*f_)(p); }
    explicit operator bool() const noexcept { return static_cast<bool>(f_); }

  private:
    std::shared_ptr<const Fn> f_;
};

namespace eb {

template <int D>
ImplicitFunction<D> sphere(double r, RealVect<D> c, bool fluid_inside = false)
{
    const double s = fluid_inside ? -1.0 : 1.0;
    return ImplicitFunction<D>([=](const RealVect<D>& p) {
        double d2 = 0.0;
        for (int d = 0; d < D; ++d) d2 += (p[d] - c[d]) * (p[d] - c[d]);
        return s * (r - std::sqrt(d2));
    });
}

template <int D>
ImplicitFunction<D> box(RealVect<D> lo, RealVect<D> hi, bool fluid_inside = false)
{
    const double s = fluid_inside ? -1.0 : 1.0;
    return ImplicitFunction<D>([=](const RealVect<D>& p) {
        double m = std::numeric_limits<double>::infinity();
        for (int d = 0; d < D; ++d) m = std::min({m, p[d] - lo[d], hi[d] - p[d]});
        return s * m;
    });
}

/// Infinite cylinder along `axis`.  In 2D, axis 2 gives a disk.
template <int D>
ImplicitFunction<D> cylinder(double r, int axis, RealVect<D> c, bool fluid_inside = false)
{
    if (axis < 0 || axis > 2 || (D == 3 && axis > 2)) throw Error("cylinder: axis must be 0, 1 or 2");
    const double s = fluid_inside ? -1.0 : 1.0;
    return ImplicitFunction<D>([=](const RealVect<D>& p) {
        double d2 = 0.0;
        for (int d = 0; d < D; ++d)
            if (d != axis) d2 += (p[d] - c[d]) * (p[d] - c[d]);
        return s * (r - std::sqrt(d2));
    });
}

/// Half space; the body lies on the side `normal` points to.
template <int D>
ImplicitFunction<D> plane(RealVect<D> point, RealVect<D> normal)
{
    double n = 0.0;
    for (double v : normal) n += v * v;
    n = std::sqrt(n);
    if (!(n > 0.0)) throw Error("plane: zero normal");
    for (double& v : normal) v /= n;
    return ImplicitFunction<D>([=](const RealVect<D>& p) {
        double s = 0.0;
        for (int d = 0; d < D; ++d) s += (p[d] - point[d]) * normal[d];
        return s;
    });
}

template <int D>
ImplicitFunction<D> make_union(std::vector<ImplicitFunction<D>> fs)
{
    if (fs.empty()) throw Error("union: needs at least one operand");
    return ImplicitFunction<D>([fs = std::move(fs)](const RealVect<D>& p) {
        double m = fs[0](p);
        for (std::size_t i = 1; i < fs.size(); ++i) m = std::max(m, fs[i](p));
        return m;
    });
}

template <int D>
ImplicitFunction<D> make_intersection(std::vector<ImplicitFunction<D>> fs)
{
    if (fs.empty()) throw Error("intersection: needs at least one operand");
    return ImplicitFunction<D>([fs = std::move(fs)](const RealVect<D>& p) {
        double m = fs[0](p);
        for (std::size_t i = 1; i < fs.size(); ++i) m = std::min(m, fs[i](p));
        return m;
    });
}

template <int D>
ImplicitFunction<D> complement(ImplicitFunction<D> f)
{
    return ImplicitFunction<D>([f = std::move(f)](const RealVect<D>& p) { return -f(p); });
}

template <int D>
ImplicitFunction<D> make_difference(ImplicitFunction<D> f, ImplicitFunction<D> g)
{
    return ImplicitFunction<D>([f = std::move(f), g = std::move(g)](const RealVect<D>& p) { return std::min(f(p), -g(p)); });
}

template <int D>
ImplicitFunction<D> translate(ImplicitFunction<D> f, std::type_identity_t<RealVect<D>> shift)
{
    return ImplicitFunction<D>([f = std::move(f), shift](const RealVect<D>& p) {
        RealVect<D> q;
        for (int d = 0; d < D; ++d) q[d] = p[d] - shift[d];
        return f(q);
    });
}

/// Rigid rotation by `angle` radians about coordinate axis `axis` through the
/// origin.  In 2D only axis 2 is meaningful.
template <int D>
ImplicitFunction<D> rotate(ImplicitFunction<D> f, int axis, double angle)
{
    if (axis < 0 || axis > 2 || (D == 2 && axis != 2)) throw Error("rotate: invalid axis " + std::to_string(axis));
    if constexpr (D == 1) throw Error("rotate: not available in 1D");
    const int a = D == 2 ? 0 : (axis + 1) % 3;
    const int b = D == 2 ? 1 : (axis + 2) % 3;
    const double c = std::cos(angle), s = std::sin(angle);
    return ImplicitFunction<D>([f = std::move(f), a, b, c, s](const RealVect<D>& p) {
        RealVect<D> q = p;
        q[a] = c * p[a] + s * p[b];
        q[b] = -s * p[a] + c * p[b];
        return f(q);
    });
}

} // namespace eb

// ---------------------------------------------------------------------------
// CSG expressions:
//
//   s   = sphere(0.5, [0,0,0]);
//   c   = box([-0.4,-0.4,-0.4], [0.4,0.4,0.4]);
//   cyl = union(cylinder(0.25, 0, [0,0,0]), cylinder(0.25, 1, [0,0,0]));
//   difference(intersection(s, c), cyl)
//
// Primitives: sphere(r, [c]), box([lo], [hi]), cylinder(r, axis, [c]),
// plane([point], [normal]); sphere/box/cylinder accept a trailing `inside`
// for fluid inside.  Combinators: union, intersection, difference,
// complement, translate(f, [v]), rotate(f, axis, radians).
// ---------------------------------------------------------------------------

namespace detail {

template <int D>
class CsgParser
{
  public:
    explicit CsgParser(std::string src) : s_(std::move(src)) {}

    ImplicitFunction<D> parse()
    {
        ImplicitFunction<D> last;
        while (true) {
            skip();
            if (pos_ >= s_.size()) break;
            const std::size_t save = pos_;
            std::string name = ident();
            skip();
            if (peek() == '=') {
                ++pos_;
                vars_[name] = expr();
            } else {
                pos_ = save;
                last = expr();
            }
            skip();
            if (peek() == ';') {
                ++pos_;
                continue;
            }
            if (pos_ < s_.size()) fail("expected ';'");
        }
        if (!last) fail("no final expression");
        return last;
    }

  private:
    using Arg = std::variant<double, std::vector<double>, ImplicitFunction<D>, std::string>;

    [[noreturn]] void fail(const std::string& m) const { throw Error("CSG parse error at offset " + std::to_string(pos_) + ": " + m); }
    void skip()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    void expect(char c)
    {
        skip();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    std::string ident()
    {
        skip();
        const std::size_t b = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (b == pos_ || std::isdigit(static_cast<unsigned char>(s_[b]))) fail("expected a name");
        return s_.substr(b, pos_ - b);
    }
    double number()
    {
        skip();
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("expected a number");
        pos_ += static_cast<std::size_t>(end - begin);
        return v;
    }

    Arg arg()
    {
        skip();
        const char c = peek();
        if (c == '[') {
            ++pos_;
            std::vector<double> v;
            skip();
            if (peek() != ']')
                while (true) {
                    v.push_back(number());
                    skip();
                    if (peek() == ',') {
                        ++pos_;
                        continue;
                    }
                    break;
                }
            expect(']');
            return v;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') return number();
        const std::size_t save = pos_;
        const std::string name = ident();
        skip();
        if (peek() == '(' || vars_.count(name)) {
            pos_ = save;
            return expr();
        }
        if (name == "inside" || name == "outside") return name;
        fail("unknown name '" + name + "'");
    }

    ImplicitFunction<D> expr()
    {
        const std::string name = ident();
        skip();
        if (peek() != '(') {
            auto it = vars_.find(name);
            if (it == vars_.end()) fail("undefined name '" + name + "'");
            return it->second;
        }
        ++pos_;
        std::vector<Arg> args;
        skip();
        if (peek() != ')')
            while (true) {
                args.push_back(arg());
                skip();
                if (peek() == ',') {
                    ++pos_;
                    continue;
                }
                break;
            }
        expect(')');
        return build(name, args);
    }

    double num(const std::vector<Arg>& a, std::size_t i, const std::string& fn)
    {
        if (i >= a.size() || !std::holds_alternative<double>(a[i])) fail(fn + ": argument " + std::to_string(i + 1) + " must be a number");
        return std::get<double>(a[i]);
    }
    RealVect<D> vec(const std::vector<Arg>& a, std::size_t i, const std::string& fn)
    {
        if (i >= a.size() || !std::holds_alternative<std::vector<double>>(a[i])) fail(fn + ": argument " + std::to_string(i + 1) + " must be a vector");
        const auto& v = std::get<std::vector<double>>(a[i]);
        if (static_cast<int>(v.size()) != D) fail(fn + ": vectors need " + std::to_string(D) + " components");
        RealVect<D> r;
        std::copy(v.begin(), v.end(), r.begin());
        return r;
    }
    ImplicitFunction<D> fun(const std::vector<Arg>& a, std::size_t i, const std::string& fn)
    {
        if (i >= a.size() || !std::holds_alternative<ImplicitFunction<D>>(a[i])) fail(fn + ": argument " + std::to_string(i + 1) + " must be a shape");
        return std::get<ImplicitFunction<D>>(a[i]);
    }
    bool inside_flag(const std::vector<Arg>& a, std::size_t i, const std::string& fn)
    {
        if (a.size() == i) return false;
        if (a.size() == i + 1 && std::holds_alternative<std::string>(a[i])) return std::get<std::string>(a[i]) == "inside";
        fail(fn + ": wrong number of arguments");
    }

    ImplicitFunction<D> build(const std::string& fn, const std::vector<Arg>& a)
    {
        if (fn == "sphere") return eb::sphere<D>(num(a, 0, fn), vec(a, 1, fn), inside_flag(a, 2, fn));
        if (fn == "box") return eb::box<D>(vec(a, 0, fn), vec(a, 1, fn), inside_flag(a, 2, fn));
        if (fn == "cylinder") return eb::cylinder<D>(num(a, 0, fn), static_cast<int>(num(a, 1, fn)), vec(a, 2, fn), inside_flag(a, 3, fn));
        if (fn == "plane") {
            if (a.size() != 2) fail("plane: wrong number of arguments");
            return eb::plane<D>(vec(a, 0, fn), vec(a, 1, fn));
        }
        if (fn == "union" || fn == "intersection") {
            std::vector<ImplicitFunction<D>> fs;
            for (std::size_t i = 0; i < a.size(); ++i) fs.push_back(fun(a, i, fn));
            if (fs.empty()) fail(fn + ": needs at least one shape");
            return fn == "union" ? eb::make_union<D>(fs) : eb::make_intersection<D>(fs);
        }
        if (fn == "difference") {
            if (a.size() != 2) fail("difference: needs two shapes");
            return eb::make_difference<D>(fun(a, 0, fn), fun(a, 1, fn));
        }
        if (fn == "complement") {
            if (a.size() != 1) fail("complement: needs one shape");
            return eb::complement<D>(fun(a, 0, fn));
        }
        if (fn == "translate") {
            if (a.size() != 2) fail("translate: needs a shape and a vector");
            return eb::translate<D>(fun(a, 0, fn), vec(a, 1, fn));
        }
        if (fn == "rotate") {
            if (a.size() != 3) fail("rotate: needs a shape, an axis and an angle");
            return eb::rotate<D>(fun(a, 0, fn), static_cast<int>(num(a, 1, fn)), num(a, 2, fn));
        }
        fail("unknown function '" + fn + "'");
    }

    std::string s_;
    std::size_t pos_ = 0;
    std::map<std::string, ImplicitFunction<D>> vars_;
};

} // namespace detail

template <int D>
ImplicitFunction<D> parse_csg(const std::string& text)
{
    return detail::CsgParser<D>(text).parse();
}

// ---------------------------------------------------------------------------
// Cell classification and moments
// ---------------------------------------------------------------------------

enum class EBCellFlag : char { regular = 0, cut = 1, covered = 2 };

template <int D>
EBCellFlag classify_cell(const ImplicitFunction<D>& f, const Geometry<D>& geom, const IntVect<D>& c)
{
    bool any_fluid = f(geom.cell_center(c)) < 0.0;
    bool all_fluid = any_fluid;
    bool any_body = !any_fluid;
    for (int corner = 0; corner < (1 << D); ++corner) {
        IntVect<D> n = c;
        for (int d = 0; d < D; ++d) n[d] += (corner >> d) & 1;
        const double v = f(geom.node_position(n));
        all_fluid = all_fluid && v < 0.0;
        any_fluid = any_fluid || v < 0.0;
        any_body = any_body || v > 0.0;
        if (!(v < 0.0) && !(v > 0.0)) any_body = any_fluid = true;  // zero: on the surface
    }
    if (all_fluid) return EBCellFlag::regular;
    if (!any_fluid && any_body) return EBCellFlag::covered;
    return EBCellFlag::cut;
}

template <int D>
FabArray<D, char> classify(const ImplicitFunction<D>& f, const Geometry<D>& geom, const BoxArray<D>& ba, const DistributionMapping& dm)
{
    FabArray<D, char> flags(ba, dm, 1, 0, static_cast<char>(EBCellFlag::regular));
    for (int i = 0; i < ba.size(); ++i)
        for_each_cell(ba[i], [&](const IntVect<D>& c) { flags[i](c, 0) = static_cast<char>(classify_cell(f, geom, c)); });
    return flags;
}

/// Geometric moments of one level.  Centroids are offsets from the cell (or
/// face) center in units of the cell size.  The EB normal points from fluid
/// into the body; eb_area is physical.
template <int D>
struct EBLevelData
{
    Geometry<D> geom;
    int nsub = 4;
    FabArray<D, char> flag;
    FabArray<D> volfrac;
    FabArray<D> centroid;                  // D comps
    std::vector<FabArray<D>> area;         // per direction, face-centered
    std::vector<FabArray<D>> face_centroid; // per direction, D comps (normal comp 0)
    FabArray<D> eb_area;
    FabArray<D> eb_normal;                 // D comps
    FabArray<D> eb_centroid;               // D comps
    std::int64_t degenerate = 0;           // cut cells demoted by majority vote

    const BoxArray<D>& box_array() const { return volfrac.box_array(); }
    const DistributionMapping& distribution_map() const { return volfrac.distribution_map(); }

    EBCellFlag flag_at(int i, const IntVect<D>& c) const { return static_cast<EBCellFlag>(flag[i](c, 0)); }

    std::int64_t count(EBCellFlag t) const
    {
        std::int64_t n = 0;
        for (int i = 0; i < flag.size(); ++i)
            for_each_cell(box_array()[i], [&](const IntVect<D>& c) { n += flag_at(i, c) == t; });
        return n;
    }

    double fluid_volume() const
    {
        double s = 0.0;
        for (int i = 0; i < volfrac.size(); ++i)
            for_each_cell(box_array()[i], [&](const IntVect<D>& c) { s += volfrac[i](c, 0); });
        return s * geom.cell_volume();
    }

    double face_area(int d) const
    {
        double a = 1.0;
        for (int e = 0; e < D; ++e)
            if (e != d) a *= geom.cell_size(e);
        return a;
    }
};

template <int D>
EBLevelData<D> compute_moments(const ImplicitFunction<D>& f, const Geometry<D>& geom, const BoxArray<D>& ba, const DistributionMapping& dm,
                               int nsub = 4)
{
    if (nsub < 2) throw Error("compute_moments: need at least 2 sub-samples per direction");
    const int s = nsub;
    EBLevelData<D> eb{geom,
                      s,
                      classify(f, geom, ba, dm),
                      FabArray<D>(ba, dm, 1, 0, 1.0),
                      FabArray<D>(ba, dm, D, 0, 0.0),
                      {},
                      {},
                      FabArray<D>(ba, dm, 1, 0, 0.0),
                      FabArray<D>(ba, dm, D, 0, 0.0),
                      FabArray<D>(ba, dm, D, 0, 0.0),
                      0};
    const auto& dx = geom.cell_size();

    // faces
    for (int d = 0; d < D; ++d) {
        const BoxArray<D> fba = convert(ba, IndexType<D>::face(d));
        eb.area.emplace_back(fba, dm, 1, 0, 1.0);
        eb.face_centroid.emplace_back(fba, dm, D, 0, 0.0);
        IntVect<D> sub_hi(s - 1);
        sub_hi[d] = 0;
        const Box<D> subs(IntVect<D>(0), sub_hi);
        for (int i = 0; i < fba.size(); ++i) {
            auto& af = eb.area[static_cast<std::size_t>(d)][i];
            auto& fc = eb.face_centroid[static_cast<std::size_t>(d)][i];
            for_each_cell(fba[i], [&](const IntVect<D>& p) {
                const RealVect<D> x0 = geom.node_position(p);
                RealVect<D> xc = x0;
                for (int e = 0; e < D; ++e)
                    if (e != d) xc[e] += 0.5 * dx[e];
                bool all_neg = f(xc) < 0.0, all_pos = f(xc) > 0.0;
                for (int corner = 0; corner < (1 << D); ++corner) {
                    if ((corner >> d) & 1) continue;
                    RealVect<D> x = x0;
                    for (int e = 0; e < D; ++e) x[e] += ((corner >> e) & 1) * dx[e];
                    const double v = f(x);
                    all_neg = all_neg && v < 0.0;
                    all_pos = all_pos && v > 0.0;
                }
                if (all_neg) return;
                if (all_pos) {
                    af(p, 0) = 0.0;
                    return;
                }
                int n = 0;
                RealVect<D> sum{};
                for_each_cell(subs, [&](const IntVect<D>& q) {
                    RealVect<D> x = x0, off{};
                    for (int e = 0; e < D; ++e)
                        if (e != d) {
                            off[e] = (q[e] + 0.5) / s - 0.5;
                            x[e] += (q[e] + 0.5) / s * dx[e];
                        }
                    if (f(x) < 0.0) {
                        ++n;
                        for (int e = 0; e < D; ++e) sum[e] += off[e];
                    }
                });
                const double nf = static_cast<double>(subs.num_cells());
                af(p, 0) = n / nf;
                for (int e = 0; e < D; ++e) fc(p, e) = n > 0 ? sum[e] / n : 0.0;
            });
        }
    }

    // cells
    const Box<D> subs(IntVect<D>(0), IntVect<D>(s - 1));
    std::vector<double> samples(static_cast<std::size_t>(subs.num_cells()));
    for (int i = 0; i < ba.size(); ++i) {
        for_each_cell(ba[i], [&](const IntVect<D>& c) {
            const auto fl = eb.flag_at(i, c);
            if (fl == EBCellFlag::covered) {
                eb.volfrac[i](c, 0) = 0.0;
                return;
            }
            if (fl == EBCellFlag::regular) return;
            const RealVect<D> x0 = geom.node_position(c);
            int n = 0;
            RealVect<D> sum{};
            for_each_cell(subs, [&](const IntVect<D>& q) {
                RealVect<D> x = x0;
                for (int e = 0; e < D; ++e) x[e] += (q[e] + 0.5) / s * dx[e];
                const double v = f(x);
                samples[static_cast<std::size_t>(subs.index(q))] = v;
                if (v < 0.0) {
                    ++n;
                    for (int e = 0; e < D; ++e) sum[e] += (q[e] + 0.5) / s - 0.5;
                }
            });
            const double kappa = n / static_cast<double>(subs.num_cells());

            RealVect<D> v{};
            double vlen2 = 0.0;
            for (int e = 0; e < D; ++e) {
                const IntVect<D> hi = c + IntVect<D>::basis(e);
                v[e] = (eb.area[static_cast<std::size_t>(e)][i](c, 0) - eb.area[static_cast<std::size_t>(e)][i](hi, 0)) * eb.face_area(e);
                vlen2 += v[e] * v[e];
            }
            const double vlen = std::sqrt(vlen2);
            double tiny = 0.0;
            for (int e = 0; e < D; ++e) tiny = std::max(tiny, eb.face_area(e));
            if (vlen <= 1e-12 * tiny) {
                ++eb.degenerate;
                const bool fluid = kappa >= 0.5;
                eb.flag[i](c, 0) = static_cast<char>(fluid ? EBCellFlag::regular : EBCellFlag::covered);
                eb.volfrac[i](c, 0) = fluid ? 1.0 : 0.0;
                return;
            }
            eb.volfrac[i](c, 0) = kappa;
            for (int e = 0; e < D; ++e) eb.centroid[i](c, e) = n > 0 ? sum[e] / n : 0.0;
            eb.eb_area[i](c, 0) = vlen;
            for (int e = 0; e < D; ++e) eb.eb_normal[i](c, e) = v[e] / vlen;

            // midpoints of sign changes between neighboring sub-samples
            int m = 0;
            RealVect<D> mid{};
            for_each_cell(subs, [&](const IntVect<D>& q) {
                const bool a = samples[static_cast<std::size_t>(subs.index(q))] < 0.0;
                for (int e = 0; e < D; ++e) {
                    if (q[e] + 1 >= s) continue;
                    const IntVect<D> q2 = q + IntVect<D>::basis(e);
                    if (a == (samples[static_cast<std::size_t>(subs.index(q2))] < 0.0)) continue;
                    ++m;
                    for (int k = 0; k < D; ++k) mid[k] += (q[k] + 0.5 + (k == e ? 0.5 : 0.0)) / s - 0.5;
                }
            });
            for (int e = 0; e < D; ++e) eb.eb_centroid[i](c, e) = m > 0 ? mid[e] / m : 0.0;
        });
    }
    return eb;
}

/// For each cut cell with volfrac below `threshold` the cell keeps kappa of
/// its volume-weighted update; the remaining (1 - kappa) * kappa * U moves to
/// face-connected, non-covered neighbors in proportion to their volfrac.
/// All moves are computed from the incoming update, so order does not matter.
template <int D>
void redistribute_small_cells(FabArray<D>& update, const EBLevelData<D>& eb, double threshold)
{
    const auto& ba = update.box_array();
    if (!(ba == eb.box_array())) throw Error("redistribute_small_cells: update and EB data use different grids");
    const auto per = eb.geom.periodicity();
    const int nc = update.ncomp();
    struct Move
    {
        int grid;
        IntVect<D> cell;
        int comp;
        double delta;
    };
    std::vector<Move> moves;
    for (int i = 0; i < ba.size(); ++i) {
        for_each_cell(ba[i], [&](const IntVect<D>& c) {
            if (eb.flag_at(i, c) != EBCellFlag::cut) return;
            const double kc = eb.volfrac[i](c, 0);
            if (!(kc < threshold)) return;
            std::vector<std::pair<int, IntVect<D>>> nbrs;
            std::vector<double> w;
            for (int e = 0; e < D; ++e)
                for (int side = 0; side < 2; ++side) {
                    const IntVect<D> face = side == 0 ? c : c + IntVect<D>::basis(e);
                    if (!(eb.area[static_cast<std::size_t>(e)][i](face, 0) > 0.0)) continue;
                    IntVect<D> nb = side == 0 ? c - IntVect<D>::basis(e) : c + IntVect<D>::basis(e);
                    if (!eb.geom.domain().contains(nb)) {
                        if (!per.periodic[static_cast<std::size_t>(e)]) continue;
                        nb = per.wrap(nb);
                    }
                    const auto j = ba.find(nb);
                    if (!j) continue;
                    const double kn = eb.volfrac[*j](nb, 0);
                    if (!(kn > 0.0)) continue;
                    nbrs.emplace_back(*j, nb);
                    w.push_back(kn);
                }
            if (nbrs.empty()) throw Error("redistribute_small_cells: small cell " + c.str() + " has no eligible neighbor");
            double wsum = 0.0;
            for (double x : w) wsum += x;
            for (int n = 0; n < nc; ++n) {
                const double u = update[i](c, n);
                const double excess = (1.0 - kc) * kc * u;
                moves.push_back({i, c, n, kc * u - u});
                for (std::size_t k = 0; k < nbrs.size(); ++k) moves.push_back({nbrs[k].first, nbrs[k].second, n, excess / wsum});  // kappa_k * delta = excess * w_k / wsum
            }
        });
    }
    for (const auto& m : moves) update[m.grid](m.cell, m.comp) += m.delta;
}

/// Implicit function sampled at the nodes of ba refined by `ratio`.
template <int D>
FabArray<D> build_level_set(const ImplicitFunction<D>& f, const Geometry<D>& geom, const BoxArray<D>& ba, const DistributionMapping& dm,
                            int ratio = 1)
{
    if (ratio < 1) throw Error("build_level_set: refine ratio must be >= 1");
    const IntVect<D> r(ratio);
    const Geometry<D> fine = geom.refine(r);
    BoxArray<D> fba = ba;
    if (ratio > 1) {
        std::vector<Box<D>> v;
        for (const auto& b : ba) v.push_back(refine(b, r));
        fba = BoxArray<D>(std::move(v));
    }
    FabArray<D> ls(convert(fba, IndexType<D>::node()), dm, 1, 0, 0.0);
    for (int i = 0; i < ls.size(); ++i)
        for_each_cell(ls.box_array()[i], [&](const IntVect<D>& n) { ls[i](n, 0) = f(fine.node_position(n)); });
    return ls;
}

/// Predicate for prune(): true iff every cell of the box classifies covered.
template <int D>
std::function<bool(const Box<D>&)> covered_box_predicate(ImplicitFunction<D> f, Geometry<D> geom)
{
    return [f = std::move(f), geom = std::move(geom)](const Box<D>& b) {
        bool covered = true;
        const Box<D> cells = convert(b, IndexType<D>::cell());
        for_each_cell(convert(cells, IndexType<D>::node()), [&](const IntVect<D>& n) { covered = covered && f(geom.node_position(n)) > 0.0; });
        if (!covered) return false;
        for_each_cell(cells, [&](const IntVect<D>& c) { covered = covered && f(geom.cell_center(c)) > 0.0; });
        return covered;
    };
}

} // namespace amrlite

#endif // AMRLITE_EB_HPP

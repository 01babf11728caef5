#ifndef AMRLITE_CORE_INDEX_HPP
#define AMRLITE_CORE_INDEX_HPP

// Dimension-independent index space: IntVect, IndexType and Box.
//
// All types are templated on the spatial dimension D (1, 2 or 3), fixed at
// compile time.  Values are small, immutable-by-convention aggregates that
// can be copied and shared freely between threads.

#include <algorithm>
#include <cctype>
#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace amrlite {

/// Error type thrown by every amrlite routine on a contract violation.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Floor division (rounds toward negative infinity). b must be positive.
constexpr int floor_div(int a, int b) noexcept
{
    return (a >= 0) ? a / b : -((-a + b - 1) / b);
}

template <int D>
class IntVect
{
    static_assert(D >= 1 && D <= 3, "amrlite supports 1, 2 or 3 dimensions");

  public:
    static constexpr int dim = D;

    constexpr IntVect() noexcept = default;
    constexpr explicit IntVect(int v) noexcept { v_.fill(v); }
    constexpr IntVect(std::initializer_list<int> l) noexcept
    {
        int d = 0;
        for (int x : l) {
            if (d < D) v_[d++] = x;
        }
    }
    constexpr explicit IntVect(const std::array<int, D>& a) noexcept : v_(a) {}

    constexpr int& operator[](int d) noexcept { return v_[d]; }
    constexpr int operator[](int d) const noexcept { return v_[d]; }

    constexpr const std::array<int, D>& array() const noexcept { return v_; }

    static constexpr IntVect zero() noexcept { return IntVect(0); }
    static constexpr IntVect unit() noexcept { return IntVect(1); }
    static constexpr IntVect basis(int d) noexcept
    {
        IntVect r(0);
        r[d] = 1;
        return r;
    }

    constexpr IntVect& operator+=(const IntVect& o) noexcept
    {
        for (int d = 0; d < D; ++d) v_[d] += o.v_[d];
        return *this;
    }
    constexpr IntVect& operator-=(const IntVect& o) noexcept
    {
        for (int d = 0; d < D; ++d) v_[d] -= o.v_[d];
        return *this;
    }
    constexpr IntVect& operator*=(const IntVect& o) noexcept
    {
        for (int d = 0; d < D; ++d) v_[d] *= o.v_[d];
        return *this;
    }
    constexpr IntVect& operator*=(int s) noexcept
    {
        for (int d = 0; d < D; ++d) v_[d] *= s;
        return *this;
    }

    friend constexpr IntVect operator+(IntVect a, const IntVect& b) noexcept { return a += b; }
    friend constexpr IntVect operator-(IntVect a, const IntVect& b) noexcept { return a -= b; }
    friend constexpr IntVect operator*(IntVect a, const IntVect& b) noexcept { return a *= b; }
    friend constexpr IntVect operator*(IntVect a, int s) noexcept { return a *= s; }
    friend constexpr IntVect operator-(IntVect a) noexcept
    {
        for (int d = 0; d < D; ++d) a[d] = -a[d];
        return a;
    }

    friend constexpr bool operator==(const IntVect&, const IntVect&) noexcept = default;

    /// Lexicographic order with the highest dimension most significant.
    friend constexpr bool lex_less(const IntVect& a, const IntVect& b) noexcept
    {
        for (int d = D - 1; d >= 0; --d) {
            if (a[d] != b[d]) return a[d] < b[d];
        }
        return false;
    }

    constexpr bool all_ge(const IntVect& o) const noexcept
    {
        for (int d = 0; d < D; ++d)
            if (v_[d] < o[d]) return false;
        return true;
    }
    constexpr bool all_le(const IntVect& o) const noexcept
    {
        for (int d = 0; d < D; ++d)
            if (v_[d] > o[d]) return false;
        return true;
    }

    constexpr int max_component() const noexcept { return *std::max_element(v_.begin(), v_.end()); }
    constexpr int min_component() const noexcept { return *std::min_element(v_.begin(), v_.end()); }
    constexpr std::int64_t product() const noexcept
    {
        std::int64_t p = 1;
        for (int x : v_) p *= x;
        return p;
    }

    std::string str() const
    {
        std::ostringstream os;
        os << '(';
        for (int d = 0; d < D; ++d) os << (d ? "," : "") << v_[d];
        os << ')';
        return os.str();
    }

  private:
    std::array<int, D> v_{};
};

template <int D>
constexpr IntVect<D> elementwise_max(const IntVect<D>& a, const IntVect<D>& b) noexcept
{
    IntVect<D> r;
    for (int d = 0; d < D; ++d) r[d] = std::max(a[d], b[d]);
    return r;
}

template <int D>
constexpr IntVect<D> elementwise_min(const IntVect<D>& a, const IntVect<D>& b) noexcept
{
    IntVect<D> r;
    for (int d = 0; d < D; ++d) r[d] = std::min(a[d], b[d]);
    return r;
}

template <int D>
constexpr IntVect<D> floor_div(const IntVect<D>& a, const IntVect<D>& b) noexcept
{
    IntVect<D> r;
    for (int d = 0; d < D; ++d) r[d] = floor_div(a[d], b[d]);
    return r;
}

template <int D>
std::ostream& operator<<(std::ostream& os, const IntVect<D>& v)
{
    return os << v.str();
}

/// Per-dimension CELL/NODE centering.  Faces and edges are mixed types.
template <int D>
class IndexType
{
  public:
    enum class Centering : std::uint8_t { cell = 0, node = 1 };

    constexpr IndexType() noexcept = default;
    constexpr explicit IndexType(std::uint8_t node_bits) noexcept : bits_(node_bits) {}

    static constexpr IndexType cell() noexcept { return IndexType(0); }
    static constexpr IndexType node() noexcept { return IndexType(static_cast<std::uint8_t>((1u << D) - 1)); }
    /// Face-centered in direction d (node in d, cell elsewhere).
    static constexpr IndexType face(int d) noexcept { return IndexType(static_cast<std::uint8_t>(1u << d)); }

    constexpr bool node_centered(int d) const noexcept { return (bits_ >> d) & 1u; }
    constexpr bool cell_centered(int d) const noexcept { return !node_centered(d); }
    constexpr bool is_cell() const noexcept { return bits_ == 0; }
    constexpr std::uint8_t bits() const noexcept { return bits_; }

    constexpr void set(int d, Centering c) noexcept
    {
        if (c == Centering::node)
            bits_ = static_cast<std::uint8_t>(bits_ | (1u << d));
        else
            bits_ = static_cast<std::uint8_t>(bits_ & ~(1u << d));
    }

    friend constexpr bool operator==(const IndexType&, const IndexType&) noexcept = default;

    std::string str() const
    {
        std::string s;
        for (int d = 0; d < D; ++d) s += node_centered(d) ? 'N' : 'C';
        return s;
    }

  private:
    std::uint8_t bits_ = 0;
};

template <int D>
class Box
{
  public:
    constexpr Box() noexcept : lo_(0), hi_(0) { hi_[0] = -1; }
    constexpr Box(const IntVect<D>& lo, const IntVect<D>& hi, IndexType<D> t = IndexType<D>::cell()) noexcept
        : lo_(lo), hi_(hi), type_(t)
    {
    }

    static constexpr Box empty_box(IndexType<D> t = IndexType<D>::cell()) noexcept
    {
        Box b;
        b.type_ = t;
        return b;
    }

    constexpr const IntVect<D>& lo() const noexcept { return lo_; }
    constexpr const IntVect<D>& hi() const noexcept { return hi_; }
    constexpr int lo(int d) const noexcept { return lo_[d]; }
    constexpr int hi(int d) const noexcept { return hi_[d]; }
    constexpr IndexType<D> ixtype() const noexcept { return type_; }

    constexpr bool empty() const noexcept
    {
        for (int d = 0; d < D; ++d)
            if (hi_[d] < lo_[d]) return true;
        return false;
    }
    constexpr bool ok() const noexcept { return !empty(); }

    constexpr IntVect<D> length() const noexcept
    {
        IntVect<D> n;
        for (int d = 0; d < D; ++d) n[d] = empty() ? 0 : hi_[d] - lo_[d] + 1;
        return n;
    }
    constexpr int length(int d) const noexcept { return empty() ? 0 : hi_[d] - lo_[d] + 1; }

    constexpr std::int64_t num_cells() const noexcept { return empty() ? 0 : length().product(); }

    constexpr bool contains(const IntVect<D>& p) const noexcept
    {
        return !empty() && p.all_ge(lo_) && p.all_le(hi_);
    }
    constexpr bool contains(const Box& b) const noexcept
    {
        if (b.empty()) return true;
        return !empty() && b.lo_.all_ge(lo_) && b.hi_.all_le(hi_);
    }
    constexpr bool intersects(const Box& b) const noexcept
    {
        if (empty() || b.empty()) return false;
        for (int d = 0; d < D; ++d)
            if (std::max(lo_[d], b.lo_[d]) > std::min(hi_[d], b.hi_[d])) return false;
        return true;
    }

    /// Equality treats all empty boxes of the same type as equal.
    friend constexpr bool operator==(const Box& a, const Box& b) noexcept
    {
        if (a.type_ != b.type_) return false;
        if (a.empty() || b.empty()) return a.empty() && b.empty();
        return a.lo_ == b.lo_ && a.hi_ == b.hi_;
    }

    /// Linear (x-fastest) offset of p relative to lo.
    constexpr std::int64_t index(const IntVect<D>& p) const noexcept
    {
        std::int64_t off = 0;
        std::int64_t stride = 1;
        for (int d = 0; d < D; ++d) {
            off += (p[d] - lo_[d]) * stride;
            stride *= (hi_[d] - lo_[d] + 1);
        }
        return off;
    }

    /// Inverse of index().
    constexpr IntVect<D> at(std::int64_t offset) const noexcept
    {
        IntVect<D> p;
        for (int d = 0; d < D; ++d) {
            const std::int64_t n = hi_[d] - lo_[d] + 1;
            p[d] = lo_[d] + static_cast<int>(offset % n);
            offset /= n;
        }
        return p;
    }

    std::string str() const
    {
        if (empty()) return "(empty)[" + type_.str() + "]";
        return "(" + lo_.str() + ".." + hi_.str() + ")[" + type_.str() + "]";
    }

  private:
    IntVect<D> lo_;
    IntVect<D> hi_;
    IndexType<D> type_{};
};

template <int D>
std::ostream& operator<<(std::ostream& os, const Box<D>& b)
{
    return os << b.str();
}

template <int D>
Box<D> intersect(const Box<D>& a, const Box<D>& b)
{
    if (a.ixtype() != b.ixtype()) {
        throw Error("intersect: index type mismatch " + a.str() + " vs " + b.str());
    }
    if (a.empty() || b.empty()) return Box<D>::empty_box(a.ixtype());
    Box<D> r(elementwise_max(a.lo(), b.lo()), elementwise_min(a.hi(), b.hi()), a.ixtype());
    return r.empty() ? Box<D>::empty_box(a.ixtype()) : r;
}

/// Grow by n cells on every side; negative n shrinks and may yield the empty box.
template <int D>
Box<D> grow(const Box<D>& b, int n)
{
    return grow(b, IntVect<D>(n));
}

template <int D>
Box<D> grow(const Box<D>& b, const IntVect<D>& n)
{
    if (b.empty()) return b;
    Box<D> r(b.lo() - n, b.hi() + n, b.ixtype());
    return r.empty() ? Box<D>::empty_box(b.ixtype()) : r;
}

/// Grow only in direction d, on the low (side < 0), high (side > 0) or both sides.
template <int D>
Box<D> grow_dir(const Box<D>& b, int d, int n, int side = 0)
{
    IntVect<D> lo = b.lo(), hi = b.hi();
    if (side <= 0) lo[d] -= n;
    if (side >= 0) hi[d] += n;
    Box<D> r(lo, hi, b.ixtype());
    return r.empty() ? Box<D>::empty_box(b.ixtype()) : r;
}

template <int D>
Box<D> refine(const Box<D>& b, const IntVect<D>& r)
{
    if (!b.ixtype().is_cell()) throw Error("refine: only cell-centered boxes can be refined: " + b.str());
    for (int d = 0; d < D; ++d)
        if (r[d] < 1) throw Error("refine: ratio must be >= 1");
    if (b.empty()) return b;
    IntVect<D> lo = b.lo() * r;
    IntVect<D> hi = (b.hi() + IntVect<D>::unit()) * r - IntVect<D>::unit();
    return Box<D>(lo, hi);
}

template <int D>
Box<D> refine(const Box<D>& b, int r)
{
    return refine(b, IntVect<D>(r));
}

template <int D>
Box<D> coarsen(const Box<D>& b, const IntVect<D>& r)
{
    if (!b.ixtype().is_cell()) throw Error("coarsen: only cell-centered boxes can be coarsened: " + b.str());
    for (int d = 0; d < D; ++d)
        if (r[d] < 1) throw Error("coarsen: ratio must be >= 1");
    if (b.empty()) return b;
    return Box<D>(floor_div(b.lo(), r), floor_div(b.hi(), r));
}

template <int D>
Box<D> coarsen(const Box<D>& b, int r)
{
    return coarsen(b, IntVect<D>(r));
}

template <int D>
Box<D> convert(const Box<D>& b, IndexType<D> t)
{
    if (b.empty()) return Box<D>::empty_box(t);
    IntVect<D> hi = b.hi();
    for (int d = 0; d < D; ++d) {
        const bool from_node = b.ixtype().node_centered(d);
        const bool to_node = t.node_centered(d);
        if (!from_node && to_node) hi[d] += 1;
        if (from_node && !to_node) hi[d] -= 1;
    }
    return Box<D>(b.lo(), hi, t);
}

template <int D>
Box<D> shift(const Box<D>& b, const IntVect<D>& v)
{
    if (b.empty()) return b;
    return Box<D>(b.lo() + v, b.hi() + v, b.ixtype());
}

template <int D>
Box<D> shift(const Box<D>& b, int d, int n)
{
    return shift(b, IntVect<D>::basis(d) * n);
}

/// Smallest box containing both (the bounding box).
template <int D>
Box<D> bounding_box(const Box<D>& a, const Box<D>& b)
{
    if (a.empty()) return b;
    if (b.empty()) return a;
    return Box<D>(elementwise_min(a.lo(), b.lo()), elementwise_max(a.hi(), b.hi()), a.ixtype());
}

/// Visit every index of b in x-fastest order.
template <int D, class F>
void for_each_cell(const Box<D>& b, F&& f)
{
    if (b.empty()) return;
    IntVect<D> p = b.lo();
    if constexpr (D == 1) {
        for (p[0] = b.lo(0); p[0] <= b.hi(0); ++p[0]) f(p);
    } else if constexpr (D == 2) {
        for (p[1] = b.lo(1); p[1] <= b.hi(1); ++p[1])
            for (p[0] = b.lo(0); p[0] <= b.hi(0); ++p[0]) f(p);
    } else {
        for (p[2] = b.lo(2); p[2] <= b.hi(2); ++p[2])
            for (p[1] = b.lo(1); p[1] <= b.hi(1); ++p[1])
                for (p[0] = b.lo(0); p[0] <= b.hi(0); ++p[0]) f(p);
    }
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <int D>
IntVect<D> parse_intvect(std::string_view s)
{
    s = trim(s);
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') throw Error("bad IntVect text: " + std::string(s));
    s = s.substr(1, s.size() - 2);
    IntVect<D> v;
    int d = 0;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::string tok(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (d >= D) throw Error("too many IntVect components: " + std::string(s));
        v[d++] = std::stoi(tok);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (d != D) throw Error("too few IntVect components: " + std::string(s));
    return v;
}

} // namespace detail

/// Parse the "(lo..hi)[type]" form produced by Box::str().
template <int D>
Box<D> parse_box(std::string_view s)
{
    s = detail::trim(s);
    const auto lb = s.rfind('[');
    const auto rb = s.rfind(']');
    if (lb == std::string_view::npos || rb == std::string_view::npos || rb < lb) throw Error("bad Box text: " + std::string(s));
    const std::string_view ts = s.substr(lb + 1, rb - lb - 1);
    if (static_cast<int>(ts.size()) != D) throw Error("bad Box index type: " + std::string(s));
    IndexType<D> t;
    for (int d = 0; d < D; ++d) {
        if (ts[d] == 'N')
            t.set(d, IndexType<D>::Centering::node);
        else if (ts[d] != 'C')
            throw Error("bad Box index type: " + std::string(s));
    }
    std::string_view body = detail::trim(s.substr(0, lb));
    if (body == "(empty)") return Box<D>::empty_box(t);
    if (body.size() < 2 || body.front() != '(' || body.back() != ')') throw Error("bad Box text: " + std::string(s));
    body = body.substr(1, body.size() - 2);
    const auto dots = body.find("..");
    if (dots == std::string_view::npos) throw Error("bad Box text: " + std::string(s));
    return Box<D>(detail::parse_intvect<D>(body.substr(0, dots)), detail::parse_intvect<D>(body.substr(dots + 2)), t);
}

} // namespace amrlite

template <int D>
struct std::hash<amrlite::IntVect<D>>
{
    std::size_t operator()(const amrlite::IntVect<D>& v) const noexcept
    {
        std::size_t h = 0xcbf29ce484222325ull;
        for (int d = 0; d < D; ++d) {
            h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(v[d]));
            h *= 0x100000001b3ull;
        }
        return h;
    }
};

#endif // AMRLITE_CORE_INDEX_HPP

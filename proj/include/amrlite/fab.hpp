#ifndef AMRLITE_FAB_HPP
#define AMRLITE_FAB_HPP

// Fab: a multi-component array over a box plus ghost region, stored
// component-major (one x-fastest block per component).  ArrayView is a
// non-owning indexer into a Fab's storage.

#include <cstddef>
#include <cstring>
#include <span>
#include <type_traits>
#include <vector>

#include "core_index.hpp"
#include "transport.hpp"

namespace amrlite {

template <int D, class T>
class ArrayView
{
  public:
    ArrayView() = default;
    ArrayView(T* p, const Box<D>& region, int ncomp) : p_(p), lo_(region.lo()), ncomp_(ncomp)
    {
        std::int64_t s = 1;
        for (int d = 0; d < D; ++d) {
            stride_[d] = s;
            s *= region.length(d);
        }
        cstride_ = s;
    }

    T& operator()(const IntVect<D>& p, int n = 0) const noexcept { return p_[offset(p, n)]; }

    template <class... I>
        requires(sizeof...(I) == D)
    T& operator()(I... idx) const noexcept
    {
        return (*this)(IntVect<D>{static_cast<int>(idx)...}, 0);
    }

    std::int64_t offset(const IntVect<D>& p, int n) const noexcept
    {
        std::int64_t off = n * cstride_;
        for (int d = 0; d < D; ++d) off += (p[d] - lo_[d]) * stride_[d];
        return off;
    }

    int ncomp() const noexcept { return ncomp_; }
    const IntVect<D>& lo() const noexcept { return lo_; }
    T* data() const noexcept { return p_; }

  private:
    T* p_ = nullptr;
    IntVect<D> lo_{};
    std::array<std::int64_t, D> stride_{};
    std::int64_t cstride_ = 0;
    int ncomp_ = 0;
};

template <int D, class T = double>
class Fab
{
    static_assert(std::is_trivially_copyable_v<T>, "Fab element type must be trivially copyable");

  public:
    using value_type = T;

    Fab() = default;
    Fab(const Box<D>& valid, int ncomp, int ngrow = 0, T init = T{})
        : valid_(valid), region_(grow(valid, ngrow)), ngrow_(ngrow), ncomp_(ncomp)
    {
        if (ncomp < 1) throw Error("Fab: ncomp must be >= 1");
        if (ngrow < 0) throw Error("Fab: ngrow must be >= 0");
        data_.assign(static_cast<std::size_t>(region_.num_cells() * ncomp), init);
    }

    const Box<D>& box() const noexcept { return valid_; }
    /// Valid region grown by the ghost width.
    const Box<D>& grown_box() const noexcept { return region_; }
    int ngrow() const noexcept { return ngrow_; }
    int ncomp() const noexcept { return ncomp_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    ArrayView<D, T> view() noexcept { return ArrayView<D, T>(data_.data(), region_, ncomp_); }
    ArrayView<D, const T> view() const noexcept { return ArrayView<D, const T>(data_.data(), region_, ncomp_); }

    T& operator()(const IntVect<D>& p, int n = 0) noexcept { return data_[static_cast<std::size_t>(offset(p, n))]; }
    const T& operator()(const IntVect<D>& p, int n = 0) const noexcept { return data_[static_cast<std::size_t>(offset(p, n))]; }

    std::int64_t offset(const IntVect<D>& p, int n) const noexcept { return n * region_.num_cells() + region_.index(p); }

    void set_val(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    void set_val(T v, const Box<D>& b, int comp = 0, int nc = 1)
    {
        const Box<D> r = intersect(b, region_);
        for (int n = comp; n < comp + nc; ++n) for_each_cell(r, [&](const IntVect<D>& p) { (*this)(p, n) = v; });
    }

    /// this(dst_box) = src(src_box); the boxes must have equal shape.
    void copy_from(const Fab& src, const Box<D>& src_box, int scomp, const Box<D>& dst_box, int dcomp, int nc)
    {
        const IntVect<D> sh = src_box.lo() - dst_box.lo();
        for (int n = 0; n < nc; ++n)
            for_each_cell(dst_box, [&](const IntVect<D>& p) { (*this)(p, dcomp + n) = src(p + sh, scomp + n); });
    }

    /// this(dst_box) += src(src_box).
    void add_from(const Fab& src, const Box<D>& src_box, int scomp, const Box<D>& dst_box, int dcomp, int nc)
    {
        const IntVect<D> sh = src_box.lo() - dst_box.lo();
        for (int n = 0; n < nc; ++n)
            for_each_cell(dst_box, [&](const IntVect<D>& p) { (*this)(p, dcomp + n) += src(p + sh, scomp + n); });
    }

    void pack(Buffer& buf, const Box<D>& b, int comp, int nc) const
    {
        const auto off = buf.size();
        buf.resize(off + static_cast<std::size_t>(b.num_cells() * nc) * sizeof(T));
        std::byte* out = buf.data() + off;
        for (int n = comp; n < comp + nc; ++n)
            for_each_cell(b, [&](const IntVect<D>& p) {
                std::memcpy(out, &(*this)(p, n), sizeof(T));
                out += sizeof(T);
            });
    }

    /// Unpack from buf at `off` into b; advances off.
    template <bool Add = false>
    void unpack(const Buffer& buf, std::size_t& off, const Box<D>& b, int comp, int nc)
    {
        const std::size_t nbytes = static_cast<std::size_t>(b.num_cells() * nc) * sizeof(T);
        if (off + nbytes > buf.size()) throw Error("Fab::unpack: buffer underrun");
        const std::byte* in = buf.data() + off;
        for (int n = comp; n < comp + nc; ++n)
            for_each_cell(b, [&](const IntVect<D>& p) {
                T v;
                std::memcpy(&v, in, sizeof(T));
                in += sizeof(T);
                if constexpr (Add)
                    (*this)(p, n) += v;
                else
                    (*this)(p, n) = v;
            });
        off += nbytes;
    }

    friend bool operator==(const Fab& a, const Fab& b)
    {
        return a.valid_ == b.valid_ && a.ngrow_ == b.ngrow_ && a.ncomp_ == b.ncomp_ && a.data_ == b.data_;
    }

  private:
    Box<D> valid_;
    Box<D> region_;
    int ngrow_ = 0;
    int ncomp_ = 0;
    std::vector<T> data_;
};

} // namespace amrlite

#endif // AMRLITE_FAB_HPP

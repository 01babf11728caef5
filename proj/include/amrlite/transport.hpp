#ifndef AMRLITE_TRANSPORT_HPP
#define AMRLITE_TRANSPORT_HPP

// In-process message transport between logical ranks.
//
// Each rank has a mailbox; a message is a byte buffer tagged with
// (src, dst, tag).  Messages between one (src, dst) pair are delivered in
// FIFO order and exactly once.  Collective operations in amrlite run as
// supersteps: every rank posts its sends, then every rank drains its receives.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "core_index.hpp"

namespace amrlite {

using Buffer = std::vector<std::byte>;

struct Message
{
    int src = 0;
    int dst = 0;
    int tag = 0;
    Buffer data;
};

struct TransportStats
{
    std::int64_t messages = 0;
    std::int64_t bytes = 0;
    /// Message count per (src, dst) pair.
    std::map<std::pair<int, int>, std::int64_t> pair_messages;
};

class Transport
{
  public:
    explicit Transport(int nranks = 1) : nranks_(nranks), boxes_(static_cast<std::size_t>(nranks))
    {
        if (nranks < 1) throw Error("Transport: nranks must be >= 1");
    }

    Transport(const Transport&) = delete;
    Transport& operator=(const Transport&) = delete;

    int nranks() const noexcept { return nranks_; }

    void send(int src, int dst, int tag, Buffer data)
    {
        check_rank(src);
        check_rank(dst);
        std::lock_guard<std::mutex> lock(mutex_);
        stats_.messages += 1;
        stats_.bytes += static_cast<std::int64_t>(data.size());
        stats_.pair_messages[{src, dst}] += 1;
        boxes_[static_cast<std::size_t>(dst)].push_back(Message{src, dst, tag, std::move(data)});
    }

    /// Remove and return every pending message for `dst` with `tag`, ordered by
    /// source rank and then arrival.
    std::vector<Message> receive_all(int dst, int tag)
    {
        check_rank(dst);
        std::lock_guard<std::mutex> lock(mutex_);
        auto& box = boxes_[static_cast<std::size_t>(dst)];
        std::vector<Message> out;
        std::deque<Message> keep;
        for (auto& m : box) {
            if (m.tag == tag)
                out.push_back(std::move(m));
            else
                keep.push_back(std::move(m));
        }
        box = std::move(keep);
        std::stable_sort(out.begin(), out.end(), [](const Message& a, const Message& b) { return a.src < b.src; });
        return out;
    }

    /// Receive exactly one message from `src`; throws if none is pending.
    Message receive(int src, int dst, int tag)
    {
        check_rank(dst);
        std::lock_guard<std::mutex> lock(mutex_);
        auto& box = boxes_[static_cast<std::size_t>(dst)];
        for (auto it = box.begin(); it != box.end(); ++it) {
            if (it->src == src && it->tag == tag) {
                Message m = std::move(*it);
                box.erase(it);
                return m;
            }
        }
        throw Error("Transport: no message from rank " + std::to_string(src) + " to rank " + std::to_string(dst) + " with tag " + std::to_string(tag));
    }

    std::size_t pending(int dst) const
    {
        std::lock_guard<std::mutex> lock(mutex_);
        return boxes_[static_cast<std::size_t>(dst)].size();
    }

    /// Fresh tag for one collective operation.
    int next_tag() noexcept
    {
        std::lock_guard<std::mutex> lock(mutex_);
        return ++tag_counter_;
    }

    TransportStats stats() const
    {
        std::lock_guard<std::mutex> lock(mutex_);
        return stats_;
    }
    void reset_stats()
    {
        std::lock_guard<std::mutex> lock(mutex_);
        stats_ = TransportStats{};
    }

  private:
    void check_rank(int r) const
    {
        if (r < 0 || r >= nranks_) throw Error("Transport: rank " + std::to_string(r) + " out of range");
    }

    int nranks_;
    mutable std::mutex mutex_;
    std::vector<std::deque<Message>> boxes_;
    TransportStats stats_;
    int tag_counter_ = 0;
};

namespace detail {

template <class T>
void append_pod(Buffer& buf, const T& v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    const auto off = buf.size();
    buf.resize(off + sizeof(T));
    std::memcpy(buf.data() + off, &v, sizeof(T));
}

template <class T>
T read_pod(const Buffer& buf, std::size_t& off)
{
    static_assert(std::is_trivially_copyable_v<T>);
    if (off + sizeof(T) > buf.size()) throw Error("buffer underrun while unpacking");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

} // namespace detail

} // namespace amrlite

#endif // AMRLITE_TRANSPORT_HPP

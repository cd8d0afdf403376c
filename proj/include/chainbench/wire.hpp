#pragma once

// Inter-process wire format. Every message travels as one or more fragments:
//
//   bytes 0..7    topic hash, FNV-1a 64 of the topic name (big-endian)
//   bytes 8..15   sequence number
//   bytes 16..17  fragment index
//   bytes 18..19  fragment count
//   bytes 20..23  flags: bits 0..19 fragment payload length,
//                        bit 20 set when an 8-byte publish-timestamp trailer
//                        follows the payload (always on fragment 0)
//
// Fragment payloads cap at 60 KB so a fragment always fits one UDP datagram.
// Control packets (acks) are 16 bytes: topic hash + seq; a nack is the same
// packet with the top bit of seq set (real seq values stay below 2^63).

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <vector>

#include "chainbench/clock.hpp"

namespace chainbench {

inline constexpr std::size_t kFragmentHeaderSize = 24;
inline constexpr std::size_t kMaxFragmentPayload = 60 * 1024;
inline constexpr Ns kReassemblyWindowNs = 100 * kMillisecond;
inline constexpr std::uint32_t kFlagPayloadLenMask = (1u << 20) - 1;
inline constexpr std::uint32_t kFlagHasTimestamp = 1u << 20;
inline constexpr std::uint64_t kNackBit = std::uint64_t{1} << 63;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct FragmentHeader {
  std::uint64_t topic_hash = 0;
  std::uint64_t seq = 0;
  std::uint16_t index = 0;
  std::uint16_t count = 0;
  std::uint32_t flags = 0;
};

namespace detail {

inline void put_be(std::uint8_t* p, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) {
    p[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
}

inline std::uint64_t get_be(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline void encode_fragment_header(const FragmentHeader& h, std::uint8_t* out) {
  detail::put_be(out, h.topic_hash, 8);
  detail::put_be(out + 8, h.seq, 8);
  detail::put_be(out + 16, h.index, 2);
  detail::put_be(out + 18, h.count, 2);
  detail::put_be(out + 20, h.flags, 4);
}

inline std::optional<FragmentHeader> decode_fragment_header(const std::uint8_t* data,
                                                            std::size_t size) {
  if (size < kFragmentHeaderSize) return std::nullopt;
  FragmentHeader h;
  h.topic_hash = detail::get_be(data, 8);
  h.seq = detail::get_be(data + 8, 8);
  h.index = static_cast<std::uint16_t>(detail::get_be(data + 16, 2));
  h.count = static_cast<std::uint16_t>(detail::get_be(data + 18, 2));
  h.flags = static_cast<std::uint32_t>(detail::get_be(data + 20, 4));
  return h;
}

inline std::size_t fragment_payload_size(const FragmentHeader& h) {
  return h.flags & kFlagPayloadLenMask;
}

inline bool fragment_has_timestamp(const FragmentHeader& h) {
  return (h.flags & kFlagHasTimestamp) != 0;
}

inline std::vector<std::vector<std::uint8_t>> encode_fragments(std::uint64_t topic_hash,
                                                               std::uint64_t seq, Ns publish_ts,
                                                               const std::uint8_t* payload,
                                                               std::size_t payload_size) {
  std::size_t count = payload_size == 0 ? 1 : (payload_size + kMaxFragmentPayload - 1) /
                                                  kMaxFragmentPayload;
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t offset = i * kMaxFragmentPayload;
    std::size_t chunk = std::min(kMaxFragmentPayload, payload_size - offset);
    bool with_ts = i == 0;

    FragmentHeader h;
    h.topic_hash = topic_hash;
    h.seq = seq;
    h.index = static_cast<std::uint16_t>(i);
    h.count = static_cast<std::uint16_t>(count);
    h.flags = static_cast<std::uint32_t>(chunk) | (with_ts ? kFlagHasTimestamp : 0);

    std::vector<std::uint8_t> frag(kFragmentHeaderSize + chunk + (with_ts ? 8 : 0));
    encode_fragment_header(h, frag.data());
    if (chunk) std::memcpy(frag.data() + kFragmentHeaderSize, payload + offset, chunk);
    if (with_ts)
      detail::put_be(frag.data() + kFragmentHeaderSize + chunk,
                     static_cast<std::uint64_t>(publish_ts), 8);
    out.push_back(std::move(frag));
  }
  return out;
}

struct AssembledMessage {
  std::uint64_t topic_hash = 0;
  std::uint64_t seq = 0;
  Ns publish_ts = 0;
  std::vector<std::uint8_t> payload;
};

struct ExpiredMessage {
  std::uint64_t topic_hash = 0;
  std::uint64_t seq = 0;
};

/// Collects fragments per (topic_hash, seq) until a message completes or
/// outlives the reassembly window. Duplicates are ignored; fragments whose
/// length disagrees with their header are discarded.
class Reassembler {
 public:
  std::optional<AssembledMessage> add(const std::uint8_t* data, std::size_t size, Ns now) {
    auto h = decode_fragment_header(data, size);
    if (!h || h->count == 0 || h->index >= h->count) return std::nullopt;
    std::size_t chunk = fragment_payload_size(*h);
    std::size_t expect = kFragmentHeaderSize + chunk + (fragment_has_timestamp(*h) ? 8 : 0);
    if (size != expect) return std::nullopt;

    Key key{h->topic_hash, h->seq};
    auto [it, inserted] = pending_.try_emplace(key);
    Pending& p = it->second;
    if (inserted) {
      p.first_seen = now;
      p.chunks.resize(h->count);
    } else if (p.chunks.size() != h->count) {
      return std::nullopt;  // inconsistent fragment count, keep first claim
    }
    if (p.received_mask.size() < h->count) p.received_mask.resize(h->count, false);
    if (p.received_mask[h->index]) return std::nullopt;  // duplicate
    p.received_mask[h->index] = true;
    p.chunks[h->index].assign(data + kFragmentHeaderSize, data + kFragmentHeaderSize + chunk);
    if (fragment_has_timestamp(*h))
      p.publish_ts = static_cast<Ns>(detail::get_be(data + kFragmentHeaderSize + chunk, 8));
    p.received++;

    if (p.received < h->count) return std::nullopt;

    AssembledMessage msg;
    msg.topic_hash = h->topic_hash;
    msg.seq = h->seq;
    msg.publish_ts = p.publish_ts;
    std::size_t total = 0;
    for (const auto& c : p.chunks) total += c.size();
    msg.payload.reserve(total);
    for (const auto& c : p.chunks) msg.payload.insert(msg.payload.end(), c.begin(), c.end());
    pending_.erase(it);
    return msg;
  }

  /// Drops partial messages older than the window; returns what was dropped.
  std::vector<ExpiredMessage> expire(Ns now) {
    std::vector<ExpiredMessage> out;
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (now - it->second.first_seen > kReassemblyWindowNs) {
        out.push_back({it->first.topic_hash, it->first.seq});
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
    return out;
  }

  std::size_t pending() const { return pending_.size(); }

 private:
  struct Key {
    std::uint64_t topic_hash;
    std::uint64_t seq;
    bool operator<(const Key& o) const {
      return topic_hash != o.topic_hash ? topic_hash < o.topic_hash : seq < o.seq;
    }
  };
  struct Pending {
    Ns first_seen = 0;
    Ns publish_ts = 0;
    std::uint16_t received = 0;
    std::vector<std::vector<std::uint8_t>> chunks;
    std::vector<bool> received_mask;
  };
  std::map<Key, Pending> pending_;
};

struct ControlPacket {
  std::uint64_t topic_hash = 0;
  std::uint64_t seq = 0;
  bool is_nack = false;
};

inline std::vector<std::uint8_t> encode_ack(std::uint64_t topic_hash, std::uint64_t seq) {
  std::vector<std::uint8_t> out(16);
  detail::put_be(out.data(), topic_hash, 8);
  detail::put_be(out.data() + 8, seq, 8);
  return out;
}

inline std::vector<std::uint8_t> encode_nack(std::uint64_t topic_hash, std::uint64_t seq) {
  return encode_ack(topic_hash, seq | kNackBit);
}

inline std::optional<ControlPacket> decode_control(const std::uint8_t* data, std::size_t size) {
  if (size != 16) return std::nullopt;
  ControlPacket c;
  c.topic_hash = detail::get_be(data, 8);
  std::uint64_t raw = detail::get_be(data + 8, 8);
  c.is_nack = (raw & kNackBit) != 0;
  c.seq = raw & ~kNackBit;
  return c;
}

}  // namespace chainbench

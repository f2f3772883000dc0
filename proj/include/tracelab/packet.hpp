#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "tracelab/core.hpp"

namespace tracelab {

// 20-byte IPv4 header image followed by the first 8 payload bytes.
inline constexpr std::size_t kHeaderBytes = 20;
inline constexpr std::size_t kIdentityBytes = 28;
using PacketBytes = std::array<std::uint8_t, kIdentityBytes>;

// Byte offsets inside the header image.
namespace ipv4 {
inline constexpr std::size_t kTos = 1;
inline constexpr std::size_t kIdent = 4;
inline constexpr std::size_t kTtl = 8;
inline constexpr std::size_t kProtocol = 9;
inline constexpr std::size_t kChecksum = 10;
inline constexpr std::size_t kSource = 12;
inline constexpr std::size_t kDestination = 16;
}  // namespace ipv4

inline std::uint16_t ipv4_checksum(std::span<const std::uint8_t, kIdentityBytes> bytes) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < kHeaderBytes; i += 2) {
    if (i == ipv4::kChecksum) continue;
    sum += static_cast<std::uint32_t>(bytes[i] << 8 | bytes[i + 1]);
  }
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

inline void put_u32(PacketBytes& b, std::size_t at, std::uint32_t v) {
  b[at] = static_cast<std::uint8_t>(v >> 24);
  b[at + 1] = static_cast<std::uint8_t>(v >> 16);
  b[at + 2] = static_cast<std::uint8_t>(v >> 8);
  b[at + 3] = static_cast<std::uint8_t>(v);
}

// Synthetic address for a node: 10.x.y.z carrying the node id.
inline std::uint32_t node_address(NodeId id) { return 0x0a000000u | (raw(id) & 0x00ffffffu); }

// A UDP packet from `src` to `dst` as it leaves the source host. `sequence`
// lands in the IP identification field and in the payload; `flow_tag`
// fills the UDP ports so that different flows differ outside the header too.
inline PacketBytes make_packet(NodeId src, NodeId dst, std::uint32_t sequence, std::uint32_t flow_tag = 0) {
  PacketBytes b{};
  b[0] = 0x45;
  b[ipv4::kTos] = 0;
  b[2] = 0;
  b[3] = 28;
  b[ipv4::kIdent] = static_cast<std::uint8_t>(sequence >> 8);
  b[ipv4::kIdent + 1] = static_cast<std::uint8_t>(sequence);
  b[6] = 0x40;  // don't fragment
  b[ipv4::kTtl] = 64;
  b[ipv4::kProtocol] = 17;
  put_u32(b, ipv4::kSource, node_address(src));
  put_u32(b, ipv4::kDestination, node_address(dst));
  put_u32(b, kHeaderBytes, flow_tag);
  put_u32(b, kHeaderBytes + 4, sequence);
  const auto sum = ipv4_checksum(b);
  b[ipv4::kChecksum] = static_cast<std::uint8_t>(sum >> 8);
  b[ipv4::kChecksum + 1] = static_cast<std::uint8_t>(sum);
  return b;
}

// Per-hop mutation applied by every router: TTL decrement and checksum refresh.
inline void forward_hop(PacketBytes& b) {
  if (b[ipv4::kTtl] > 0) --b[ipv4::kTtl];
  const auto sum = ipv4_checksum(b);
  b[ipv4::kChecksum] = static_cast<std::uint8_t>(sum >> 8);
  b[ipv4::kChecksum + 1] = static_cast<std::uint8_t>(sum);
}

}  // namespace tracelab

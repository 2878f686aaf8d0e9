#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <tuple>
#include <variant>
#include <vector>

#include "mrsg/distillation.hpp"
#include "mrsg/room_descriptor.hpp"

namespace mrsg {

using Bytes = std::vector<std::uint8_t>;

enum class MsgType : std::uint8_t {
  kDistilledGraph = 1,
  kRoomDescriptor = 2,
  kCloudRequest = 3,
  kCloudResponse = 4,
};

const char* to_string(MsgType t);

struct CloudRequest {
  /// Agent asked for the cloud.
  AgentId target = 0;
  std::uint32_t room = 0;

  bool operator==(const CloudRequest&) const = default;
};

struct CloudResponse {
  enum Status : std::uint8_t { kOk = 0, kUnknownRoom = 1 };
  AgentId requester = 0;
  std::uint32_t room = 0;
  Status status = kOk;
  /// Room frame points; travel at single precision.
  RoomCloud cloud;
};

using Message = std::variant<DistilledGraph, RoomDescriptor, CloudRequest, CloudResponse>;

constexpr std::size_t kHeaderBytes = 10;

struct Envelope {
  MsgType type = MsgType::kDistilledGraph;
  AgentId sender = 0;
  std::uint32_t seq = 0;
  Message message;
};

/// Little-endian layout, header first:
///   u8 type | u8 sender | u32 seq | u32 payload length | payload
/// DistilledGraph: u32 n_walls, n_walls x (u32 id, 4 f64 normal+offset,
///   6 f32 covariance upper triangle), u32 n_rooms, n_rooms x (u32 id,
///   2 f64 center, 4 u32 wall ids), u8 has_floor, [3 f64 floor]
/// RoomDescriptor: u32 room, u16 n_s, u16 n_r, 5 f64 (extents x/y, L_max,
///   voxel, min_height), n_r x n_s f32 column-major
/// CloudRequest: u8 target, u32 room
/// CloudResponse: u8 requester, u32 room, u8 status, 2 f64 extents,
///   u32 n, n x 3 f32
/// The header's sender and seq override the message's own sender fields on
/// decode (DistilledGraph::sender/seq, RoomDescriptor::owner,
/// CloudResponse::cloud.owner).
Bytes encode(const Envelope& env);
/// Throws MalformedMessage on truncation, a bad type byte, a length
/// mismatch or trailing bytes.
Envelope decode(const Bytes& bytes);

/// Message with float-precision fields rounded as the wire would.
Message quantize(const Message& m);

bool operator==(const DistilledGraph& a, const DistilledGraph& b);
bool operator==(const RoomDescriptor& a, const RoomDescriptor& b);
bool operator==(const CloudResponse& a, const CloudResponse& b);

enum class Accounting { kBroadcast, kPerReceiver };

struct ChannelConfig {
  int agents = 2;
  int delay_ticks = 0;
  double drop_probability = 0.0;
  Accounting accounting = Accounting::kBroadcast;
  std::uint64_t seed = 0;
};

struct TrafficCounter {
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
};

struct ChannelStats {
  std::map<std::pair<AgentId, MsgType>, TrafficCounter> parts;
  TrafficCounter total;

  TrafficCounter by_type(MsgType t) const;
  TrafficCounter by_sender(AgentId a) const;
};

/// Shared medium between agents. Broadcasts reach every other agent; sends
/// reach one. Delivery is FIFO per sender after delay_ticks.
class Channel {
 public:
  explicit Channel(ChannelConfig config);

  void broadcast(AgentId from, Bytes bytes);
  void send(AgentId from, AgentId to, Bytes bytes);
  /// Messages for `agent` due at the current tick, in send order.
  std::vector<Bytes> poll(AgentId agent);
  void tick() { ++now_; }
  std::uint64_t now() const { return now_; }

  /// Registers a cloud request and sends it. Returns false (and sends
  /// nothing) while an identical request is still outstanding.
  bool request_cloud(AgentId from, AgentId to, std::uint32_t room, std::uint32_t seq);
  /// Clears the outstanding (from, to, room) request.
  void complete_request(AgentId from, AgentId to, std::uint32_t room);
  bool outstanding(AgentId from, AgentId to, std::uint32_t room) const;

  ChannelStats stats() const;
  const ChannelConfig& config() const { return config_; }

 private:
  struct Pending {
    std::uint64_t due;
    Bytes bytes;
  };
  void account(AgentId from, const Bytes& bytes, int receivers);
  bool dropped();

  ChannelConfig config_;
  std::uint64_t now_ = 0;
  std::vector<std::deque<Pending>> inbox_;
  std::set<std::tuple<AgentId, AgentId, std::uint32_t>> outstanding_;
  ChannelStats stats_;
  Rng rng_;
  mutable std::mutex mutex_;
};

/// Responder side of a cloud request: the downsampled room cloud, or
/// UnknownRoom.
CloudResponse serve_cloud_request(AgentId requester, const CloudRequest& req,
                                  const std::map<std::uint32_t, RoomCloud>& clouds);

}  // namespace mrsg

#include "mrsg/comms.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <random>

#include "mrsg/errors.hpp"

namespace mrsg {

const char* to_string(MsgType t) {
  switch (t) {
    case MsgType::kDistilledGraph: return "distilled_graph";
    case MsgType::kRoomDescriptor: return "room_descriptor";
    case MsgType::kCloudRequest: return "cloud_request";
    case MsgType::kCloudResponse: return "cloud_response";
  }
  return "unknown";
}

namespace {

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out_.insert(out_.end(), raw, raw + sizeof(T));
  }
  void u8(std::uint8_t v) { put(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }

 private:
  Bytes& out_;
};

class Reader {
 public:
  Reader(const Bytes& in, std::size_t pos, std::size_t end) : in_(in), pos_(pos), end_(end) {}

  template <typename T>
  T get() {
    if (end_ - pos_ < sizeof(T)) throw MalformedMessage("truncated message");
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }
  /// Fails early when a count cannot fit in what is left.
  void need(std::uint64_t count, std::size_t each) const {
    if (count * each > end_ - pos_) throw MalformedMessage("truncated message");
  }
  bool done() const { return pos_ == end_; }

 private:
  const Bytes& in_;
  std::size_t pos_;
  std::size_t end_;
};

constexpr int kUpper[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};

Mat3 quantized_cov(const Mat3& c) {
  Mat3 out;
  for (const auto& [i, j] : kUpper) {
    out(i, j) = static_cast<double>(static_cast<float>(c(i, j)));
    out(j, i) = out(i, j);
  }
  return out;
}

void write_payload(Writer& w, const DistilledGraph& g) {
  w.u32(static_cast<std::uint32_t>(g.walls.size()));
  for (const auto& wall : g.walls) {
    w.u32(wall.id);
    for (int i = 0; i < 3; ++i) w.f64(wall.plane.normal(i));
    w.f64(wall.plane.offset);
    for (const auto& [i, j] : kUpper) w.f32(static_cast<float>(wall.plane.covariance(i, j)));
  }
  w.u32(static_cast<std::uint32_t>(g.rooms.size()));
  for (const auto& r : g.rooms) {
    w.u32(r.id);
    w.f64(r.center.x());
    w.f64(r.center.y());
    for (auto id : r.walls) w.u32(id);
  }
  w.u8(g.floor ? 1 : 0);
  if (g.floor) {
    for (int i = 0; i < 3; ++i) w.f64((*g.floor)(i));
  }
}

void write_payload(Writer& w, const RoomDescriptor& d) {
  w.u32(d.room);
  w.u16(static_cast<std::uint16_t>(d.matrix.cols()));
  w.u16(static_cast<std::uint16_t>(d.matrix.rows()));
  w.f64(d.extents.x());
  w.f64(d.extents.y());
  w.f64(d.config.max_radius);
  w.f64(d.config.voxel);
  w.f64(d.config.min_height);
  for (Eigen::Index i = 0; i < d.matrix.size(); ++i) w.f32(d.matrix.data()[i]);
}

void write_payload(Writer& w, const CloudRequest& r) {
  w.u8(r.target);
  w.u32(r.room);
}

void write_payload(Writer& w, const CloudResponse& r) {
  w.u8(r.requester);
  w.u32(r.room);
  w.u8(r.status);
  w.f64(r.cloud.extents.x());
  w.f64(r.cloud.extents.y());
  w.u32(static_cast<std::uint32_t>(r.cloud.cloud.points.size()));
  for (const auto& p : r.cloud.cloud.points) {
    w.f32(static_cast<float>(p.x()));
    w.f32(static_cast<float>(p.y()));
    w.f32(static_cast<float>(p.z()));
  }
}

DistilledGraph read_graph(Reader& r) {
  DistilledGraph g;
  const std::uint32_t nw = r.u32();
  r.need(nw, 4 + 32 + 24);
  for (std::uint32_t k = 0; k < nw; ++k) {
    DistilledWall w;
    w.id = r.u32();
    Vec3 n;
    for (int i = 0; i < 3; ++i) n(i) = r.f64();
    w.plane.normal = n;
    w.plane.offset = r.f64();
    for (const auto& [i, j] : kUpper) {
      w.plane.covariance(i, j) = r.f32();
      w.plane.covariance(j, i) = w.plane.covariance(i, j);
    }
    g.walls.push_back(w);
  }
  const std::uint32_t nr = r.u32();
  r.need(nr, 4 + 16 + 16);
  for (std::uint32_t k = 0; k < nr; ++k) {
    DistilledRoom room;
    room.id = r.u32();
    room.center.x() = r.f64();
    room.center.y() = r.f64();
    for (auto& id : room.walls) id = r.u32();
    g.rooms.push_back(room);
  }
  const std::uint8_t has_floor = r.u8();
  if (has_floor > 1) throw MalformedMessage("bad floor flag");
  if (has_floor) {
    Vec3 f;
    for (int i = 0; i < 3; ++i) f(i) = r.f64();
    g.floor = f;
  }
  return g;
}

RoomDescriptor read_descriptor(Reader& r) {
  RoomDescriptor d;
  d.room = r.u32();
  const int ns = r.u16();
  const int nr = r.u16();
  d.extents.x() = r.f64();
  d.extents.y() = r.f64();
  d.config.max_radius = r.f64();
  d.config.voxel = r.f64();
  d.config.min_height = r.f64();
  d.config.sectors = ns;
  d.config.rings = nr;
  r.need(static_cast<std::uint64_t>(ns) * static_cast<std::uint64_t>(nr), 4);
  d.matrix.resize(nr, ns);
  for (Eigen::Index i = 0; i < d.matrix.size(); ++i) d.matrix.data()[i] = r.f32();
  return d;
}

CloudRequest read_request(Reader& r) {
  CloudRequest q;
  q.target = r.u8();
  q.room = r.u32();
  return q;
}

CloudResponse read_response(Reader& r) {
  CloudResponse c;
  c.requester = r.u8();
  c.room = r.u32();
  const std::uint8_t status = r.u8();
  if (status > CloudResponse::kUnknownRoom) throw MalformedMessage("bad cloud status");
  c.status = static_cast<CloudResponse::Status>(status);
  c.cloud.room = c.room;
  c.cloud.extents.x() = r.f64();
  c.cloud.extents.y() = r.f64();
  c.cloud.cloud.frame_id = "room";
  const std::uint32_t n = r.u32();
  r.need(n, 12);
  c.cloud.cloud.points.reserve(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    const float x = r.f32(), y = r.f32(), z = r.f32();
    c.cloud.cloud.points.emplace_back(x, y, z);
  }
  return c;
}

}  // namespace

Bytes encode(const Envelope& env) {
  Bytes payload;
  Writer pw(payload);
  std::visit([&](const auto& m) { write_payload(pw, m); }, env.message);
  const MsgType type = static_cast<MsgType>(env.message.index() + 1);

  Bytes out;
  out.reserve(kHeaderBytes + payload.size());
  Writer w(out);
  w.u8(static_cast<std::uint8_t>(type));
  w.u8(env.sender);
  w.u32(env.seq);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Envelope decode(const Bytes& bytes) {
  if (bytes.size() < kHeaderBytes) throw MalformedMessage("truncated header");
  Reader h(bytes, 0, kHeaderBytes);
  Envelope env;
  const std::uint8_t type = h.u8();
  if (type < 1 || type > 4) throw MalformedMessage("bad message type " + std::to_string(type));
  env.type = static_cast<MsgType>(type);
  env.sender = h.u8();
  env.seq = h.u32();
  const std::uint32_t len = h.u32();
  if (bytes.size() - kHeaderBytes != len) throw MalformedMessage("payload length mismatch");
  Reader r(bytes, kHeaderBytes, bytes.size());
  switch (env.type) {
    case MsgType::kDistilledGraph: {
      DistilledGraph g = read_graph(r);
      g.sender = env.sender;
      g.seq = env.seq;
      env.message = std::move(g);
      break;
    }
    case MsgType::kRoomDescriptor: {
      RoomDescriptor d = read_descriptor(r);
      d.owner = env.sender;
      env.message = std::move(d);
      break;
    }
    case MsgType::kCloudRequest:
      env.message = read_request(r);
      break;
    case MsgType::kCloudResponse: {
      CloudResponse c = read_response(r);
      c.cloud.owner = env.sender;
      env.message = std::move(c);
      break;
    }
  }
  if (!r.done()) throw MalformedMessage("trailing payload bytes");
  return env;
}

Message quantize(const Message& m) {
  Message out = m;
  if (auto* g = std::get_if<DistilledGraph>(&out)) {
    for (auto& w : g->walls) w.plane.covariance = quantized_cov(w.plane.covariance);
  } else if (auto* c = std::get_if<CloudResponse>(&out)) {
    // Staged through a float buffer: GCC 11 SLP vectorization drops the
    // in-place double->float->double round trip on loop tails.
    auto& pts = c->cloud.cloud.points;
    std::vector<float> f(3 * pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      for (int i = 0; i < 3; ++i) f[3 * k + static_cast<std::size_t>(i)] = static_cast<float>(pts[k](i));
    }
    for (std::size_t k = 0; k < pts.size(); ++k) {
      for (int i = 0; i < 3; ++i) pts[k](i) = f[3 * k + static_cast<std::size_t>(i)];
    }
  }
  return out;
}

bool operator==(const DistilledGraph& a, const DistilledGraph& b) {
  if (a.sender != b.sender || a.seq != b.seq || a.walls.size() != b.walls.size() ||
      a.rooms.size() != b.rooms.size() || a.floor.has_value() != b.floor.has_value()) {
    return false;
  }
  for (std::size_t i = 0; i < a.walls.size(); ++i) {
    const auto &x = a.walls[i], &y = b.walls[i];
    if (x.id != y.id || x.plane.normal != y.plane.normal || x.plane.offset != y.plane.offset ||
        x.plane.covariance != y.plane.covariance) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.rooms.size(); ++i) {
    const auto &x = a.rooms[i], &y = b.rooms[i];
    if (x.id != y.id || x.center != y.center || x.walls != y.walls) return false;
  }
  return !a.floor || *a.floor == *b.floor;
}

bool operator==(const RoomDescriptor& a, const RoomDescriptor& b) {
  return a.owner == b.owner && a.room == b.room && a.extents == b.extents &&
         a.config.sectors == b.config.sectors && a.config.rings == b.config.rings &&
         a.config.max_radius == b.config.max_radius && a.config.voxel == b.config.voxel &&
         a.config.min_height == b.config.min_height && a.matrix.rows() == b.matrix.rows() &&
         a.matrix.cols() == b.matrix.cols() && a.matrix == b.matrix;
}

bool operator==(const CloudResponse& a, const CloudResponse& b) {
  return a.requester == b.requester && a.room == b.room && a.status == b.status && a.cloud.owner == b.cloud.owner &&
         a.cloud.room == b.cloud.room && a.cloud.extents == b.cloud.extents &&
         a.cloud.cloud.points == b.cloud.cloud.points;
}

TrafficCounter ChannelStats::by_type(MsgType t) const {
  TrafficCounter out;
  for (const auto& [key, c] : parts) {
    if (key.second == t) {
      out.messages += c.messages;
      out.bytes += c.bytes;
    }
  }
  return out;
}

TrafficCounter ChannelStats::by_sender(AgentId a) const {
  TrafficCounter out;
  for (const auto& [key, c] : parts) {
    if (key.first == a) {
      out.messages += c.messages;
      out.bytes += c.bytes;
    }
  }
  return out;
}

Channel::Channel(ChannelConfig config)
    : config_(config), inbox_(static_cast<std::size_t>(std::max(config.agents, 0))), rng_(config.seed) {
  if (config.agents < 1 || config.agents > 256) throw ConfigError("channel needs 1..256 agents");
  if (config.delay_ticks < 0) throw ConfigError("channel delay must be >= 0");
  if (config.drop_probability < 0.0 || config.drop_probability > 1.0) {
    throw ConfigError("drop probability must be in [0, 1]");
  }
}

void Channel::account(AgentId from, const Bytes& bytes, int receivers) {
  if (bytes.empty()) return;
  const MsgType type = static_cast<MsgType>(bytes[0]);
  const std::uint64_t copies =
      config_.accounting == Accounting::kPerReceiver ? static_cast<std::uint64_t>(std::max(receivers, 0)) : 1;
  TrafficCounter& c = stats_.parts[{from, type}];
  c.messages += 1;
  c.bytes += copies * bytes.size();
  stats_.total.messages += 1;
  stats_.total.bytes += copies * bytes.size();
}

bool Channel::dropped() {
  if (config_.drop_probability <= 0.0) return false;
  return std::bernoulli_distribution(config_.drop_probability)(rng_);
}

void Channel::broadcast(AgentId from, Bytes bytes) {
  std::lock_guard lock(mutex_);
  account(from, bytes, config_.agents - 1);
  for (int a = 0; a < config_.agents; ++a) {
    if (a == from || dropped()) continue;
    inbox_[static_cast<std::size_t>(a)].push_back({now_ + static_cast<std::uint64_t>(config_.delay_ticks), bytes});
  }
}

void Channel::send(AgentId from, AgentId to, Bytes bytes) {
  std::lock_guard lock(mutex_);
  if (to >= inbox_.size()) throw ConfigError("unknown receiver " + std::to_string(to));
  account(from, bytes, 1);
  if (dropped()) return;
  inbox_[to].push_back({now_ + static_cast<std::uint64_t>(config_.delay_ticks), std::move(bytes)});
}

std::vector<Bytes> Channel::poll(AgentId agent) {
  std::lock_guard lock(mutex_);
  std::vector<Bytes> out;
  if (agent >= inbox_.size()) return out;
  auto& q = inbox_[agent];
  while (!q.empty() && q.front().due <= now_) {
    out.push_back(std::move(q.front().bytes));
    q.pop_front();
  }
  return out;
}

bool Channel::request_cloud(AgentId from, AgentId to, std::uint32_t room, std::uint32_t seq) {
  {
    std::lock_guard lock(mutex_);
    if (!outstanding_.insert({from, to, room}).second) return false;
  }
  send(from, to, encode(Envelope{MsgType::kCloudRequest, from, seq, CloudRequest{to, room}}));
  return true;
}

void Channel::complete_request(AgentId from, AgentId to, std::uint32_t room) {
  std::lock_guard lock(mutex_);
  outstanding_.erase({from, to, room});
}

bool Channel::outstanding(AgentId from, AgentId to, std::uint32_t room) const {
  std::lock_guard lock(mutex_);
  return outstanding_.count({from, to, room}) != 0;
}

ChannelStats Channel::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

CloudResponse serve_cloud_request(AgentId requester, const CloudRequest& req,
                                  const std::map<std::uint32_t, RoomCloud>& clouds) {
  const auto it = clouds.find(req.room);
  if (it == clouds.end()) throw UnknownRoom("no cloud for room " + std::to_string(req.room));
  CloudResponse r;
  r.requester = requester;
  r.room = req.room;
  r.status = CloudResponse::kOk;
  r.cloud = it->second;
  return r;
}

}  // namespace mrsg

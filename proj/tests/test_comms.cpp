#include "doctest.h"

#include "mrsg/errors.hpp"
#include "support.hpp"

using namespace mrsg;
using namespace mrsg::testing;

namespace {

DistilledGraph two_room_graph() {
  DistilledGraph g;
  g.sender = 1;
  g.seq = 7;
  const Mat3 cov = Vec3(1e-4, 2e-4, 5e-5).asDiagonal();
  const std::vector<std::pair<Vec3, double>> planes = {{Vec3::UnitX(), 2.0},  {-Vec3::UnitX(), 2.0},
                                                       {Vec3::UnitY(), 3.0},  {-Vec3::UnitY(), 3.0},
                                                       {Vec3::UnitX(), -2.0}, {-Vec3::UnitX(), 6.0}};
  for (std::uint32_t i = 0; i < planes.size(); ++i) g.walls.push_back({i, Plane(planes[i].first, planes[i].second, cov)});
  g.rooms.push_back({0, Vec2(0, 0), {0, 1, 2, 3}});
  g.rooms.push_back({1, Vec2(4, 0), {4, 5, 2, 3}});
  g.floor = Vec3(2, 0, 0);
  return g;
}

Bytes raw_message(MsgType type, std::size_t size) {
  Bytes b(size, 0xab);
  b[0] = static_cast<std::uint8_t>(type);
  return b;
}

}  // namespace

TEST_CASE("distilled graph round trip") {
  const Envelope env{MsgType::kDistilledGraph, 1, 7, two_room_graph()};
  const Envelope back = decode(encode(env));
  CHECK(back.type == MsgType::kDistilledGraph);
  CHECK(back.sender == 1);
  CHECK(back.seq == 7);
  CHECK(same_message(back.message, quantize(env.message)));
}

TEST_CASE("fuzzed round trips for every message type") {
  Rng rng(99);
  for (MsgType type : {MsgType::kDistilledGraph, MsgType::kRoomDescriptor, MsgType::kCloudRequest,
                       MsgType::kCloudResponse}) {
    int ok = 0;
    for (int i = 0; i < 1000; ++i) {
      const Envelope env = random_envelope(rng, type);
      const Bytes bytes = encode(env);
      const Envelope back = decode(bytes);
      if (back.type == type && back.sender == env.sender && back.seq == env.seq &&
          same_message(back.message, env.message) && encode(back) == bytes) {
        ++ok;
      }
    }
    CHECK_MESSAGE(ok == 1000, std::string(to_string(type)));
  }
}

TEST_CASE("malformed buffers") {
  const Bytes good = encode(Envelope{MsgType::kDistilledGraph, 1, 7, two_room_graph()});
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, kHeaderBytes, good.size() / 2, good.size() - 1}) {
    CHECK_THROWS_AS(decode(Bytes(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut))), MalformedMessage);
  }
  Bytes bad_type = good;
  bad_type[0] = 9;
  CHECK_THROWS_AS(decode(bad_type), MalformedMessage);
  Bytes longer = good;
  longer.push_back(0);
  CHECK_THROWS_AS(decode(longer), MalformedMessage);
  // Header length one larger than the real payload.
  Bytes wrong_len = good;
  wrong_len[6] += 1;
  CHECK_THROWS_AS(decode(wrong_len), MalformedMessage);
  // Consistent length but a payload with trailing bytes.
  Bytes trailing = good;
  trailing.push_back(0);
  trailing[6] += 1;
  CHECK_THROWS_AS(decode(trailing), MalformedMessage);
}

TEST_CASE("descriptor payload size") {
  RoomDescriptor d;
  d.matrix = Eigen::MatrixXf::Ones(20, 60);
  const Bytes b = encode(Envelope{MsgType::kRoomDescriptor, 0, 0, d});
  // 60 * 20 * 4 matrix bytes, plus room id, two u16 dims and five f64.
  CHECK(b.size() == kHeaderBytes + 60 * 20 * 4 + 4 + 2 + 2 + 5 * 8);
}

TEST_CASE("channel delivery and accounting") {
  SUBCASE("two agents, broadcast accounting") {
    Channel ch({2});
    CHECK(ch.poll(1).empty());
    ch.broadcast(0, raw_message(MsgType::kDistilledGraph, 1024));
    CHECK(ch.poll(0).empty());
    const auto got = ch.poll(1);
    REQUIRE(got.size() == 1);
    CHECK(got[0].size() == 1024);
    CHECK(ch.stats().by_sender(0).messages == 1);
    CHECK(ch.stats().by_sender(0).bytes == 1024);
  }
  SUBCASE("three agents, per-receiver accounting") {
    ChannelConfig cfg;
    cfg.agents = 3;
    cfg.accounting = Accounting::kPerReceiver;
    Channel ch(cfg);
    ch.broadcast(0, raw_message(MsgType::kDistilledGraph, 1024));
    CHECK(ch.stats().by_sender(0).bytes == 2048);
    CHECK(ch.poll(1).size() == 1);
    CHECK(ch.poll(2).size() == 1);
  }
  SUBCASE("delay and FIFO order") {
    ChannelConfig cfg;
    cfg.delay_ticks = 2;
    Channel ch(cfg);
    for (std::size_t i = 0; i < 5; ++i) ch.broadcast(0, raw_message(MsgType::kRoomDescriptor, 20 + i));
    CHECK(ch.poll(1).empty());
    ch.tick();
    CHECK(ch.poll(1).empty());
    ch.tick();
    const auto got = ch.poll(1);
    REQUIRE(got.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(got[i].size() == 20 + i);
  }
}

TEST_CASE("channel stats conservation") {
  Rng rng(3);
  ChannelConfig cfg;
  cfg.agents = 4;
  Channel ch(cfg);
  std::uint64_t expected = 0;
  std::map<MsgType, std::uint64_t> per_type;
  for (int i = 0; i < 200; ++i) {
    const MsgType type = static_cast<MsgType>(1 + rng() % 4);
    Envelope env = random_envelope(rng, type);
    env.sender = static_cast<AgentId>(rng() % 4);
    const Bytes b = encode(env);
    expected += b.size();
    per_type[type] += b.size();
    if (rng() % 2) {
      ch.broadcast(env.sender, b);
    } else {
      ch.send(env.sender, static_cast<AgentId>((env.sender + 1) % 4), b);
    }
  }
  const ChannelStats s = ch.stats();
  CHECK(s.total.bytes == expected);
  std::uint64_t parts = 0;
  for (const auto& [key, c] : s.parts) parts += c.bytes;
  CHECK(parts == expected);
  for (const auto& [type, bytes] : per_type) CHECK(s.by_type(type).bytes == bytes);
}

TEST_CASE("cloud requests") {
  const MappedRoom& m = [] () -> const MappedRoom& {
    static const MappedRoom r = map_world_room(sim_a_world(), 1, sim_a().sensor.noiseless(), 1);
    return r;
  }();
  REQUIRE(m.found);
  const ScanContextConfig cfg;
  const RoomDescriptor stored = make_descriptor(m.cloud, cfg);
  std::map<std::uint32_t, RoomCloud> clouds = {{m.cloud.room, m.cloud}};

  Channel ch({2});
  CHECK(ch.request_cloud(0, 1, m.cloud.room, 1));
  const auto before = ch.stats().total;
  CHECK_FALSE(ch.request_cloud(0, 1, m.cloud.room, 2));
  CHECK(ch.stats().total.bytes == before.bytes);
  CHECK(ch.stats().total.messages == before.messages);

  const auto inbox = ch.poll(1);
  REQUIRE(inbox.size() == 1);
  const Envelope req = decode(inbox[0]);
  REQUIRE(req.type == MsgType::kCloudRequest);
  const CloudResponse resp = serve_cloud_request(req.sender, std::get<CloudRequest>(req.message), clouds);
  ch.send(1, req.sender, encode(Envelope{MsgType::kCloudResponse, 1, 1, resp}));
  const auto replies = ch.poll(0);
  REQUIRE(replies.size() == 1);
  const Envelope back = decode(replies[0]);
  const auto& cloud = std::get<CloudResponse>(back.message);
  CHECK(cloud.status == CloudResponse::kOk);
  ch.complete_request(0, 1, m.cloud.room);
  CHECK_FALSE(ch.outstanding(0, 1, m.cloud.room));
  CHECK(sc_distance(stored.matrix, make_descriptor(cloud.cloud, cfg).matrix).distance <= 1e-6);
  CHECK(ch.stats().by_type(MsgType::kCloudResponse).bytes == replies[0].size());
  CHECK(ch.stats().by_type(MsgType::kCloudRequest).bytes == inbox[0].size());

  clouds.clear();
  CHECK_THROWS_AS(serve_cloud_request(0, CloudRequest{1, m.cloud.room}, clouds), UnknownRoom);
}

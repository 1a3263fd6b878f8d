#include <gtest/gtest.h>

#include <thread>

#include "dili/loopback.hpp"
#include "dili/tcp.hpp"

namespace dili {
namespace {

ClientOp client_op(Key k) {
  ClientOp op;
  op.key = k;
  return op;
}

// Answers every client op with the key echoed back as the ack value.
Message echo(const Message& m) {
  const auto& op = std::get<ClientOp>(m.body);
  return {Tag::ack, m.request_id, AckMsg{Status::ok, op.key}};
}

std::int64_t acked(const Message& m) { return std::get<AckMsg>(m.body).value; }

TEST(Loopback, RequestGetsItsOwnResponse) {
  LoopbackNetwork net;
  net.attach(0, [](const Message& m) -> Message {
    return {Tag::bool_resp, m.request_id, BoolResp{Status::ok, true, 1}};
  }, 2);
  const Message resp = net.request(0, {Tag::find, 77, client_op(5)});
  EXPECT_EQ(resp.tag, Tag::bool_resp);
  EXPECT_EQ(resp.request_id, 77u);
  net.shutdown();
}

TEST(Loopback, ConcurrentRequestsNeverCrossMatch) {
  LoopbackNetwork net;
  net.attach(0, echo, 4);
  net.attach(1, echo, 4);
  std::atomic<int> mismatches{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&, t] {
      for (int i = 0; i < 1250; ++i) {
        const Key k = t * 100'000 + i;
        const Message r = net.request(static_cast<ServerId>(i % 2), {Tag::find, 0, client_op(k)});
        if (acked(r) != k) mismatches.fetch_add(1);
      }
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(mismatches.load(), 0);
  net.shutdown();
}

TEST(Loopback, AsyncCallbacksFireExactlyOnce) {
  LoopbackNetwork net({std::chrono::microseconds(0), std::chrono::microseconds(50), true, 3});
  Transport& t0 = net.attach(0, echo, 2);
  net.attach(1, echo, 2);
  constexpr int kMessages = 1000;
  std::vector<std::atomic<int>> fired(kMessages);
  for (int i = 0; i < kMessages; ++i)
    t0.send_async(1, {Tag::insert, 0, client_op(i)}, [&, i](std::optional<Message> m) {
      if (m && acked(*m) == i) fired[i].fetch_add(1);
    });
  net.quiesce();
  int once = 0;
  for (auto& f : fired) once += f.load() == 1;
  EXPECT_EQ(once, kMessages);
  net.shutdown();
}

std::vector<Key> held_delivery_order(std::uint64_t seed) {
  LoopbackNetwork net({std::chrono::microseconds(0), std::chrono::microseconds(500), true, seed});
  std::mutex mu;
  std::vector<Key> order;
  Transport& t0 = net.attach(0, echo, 1);
  net.attach(1, [&](const Message& m) {
    std::lock_guard lock(mu);
    order.push_back(std::get<ClientOp>(m.body).key);
    return echo(m);
  }, 1);
  net.hold();
  for (int i = 0; i < 200; ++i) t0.send_async(1, {Tag::insert, 0, client_op(i)}, [](auto) {});
  net.release();
  net.quiesce();
  net.shutdown();
  return order;
}

TEST(Loopback, HeldDeliveryOrderDependsOnlyOnSeed) {
  const auto a = held_delivery_order(17);
  const auto b = held_delivery_order(17);
  ASSERT_EQ(a.size(), 200u);
  EXPECT_EQ(a, b);
  std::vector<Key> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_NE(a, sorted) << "reordering should permute a 200-message burst";
}

TEST(Tcp, RequestAndAsyncOverSockets) {
  TcpTransport a(0, {}, 2);
  TcpTransport b(1, {}, 2);
  a.serve(echo, "127.0.0.1:0");
  b.serve(echo, "127.0.0.1:0");
  a.set_peer(1, "127.0.0.1:" + std::to_string(b.port()));
  b.set_peer(0, "127.0.0.1:" + std::to_string(a.port()));

  const Message r = a.request(1, {Tag::find, 0, client_op(12345)});
  EXPECT_EQ(acked(r), 12345);

  std::atomic<int> ok{0};
  for (int i = 0; i < 200; ++i)
    a.send_async(1, {Tag::remove, 0, client_op(i)}, [&, i](std::optional<Message> m) {
      if (m && acked(*m) == i) ok.fetch_add(1);
    });
  a.quiesce();
  EXPECT_EQ(ok.load(), 200);
  a.shutdown();
  b.shutdown();
}

TEST(Tcp, UnreachablePeerIsAnError) {
  TcpTransport a(0, {{1, "127.0.0.1:1"}}, 1);
  EXPECT_THROW(a.request(1, {Tag::find, 0, client_op(1)}), TransportError);
  a.shutdown();
}

}  // namespace
}  // namespace dili

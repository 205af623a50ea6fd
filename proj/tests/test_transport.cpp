/* Copyright 2026 The qn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "qn/transport.hpp"
#include "support.hpp"

using namespace qn;
using namespace std::chrono_literals;

namespace {

const auto kSchema = test::schema_of(
    "request Put { string key = 0 [dispatch]; string a = 1; string b = 2; string c = 3; string d = 4; }");

Request make(std::size_t fill, std::string key = "k") {
    const std::string f(fill, 'v');
    return Request{kSchema, {key, f, f, f, f}};
}

SchemaRegistry registry() {
    SchemaRegistry r;
    r.add(kSchema);
    return r;
}

}  // namespace

TEST_CASE("retransmission horizon") {
    // 200+400+...+51200 ms over nine attempts, plus the entry timeout.
    CHECK(retransmission_horizon() == 102200ms + 1s);
    CHECK(retransmission_horizon(10ms, 0) == 10ms + 1s);
}

TEST_CASE("schema registry") {
    auto reg = registry();
    CHECK(reg.find(0, 0) == kSchema);
    CHECK(reg.find(0, 1) == nullptr);
}

TEST_CASE("sender: ids, piggyback, ack") {
    Sender s;
    const auto a = s.send_req(make(1), 0ms);
    CHECK(a.req_id == 1);
    CHECK(a.packets.size() == 1);
    CHECK(a.packets[0].header.req_acked_id == 0);
    s.set_pending_ack(42);
    const auto b = s.send_req(make(1), 0ms);
    CHECK(b.req_id == 2);
    CHECK(b.packets[0].header.req_acked_id == 42);
    CHECK_FALSE(s.pending_ack());
    CHECK(s.unacked_size() == 2);
    s.on_ack(1);
    s.on_ack(1);
    s.on_ack(0);
    CHECK(s.unacked_size() == 1);
    CHECK(s.metrics().at("requests_acked") == 1);
    CHECK(s.in_flight(2));
}

TEST_CASE("sender: request ids skip zero and in-flight ids on wraparound") {
    Sender s;
    s.set_next_req_id(UINT32_MAX);
    CHECK(s.send_req(make(1), 0ms).req_id == UINT32_MAX);
    CHECK(s.send_req(make(1), 0ms).req_id == 1);
    s.set_next_req_id(1);
    CHECK(s.send_req(make(1), 0ms).req_id == 2);
}

TEST_CASE("sender: oversized request does not consume an id") {
    Sender s;
    CHECK_THROWS_AS(s.send_req(make(1432 * 2), 0ms), Error);
    CHECK(s.next_req_id() == 1);
    CHECK(s.unacked_size() == 0);
}

TEST_CASE("sender: unacked table is bounded") {
    Sender s(SenderConfig{kInitialRto, kMaxRetries, 2});
    s.send_req(make(1), 0ms);
    s.send_req(make(1), 0ms);
    try {
        s.send_req(make(1), 0ms);
        FAIL("no error");
    } catch (const Error &e) {
        CHECK(e.code() == Errc::TableFull);
    }
}

TEST_CASE("sender: exponential backoff, whole-request resend, bounded retries") {
    Sender s;
    const auto sent = s.send_req(make(1400), 0ms);
    REQUIRE(sent.packets.size() == 4);
    CHECK(s.tick(199ms).retransmits.empty());
    std::vector<SimTime> resend_at;
    SimTime t = 0ms;
    while (t < 200s) {
        t += 1ms;
        auto tk = s.tick(t);
        if (!tk.retransmits.empty()) {
            CHECK(tk.retransmits == sent.packets);
            resend_at.push_back(t);
        }
        if (!tk.failures.empty()) {
            CHECK(tk.failures == std::vector<ReqId>{sent.req_id});
            break;
        }
    }
    REQUIRE(resend_at.size() == kMaxRetries);
    SimTime expect = 0ms, rto = kInitialRto;
    for (std::size_t i = 0; i < resend_at.size(); ++i) {
        expect += rto;
        CHECK(resend_at[i] == expect);
        rto *= 2;
    }
    CHECK(t == expect + rto);
    CHECK(s.metrics().at("delivery_failures") == 1);
    CHECK(s.metrics().at("retransmissions") == kMaxRetries);
    CHECK(s.unacked_size() == 0);
}

TEST_CASE("receiver: four packets in order give one delivery and one ACK") {
    Sender s;
    Receiver r(registry());
    const auto req = make(1400);
    const auto sent = s.send_req(req, 0ms);
    REQUIRE(sent.packets.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto ev = r.on_data(sent.packets[i], 2, 1ms);
        CHECK(ev.delivered.empty());
        CHECK(ev.acks.empty());
    }
    CHECK(r.entry(sent.req_id)->bitmap == 0b0111);
    const auto ev = r.on_data(sent.packets[3], 2, 1ms);
    REQUIRE(ev.delivered.size() == 1);
    CHECK(ev.delivered[0].request == req);
    CHECK(ev.delivered[0].queue == 2);
    REQUIRE(ev.acks.size() == 1);
    CHECK(ev.acks[0].header.pkt_flag == PacketFlag::Ack);
    CHECK(ev.acks[0].header.req_acked_id == sent.req_id);
    CHECK(r.active_entries() == 0);
    const auto got = r.recv_req(2);
    REQUIRE(got.size() == 1);
    CHECK(got[0] == req);
    CHECK(r.recv_req(2).empty());
}

TEST_CASE("receiver: any arrival order, duplicate packets ignored") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        Sender s;
        Receiver r(registry());
        const auto req = make(1 + rng() % 1400, test::random_string(rng, 1 + rng() % 20));
        auto pkts = s.send_req(req, 0ms).packets;
        const std::size_t n = pkts.size();
        for (std::size_t i = 0; i < n; ++i) pkts.push_back(pkts[i]);
        std::shuffle(pkts.begin(), pkts.end(), rng);
        std::size_t delivered = 0;
        for (const auto &p : pkts) delivered += r.on_data(p, 0, 0ms).delivered.size();
        CHECK(delivered == 1);
        const auto m = r.metrics();
        CHECK(m.at("delivered") == 1);
        CHECK(r.recv_req(0).at(0) == req);
    }
}

TEST_CASE("receiver: partial request expires without an ACK") {
    Sender s;
    Receiver r(registry());
    const auto pkts = s.send_req(make(1400), 0ms).packets;
    r.on_data(pkts[0], 0, 0ms);
    r.on_data(pkts[2], 0, 500ms);
    CHECK(r.tick(1400ms) == 0);
    CHECK(r.tick(1500ms) == 1);
    CHECK(r.active_entries() == 0);
    CHECK(r.metrics().at("entries_expired") == 1);
    CHECK(r.metrics().at("acks_sent") == 0);
}

TEST_CASE("receiver: a resent request after expiry still delivers once") {
    Sender s;
    Receiver r(registry());
    const auto sent = s.send_req(make(1400), 0ms);
    r.on_data(sent.packets[1], 0, 0ms);
    r.tick(2s);
    std::size_t delivered = 0;
    for (const auto &p : s.tick(3s).retransmits) delivered += r.on_data(p, 0, 3s).delivered.size();
    CHECK(delivered == 1);
}

TEST_CASE("receiver: completed requests are suppressed but re-ACKed") {
    Sender s;
    Receiver r(registry());
    const auto sent = s.send_req(make(3), 0ms);
    CHECK(r.on_data(sent.packets[0], 0, 0ms).delivered.size() == 1);
    const auto again = r.on_data(sent.packets[0], 0, 300ms);
    CHECK(again.delivered.empty());
    CHECK(again.acks.size() == 1);
    CHECK(again.completed == sent.req_id);
    CHECK(r.metrics().at("duplicates_suppressed") == 1);
    CHECK(r.recv_req(0).size() == 1);

    // Past the horizon the id is forgotten.
    r.tick(retransmission_horizon() + 1s);
    CHECK(r.on_data(sent.packets[0], 0, retransmission_horizon() + 2s).delivered.size() == 1);
}

TEST_CASE("receiver: inconsistent or malformed packets") {
    Sender s;
    Receiver r(registry());
    auto pkts = s.send_req(make(1400), 0ms).packets;

    auto bad_len = pkts[0];
    bad_len.header.req_len_in_pkts = 5;
    r.on_data(bad_len, 0, 0ms);
    auto bad_seq = pkts[0];
    bad_seq.header.pkt_seq_num_in_req = 4;
    r.on_data(bad_seq, 0, 0ms);
    CHECK(r.metrics().at("rx_malformed") == 2);
    CHECK(r.active_entries() == 0);

    r.on_data(pkts[0], 0, 0ms);
    auto other = pkts[1];
    other.header.req_len_in_bytes += 1;
    r.on_data(other, 0, 0ms);
    CHECK(r.metrics().at("rx_malformed") == 3);

    // Wrong byte count across a complete set.
    Receiver r2(registry());
    auto one = s.send_req(make(3), 0ms).packets[0];
    one.header.req_len_in_bytes += 1;
    CHECK(r2.on_data(one, 0, 0ms).delivered.empty());
    CHECK(r2.metrics().at("rx_malformed") == 1);
    CHECK(r2.metrics().at("acks_sent") == 0);

    // Unknown schema.
    auto stray = s.send_req(make(3), 0ms).packets[0];
    stray.header.app_id = 7;
    CHECK(r2.on_data(stray, 0, 0ms).delivered.empty());
    CHECK(r2.metrics().at("rx_malformed") == 2);
}

TEST_CASE("receiver: request table is bounded") {
    Sender s;
    Receiver r(registry(), ReceiverConfig{1s, 3, retransmission_horizon()});
    for (int i = 0; i < 4; ++i) r.on_data(s.send_req(make(1400), 0ms).packets[0], 0, 0ms);
    CHECK(r.active_entries() == 3);
    CHECK(r.metrics().at("entry_table_full_drops") == 1);
}

TEST_CASE("receiver: per-queue delivery in completion order") {
    Sender s;
    Receiver r(registry());
    std::vector<Request> on_q1;
    for (int i = 0; i < 10; ++i) {
        const auto req = make(1, "k" + std::to_string(i));
        const QueueId q = QueueId(i % 3);
        if (q == 1) on_q1.push_back(req);
        r.on_data(s.send_req(req, 0ms).packets[0], q, 0ms);
    }
    CHECK(r.pending(1) == on_q1.size());
    CHECK(r.recv_req(1) == on_q1);
    CHECK(r.pending(0) == 4);
}

TEST_CASE("property: exactly-once under random loss, duplication and reordering") {
    std::mt19937_64 rng(77);
    Sender s;
    Receiver r(registry());
    std::map<ReqId, Request> want;
    std::map<ReqId, int> got;
    std::vector<std::pair<SimTime, QnpPacket>> wire;
    SimTime now = 0ms;
    std::uniform_real_distribution<double> u(0, 1);
    auto put = [&](const QnpPacket &p) {
        if (u(rng) < 0.05) return;
        wire.emplace_back(now + SimTime(std::int64_t(u(rng) * 5e6)), p);
        if (u(rng) < 0.05) wire.emplace_back(now + SimTime(std::int64_t(u(rng) * 5e6)), p);
    };
    for (int step = 0; now < 120s; ++step) {
        now += step < 5000 ? SimTime(100us) : SimTime(5ms);
        if (step < 5000 && s.unacked_size() < 64) {
            const auto req = make(rng() % 1400, test::random_string(rng, 4));
            auto sent = s.send_req(req, now);
            want[sent.req_id] = req;
            for (const auto &p : sent.packets) put(p);
        }
        std::stable_sort(wire.begin(), wire.end(), [](auto &a, auto &b) { return a.first < b.first; });
        while (!wire.empty() && wire.front().first <= now) {
            const auto p = wire.front().second;
            wire.erase(wire.begin());
            if (p.header.pkt_flag == PacketFlag::Ack) {
                s.on_ack(p.header.req_acked_id);
                continue;
            }
            auto ev = r.on_data(p, 0, now);
            for (auto &d : ev.delivered) {
                ++got[d.req_id];
                CHECK(d.request == want.at(d.req_id));
            }
            for (const auto &a : ev.acks) put(a);
        }
        const auto tk = s.tick(now);
        for (const auto &p : tk.retransmits) put(p);
        CHECK(tk.failures.empty());
        r.tick(now);
    }
    CHECK(s.unacked_size() == 0);
    CHECK(got.size() == want.size());
    for (const auto &[id, n] : got) CHECK(n == 1);
}

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

#include <deque>

#include "qn/fuzz.hpp"
#include "qn/rsd.hpp"
#include "support.hpp"

using namespace qn;

namespace {

std::string as_string(const Bytes &b) { return std::string(b.begin(), b.end()); }

Errc error_of(auto &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("no error raised");
    return Errc::Io;
}

// n single-byte checks with no skip, over a key of n bytes.
struct StepMachine {
    std::shared_ptr<const RequestSchema> schema = test::schema_of(
        "request K { string key = 0 [dispatch]; string b1 = 1; string b2 = 2; string b3 = 3; string b4 = 4; }");
    RuleSet rules;
    std::string key;

    explicit StepMachine(std::size_t n, QueueId q = 3) {
        SkipAndCheckRule r;
        for (std::size_t i = 0; i < n; ++i) {
            key.push_back(char('a' + i % 26));
            r.steps.push_back({0, key.substr(i, 1)});
        }
        r.queue = q;
        rules.rules.push_back(r);
    }
    std::shared_ptr<const RuleTables> tables() const {
        return std::make_shared<const RuleTables>(compile_rules(rules));
    }
    Request request(std::size_t body = 8) const {
        return Request{schema, {key, std::string(body, 'z'), std::string(), std::string(), std::string()}};
    }
    // Four packets: the key shares packet 0 with b1.
    Request four_packets() const {
        const std::string fill(1400, 'z');
        return Request{schema, {key, fill, fill, fill, fill}};
    }
};

}  // namespace

TEST_CASE("byte stream: worked example on four FIFOs") {
    ByteStream bs(4, 8);
    CHECK(bs.write(test::bytes("xBEE")) == 3);
    CHECK(bs.fifo(0) == test::bytes("x"));
    CHECK(bs.fifo(3) == test::bytes("E"));
    Bytes out;
    CHECK(bs.read(1, &out) == 3);
    CHECK(as_string(out) == "x");
    CHECK(bs.read_idx() == 1);
    out.clear();
    bs.read(3, &out);
    CHECK(as_string(out) == "BEE");
    CHECK(bs.read_idx() == 0);
    CHECK(bs.occupancy() == 0);
    bs.write(test::bytes("DECAF"));
    CHECK(bs.fifo(0) == test::bytes("DF"));
    CHECK(bs.fifo(1) == test::bytes("E"));
    CHECK(bs.fifo(2) == test::bytes("C"));
    CHECK(bs.fifo(3) == test::bytes("A"));
    CHECK(bs.write_idx() == 1);
    CHECK(as_string(bs.inspect(4)) == "DECA");
}

TEST_CASE("byte stream: edge cases") {
    ByteStream bs;
    CHECK(bs.write({}) == 0);
    CHECK(bs.read(0) == 0);
    CHECK(bs.write(Bytes(64, 1)) == 3);
    CHECK(bs.write_idx() == 0);
    CHECK(bs.inspect(64) == Bytes(64, 1));
    Bytes out;
    bs.read(64, &out);
    CHECK(out == Bytes(64, 1));
    CHECK(error_of([&] { bs.write(Bytes(65, 0)); }) == Errc::Overflow);
    CHECK(error_of([&] { bs.read(1); }) == Errc::Underflow);
    CHECK(error_of([&] { ByteStream(0, 1); }) == Errc::InvalidConfig);

    ByteStream tiny(2, 2);
    tiny.write(test::bytes("abcd"));
    CHECK(error_of([&] { tiny.write(test::bytes("e")); }) == Errc::Overflow);
    CHECK(error_of([&] { tiny.read(3); }) == Errc::Underflow);
    CHECK(tiny.flush() == 1);
    CHECK(tiny.occupancy() == 0);
    CHECK(tiny.flush() == 0);

    ByteStream big;
    for (int i = 0; i < 3; ++i) big.write(Bytes(50, 0));
    CHECK(big.flush() == 3);
}

TEST_CASE("property: byte stream is a FIFO and inspect equals read") {
    std::mt19937_64 rng(41);
    for (std::size_t fifos : {1, 3, 4, 64}) {
        ByteStream bs(fifos, 16);
        std::deque<std::uint8_t> model;
        for (int op = 0; op < 5000; ++op) {
            if (rng() % 2) {
                const std::size_t n = rng() % std::min<std::size_t>(65, bs.capacity() - model.size() + 1);
                Bytes in(n);
                for (auto &b : in) b = std::uint8_t(rng());
                bs.write(in);
                model.insert(model.end(), in.begin(), in.end());
            } else {
                const std::size_t n = rng() % (std::min<std::size_t>({64, fifos, model.size()}) + 1);
                const Bytes peek = bs.inspect(n);
                Bytes out;
                bs.read(n, &out);
                REQUIRE(out == peek);
                REQUIRE(out == Bytes(model.begin(), model.begin() + std::ptrdiff_t(n)));
                model.erase(model.begin(), model.begin() + std::ptrdiff_t(n));
            }
            REQUIRE(bs.occupancy() == model.size());
        }
    }
}

TEST_CASE("stash is direct mapped") {
    Stash s;
    s.store(5, 2);
    CHECK(s.lookup(5) == QueueId(2));
    CHECK_FALSE(s.lookup(5 + kStashDepth));
    s.store(5 + kStashDepth, 7);
    CHECK_FALSE(s.lookup(5));
    s.invalidate(5);
    CHECK(s.lookup(5 + kStashDepth) == QueueId(7));
    s.invalidate(5 + kStashDepth);
    CHECK_FALSE(s.lookup(5 + kStashDepth));
}

TEST_CASE("cycle model for single-segment first packets") {
    const std::pair<std::size_t, Cycles> expected[] = {{1, 15},  {2, 21},   {4, 33},  {8, 57},
                                                       {16, 105}, {32, 201}, {48, 297}};
    for (const auto &[n, c] : expected) {
        CAPTURE(n);
        CHECK(dispatch_cycles(n) == c);
        StepMachine m(n);
        RsdEngine engine(RsdConfig{1, 8, true}, m.tables());
        const auto pkts = segment_request(m.request(), 1, 0);
        REQUIRE(pkts[0].header.seg_cnt == 1);
        const auto r = engine.dispatch_packet(pkts[0]);
        CHECK(r.queue == QueueId(3));
        CHECK(r.cycles == c);
    }
}

TEST_CASE("non-first packets cost a stash lookup") {
    StepMachine m(4);
    RsdEngine engine(RsdConfig{4, 8, true}, m.tables());
    const auto pkts = segment_request(m.four_packets(), 77, 0);
    REQUIRE(pkts.size() == 4);
    CHECK(engine.dispatch_packet(pkts[0]).queue == QueueId(3));
    for (std::size_t i = 1; i < 4; ++i) {
        const auto r = engine.dispatch_packet(pkts[i]);
        CHECK(r.queue == QueueId(3));
        CHECK(r.stash_hit);
        CHECK(r.cycles == 2);
    }
    CHECK(engine.metrics().at("stash_hits") == 3);

    auto orphan = pkts[1];
    orphan.header.req_id = 78;
    const auto r = engine.dispatch_packet(orphan);
    CHECK(r.dropped());
    CHECK(r.drop == DropReason::NoFirstPacket);
    CHECK(engine.metrics().at("dropped_no_first") == 1);
}

TEST_CASE("no match, default queue and stash invalidation") {
    StepMachine m(2);
    RsdEngine engine(RsdConfig{1, 8, true}, m.tables());
    Request miss = m.request();
    miss.values[0] = std::string("zz");
    auto pkts = segment_request(m.four_packets(), 9, 0);
    CHECK(engine.dispatch_packet(pkts[0]).queue == QueueId(3));
    // A later first packet reusing the id with no match clears the stash slot.
    const auto missed = segment_request(miss, 9, 0);
    const auto r = engine.dispatch_packet(missed[0]);
    CHECK(r.drop == DropReason::NoMatch);
    CHECK(engine.dispatch_packet(pkts[1]).drop == DropReason::NoFirstPacket);

    auto with_default = m.rules;
    with_default.default_queues[{0, 0}] = 6;
    RsdEngine d(RsdConfig{1, 8, true}, std::make_shared<const RuleTables>(compile_rules(with_default)));
    CHECK(d.dispatch_packet(missed[0]).queue == QueueId(6));

    // Unknown scope.
    auto other = missed[0];
    other.header.app_id = 9;
    CHECK(engine.dispatch_packet(other).drop == DropReason::NoMatch);
}

TEST_CASE("shard selection spreads sequential ids") {
    std::array<std::size_t, 4> counts{};
    constexpr std::size_t n = 100000;
    for (ReqId id = 1; id <= n; ++id) ++counts.at(shard(id, 4));
    for (auto c : counts) {
        CHECK(double(c) / n > 0.23);
        CHECK(double(c) / n < 0.27);
    }
    CHECK(shard(12345, 1) == 0);
}

TEST_CASE("table swap takes effect on the next packet") {
    StepMachine a(1, 1), b(1, 2);
    RsdEngine engine(RsdConfig{2, 8, true}, a.tables());
    const auto pkt = segment_request(a.request(), 3, 0)[0];
    CHECK(engine.dispatch_packet(pkt).queue == QueueId(1));
    engine.swap_tables(b.tables());
    CHECK(engine.dispatch_packet(pkt).queue == QueueId(2));
    CHECK(error_of([&] { engine.swap_tables(std::make_shared<const RuleTables>(4)); }) == Errc::InvalidConfig);
    CHECK(error_of([&] { RsdEngine(RsdConfig{0, 8, true}, a.tables()); }) == Errc::InvalidConfig);
}

TEST_CASE("cycle accounting can be disabled") {
    StepMachine m(3);
    RsdEngine engine(RsdConfig{1, 8, false}, m.tables());
    const auto r = engine.dispatch_packet(segment_request(m.request(), 3, 0)[0]);
    CHECK(r.queue == QueueId(3));
    CHECK(r.cycles == 0);
    CHECK(engine.metrics().at("total_cycles") == 0);
}

TEST_CASE("property: engine equals oracle and ignores parallelism") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 400; ++i) {
        const auto fc = random_rule_set(rng);
        const auto tables = std::make_shared<const RuleTables>(compile_rules(fc.rules, fc.cam_width));
        RsdEngine one(RsdConfig{1, fc.cam_width, true}, tables);
        RsdEngine four(RsdConfig{4, fc.cam_width, true}, tables);
        for (int k = 0; k < 16; ++k) {
            const auto req = random_request(rng, fc.rules);
            const ReqId id = ReqId(rng() | 1);
            const auto want = oracle_dispatch(fc.rules, req);
            REQUIRE(engine_decision(one, req, id) == want);
            REQUIRE(engine_decision(four, req, id) == want);
        }
    }
}

TEST_CASE("property: cycles grow linearly with the number of checks") {
    for (std::size_t n = 1; n <= 50; ++n) {
        StepMachine m(n);
        RsdEngine engine(RsdConfig{1, 8, true}, m.tables());
        const auto pkts = segment_request(m.request(1), 1, 0);
        if (pkts[0].header.seg_cnt != 1) continue;
        REQUIRE(engine.dispatch_packet(pkts[0]).cycles == dispatch_cycles(n));
    }
}

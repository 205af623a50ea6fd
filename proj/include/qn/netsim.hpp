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

#ifndef QN_NETSIM_HPP_
#define QN_NETSIM_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qn/rsd.hpp"
#include "qn/transport.hpp"

namespace qn {

/// Single-threaded discrete-event loop over integer-nanosecond time.
class Simulator {
 public:
    using Callback = std::function<void()>;

    SimTime now() const { return now_; }
    void schedule_at(SimTime at, Callback fn);
    void schedule_in(SimTime delay, Callback fn) { schedule_at(now_ + delay, std::move(fn)); }

    /// Runs one event; false when the queue is empty.
    bool step();
    void run();
    /// Runs every event due at or before `until`, then sets the clock to `until`.
    void run_until(SimTime until);

    std::size_t pending() const { return events_.size(); }
    std::uint64_t executed() const { return executed_; }

 private:
    struct Event {
        SimTime at;
        std::uint64_t seq;
        Callback fn;
    };
    struct Later {
        bool operator()(const Event &a, const Event &b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    SimTime now_{0};
    std::uint64_t seq_ = 0;
    std::uint64_t executed_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> events_;
};

struct LinkModel {
    std::uint64_t seed = 1;
    double loss_p = 0.0;
    double dup_p = 0.0;
    double reorder_p = 0.0;
    std::size_t reorder_d = 0;  // max displacement
    SimTime delay = std::chrono::microseconds(10);
    SimTime jitter{0};  // delivery at delay +/- jitter, never before `now` or an earlier submission

    void validate() const;
    nlohmann::json to_json() const;
    static LinkModel from_json(const nlohmann::json &j);
};

struct LinkCounters {
    std::uint64_t submitted = 0;
    std::uint64_t lost = 0;
    std::uint64_t duplicated = 0;  // extra copies created
    std::uint64_t reordered = 0;
    std::uint64_t delivered = 0;

    std::uint64_t in_flight() const { return submitted + duplicated - lost - delivered; }
};

/*
 * One direction of a simulated wire.
 *
 * Every submission consumes exactly six RNG draws (loss, dup, reorder,
 * displacement, two jitters), so a packet's fate depends only on the seed
 * and its submission index.  A reordered packet trades delivery slots with
 * one of the last d packets still in flight, overtaking it.
 */
class Link {
 public:
    using Sink = std::function<void(const Bytes &)>;

    Link(Simulator &sim, LinkModel model, Sink sink = {});

    void set_sink(Sink sink) { sink_ = std::move(sink); }
    void transmit(Bytes frame);

    const LinkModel &model() const { return model_; }
    const LinkCounters &counters() const { return counters_; }
    /// Submission indices of lost packets, in order.
    const std::vector<std::uint64_t> &loss_trace() const { return loss_trace_; }

 private:
    struct Slot {
        Bytes frame;
        bool done = false;
    };

    SimTime draw_time(double u) const;
    void enqueue(Bytes frame, SimTime at, bool reorder, double pick);

    Simulator &sim_;
    LinkModel model_;
    Sink sink_;
    std::mt19937_64 rng_;
    std::deque<std::shared_ptr<Slot>> flight_;  // scheduled, newest last
    SimTime last_at_{0};
    LinkCounters counters_;
    std::vector<std::uint64_t> loss_trace_;
};

enum class FilterPath { Data, Ack, Malformed };

struct FilterResult {
    FilterPath path = FilterPath::Malformed;
    std::optional<QnpPacket> packet;
};

FilterResult packet_filter(ByteSpan frame);

struct ReconfigGate {
    std::set<std::uint8_t> gated_app_ids;
    SimTime start{0};
    SimTime end{0};  // exclusive

    bool active(SimTime now) const { return now >= start && now < end; }
    nlohmann::json to_json() const;
    static ReconfigGate from_json(const nlohmann::json &j);
};

/// True when the packet passes every gate.
bool apply_gate(std::span<const ReconfigGate> gates, const QnpPacket &pkt, SimTime now);

struct EndpointConfig {
    RsdConfig rsd;
    /// Without the engine every DATA packet lands on `software_queue`.
    bool hardware_dispatch = true;
    QueueId software_queue = 0;
    SenderConfig sender;
    ReceiverConfig receiver;
    std::vector<ReconfigGate> gates;
    SimTime tick_period = std::chrono::milliseconds(1);
};

struct DataEvent {
    QnpPacket packet;
    DispatchResult dispatch;
};

/*
 * A host with its NIC: packet filter, reconfiguration gate, dispatch engine,
 * QNP receive and send state.  Piggybacked ACKs are honoured only on DATA
 * packets that pass the gate and get dispatched.
 */
class Endpoint {
 public:
    using DeliveryHandler = std::function<void(const Delivery &)>;
    using FailureHandler = std::function<void(ReqId)>;
    using DataHandler = std::function<void(const DataEvent &)>;

    Endpoint(Simulator &sim, SchemaRegistry schemas, std::shared_ptr<const RuleTables> tables,
             EndpointConfig config = {});

    void connect(Link *out) { out_ = out; }
    void on_frame(const Bytes &frame);

    ReqId send(const Request &request);
    std::vector<Request> recv_req(QueueId queue) { return receiver_.recv_req(queue); }

    void on_delivery(DeliveryHandler fn) { on_delivery_ = std::move(fn); }
    void on_failure(FailureHandler fn) { on_failure_ = std::move(fn); }
    void on_dispatch(DataHandler fn) { on_dispatch_ = std::move(fn); }

    void add_gate(ReconfigGate gate) { config_.gates.push_back(std::move(gate)); }

    Sender &sender() { return sender_; }
    Receiver &receiver() { return receiver_; }
    RsdEngine *engine() { return engine_ ? engine_.get() : nullptr; }

    std::map<std::string, std::uint64_t> metrics() const;

 private:
    void transmit(const QnpPacket &pkt);
    void arm_tick();
    void tick();

    Simulator &sim_;
    EndpointConfig config_;
    std::unique_ptr<RsdEngine> engine_;
    Sender sender_;
    Receiver receiver_;
    Link *out_ = nullptr;
    bool tick_armed_ = false;

    DeliveryHandler on_delivery_;
    FailureHandler on_failure_;
    DataHandler on_dispatch_;

    std::uint64_t malformed_frames_ = 0;
    std::uint64_t gate_drops_ = 0;
    std::uint64_t acks_received_ = 0;
    std::uint64_t piggybacks_ = 0;
    std::uint64_t frames_sent_ = 0;
};

}  // namespace qn

#endif  // QN_NETSIM_HPP_

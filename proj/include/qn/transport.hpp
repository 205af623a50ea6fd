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

#ifndef QN_TRANSPORT_HPP_
#define QN_TRANSPORT_HPP_

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qn/rules.hpp"
#include "qn/wire.hpp"

namespace qn {

/// Simulated (or wall) time since an arbitrary epoch, integer nanoseconds.
using SimTime = std::chrono::nanoseconds;

inline constexpr SimTime kEntryTimeout = std::chrono::seconds(1);
inline constexpr SimTime kInitialRto = std::chrono::milliseconds(200);
inline constexpr unsigned kMaxRetries = 8;
inline constexpr std::size_t kRequestTableCapacity = 1024;
inline constexpr std::size_t kUnackedCapacity = 1024;

/// Longest a sender keeps retransmitting one request, plus the receiver's entry timeout.
SimTime retransmission_horizon(SimTime initial_rto = kInitialRto, unsigned max_retries = kMaxRetries);

class SchemaRegistry {
 public:
    void add(std::shared_ptr<const RequestSchema> schema);
    std::shared_ptr<const RequestSchema> find(std::uint8_t app_id, std::uint8_t req_type) const;

 private:
    std::map<std::pair<std::uint8_t, std::uint8_t>, std::shared_ptr<const RequestSchema>> schemas_;
};

struct SenderConfig {
    SimTime initial_rto = kInitialRto;
    unsigned max_retries = kMaxRetries;
    std::size_t unacked_capacity = kUnackedCapacity;
};

struct SendResult {
    ReqId req_id = 0;
    std::vector<QnpPacket> packets;
};

struct SenderTick {
    std::vector<QnpPacket> retransmits;  // whole requests, first packet first
    std::vector<ReqId> failures;
};

class Sender {
 public:
    explicit Sender(SenderConfig config = {});

    SendResult send_req(const Request &request, SimTime now);
    void on_ack(ReqId req_acked_id);
    SenderTick tick(SimTime now);

    /// The next send_req carries this id in req_acked_id.
    void set_pending_ack(ReqId id) { pending_ack_ = id; }
    std::optional<ReqId> pending_ack() const { return pending_ack_; }

    bool in_flight(ReqId id) const { return unacked_.count(id) != 0; }
    std::size_t unacked_size() const { return unacked_.size(); }
    ReqId next_req_id() const { return next_req_id_; }
    void set_next_req_id(ReqId id) { next_req_id_ = id == 0 ? 1 : id; }

    std::map<std::string, std::uint64_t> metrics() const;

 private:
    struct Unacked {
        std::vector<QnpPacket> packets;
        unsigned retries = 0;
        SimTime rto{};
        SimTime deadline{};
    };

    ReqId allocate_id();

    SenderConfig config_;
    ReqId next_req_id_ = 1;
    std::map<ReqId, Unacked> unacked_;
    std::optional<ReqId> pending_ack_;

    std::uint64_t sent_ = 0;
    std::uint64_t acked_ = 0;
    std::uint64_t retransmissions_ = 0;
    std::uint64_t failures_ = 0;
};

struct RequestEntry {
    ReqId req_id = 0;
    std::uint8_t bitmap = 0;
    std::uint8_t expected_pkts = 0;
    std::array<std::optional<Bytes>, kMaxPacketsPerRequest> staging;
    SimTime timer_deadline{};
    QueueId queue = 0;
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;
    std::uint32_t req_len_in_bytes = 0;
};

/// Per-queue delivery buffers of completed requests.
class RxQueueSet {
 public:
    void push(QueueId queue, Request request) { queues_[queue].push_back(std::move(request)); }
    std::vector<Request> drain(QueueId queue);
    std::size_t size(QueueId queue) const;

 private:
    std::map<QueueId, std::deque<Request>> queues_;
};

struct Delivery {
    QueueId queue = 0;
    ReqId req_id = 0;
    Request request;
};

struct ReceiverEvents {
    std::vector<Delivery> delivered;
    std::vector<QnpPacket> acks;
    std::optional<ReqId> completed;  // set on completion, and on any packet of an already completed request
};

struct ReceiverConfig {
    SimTime entry_timeout = kEntryTimeout;
    std::size_t table_capacity = kRequestTableCapacity;
    SimTime dedup_horizon = retransmission_horizon();
};

class Receiver {
 public:
    Receiver(SchemaRegistry schemas, ReceiverConfig config = {});

    /// `queue` is the dispatch decision for this packet.
    ReceiverEvents on_data(const QnpPacket &pkt, QueueId queue, SimTime now);
    /// Expires idle entries; returns how many were freed.
    std::size_t tick(SimTime now);

    std::vector<Request> recv_req(QueueId queue) { return rx_.drain(queue); }
    std::size_t pending(QueueId queue) const { return rx_.size(queue); }

    std::size_t active_entries() const { return entries_.size(); }
    const RequestEntry *entry(ReqId id) const;

    std::map<std::string, std::uint64_t> metrics() const;

 private:
    void remember_completed(ReqId id, SimTime now);
    bool recently_completed(ReqId id) const { return completed_.count(id) != 0; }

    SchemaRegistry schemas_;
    ReceiverConfig config_;
    std::unordered_map<ReqId, RequestEntry> entries_;
    RxQueueSet rx_;
    std::unordered_map<ReqId, SimTime> completed_;
    std::deque<std::pair<SimTime, ReqId>> completed_order_;

    std::uint64_t packets_ = 0;
    std::uint64_t duplicate_packets_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t duplicates_suppressed_ = 0;
    std::uint64_t expired_ = 0;
    std::uint64_t table_full_drops_ = 0;
    std::uint64_t malformed_ = 0;
    std::uint64_t acks_sent_ = 0;
};

}  // namespace qn

#endif  // QN_TRANSPORT_HPP_

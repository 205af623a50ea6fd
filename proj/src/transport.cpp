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

#include "qn/transport.hpp"

#include <bit>

namespace qn {

SimTime retransmission_horizon(SimTime initial_rto, unsigned max_retries) {
    SimTime total{0};
    SimTime rto = initial_rto;
    for (unsigned i = 0; i <= max_retries; ++i) {
        total += rto;
        rto *= 2;
    }
    return total + kEntryTimeout;
}

void SchemaRegistry::add(std::shared_ptr<const RequestSchema> schema) {
    validate_schema(*schema);
    schemas_[{schema->app_id, schema->req_type}] = std::move(schema);
}

std::shared_ptr<const RequestSchema> SchemaRegistry::find(std::uint8_t app_id, std::uint8_t req_type) const {
    auto it = schemas_.find({app_id, req_type});
    return it == schemas_.end() ? nullptr : it->second;
}

Sender::Sender(SenderConfig config) : config_(config) {}

ReqId Sender::allocate_id() {
    // Skip 0 (reserved for "no ACK") and anything still in flight after wraparound.
    for (;;) {
        const ReqId id = next_req_id_;
        next_req_id_ = next_req_id_ == UINT32_MAX ? 1 : next_req_id_ + 1;
        if (id != 0 && !unacked_.count(id)) return id;
    }
}

SendResult Sender::send_req(const Request &request, SimTime now) {
    if (unacked_.size() >= config_.unacked_capacity)
        throw Error(Errc::TableFull, "sender has " + std::to_string(unacked_.size()) + " unacknowledged requests");
    const ReqId acked = pending_ack_.value_or(0);
    // Segment before allocating so an oversized request does not burn an id.
    auto packets = segment_request(request, 0, acked);
    const ReqId id = allocate_id();
    for (auto &p : packets) p.header.req_id = id;
    pending_ack_.reset();
    unacked_[id] = {packets, 0, config_.initial_rto, now + config_.initial_rto};
    ++sent_;
    return {id, std::move(packets)};
}

void Sender::on_ack(ReqId req_acked_id) {
    if (req_acked_id == 0) return;
    if (unacked_.erase(req_acked_id)) ++acked_;
}

SenderTick Sender::tick(SimTime now) {
    SenderTick out;
    for (auto it = unacked_.begin(); it != unacked_.end();) {
        auto &u = it->second;
        if (u.deadline > now) {
            ++it;
            continue;
        }
        if (u.retries >= config_.max_retries) {
            out.failures.push_back(it->first);
            ++failures_;
            it = unacked_.erase(it);
            continue;
        }
        ++u.retries;
        u.rto *= 2;
        u.deadline = now + u.rto;
        ++retransmissions_;
        out.retransmits.insert(out.retransmits.end(), u.packets.begin(), u.packets.end());
        ++it;
    }
    return out;
}

std::map<std::string, std::uint64_t> Sender::metrics() const {
    return {{"requests_sent", sent_},
            {"requests_acked", acked_},
            {"retransmissions", retransmissions_},
            {"delivery_failures", failures_},
            {"unacked", unacked_.size()}};
}

std::vector<Request> RxQueueSet::drain(QueueId queue) {
    std::vector<Request> out;
    auto it = queues_.find(queue);
    if (it == queues_.end()) return out;
    out.assign(std::make_move_iterator(it->second.begin()), std::make_move_iterator(it->second.end()));
    it->second.clear();
    return out;
}

std::size_t RxQueueSet::size(QueueId queue) const {
    auto it = queues_.find(queue);
    return it == queues_.end() ? 0 : it->second.size();
}

Receiver::Receiver(SchemaRegistry schemas, ReceiverConfig config)
    : schemas_(std::move(schemas)), config_(config) {}

const RequestEntry *Receiver::entry(ReqId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

ReceiverEvents Receiver::on_data(const QnpPacket &pkt, QueueId queue, SimTime now) {
    ReceiverEvents ev;
    ++packets_;
    const auto &h = pkt.header;
    if (!h.is_data() || h.req_len_in_pkts < 1 || h.req_len_in_pkts > kMaxPacketsPerRequest ||
        h.pkt_seq_num_in_req >= h.req_len_in_pkts) {
        ++malformed_;
        return ev;
    }

    auto it = entries_.find(h.req_id);
    // Any packet of an already delivered request is answered at once; a
    // lost ACK then costs one retransmission, not another full reassembly.
    if (it == entries_.end() && recently_completed(h.req_id)) {
        ++duplicates_suppressed_;
        ++acks_sent_;
        ev.completed = h.req_id;
        ev.acks.push_back(make_ack(h.app_id, h.req_type, h.req_id));
        return ev;
    }
    if (it == entries_.end()) {
        if (entries_.size() >= config_.table_capacity) {
            ++table_full_drops_;
            return ev;
        }
        RequestEntry e;
        e.req_id = h.req_id;
        e.expected_pkts = h.req_len_in_pkts;
        e.queue = queue;
        e.app_id = h.app_id;
        e.req_type = h.req_type;
        e.req_len_in_bytes = h.req_len_in_bytes;
        it = entries_.emplace(h.req_id, std::move(e)).first;
    } else if (it->second.expected_pkts != h.req_len_in_pkts || it->second.req_len_in_bytes != h.req_len_in_bytes ||
               it->second.app_id != h.app_id || it->second.req_type != h.req_type) {
        ++malformed_;
        return ev;
    }

    auto &e = it->second;
    e.timer_deadline = now + config_.entry_timeout;
    const auto bit = static_cast<std::uint8_t>(1u << h.pkt_seq_num_in_req);
    if (e.bitmap & bit) {
        ++duplicate_packets_;
        return ev;
    }
    e.bitmap |= bit;
    e.staging[h.pkt_seq_num_in_req] = pkt.payload;
    if (std::popcount(e.bitmap) < e.expected_pkts) return ev;

    RequestEntry done = std::move(e);
    entries_.erase(it);

    std::vector<Bytes> payloads;
    std::size_t total = 0;
    for (std::size_t i = 0; i < done.expected_pkts; ++i) {
        total += done.staging[i]->size();
        payloads.push_back(std::move(*done.staging[i]));
    }
    if (total != done.req_len_in_bytes) {
        ++malformed_;
        return ev;
    }
    auto schema = schemas_.find(done.app_id, done.req_type);
    if (!schema) {
        ++malformed_;
        return ev;
    }
    Request request;
    try {
        request = decode_tlv(payloads, std::move(schema));
    } catch (const Error &) {
        ++malformed_;
        return ev;
    }

    ev.completed = done.req_id;
    ev.acks.push_back(make_ack(done.app_id, done.req_type, done.req_id));
    ++acks_sent_;
    remember_completed(done.req_id, now);
    ++delivered_;
    rx_.push(done.queue, request);
    ev.delivered.push_back({done.queue, done.req_id, std::move(request)});
    return ev;
}

void Receiver::remember_completed(ReqId id, SimTime now) {
    completed_[id] = now;
    completed_order_.emplace_back(now, id);
}

std::size_t Receiver::tick(SimTime now) {
    std::size_t freed = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->second.timer_deadline <= now) {
            it = entries_.erase(it);
            ++freed;
        } else {
            ++it;
        }
    }
    expired_ += freed;
    while (!completed_order_.empty() && completed_order_.front().first + config_.dedup_horizon <= now) {
        const auto [t, id] = completed_order_.front();
        completed_order_.pop_front();
        auto c = completed_.find(id);
        if (c != completed_.end() && c->second == t) completed_.erase(c);
    }
    return freed;
}

std::map<std::string, std::uint64_t> Receiver::metrics() const {
    return {{"rx_packets", packets_},
            {"rx_duplicate_packets", duplicate_packets_},
            {"delivered", delivered_},
            {"duplicates_suppressed", duplicates_suppressed_},
            {"entries_expired", expired_},
            {"entry_table_full_drops", table_full_drops_},
            {"rx_malformed", malformed_},
            {"acks_sent", acks_sent_}};
}

}  // namespace qn

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

#include "qn/netsim.hpp"

#include <algorithm>

namespace qn {

namespace {

double unit(std::mt19937_64 &rng) { return double(rng() >> 11) * 0x1.0p-53; }

void check_probability(double p, const char *name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidConfig, std::string(name) + " must lie in [0, 1]");
}

SimTime micros(const nlohmann::json &j, const char *key, SimTime fallback) {
    if (!j.contains(key)) return fallback;
    return std::chrono::duration_cast<SimTime>(std::chrono::duration<double, std::micro>(j.at(key).get<double>()));
}

double to_micros(SimTime t) { return std::chrono::duration<double, std::micro>(t).count(); }

}  // namespace

void Simulator::schedule_at(SimTime at, Callback fn) {
    if (at < now_) at = now_;
    events_.push({at, seq_++, std::move(fn)});
}

bool Simulator::step() {
    if (events_.empty()) return false;
    // priority_queue::top is const; the callback is copied out before pop.
    Event ev = events_.top();
    events_.pop();
    now_ = ev.at;
    ++executed_;
    ev.fn();
    return true;
}

void Simulator::run() {
    while (step()) {
    }
}

void Simulator::run_until(SimTime until) {
    while (!events_.empty() && events_.top().at <= until) step();
    if (now_ < until) now_ = until;
}

void LinkModel::validate() const {
    check_probability(loss_p, "loss_p");
    check_probability(dup_p, "dup_p");
    check_probability(reorder_p, "reorder_p");
    if (delay < SimTime{0} || jitter < SimTime{0}) throw Error(Errc::InvalidConfig, "link delays must be non-negative");
}

nlohmann::json LinkModel::to_json() const {
    return {{"seed", seed},         {"loss_p", loss_p},   {"dup_p", dup_p},           {"reorder_p", reorder_p},
            {"reorder_d", reorder_d}, {"delay_us", to_micros(delay)}, {"jitter_us", to_micros(jitter)}};
}

LinkModel LinkModel::from_json(const nlohmann::json &j) {
    LinkModel m;
    m.seed = j.value("seed", m.seed);
    m.loss_p = j.value("loss_p", m.loss_p);
    m.dup_p = j.value("dup_p", m.dup_p);
    m.reorder_p = j.value("reorder_p", m.reorder_p);
    m.reorder_d = j.value("reorder_d", m.reorder_d);
    m.delay = micros(j, "delay_us", m.delay);
    m.jitter = micros(j, "jitter_us", m.jitter);
    m.validate();
    return m;
}

Link::Link(Simulator &sim, LinkModel model, Sink sink)
    : sim_(sim), model_(model), sink_(std::move(sink)), rng_(model.seed) {
    model_.validate();
}

SimTime Link::draw_time(double u) const {
    const double offset = double(model_.delay.count()) + double(model_.jitter.count()) * (2.0 * u - 1.0);
    return sim_.now() + SimTime(std::max<std::int64_t>(0, std::int64_t(offset)));
}

void Link::transmit(Bytes frame) {
    const std::uint64_t index = counters_.submitted++;
    const double u_loss = unit(rng_);
    const double u_dup = unit(rng_);
    const double u_reorder = unit(rng_);
    const double u_pick = unit(rng_);
    const double u_jitter = unit(rng_);
    const double u_dup_jitter = unit(rng_);

    if (u_loss < model_.loss_p) {
        ++counters_.lost;
        loss_trace_.push_back(index);
        return;
    }
    const bool dup = u_dup < model_.dup_p;
    const bool reorder = model_.reorder_d > 0 && u_reorder < model_.reorder_p;
    if (dup) {
        ++counters_.duplicated;
        enqueue(frame, draw_time(u_jitter), reorder, u_pick);
        enqueue(std::move(frame), draw_time(u_dup_jitter), false, 0.0);
    } else {
        enqueue(std::move(frame), draw_time(u_jitter), reorder, u_pick);
    }
}

void Link::enqueue(Bytes frame, SimTime at, bool reorder, double pick) {
    while (!flight_.empty() && flight_.front()->done) flight_.pop_front();
    // Jitter never overtakes; only the reorder draw changes delivery order.
    at = std::max(at, last_at_);
    last_at_ = at;
    auto slot = std::make_shared<Slot>();
    slot->frame = std::move(frame);
    if (reorder) {
        std::vector<Slot *> candidates;
        for (auto it = flight_.rbegin(); it != flight_.rend() && candidates.size() < model_.reorder_d; ++it)
            if (!(*it)->done) candidates.push_back(it->get());
        if (!candidates.empty()) {
            const auto k = std::min(candidates.size() - 1, std::size_t(pick * double(candidates.size())));
            std::swap(slot->frame, candidates[k]->frame);
            ++counters_.reordered;
        }
    }
    flight_.push_back(slot);
    sim_.schedule_at(at, [this, slot] {
        slot->done = true;
        ++counters_.delivered;
        if (sink_) sink_(slot->frame);
    });
}

FilterResult packet_filter(ByteSpan frame) {
    FilterResult r;
    try {
        r.packet = decode_frame(frame);
    } catch (const Error &) {
        r.path = FilterPath::Malformed;
        return r;
    }
    r.path = r.packet->header.is_data() ? FilterPath::Data : FilterPath::Ack;
    return r;
}

nlohmann::json ReconfigGate::to_json() const {
    return {{"app_ids", gated_app_ids}, {"start_us", to_micros(start)}, {"end_us", to_micros(end)}};
}

ReconfigGate ReconfigGate::from_json(const nlohmann::json &j) {
    ReconfigGate g;
    for (const auto &id : j.at("app_ids")) g.gated_app_ids.insert(id.get<std::uint8_t>());
    g.start = micros(j, "start_us", g.start);
    g.end = micros(j, "end_us", g.end);
    if (g.end < g.start) throw Error(Errc::InvalidConfig, "gate window ends before it starts");
    return g;
}

bool apply_gate(std::span<const ReconfigGate> gates, const QnpPacket &pkt, SimTime now) {
    if (!pkt.header.is_data()) return true;
    for (const auto &g : gates)
        if (g.active(now) && g.gated_app_ids.count(pkt.header.app_id)) return false;
    return true;
}

Endpoint::Endpoint(Simulator &sim, SchemaRegistry schemas, std::shared_ptr<const RuleTables> tables,
                   EndpointConfig config)
    : sim_(sim), config_(std::move(config)), sender_(config_.sender), receiver_(std::move(schemas), config_.receiver) {
    if (config_.hardware_dispatch) engine_ = std::make_unique<RsdEngine>(config_.rsd, std::move(tables));
    if (config_.tick_period <= SimTime{0}) throw Error(Errc::InvalidConfig, "tick period must be positive");
}

void Endpoint::transmit(const QnpPacket &pkt) {
    if (!out_) throw Error(Errc::InvalidConfig, "endpoint has no outbound link");
    ++frames_sent_;
    out_->transmit(encode_frame(pkt));
}

ReqId Endpoint::send(const Request &request) {
    auto sent = sender_.send_req(request, sim_.now());
    for (const auto &p : sent.packets) transmit(p);
    arm_tick();
    return sent.req_id;
}

void Endpoint::on_frame(const Bytes &frame) {
    auto f = packet_filter(frame);
    if (f.path == FilterPath::Malformed) {
        ++malformed_frames_;
        return;
    }
    const QnpPacket &pkt = *f.packet;
    if (f.path == FilterPath::Ack) {
        ++acks_received_;
        sender_.on_ack(pkt.header.req_acked_id);
        return;
    }
    if (!apply_gate(config_.gates, pkt, sim_.now())) {
        ++gate_drops_;
        if (engine_) engine_->record_drop(DropReason::ReconfigGate);
        return;
    }

    DispatchResult d;
    if (engine_) {
        d = engine_->dispatch_packet(pkt);
    } else {
        d.queue = config_.software_queue;
    }
    if (on_dispatch_) on_dispatch_({pkt, d});
    if (d.dropped()) return;

    if (pkt.header.req_acked_id != 0) {
        ++piggybacks_;
        sender_.on_ack(pkt.header.req_acked_id);
    }
    auto ev = receiver_.on_data(pkt, *d.queue, sim_.now());
    for (const auto &ack : ev.acks) transmit(ack);
    if (ev.completed) sender_.set_pending_ack(*ev.completed);
    // An installed handler consumes deliveries; the RX queues stay empty.
    for (const auto &del : ev.delivered) {
        if (!on_delivery_) continue;
        receiver_.recv_req(del.queue);
        on_delivery_(del);
    }
    arm_tick();
}

void Endpoint::arm_tick() {
    if (tick_armed_) return;
    tick_armed_ = true;
    sim_.schedule_in(config_.tick_period, [this] { tick(); });
}

void Endpoint::tick() {
    tick_armed_ = false;
    const auto now = sim_.now();
    auto t = sender_.tick(now);
    for (const auto &p : t.retransmits) transmit(p);
    receiver_.tick(now);
    for (auto id : t.failures)
        if (on_failure_) on_failure_(id);
    if (sender_.unacked_size() > 0 || receiver_.active_entries() > 0) arm_tick();
}

std::map<std::string, std::uint64_t> Endpoint::metrics() const {
    auto m = sender_.metrics();
    m.merge(receiver_.metrics());
    if (engine_) m.merge(engine_->metrics());
    m["malformed_frames"] = malformed_frames_;
    m["gate_drops"] = gate_drops_;
    m["acks_received"] = acks_received_;
    m["piggybacked_acks"] = piggybacks_;
    m["frames_sent"] = frames_sent_;
    return m;
}

}  // namespace qn

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

#include "qn/rsd.hpp"

#include <algorithm>
#include <atomic>

namespace qn {

ByteStream::ByteStream(std::size_t n_fifos, std::size_t depth)
    : n_fifos_(n_fifos), depth_(depth), cells_(n_fifos * depth), head_(n_fifos), count_(n_fifos) {
    if (n_fifos == 0 || depth == 0) throw Error(Errc::InvalidConfig, "ByteStream needs at least one FIFO slot");
}

Cycles ByteStream::write(ByteSpan bytes) {
    if (bytes.empty()) return 0;
    if (bytes.size() > kMaxStreamOp)
        throw Error(Errc::Overflow, "ByteStream write of " + std::to_string(bytes.size()) + " bytes exceeds 64");
    if (occupancy_ + bytes.size() > capacity())
        throw Error(Errc::Overflow, "ByteStream full");
    for (auto b : bytes) {
        const std::size_t f = write_idx_;
        cells_[f * depth_ + (head_[f] + count_[f]) % depth_] = b;
        ++count_[f];
        write_idx_ = (write_idx_ + 1) % n_fifos_;
    }
    occupancy_ += bytes.size();
    return cycles::kStreamOp;
}

Cycles ByteStream::read(std::size_t n, Bytes *out) {
    if (n == 0) return 0;
    if (n > max_read())
        throw Error(Errc::Underflow, "ByteStream read of " + std::to_string(n) + " bytes exceeds one op");
    if (n > occupancy_) throw Error(Errc::Underflow, "ByteStream holds fewer than " + std::to_string(n) + " bytes");
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t f = read_idx_;
        if (out) out->push_back(cells_[f * depth_ + head_[f]]);
        head_[f] = (head_[f] + 1) % depth_;
        --count_[f];
        read_idx_ = (read_idx_ + 1) % n_fifos_;
    }
    occupancy_ -= n;
    return cycles::kStreamOp;
}

Bytes ByteStream::inspect(std::size_t n) const {
    if (n > max_read())
        throw Error(Errc::Underflow, "ByteStream inspect of " + std::to_string(n) + " bytes exceeds one op");
    if (n > occupancy_) throw Error(Errc::Underflow, "ByteStream holds fewer than " + std::to_string(n) + " bytes");
    Bytes out;
    out.reserve(n);
    // n <= n_fifos, so every byte is the head of a distinct FIFO.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t f = (read_idx_ + i) % n_fifos_;
        out.push_back(cells_[f * depth_ + head_[f]]);
    }
    return out;
}

Cycles ByteStream::flush() {
    const Cycles cost = ((occupancy_ + kSegmentBytes - 1) / kSegmentBytes) * cycles::kFlushSegment;
    std::fill(count_.begin(), count_.end(), 0);
    read_idx_ = write_idx_;
    occupancy_ = 0;
    return cost;
}

Bytes ByteStream::fifo(std::size_t index) const {
    Bytes out;
    for (std::size_t i = 0; i < count_.at(index); ++i) out.push_back(cells_[index * depth_ + (head_[index] + i) % depth_]);
    return out;
}

void Stash::invalidate(ReqId id) {
    auto &slot = slots_[id % kStashDepth];
    if (slot.req_id == id) slot.valid = false;
}

std::optional<QueueId> Stash::lookup(ReqId id) const {
    const auto &slot = slots_[id % kStashDepth];
    if (slot.valid && slot.req_id == id) return slot.result_queue;
    return std::nullopt;
}

const char *drop_reason_name(DropReason reason) {
    switch (reason) {
    case DropReason::None: return "none";
    case DropReason::NoMatch: return "no_match";
    case DropReason::NoFirstPacket: return "no_first_packet";
    case DropReason::ReconfigGate: return "reconfig_gate";
    }
    return "unknown";
}

Cycles dispatch_cycles(std::size_t n) {
    // ingest + field decode + terminal fetch + emit + flush, then per step
    // RAM fetch + skip read + CAM compare.
    constexpr Cycles fixed = cycles::kStreamOp + cycles::kTlvDecode + cycles::kRamFetch + cycles::kEmit +
                             cycles::kFlushSegment;
    constexpr Cycles per_step = cycles::kRamFetch + cycles::kStreamOp + cycles::kCamCompare;
    static_assert(fixed == 9 && per_step == 6);
    return fixed + per_step * n;
}

std::size_t shard(ReqId req_id, std::size_t n_parallel) {
    if (n_parallel <= 1) return 0;
    const std::uint32_t h = req_id * 2654435761u;
    return static_cast<std::size_t>((std::uint64_t(h) * n_parallel) >> 32);
}

RsdEngine::RsdEngine(RsdConfig config, std::shared_ptr<const RuleTables> tables)
    : config_(config), tables_(std::move(tables)) {
    if (config_.n_parallel == 0) throw Error(Errc::InvalidConfig, "n_parallel must be at least 1");
    if (!tables_) tables_ = std::make_shared<const RuleTables>(config_.cam_width);
    if (tables_->cam_width() != config_.cam_width)
        throw Error(Errc::InvalidConfig, "rule tables compiled for a different CAM width");
    shards_.resize(config_.n_parallel);
}

void RsdEngine::swap_tables(std::shared_ptr<const RuleTables> tables) {
    if (!tables) throw Error(Errc::InvalidConfig, "null rule tables");
    if (tables->cam_width() != config_.cam_width)
        throw Error(Errc::InvalidConfig, "rule tables compiled for a different CAM width");
    std::atomic_store(&tables_, std::move(tables));
}

std::shared_ptr<const RuleTables> RsdEngine::tables() const {
    return std::atomic_load(&tables_);
}

DispatchResult RsdEngine::dispatch_packet(const QnpPacket &pkt) {
    const auto snapshot = tables();
    return dispatch_packet(pkt, *snapshot);
}

DispatchResult RsdEngine::dispatch_packet(const QnpPacket &pkt, const RuleTables &tables) {
    const auto &h = pkt.header;
    DispatchResult r;
    r.shard = shard(h.req_id, config_.n_parallel);
    auto &sh = shards_[r.shard];

    if (h.pkt_seq_num_in_req == 0) {
        Cycles cost = 0;
        auto q = match_first_packet(sh, pkt, tables, cost);
        if (!q) q = tables.default_queue({h.app_id, h.req_type});
        if (q) {
            stash_.store(h.req_id, *q);
        } else {
            stash_.invalidate(h.req_id);
        }
        r.queue = q;
        r.drop = q ? DropReason::None : DropReason::NoMatch;
        r.cycles = cost;
    } else {
        r.cycles = cycles::kStashLookup;
        if (auto q = stash_.lookup(h.req_id)) {
            r.queue = q;
            r.stash_hit = true;
        } else {
            r.drop = DropReason::NoFirstPacket;
        }
    }
    account(r);
    return r;
}

std::optional<QueueId> RsdEngine::match_first_packet(Shard &sh, const QnpPacket &pkt, const RuleTables &tables,
                                                     Cycles &cost) {
    auto &bs = sh.stream;
    const auto &h = pkt.header;
    const std::size_t segs = std::max<std::size_t>(h.seg_cnt, 1);
    const std::size_t ingest = std::min(segs * kSegmentBytes, pkt.payload.size());
    const ByteSpan payload(pkt.payload);
    for (std::size_t off = 0; off < ingest; off += kMaxStreamOp)
        cost += bs.write(payload.subspan(off, std::min(kMaxStreamOp, ingest - off)));

    auto consume = [&](std::size_t n) {
        while (n > 0) {
            const std::size_t k = std::min(n, std::min(kMaxStreamOp, bs.n_fifos()));
            if (bs.occupancy() < k) return false;
            cost += bs.read(k);
            n -= k;
        }
        return true;
    };

    auto walk = [&]() -> std::optional<QueueId> {
        const ScopeId scope{h.app_id, h.req_type};
        const RamEntry *entry = tables.ram_lookup(scope, 0);
        if (!entry) return std::nullopt;
        const std::uint8_t field = entry->field_index;

        // Walk TLV records up to the scoped field.
        std::size_t value_len = 0;
        for (;;) {
            if (bs.occupancy() < kTlvHeaderBytes) return std::nullopt;
            const Bytes hdr = bs.inspect(kTlvHeaderBytes);
            cost += cycles::kTlvDecode;
            const std::size_t len = (std::size_t(hdr[2]) << 8) | hdr[3];
            if (hdr[0] == field) {
                value_len = len;
                break;
            }
            if (!consume(kTlvHeaderBytes + len)) return std::nullopt;
        }

        const MatchScope cam_scope{h.app_id, h.req_type, field};
        std::size_t pending = kTlvHeaderBytes;  // inspected but not yet consumed
        std::size_t field_left = value_len;
        std::uint8_t state = 0;
        for (;;) {
            cost += cycles::kRamFetch;
            entry = tables.ram_lookup(scope, state);
            if (!entry) return std::nullopt;
            if (entry->terminal()) {
                if (entry->length_guard && *entry->length_guard != value_len) return std::nullopt;
                return entry->terminal_queue;
            }
            if (std::size_t(entry->skip_len) + entry->check_len > field_left) return std::nullopt;
            if (!consume(pending + entry->skip_len)) return std::nullopt;
            field_left -= entry->skip_len;
            if (bs.occupancy() < entry->check_len) return std::nullopt;
            const Bytes window = bs.inspect(entry->check_len);
            cost += cycles::kCamCompare;
            const auto next = tables.cam_lookup(cam_scope, state, window);
            if (!next) return std::nullopt;
            pending = entry->check_len;
            field_left -= entry->check_len;
            state = *next;
        }
    };

    const auto result = walk();
    cost += cycles::kEmit;
    cost += bs.flush();
    return result;
}

void RsdEngine::account(DispatchResult &r) {
    if (!config_.cycle_accounting) r.cycles = 0;
    auto &sh = shards_[r.shard];
    sh.cycles += r.cycles;
    ++sh.packets;
    total_cycles_ += r.cycles;
    if (r.queue) {
        ++dispatched_;
        if (r.stash_hit) ++stash_hits_;
    } else {
        record_drop(r.drop);
    }
}

void RsdEngine::record_drop(DropReason reason) {
    switch (reason) {
    case DropReason::NoMatch: ++dropped_no_match_; break;
    case DropReason::NoFirstPacket: ++dropped_no_first_; break;
    case DropReason::ReconfigGate: ++dropped_reconfig_; break;
    case DropReason::None: break;
    }
}

std::map<std::string, std::uint64_t> RsdEngine::metrics() const {
    return {{"dispatched", dispatched_},
            {"stash_hits", stash_hits_},
            {"dropped_no_match", dropped_no_match_},
            {"dropped_no_first", dropped_no_first_},
            {"dropped_reconfig", dropped_reconfig_},
            {"total_cycles", total_cycles_}};
}

}  // namespace qn

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

#ifndef QN_RSD_HPP_
#define QN_RSD_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qn/rules.hpp"
#include "qn/wire.hpp"

namespace qn {

using Cycles = std::uint64_t;

namespace cycles {
inline constexpr Cycles kStreamOp = 3;      // ByteStream read or write
inline constexpr Cycles kTlvDecode = 2;     // type/length/field-index decode of an inspected header
inline constexpr Cycles kRamFetch = 2;      // state entry fetch
inline constexpr Cycles kCamCompare = 1;    // one CAM search on the inspected window
inline constexpr Cycles kEmit = 1;          // dispatch result to the packet receive engine
inline constexpr Cycles kFlushSegment = 1;  // per 64-byte segment left in the stream
inline constexpr Cycles kStashLookup = 2;
}  // namespace cycles

inline constexpr std::size_t kNumFifos = 64;
inline constexpr std::size_t kFifoDepth = 128;
inline constexpr std::size_t kMaxStreamOp = 64;
inline constexpr std::size_t kStashDepth = 256;

/*
 * Serial byte buffer built from parallel first-word-fall-through FIFOs.
 *
 * Byte k of the stream lives in FIFO (origin + k) mod n_fifos, so a write
 * sprays bytes round-robin from write_idx and a read collects them from
 * read_idx.  Each operation moves at most 64 bytes; reads and inspects are
 * further limited to one head byte per FIFO.
 */
class ByteStream {
 public:
    explicit ByteStream(std::size_t n_fifos = kNumFifos, std::size_t depth = kFifoDepth);

    Cycles write(ByteSpan bytes);
    Cycles read(std::size_t n, Bytes *out = nullptr);
    Bytes inspect(std::size_t n) const;
    /// Drops every buffered byte; returns the flush cost.
    Cycles flush();

    std::size_t occupancy() const { return occupancy_; }
    std::size_t capacity() const { return n_fifos_ * depth_; }
    std::size_t n_fifos() const { return n_fifos_; }
    std::size_t read_idx() const { return read_idx_; }
    std::size_t write_idx() const { return write_idx_; }
    /// Contents of one FIFO, head first.
    Bytes fifo(std::size_t index) const;

 private:
    std::size_t max_read() const { return std::min(kMaxStreamOp, n_fifos_); }

    std::size_t n_fifos_;
    std::size_t depth_;
    std::vector<std::uint8_t> cells_;  // n_fifos_ rings of depth_ bytes
    std::vector<std::size_t> head_;
    std::vector<std::size_t> count_;
    std::size_t read_idx_ = 0;
    std::size_t write_idx_ = 0;
    std::size_t occupancy_ = 0;
};

struct StashEntry {
    QueueId result_queue = 0;
    ReqId req_id = 0;
    bool valid = false;
};

/// Direct-mapped req_id -> queue cache for non-first packets.
class Stash {
 public:
    void store(ReqId id, QueueId queue) { slots_[id % kStashDepth] = {queue, id, true}; }
    void invalidate(ReqId id);
    std::optional<QueueId> lookup(ReqId id) const;

 private:
    std::array<StashEntry, kStashDepth> slots_{};
};

struct RsdConfig {
    std::size_t n_parallel = 4;
    std::size_t cam_width = kDefaultCamWidth;
    bool cycle_accounting = true;
};

enum class DropReason { None, NoMatch, NoFirstPacket, ReconfigGate };

const char *drop_reason_name(DropReason reason);

struct DispatchResult {
    std::optional<QueueId> queue;
    DropReason drop = DropReason::None;
    Cycles cycles = 0;
    bool stash_hit = false;
    std::size_t shard = 0;

    bool dropped() const { return !queue.has_value(); }
};

/// Modelled cost of a single-segment first packet with n skip-and-checks.
Cycles dispatch_cycles(std::size_t n_skip_and_checks);

std::size_t shard(ReqId req_id, std::size_t n_parallel);

/*
 * Receive side dispatch over parallel RSD instances.
 *
 * A first packet is ingested (seg_cnt segments), its TLV records are walked
 * to the scope's field, and the compiled machine alternates ByteStream reads
 * (skip) with inspect + CAM compares (check).  The decision is cached in the
 * stash; later packets of the request are resolved from there alone.
 */
class RsdEngine {
 public:
    RsdEngine(RsdConfig config, std::shared_ptr<const RuleTables> tables);

    DispatchResult dispatch_packet(const QnpPacket &pkt);
    DispatchResult dispatch_packet(const QnpPacket &pkt, const RuleTables &tables);

    /// Replaces the whole table set; takes effect from the next packet.
    void swap_tables(std::shared_ptr<const RuleTables> tables);
    std::shared_ptr<const RuleTables> tables() const;

    void record_drop(DropReason reason);

    const RsdConfig &config() const { return config_; }
    Cycles shard_cycles(std::size_t index) const { return shards_.at(index).cycles; }
    std::uint64_t shard_packets(std::size_t index) const { return shards_.at(index).packets; }

    std::map<std::string, std::uint64_t> metrics() const;

 private:
    struct Shard {
        ByteStream stream;
        Cycles cycles = 0;
        std::uint64_t packets = 0;
    };

    std::optional<QueueId> match_first_packet(Shard &shard, const QnpPacket &pkt, const RuleTables &tables,
                                              Cycles &cost);
    void account(DispatchResult &r);

    RsdConfig config_;
    std::shared_ptr<const RuleTables> tables_;
    std::vector<Shard> shards_;
    Stash stash_;

    std::uint64_t dispatched_ = 0;
    std::uint64_t stash_hits_ = 0;
    std::uint64_t dropped_no_match_ = 0;
    std::uint64_t dropped_no_first_ = 0;
    std::uint64_t dropped_reconfig_ = 0;
    Cycles total_cycles_ = 0;
};

}  // namespace qn

#endif  // QN_RSD_HPP_

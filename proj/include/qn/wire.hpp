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

#ifndef QN_WIRE_HPP_
#define QN_WIRE_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qn/idl.hpp"

namespace qn {

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;
using ReqId = std::uint32_t;

// Frame budget: 14 (Eth) + 20 (IP) + 8 (UDP) + 22 (QNP) = 64, one 512-bit beat.
inline constexpr std::size_t kFrameMtu = 1500;
inline constexpr std::size_t kPreambleBytes = 42;
inline constexpr std::size_t kPadSize = 4;
inline constexpr std::size_t kHeaderBytes = 22;
inline constexpr std::size_t kHeaderModelBytes = kPreambleBytes + kHeaderBytes;
inline constexpr std::size_t kMaxPayloadBytes = kFrameMtu - kHeaderModelBytes;  // 1436
inline constexpr std::size_t kTlvHeaderBytes = 4;
inline constexpr std::size_t kMaxFieldBytes = kMaxPayloadBytes - kTlvHeaderBytes;  // 1432
inline constexpr std::size_t kMaxPacketsPerRequest = 4;
inline constexpr std::size_t kSegmentBytes = 64;

enum class PacketFlag : std::uint8_t {
    Data = 0,
    Ack = 1,
};

struct QnpHeader {
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;
    ReqId req_id = 0;
    ReqId req_acked_id = 0;  // 0: nothing piggybacked
    std::uint32_t req_len_in_bytes = 0;
    std::uint8_t req_len_in_pkts = 0;
    std::uint8_t pkt_seq_num_in_req = 0;
    PacketFlag pkt_flag = PacketFlag::Data;
    std::uint8_t seg_cnt = 0;

    bool is_data() const { return pkt_flag == PacketFlag::Data; }
    bool operator==(const QnpHeader &) const = default;
};

struct QnpPacket {
    QnpHeader header;
    Bytes payload;

    bool operator==(const QnpPacket &) const = default;
};

using Value = std::variant<std::int32_t, std::string>;

struct Request {
    std::shared_ptr<const RequestSchema> schema;
    std::vector<Value> values;  // indexed by field index

    const std::string &str(std::uint8_t index) const { return std::get<std::string>(values.at(index)); }
    std::int32_t int32(std::uint8_t index) const { return std::get<std::int32_t>(values.at(index)); }

    bool operator==(const Request &other) const;
};

/// Throws KindMismatch / MissingField / FieldTooLarge if `r` does not fit its schema.
void validate_request(const Request &r);

// TLV record: field_index:1 kind:1 length:2 (big-endian) value:length
struct TlvRecord {
    std::uint8_t field_index;
    std::uint8_t kind;
    std::uint16_t length;
    ByteSpan value;
};

void append_tlv(Bytes &out, std::uint8_t field_index, const Value &value);
Bytes encode_tlv(const Request &request);

/// Splits one payload into records. Throws Truncated on a partial record.
std::vector<TlvRecord> parse_tlv_records(ByteSpan payload);

Request decode_tlv(std::span<const Bytes> payloads, std::shared_ptr<const RequestSchema> schema);

std::uint8_t compute_seg_cnt(ByteSpan first_packet_payload, std::size_t dispatch_byte_end);

/// Byte length of the dispatch-field records at the head of packet 0.
std::size_t dispatch_byte_end(const QnpPacket &first, const RequestSchema &schema);

std::vector<QnpPacket> segment_request(const Request &request, ReqId req_id, ReqId acked);

std::array<std::uint8_t, kHeaderBytes> encode_header(const QnpHeader &h);

struct DecodedHeader {
    QnpHeader header;
    bool padding_nonzero = false;
};

DecodedHeader decode_header(ByteSpan bytes);

QnpPacket make_ack(std::uint8_t app_id, std::uint8_t req_type, ReqId acked);

// Simulated frame: constant 42-byte preamble + header + payload.
Bytes encode_frame(const QnpPacket &pkt);
QnpPacket decode_frame(ByteSpan frame);

// UDP datagram: header + payload; the kernel supplies the real preamble.
Bytes encode_datagram(const QnpPacket &pkt);
QnpPacket decode_datagram(ByteSpan datagram);

std::string to_hex(ByteSpan bytes);
Bytes from_hex(std::string_view hex);

}  // namespace qn

#endif  // QN_WIRE_HPP_

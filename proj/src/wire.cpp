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

#include "qn/wire.hpp"

#include <algorithm>
#include <cstring>

namespace qn {

namespace {

void put_u16(std::uint8_t *p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v >> 8);
    p[1] = static_cast<std::uint8_t>(v);
}

void put_u32(std::uint8_t *p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v >> 24);
    p[1] = static_cast<std::uint8_t>(v >> 16);
    p[2] = static_cast<std::uint8_t>(v >> 8);
    p[3] = static_cast<std::uint8_t>(v);
}

std::uint16_t get_u16(const std::uint8_t *p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t get_u32(const std::uint8_t *p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

// Ethernet (IPv4 ethertype) + IPv4 (ihl 5, proto UDP) + UDP, addresses zeroed.
constexpr std::array<std::uint8_t, kPreambleBytes> kPreamble = [] {
    std::array<std::uint8_t, kPreambleBytes> p{};
    p[12] = 0x08;
    p[13] = 0x00;
    p[14] = 0x45;
    p[22] = 64;
    p[23] = 17;
    return p;
}();

std::vector<std::uint8_t> serialization_order(const RequestSchema &s) {
    if (s.order.size() == s.fields.size() && s.is_canonical()) return s.order;
    return canonicalize(s).order;
}

std::size_t record_size(const Value &v) {
    if (std::holds_alternative<std::int32_t>(v)) return kTlvHeaderBytes + 4;
    return kTlvHeaderBytes + std::get<std::string>(v).size();
}

}  // namespace

bool Request::operator==(const Request &other) const {
    const bool same_schema = schema == other.schema || (schema && other.schema && *schema == *other.schema);
    return same_schema && values == other.values;
}

void validate_request(const Request &r) {
    if (!r.schema) throw Error(Errc::MissingField, "request has no schema");
    const auto &s = *r.schema;
    if (r.values.size() != s.fields.size())
        throw Error(Errc::MissingField, "request " + s.name + ": expected " + std::to_string(s.fields.size()) +
                                            " values, got " + std::to_string(r.values.size()));
    for (const auto &f : s.fields) {
        const auto &v = r.values[f.index];
        const bool is_int = std::holds_alternative<std::int32_t>(v);
        if (is_int != (f.kind == FieldKind::Int32))
            throw Error(Errc::KindMismatch, "request " + s.name + ": field " + f.name + " expects " +
                                                field_kind_name(f.kind));
        if (!is_int && std::get<std::string>(v).size() > kMaxFieldBytes)
            throw Error(Errc::FieldTooLarge, "request " + s.name + ": field " + f.name + " exceeds " +
                                                 std::to_string(kMaxFieldBytes) + " bytes");
    }
}

void append_tlv(Bytes &out, std::uint8_t field_index, const Value &value) {
    const std::size_t base = out.size();
    if (const auto *i = std::get_if<std::int32_t>(&value)) {
        out.resize(base + kTlvHeaderBytes + 4);
        out[base] = field_index;
        out[base + 1] = static_cast<std::uint8_t>(FieldKind::Int32);
        put_u16(&out[base + 2], 4);
        put_u32(&out[base + 4], static_cast<std::uint32_t>(*i));
        return;
    }
    const auto &s = std::get<std::string>(value);
    if (s.size() > kMaxFieldBytes)
        throw Error(Errc::FieldTooLarge, "string value of " + std::to_string(s.size()) + " bytes exceeds " +
                                             std::to_string(kMaxFieldBytes));
    out.resize(base + kTlvHeaderBytes + s.size());
    out[base] = field_index;
    out[base + 1] = static_cast<std::uint8_t>(FieldKind::String);
    put_u16(&out[base + 2], static_cast<std::uint16_t>(s.size()));
    std::memcpy(out.data() + base + kTlvHeaderBytes, s.data(), s.size());
}

Bytes encode_tlv(const Request &request) {
    validate_request(request);
    Bytes out;
    for (auto idx : serialization_order(*request.schema)) append_tlv(out, idx, request.values[idx]);
    return out;
}

std::vector<TlvRecord> parse_tlv_records(ByteSpan payload) {
    std::vector<TlvRecord> out;
    std::size_t pos = 0;
    while (pos < payload.size()) {
        if (payload.size() - pos < kTlvHeaderBytes)
            throw Error(Errc::Truncated, "truncated TLV header at offset " + std::to_string(pos));
        TlvRecord rec{payload[pos], payload[pos + 1], get_u16(&payload[pos + 2]), {}};
        pos += kTlvHeaderBytes;
        if (payload.size() - pos < rec.length)
            throw Error(Errc::Truncated, "truncated TLV value for field " + std::to_string(rec.field_index));
        rec.value = payload.subspan(pos, rec.length);
        pos += rec.length;
        out.push_back(rec);
    }
    return out;
}

Request decode_tlv(std::span<const Bytes> payloads, std::shared_ptr<const RequestSchema> schema) {
    const auto &s = *schema;
    std::vector<std::optional<Value>> slots(s.fields.size());
    for (const auto &payload : payloads) {
        for (const auto &rec : parse_tlv_records(payload)) {
            if (rec.field_index >= s.fields.size())
                throw Error(Errc::UnknownField, "unknown field index " + std::to_string(rec.field_index));
            const auto &f = s.fields[rec.field_index];
            if (rec.kind != static_cast<std::uint8_t>(f.kind))
                throw Error(Errc::KindMismatch, "field " + f.name + " has type tag " + std::to_string(rec.kind));
            if (slots[f.index])
                throw Error(Errc::DuplicateField, "field " + f.name + " appears twice");
            if (f.kind == FieldKind::Int32) {
                if (rec.length != 4)
                    throw Error(Errc::BadLength, "int32 field " + f.name + " has length " + std::to_string(rec.length));
                slots[f.index] = static_cast<std::int32_t>(get_u32(rec.value.data()));
            } else {
                slots[f.index] = std::string(rec.value.begin(), rec.value.end());
            }
        }
    }
    Request r{std::move(schema), {}};
    r.values.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) throw Error(Errc::MissingField, "field " + r.schema->fields[i].name + " missing");
        r.values.push_back(std::move(*slots[i]));
    }
    return r;
}

std::uint8_t compute_seg_cnt(ByteSpan first_packet_payload, std::size_t dispatch_byte_end) {
    if (dispatch_byte_end > first_packet_payload.size())
        throw Error(Errc::BadLength, "dispatch range ends past the payload");
    const std::size_t segs = (dispatch_byte_end + kSegmentBytes - 1) / kSegmentBytes;
    return static_cast<std::uint8_t>(std::max<std::size_t>(segs, 1));
}

std::size_t dispatch_byte_end(const QnpPacket &first, const RequestSchema &schema) {
    std::size_t end = 0;
    for (const auto &rec : parse_tlv_records(first.payload)) {
        if (rec.field_index >= schema.fields.size() || !schema.fields[rec.field_index].is_dispatch) break;
        end += kTlvHeaderBytes + rec.length;
    }
    return end;
}

std::vector<QnpPacket> segment_request(const Request &request, ReqId req_id, ReqId acked) {
    validate_request(request);
    const auto &s = *request.schema;

    std::vector<Bytes> payloads(1);
    std::size_t dispatch_end = 0;
    for (auto idx : serialization_order(s)) {
        const auto &v = request.values[idx];
        const std::size_t sz = record_size(v);
        if (s.fields[idx].is_dispatch) {
            if (payloads.size() > 1 || payloads[0].size() + sz > kMaxPayloadBytes)
                throw Error(Errc::DispatchTooLarge, "dispatch fields of " + s.name + " do not fit one packet");
            append_tlv(payloads[0], idx, v);
            dispatch_end = payloads[0].size();
            continue;
        }
        if (payloads.back().size() + sz > kMaxPayloadBytes) payloads.emplace_back();
        append_tlv(payloads.back(), idx, v);
    }
    if (payloads.size() > kMaxPacketsPerRequest)
        throw Error(Errc::RequestTooLarge, "request " + s.name + " needs " + std::to_string(payloads.size()) +
                                               " packets (max " + std::to_string(kMaxPacketsPerRequest) + ")");

    std::size_t total = 0;
    for (const auto &p : payloads) total += p.size();
    const std::uint8_t seg_cnt = compute_seg_cnt(payloads[0], dispatch_end);

    std::vector<QnpPacket> out;
    out.reserve(payloads.size());
    for (std::size_t i = 0; i < payloads.size(); ++i) {
        QnpHeader h;
        h.app_id = s.app_id;
        h.req_type = s.req_type;
        h.req_id = req_id;
        h.req_acked_id = acked;
        h.req_len_in_bytes = static_cast<std::uint32_t>(total);
        h.req_len_in_pkts = static_cast<std::uint8_t>(payloads.size());
        h.pkt_seq_num_in_req = static_cast<std::uint8_t>(i);
        h.pkt_flag = PacketFlag::Data;
        h.seg_cnt = seg_cnt;
        out.push_back({h, std::move(payloads[i])});
    }
    return out;
}

std::array<std::uint8_t, kHeaderBytes> encode_header(const QnpHeader &h) {
    std::array<std::uint8_t, kHeaderBytes> b{};
    b[0] = h.app_id;
    b[1] = h.req_type;
    put_u32(&b[2], h.req_id);
    put_u32(&b[6], h.req_acked_id);
    put_u32(&b[10], h.req_len_in_bytes);
    b[14] = h.req_len_in_pkts;
    b[15] = h.pkt_seq_num_in_req;
    b[16] = static_cast<std::uint8_t>(h.pkt_flag);
    b[17] = h.seg_cnt;
    // b[18..21] padding stays zero
    return b;
}

DecodedHeader decode_header(ByteSpan bytes) {
    if (bytes.size() < kHeaderBytes)
        throw Error(Errc::ShortBuffer, "QNP header needs " + std::to_string(kHeaderBytes) + " bytes, got " +
                                           std::to_string(bytes.size()));
    DecodedHeader out;
    auto &h = out.header;
    h.app_id = bytes[0];
    h.req_type = bytes[1];
    h.req_id = get_u32(&bytes[2]);
    h.req_acked_id = get_u32(&bytes[6]);
    h.req_len_in_bytes = get_u32(&bytes[10]);
    h.req_len_in_pkts = bytes[14];
    h.pkt_seq_num_in_req = bytes[15];
    if (bytes[16] > 1) throw Error(Errc::MalformedHeader, "unknown pkt_flag " + std::to_string(bytes[16]));
    h.pkt_flag = static_cast<PacketFlag>(bytes[16]);
    h.seg_cnt = bytes[17];
    for (std::size_t i = 18; i < kHeaderBytes; ++i) out.padding_nonzero |= bytes[i] != 0;
    return out;
}

QnpPacket make_ack(std::uint8_t app_id, std::uint8_t req_type, ReqId acked) {
    QnpPacket p;
    p.header.app_id = app_id;
    p.header.req_type = req_type;
    p.header.req_id = acked;
    p.header.req_acked_id = acked;
    p.header.pkt_flag = PacketFlag::Ack;
    return p;
}

namespace {

void check_packet_shape(const QnpPacket &pkt) {
    if (pkt.payload.size() > kMaxPayloadBytes)
        throw Error(Errc::MalformedHeader, "payload of " + std::to_string(pkt.payload.size()) + " bytes exceeds MTU");
    const auto &h = pkt.header;
    if (h.is_data()) {
        if (h.req_len_in_pkts < 1 || h.req_len_in_pkts > kMaxPacketsPerRequest)
            throw Error(Errc::MalformedHeader, "req_len_in_pkts out of range");
        if (h.pkt_seq_num_in_req >= h.req_len_in_pkts)
            throw Error(Errc::MalformedHeader, "pkt_seq_num_in_req beyond request length");
    }
}

QnpPacket decode_body(ByteSpan bytes) {
    QnpPacket pkt;
    pkt.header = decode_header(bytes).header;
    pkt.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
    check_packet_shape(pkt);
    return pkt;
}

}  // namespace

Bytes encode_frame(const QnpPacket &pkt) {
    check_packet_shape(pkt);
    const auto hdr = encode_header(pkt.header);
    Bytes out(kHeaderModelBytes + pkt.payload.size());
    std::copy(kPreamble.begin(), kPreamble.end(), out.begin());
    std::copy(hdr.begin(), hdr.end(), out.begin() + kPreambleBytes);
    std::copy(pkt.payload.begin(), pkt.payload.end(), out.begin() + kHeaderModelBytes);
    return out;
}

QnpPacket decode_frame(ByteSpan frame) {
    if (frame.size() < kHeaderModelBytes)
        throw Error(Errc::ShortBuffer, "frame of " + std::to_string(frame.size()) + " bytes is shorter than headers");
    if (frame.size() > kFrameMtu)
        throw Error(Errc::MalformedHeader, "frame exceeds MTU");
    return decode_body(frame.subspan(kPreambleBytes));
}

Bytes encode_datagram(const QnpPacket &pkt) {
    check_packet_shape(pkt);
    const auto hdr = encode_header(pkt.header);
    Bytes out(kHeaderBytes + pkt.payload.size());
    std::copy(hdr.begin(), hdr.end(), out.begin());
    std::copy(pkt.payload.begin(), pkt.payload.end(), out.begin() + kHeaderBytes);
    return out;
}

QnpPacket decode_datagram(ByteSpan datagram) {
    return decode_body(datagram);
}

std::string to_hex(ByteSpan bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out += kDigits[b >> 4];
        out += kDigits[b & 0xf];
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    int hi = -1;
    for (char c : hex) {
        const int n = nibble(c);
        if (n < 0) {
            if (c == ' ' || c == '\n' || c == '\t' || c == '\r') continue;
            throw Error(Errc::InvalidConfig, std::string("bad hex digit '") + c + "'");
        }
        if (hi < 0) {
            hi = n;
        } else {
            out.push_back(static_cast<std::uint8_t>((hi << 4) | n));
            hi = -1;
        }
    }
    if (hi >= 0) throw Error(Errc::InvalidConfig, "odd number of hex digits");
    return out;
}

}  // namespace qn

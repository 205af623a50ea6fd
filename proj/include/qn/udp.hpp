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

#ifndef QN_UDP_HPP_
#define QN_UDP_HPP_

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qn/rsd.hpp"
#include "qn/transport.hpp"

namespace qn {

struct UdpAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

/// IPv4 datagram socket; QNP datagrams carry the 22-byte header and payload only.
class UdpSocket {
 public:
    explicit UdpSocket(std::uint16_t port = 0, const std::string &host = "127.0.0.1");
    ~UdpSocket();
    UdpSocket(const UdpSocket &) = delete;
    UdpSocket &operator=(const UdpSocket &) = delete;

    std::uint16_t port() const { return port_; }
    void send_to(const UdpAddress &to, ByteSpan datagram);
    std::optional<std::pair<Bytes, UdpAddress>> recv(std::chrono::milliseconds timeout);

 private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

SimTime wall_now();

/*
 * Real-time QNP endpoint over one socket and one peer.  With rule tables
 * the receive path runs the dispatch engine; without, everything lands on
 * queue 0.
 */
class UdpEndpoint {
 public:
    UdpEndpoint(std::uint16_t port, SchemaRegistry schemas, std::shared_ptr<const RuleTables> tables = nullptr);

    void set_peer(UdpAddress peer) { peer_ = std::move(peer); }
    const std::optional<UdpAddress> &peer() const { return peer_; }
    std::uint16_t port() const { return socket_.port(); }

    ReqId send(const Request &request);
    /// Waits up to `timeout` for one datagram, then runs timers; returns deliveries.
    std::vector<Delivery> poll(std::chrono::milliseconds timeout);

    Sender &sender() { return sender_; }
    Receiver &receiver() { return receiver_; }
    std::vector<ReqId> take_failures();

 private:
    void transmit(const QnpPacket &pkt);

    UdpSocket socket_;
    std::optional<UdpAddress> peer_;
    std::unique_ptr<RsdEngine> engine_;
    Sender sender_;
    Receiver receiver_;
    std::vector<ReqId> failures_;
};

struct UdpPingResult {
    std::uint64_t sent = 0;
    std::uint64_t completed = 0;
    std::uint64_t failures = 0;
    std::vector<SimTime> latencies;
};

/// Echoes PingPong requests until `max_requests` are served or the link is idle for `idle`.
std::uint64_t udp_serve(UdpEndpoint &server, std::uint64_t max_requests, std::chrono::milliseconds idle);

/// Closed-loop PingPong client: `count` requests of `request_size` frame bytes.
UdpPingResult udp_ping(UdpEndpoint &client, std::uint64_t count, std::size_t request_size,
                       std::chrono::milliseconds timeout);

}  // namespace qn

#endif  // QN_UDP_HPP_

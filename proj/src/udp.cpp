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

#include "qn/udp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>

#include "qn/bench.hpp"

namespace qn {

namespace {

[[noreturn]] void sys_fail(const std::string &what) {
    throw Error(Errc::Io, what + ": " + std::strerror(errno));
}

sockaddr_in make_addr(const std::string &host, std::uint16_t port) {
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) throw Error(Errc::Io, "bad IPv4 address " + host);
    return a;
}

}  // namespace

UdpSocket::UdpSocket(std::uint16_t port, const std::string &host) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) sys_fail("socket");
    auto addr = make_addr(host, port);
    if (::bind(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0) {
        ::close(fd_);
        sys_fail("bind");
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr *>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

UdpSocket::~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
}

void UdpSocket::send_to(const UdpAddress &to, ByteSpan datagram) {
    auto addr = make_addr(to.host, to.port);
    if (::sendto(fd_, datagram.data(), datagram.size(), 0, reinterpret_cast<sockaddr *>(&addr), sizeof addr) < 0)
        sys_fail("sendto");
}

std::optional<std::pair<Bytes, UdpAddress>> UdpSocket::recv(std::chrono::milliseconds timeout) {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, int(timeout.count()));
    if (r < 0) {
        if (errno == EINTR) return std::nullopt;
        sys_fail("poll");
    }
    if (r == 0) return std::nullopt;
    Bytes buf(kFrameMtu);
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr *>(&from), &len);
    if (n < 0) sys_fail("recvfrom");
    buf.resize(std::size_t(n));
    char host[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &from.sin_addr, host, sizeof host);
    return std::make_pair(std::move(buf), UdpAddress{host, ntohs(from.sin_port)});
}

SimTime wall_now() {
    return std::chrono::duration_cast<SimTime>(std::chrono::steady_clock::now().time_since_epoch());
}

UdpEndpoint::UdpEndpoint(std::uint16_t port, SchemaRegistry schemas, std::shared_ptr<const RuleTables> tables)
    : socket_(port), receiver_(std::move(schemas)) {
    if (tables) {
        RsdConfig cfg;
        cfg.cam_width = tables->cam_width();
        engine_ = std::make_unique<RsdEngine>(cfg, std::move(tables));
    }
}

void UdpEndpoint::transmit(const QnpPacket &pkt) {
    if (!peer_) throw Error(Errc::InvalidConfig, "UDP endpoint has no peer");
    socket_.send_to(*peer_, encode_datagram(pkt));
}

ReqId UdpEndpoint::send(const Request &request) {
    auto sent = sender_.send_req(request, wall_now());
    for (const auto &p : sent.packets) transmit(p);
    return sent.req_id;
}

std::vector<ReqId> UdpEndpoint::take_failures() { return std::exchange(failures_, {}); }

std::vector<Delivery> UdpEndpoint::poll(std::chrono::milliseconds timeout) {
    std::vector<Delivery> out;
    if (auto got = socket_.recv(timeout)) {
        if (!peer_) peer_ = got->second;
        std::optional<QnpPacket> pkt;
        try {
            pkt = decode_datagram(got->first);
        } catch (const Error &) {
        }
        if (pkt && !pkt->header.is_data()) {
            sender_.on_ack(pkt->header.req_acked_id);
        } else if (pkt) {
            std::optional<QueueId> q = QueueId(0);
            if (engine_) q = engine_->dispatch_packet(*pkt).queue;
            if (q) {
                if (pkt->header.req_acked_id) sender_.on_ack(pkt->header.req_acked_id);
                auto ev = receiver_.on_data(*pkt, *q, wall_now());
                for (const auto &ack : ev.acks) transmit(ack);
                if (ev.completed) sender_.set_pending_ack(*ev.completed);
                for (auto &d : ev.delivered) {
                    receiver_.recv_req(d.queue);
                    out.push_back(std::move(d));
                }
            }
        }
    }
    const auto now = wall_now();
    auto t = sender_.tick(now);
    for (const auto &p : t.retransmits) transmit(p);
    failures_.insert(failures_.end(), t.failures.begin(), t.failures.end());
    receiver_.tick(now);
    return out;
}

std::uint64_t udp_serve(UdpEndpoint &server, std::uint64_t max_requests, std::chrono::milliseconds idle) {
    std::uint64_t served = 0;
    auto last = std::chrono::steady_clock::now();
    while (served < max_requests || server.sender().unacked_size() > 0) {
        auto got = server.poll(std::chrono::milliseconds(10));
        const auto now = std::chrono::steady_clock::now();
        if (!got.empty()) last = now;
        for (const auto &d : got) {
            server.send(d.request);
            ++served;
        }
        if (now - last > idle) break;
    }
    return served;
}

UdpPingResult udp_ping(UdpEndpoint &client, std::uint64_t count, std::size_t request_size,
                       std::chrono::milliseconds timeout) {
    WorkloadSpec spec;
    spec.request_size = request_size;
    auto schema = std::make_shared<const RequestSchema>(pingpong_schema());
    const std::string key = pingpong_key(spec, 0);
    const std::string body(pingpong_body_size(spec), 'b');

    UdpPingResult r;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::map<std::int32_t, SimTime> started;
    std::map<ReqId, std::int32_t> ids;
    auto issue = [&] {
        const auto seq = std::int32_t(r.sent++);
        started[seq] = wall_now();
        ids[client.send(Request{schema, {key, std::int32_t(0), seq, body}})] = seq;
    };
    issue();
    while (r.completed + r.failures < count && std::chrono::steady_clock::now() < deadline) {
        bool next = false;
        for (const auto &d : client.poll(std::chrono::milliseconds(10))) {
            auto it = started.find(d.request.int32(2));
            if (it == started.end()) continue;
            r.latencies.push_back(wall_now() - it->second);
            started.erase(it);
            ++r.completed;
            next = true;
        }
        for (auto id : client.take_failures()) {
            if (ids.count(id)) {
                ++r.failures;
                next = true;
            }
        }
        if (next && r.sent < count) issue();
    }
    return r;
}

}  // namespace qn

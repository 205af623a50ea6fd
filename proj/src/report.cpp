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

#include <fstream>
#include <sstream>

#include "qn/bench.hpp"

namespace qn {

namespace {

double us(SimTime t) { return std::chrono::duration<double, std::micro>(t).count(); }

}  // namespace

std::string report_header() {
    return "app,dispatch,n_apps,n_app_threads,n_generators,window,request_size,rule_steps,n_requests,seed,"
           "loss_p,dup_p,reorder_p,reorder_d,sent,completed,failures,elapsed_us,throughput_rps,p50_us,p99_us,"
           "total_cycles,cycles_per_request,stash_hit_ratio,retransmissions,dropped_no_match,dropped_no_first,"
           "dropped_reconfig,sentinel_hits,comparisons";
}

std::string report_row(const Metrics &m) {
    const auto &s = m.spec;
    const auto &l = m.sim.link;
    std::ostringstream os;
    os << app_kind_name(s.app) << ',' << dispatch_mode_name(s.dispatch) << ',' << s.n_apps << ',' << s.n_app_threads
       << ',' << s.n_generators << ',' << s.window << ',' << s.request_size << ',' << s.rule_steps << ','
       << s.n_requests << ',' << s.seed << ',' << l.loss_p << ',' << l.dup_p << ',' << l.reorder_p << ','
       << l.reorder_d << ',' << m.sent << ',' << m.completed << ',' << m.failures << ',' << us(m.elapsed) << ','
       << m.throughput_rps << ',' << us(m.latency.percentile(50)) << ',' << us(m.latency.percentile(99)) << ','
       << m.total_cycles << ',' << m.cycles_per_request << ',' << m.stash_hit_ratio << ','
       << m.counter("client.retransmissions") + m.counter("server.retransmissions") << ','
       << m.counter("server.dropped_no_match") << ',' << m.counter("server.dropped_no_first") << ','
       << m.counter("server.dropped_reconfig") << ',' << m.sentinel_hits << ',' << m.comparisons;
    return os.str();
}

void emit_report(const Metrics &m, const std::string &path) {
    const std::string header = report_header();
    bool fresh = true;
    {
        std::ifstream in(path);
        std::string first;
        if (in && std::getline(in, first)) {
            if (first != header) throw Error(Errc::Io, path + " has a different CSV header");
            fresh = false;
        }
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error(Errc::Io, "cannot write " + path);
    if (fresh) out << header << '\n';
    out << report_row(m) << '\n';
    if (!out) throw Error(Errc::Io, "write to " + path + " failed");
}

}  // namespace qn

// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "graphcm/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "graphcm/rng.hpp"

namespace graphcm {

const char* edge_kind_name(EdgeKind k) {
    return k == EdgeKind::MultiHop ? "MULTI_HOP" : "CONSECUTIVE";
}

HomogeneousGraph::HomogeneousGraph(std::string domain, std::int64_t node_count)
    : domain_(std::move(domain)) {
    if (node_count < 1) {
        throw std::invalid_argument("HomogeneousGraph: node_count must be positive");
    }
    adj_.resize(static_cast<std::size_t>(node_count));
}

void HomogeneousGraph::check_node(std::int64_t n) const {
    if (n < 0 || n >= node_count()) {
        throw std::out_of_range("graph node " + std::to_string(n) + " out of [0," +
                                std::to_string(node_count()) + ")");
    }
}

void HomogeneousGraph::add_edge(std::int64_t u, std::int64_t v, EdgeKind kind) {
    check_node(u);
    check_node(v);
    if (u == v) { return; }
    adj_[static_cast<std::size_t>(u)].emplace_back(v, kind);
    adj_[static_cast<std::size_t>(v)].emplace_back(u, kind);
    finalized_ = false;
}

void HomogeneousGraph::finalize() {
    for (auto& list : adj_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    finalized_ = true;
}

const std::vector<std::pair<std::int64_t, EdgeKind>>& HomogeneousGraph::neighbors(
    std::int64_t node) const {
    check_node(node);
    if (!finalized_) { throw std::logic_error("HomogeneousGraph: finalize() before queries"); }
    return adj_[static_cast<std::size_t>(node)];
}

std::vector<std::int64_t> HomogeneousGraph::neighbor_ids(std::int64_t node) const {
    std::vector<std::int64_t> out;
    for (const auto& [n, k] : neighbors(node)) {
        if (out.empty() || out.back() != n) { out.push_back(n); }
    }
    return out;
}

std::vector<std::int64_t> HomogeneousGraph::neighbor_ids(std::int64_t node, EdgeKind kind) const {
    std::vector<std::int64_t> out;
    for (const auto& [n, k] : neighbors(node)) {
        if (k == kind) { out.push_back(n); }
    }
    return out;
}

std::int64_t HomogeneousGraph::degree(std::int64_t node) const {
    return static_cast<std::int64_t>(neighbor_ids(node).size());
}

bool HomogeneousGraph::has_edge(std::int64_t u, std::int64_t v, EdgeKind kind) const {
    const auto& list = neighbors(u);
    return std::binary_search(list.begin(), list.end(), std::make_pair(v, kind));
}

std::int64_t HomogeneousGraph::edge_count(EdgeKind kind) const {
    if (!finalized_) { throw std::logic_error("HomogeneousGraph: finalize() before queries"); }
    std::int64_t n = 0;
    for (const auto& list : adj_) {
        for (const auto& [_, k] : list) {
            if (k == kind) { ++n; }
        }
    }
    return n / 2;
}

std::int64_t HomogeneousGraph::edge_count() const {
    return edge_count(EdgeKind::MultiHop) + edge_count(EdgeKind::Consecutive);
}

void HomogeneousGraph::save_file(const std::string& path) const {
    if (!finalized_) { throw std::logic_error("HomogeneousGraph: finalize() before save"); }
    std::ofstream os(path, std::ios::binary);
    if (!os) { throw std::runtime_error("cannot open graph file for writing: " + path); }
    os << "graphcm-graph 1 " << domain_ << " " << node_count() << "\n";
    for (std::int64_t u = 0; u < node_count(); ++u) {
        for (const auto& [v, k] : adj_[static_cast<std::size_t>(u)]) {
            if (u < v) { os << u << " " << v << " " << edge_kind_name(k) << "\n"; }
        }
    }
    if (!os) { throw std::runtime_error("failed writing graph: " + path); }
}

HomogeneousGraph HomogeneousGraph::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open graph file: " + path); }
    std::string line;
    if (!std::getline(is, line)) { throw std::runtime_error("graph file empty: " + path); }
    std::istringstream hs(line);
    std::string magic, domain;
    int version = 0;
    std::int64_t node_count = 0;
    hs >> magic >> version >> domain >> node_count;
    if (!hs || magic != "graphcm-graph" || version != 1) {
        throw std::runtime_error("graph file " + path + ": bad header \"" + line + "\"");
    }
    HomogeneousGraph g(domain, node_count);
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) { continue; }
        std::istringstream ls(line);
        std::int64_t u = 0, v = 0;
        std::string kind;
        ls >> u >> v >> kind;
        if (!ls) {
            throw std::runtime_error("graph file " + path + " line " + std::to_string(lineno) +
                                     ": expected \"u v kind\"");
        }
        EdgeKind k;
        if (kind == "MULTI_HOP") {
            k = EdgeKind::MultiHop;
        } else if (kind == "CONSECUTIVE") {
            k = EdgeKind::Consecutive;
        } else {
            throw std::runtime_error("graph file " + path + " line " + std::to_string(lineno) +
                                     ": unknown edge kind \"" + kind + "\"");
        }
        g.add_edge(u, v, k);
    }
    g.finalize();
    return g;
}

namespace {

template <class PairFn>
void clicked_groups(const std::vector<Session>& sessions, bool group_by_doc, PairFn&& emit) {
    // group key -> sorted distinct members that were clicked together
    std::map<std::int64_t, std::set<std::int64_t>> groups;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) {
                if (imp.click != 1) { continue; }
                if (group_by_doc) {
                    groups[imp.doc].insert(q.query);
                } else {
                    groups[q.query].insert(imp.doc);
                }
            }
        }
    }
    for (const auto& [key, members] : groups) {
        for (auto it = members.begin(); it != members.end(); ++it) {
            auto jt = it;
            for (++jt; jt != members.end(); ++jt) { emit(*it, *jt); }
        }
    }
}

}  // namespace

HomogeneousGraph build_query_graph(const std::vector<Session>& sessions,
                                   std::int64_t node_count) {
    HomogeneousGraph g("query", node_count);
    clicked_groups(sessions, /*group_by_doc=*/true,
                   [&g](std::int64_t a, std::int64_t b) { g.add_edge(a, b, EdgeKind::MultiHop); });
    for (const auto& s : sessions) {
        for (std::size_t i = 0; i + 1 < s.queries.size(); ++i) {
            g.add_edge(s.queries[i].query, s.queries[i + 1].query, EdgeKind::Consecutive);
        }
    }
    g.finalize();
    return g;
}

HomogeneousGraph build_doc_graph(const std::vector<Session>& sessions, std::int64_t node_count) {
    HomogeneousGraph g("doc", node_count);
    clicked_groups(sessions, /*group_by_doc=*/false,
                   [&g](std::int64_t a, std::int64_t b) { g.add_edge(a, b, EdgeKind::MultiHop); });
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            for (std::size_t j = 0; j + 1 < q.impressions.size(); ++j) {
                g.add_edge(q.impressions[j].doc, q.impressions[j + 1].doc,
                           EdgeKind::Consecutive);
            }
        }
    }
    g.finalize();
    return g;
}

namespace {

// Draw `want` items from `pool` without replacement via partial Fisher-Yates.
void draw_from(std::vector<std::int64_t>& pool, std::size_t want, Rng& rng,
               std::vector<std::int64_t>* out) {
    const std::size_t take = std::min(want, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(pool.size() - i));
        std::swap(pool[i], pool[j]);
        out->push_back(pool[i]);
    }
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
}

void append_extras(std::vector<std::int64_t>& pool, std::int64_t node,
                   std::span<const std::int64_t> extras,
                   const std::vector<std::int64_t>& already) {
    for (std::int64_t e : extras) {
        if (e == node) { continue; }
        if (std::find(pool.begin(), pool.end(), e) != pool.end()) { continue; }
        if (std::find(already.begin(), already.end(), e) != already.end()) { continue; }
        pool.push_back(e);
    }
}

}  // namespace

NeighborSampler::NeighborSampler(const HomogeneousGraph* graph, int k, std::uint64_t seed,
                                 SamplePolicy policy)
    : graph_(graph), k_(k), seed_(seed), policy_(policy) {
    if (k < 1) {
        throw std::invalid_argument("NeighborSampler: K must be >= 1, got " + std::to_string(k));
    }
}

std::vector<std::int64_t> NeighborSampler::sample(std::int64_t node,
                                                  std::span<const std::int64_t> extras) const {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(k_));
    out.push_back(node);
    const std::size_t want = static_cast<std::size_t>(k_) - 1;
    if (want > 0) {
        Rng rng(mix_seed(seed_, splitmix64(static_cast<std::uint64_t>(node))));
        if (policy_ == SamplePolicy::Uniform) {
            std::vector<std::int64_t> pool = graph_->neighbor_ids(node);
            append_extras(pool, node, extras, {});
            draw_from(pool, want, rng, &out);
        } else {
            // Half the slots from MULTI_HOP, half from CONSECUTIVE (extras count
            // as consecutive); shortfall in one pool is refilled from the other.
            std::vector<std::int64_t> multi = graph_->neighbor_ids(node, EdgeKind::MultiHop);
            std::vector<std::int64_t> consec = graph_->neighbor_ids(node, EdgeKind::Consecutive);
            append_extras(consec, node, extras, multi);
            const std::size_t want_m = want / 2;
            const std::size_t want_c = want - want_m;
            std::vector<std::int64_t> picked;
            draw_from(multi, want_m, rng, &picked);
            draw_from(consec, want_c + (want_m - std::min(want_m, picked.size())), rng, &picked);
            if (picked.size() < want) {
                // consecutive pool ran short; take more multi-hop
                draw_from(multi, want - picked.size(), rng, &picked);
            }
            for (std::int64_t n : picked) { out.push_back(n); }
        }
        while (out.size() < static_cast<std::size_t>(k_)) { out.push_back(node); }
    }
    return out;
}

std::vector<std::vector<std::int64_t>> sample_neighbors(const HomogeneousGraph& graph, int k,
                                                        std::uint64_t seed,
                                                        SamplePolicy policy) {
    NeighborSampler sampler(&graph, k, seed, policy);
    std::vector<std::vector<std::int64_t>> out;
    out.reserve(static_cast<std::size_t>(graph.node_count()));
    for (std::int64_t n = 0; n < graph.node_count(); ++n) { out.push_back(sampler.sample(n)); }
    return out;
}

}  // namespace graphcm

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

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "graphcm/graph.hpp"
#include "graphcm/rng.hpp"

using namespace graphcm;

namespace {

struct Imp {
    std::int64_t doc;
    int click;
};

Session make_session(const std::string& sid,
                     const std::vector<std::pair<std::int64_t, std::vector<Imp>>>& qs) {
    Session s;
    s.sid = sid;
    for (const auto& [q, imps] : qs) {
        QueryRecord rec;
        rec.query = q;
        int pos = 1;
        for (const auto& im : imps) {
            ImpressionRecord r;
            r.doc = im.doc;
            r.position = pos++;
            r.vertical = 1;
            r.click = im.click;
            rec.impressions.push_back(r);
        }
        s.queries.push_back(rec);
    }
    return s;
}

using EdgeSet = std::set<std::tuple<std::int64_t, std::int64_t, EdgeKind>>;

EdgeSet edge_set(const HomogeneousGraph& g) {
    EdgeSet out;
    for (std::int64_t u = 0; u < g.node_count(); ++u) {
        for (const auto& [v, k] : g.neighbors(u)) {
            out.insert({std::min(u, v), std::max(u, v), k});
        }
    }
    return out;
}

std::vector<Session> random_corpus(int n, std::uint64_t seed, std::int64_t n_queries,
                                   std::int64_t n_docs) {
    Rng rng(seed);
    std::vector<Session> out;
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<std::int64_t, std::vector<Imp>>> qs;
        const int nq = 1 + static_cast<int>(rng.uniform_int(3));
        for (int q = 0; q < nq; ++q) {
            std::vector<Imp> imps;
            const int m = 2 + static_cast<int>(rng.uniform_int(4));
            for (int d = 0; d < m; ++d) {
                imps.push_back({static_cast<std::int64_t>(1 + rng.uniform_int(n_docs)),
                                rng.bernoulli(0.35) ? 1 : 0});
            }
            qs.emplace_back(static_cast<std::int64_t>(1 + rng.uniform_int(n_queries)), imps);
        }
        out.push_back(make_session("s" + std::to_string(i), qs));
    }
    return out;
}

// Independent O(n^2) reconstruction of both graphs from raw click sets.
EdgeSet oracle_query_edges(const std::vector<Session>& sessions, std::int64_t n_nodes) {
    std::map<std::int64_t, std::set<std::int64_t>> clicked_by_query;
    EdgeSet out;
    for (const auto& s : sessions) {
        for (std::size_t i = 0; i + 1 < s.queries.size(); ++i) {
            const auto a = s.queries[i].query;
            const auto b = s.queries[i + 1].query;
            if (a != b) { out.insert({std::min(a, b), std::max(a, b), EdgeKind::Consecutive}); }
        }
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) {
                if (imp.click) { clicked_by_query[q.query].insert(imp.doc); }
            }
        }
    }
    for (std::int64_t a = 0; a < n_nodes; ++a) {
        for (std::int64_t b = a + 1; b < n_nodes; ++b) {
            auto ia = clicked_by_query.find(a);
            auto ib = clicked_by_query.find(b);
            if (ia == clicked_by_query.end() || ib == clicked_by_query.end()) { continue; }
            bool common = false;
            for (auto d : ia->second) {
                if (ib->second.count(d)) { common = true; }
            }
            if (common) { out.insert({a, b, EdgeKind::MultiHop}); }
        }
    }
    return out;
}

EdgeSet oracle_doc_edges(const std::vector<Session>& sessions) {
    std::map<std::int64_t, std::set<std::int64_t>> clicked_under_query;
    EdgeSet out;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            for (std::size_t i = 0; i + 1 < q.impressions.size(); ++i) {
                const auto a = q.impressions[i].doc;
                const auto b = q.impressions[i + 1].doc;
                if (a != b) { out.insert({std::min(a, b), std::max(a, b), EdgeKind::Consecutive}); }
            }
            for (const auto& imp : q.impressions) {
                if (imp.click) { clicked_under_query[q.query].insert(imp.doc); }
            }
        }
    }
    for (const auto& [q, docs] : clicked_under_query) {
        for (auto a : docs) {
            for (auto b : docs) {
                if (a < b) { out.insert({a, b, EdgeKind::MultiHop}); }
            }
        }
    }
    return out;
}

std::int64_t max_doc_id(const std::vector<Session>& sessions) {
    std::int64_t m = 0;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) { m = std::max(m, imp.doc); }
        }
    }
    return m;
}

}  // namespace

TEST_CASE("queries clicking the same document get a multi-hop edge") {
    // two sessions; q3 and q5 each click d2
    std::vector<Session> sessions{
        make_session("a", {{3, {{1, 0}, {2, 1}}}}),
        make_session("b", {{5, {{2, 1}, {4, 0}}}}),
    };
    auto g = build_query_graph(sessions, 6);
    CHECK(g.has_edge(3, 5, EdgeKind::MultiHop));
    CHECK(g.has_edge(5, 3, EdgeKind::MultiHop));
    CHECK_FALSE(g.has_edge(3, 5, EdgeKind::Consecutive));
    CHECK(g.edge_count(EdgeKind::MultiHop) == 1);
    CHECK(g.edge_count(EdgeKind::Consecutive) == 0);
}

TEST_CASE("consecutive queries in a session are linked") {
    std::vector<Session> sessions{
        make_session("a", {{1, {{1, 0}}}, {2, {{2, 0}}}, {3, {{3, 0}}}}),
    };
    auto g = build_query_graph(sessions, 4);
    CHECK(g.has_edge(1, 2, EdgeKind::Consecutive));
    CHECK(g.has_edge(2, 3, EdgeKind::Consecutive));
    CHECK_FALSE(g.has_edge(1, 3, EdgeKind::Consecutive));
    CHECK(g.edge_count(EdgeKind::Consecutive) == 2);
    CHECK(g.edge_count(EdgeKind::MultiHop) == 0);
}

TEST_CASE("documents clicked under one query get a multi-hop edge") {
    // q1 clicks d1 in one session and d3 in another
    std::vector<Session> sessions{
        make_session("a", {{1, {{1, 1}, {2, 0}}}}),
        make_session("b", {{1, {{3, 1}, {2, 0}}}}),
    };
    auto g = build_doc_graph(sessions, 4);
    CHECK(g.has_edge(1, 3, EdgeKind::MultiHop));
    CHECK_FALSE(g.has_edge(1, 2, EdgeKind::MultiHop));
    CHECK(g.edge_count(EdgeKind::MultiHop) == 1);
}

TEST_CASE("rank-adjacent documents are linked") {
    std::vector<Session> sessions{
        make_session("a", {{1, {{1, 0}, {2, 0}, {3, 0}}}}),
    };
    auto g = build_doc_graph(sessions, 4);
    CHECK(g.has_edge(1, 2, EdgeKind::Consecutive));
    CHECK(g.has_edge(2, 3, EdgeKind::Consecutive));
    CHECK_FALSE(g.has_edge(1, 3, EdgeKind::Consecutive));
    CHECK(g.edge_count() == 2);
}

TEST_CASE("random corpora match the brute-force edge oracle") {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        auto sessions = random_corpus(60, seed, 10, 16);
        auto qg = build_query_graph(sessions, 11);
        auto dg = build_doc_graph(sessions, max_doc_id(sessions) + 1);
        CHECK(edge_set(qg) == oracle_query_edges(sessions, 11));
        CHECK(edge_set(dg) == oracle_doc_edges(sessions));
    }
}

TEST_CASE("construction ignores session order") {
    auto sessions = random_corpus(80, 12, 9, 14);
    auto g1 = build_query_graph(sessions, 10);
    auto d1 = build_doc_graph(sessions, max_doc_id(sessions) + 1);
    Rng rng(55);
    rng.shuffle(sessions);
    auto g2 = build_query_graph(sessions, 10);
    auto d2 = build_doc_graph(sessions, max_doc_id(sessions) + 1);
    CHECK(edge_set(g1) == edge_set(g2));
    CHECK(edge_set(d1) == edge_set(d2));
}

TEST_CASE("adding a click only ever adds edges") {
    auto sessions = random_corpus(40, 21, 8, 12);
    auto base_q = edge_set(build_query_graph(sessions, 9));
    auto base_d = edge_set(build_doc_graph(sessions, max_doc_id(sessions) + 1));

    // flip the first unclicked impression we can find, one at a time
    int flipped = 0;
    for (auto& s : sessions) {
        for (auto& q : s.queries) {
            for (auto& imp : q.impressions) {
                if (imp.click || flipped >= 5) { continue; }
                imp.click = 1;
                ++flipped;
                auto next_q = edge_set(build_query_graph(sessions, 9));
                auto next_d = edge_set(build_doc_graph(sessions, max_doc_id(sessions) + 1));
                CHECK(std::includes(next_q.begin(), next_q.end(), base_q.begin(), base_q.end()));
                CHECK(std::includes(next_d.begin(), next_d.end(), base_d.begin(), base_d.end()));
                base_q = next_q;
                base_d = next_d;
            }
        }
    }
    CHECK(flipped == 5);
}

TEST_CASE("a node without training clicks keeps only consecutive edges") {
    // q2 never clicks anything; q1 and q3 click d1
    std::vector<Session> sessions{
        make_session("a", {{1, {{1, 1}}}, {2, {{2, 0}, {3, 0}}}, {3, {{1, 1}}}}),
    };
    auto g = build_query_graph(sessions, 4);
    for (const auto& [v, kind] : g.neighbors(2)) {
        (void)v;
        CHECK(kind == EdgeKind::Consecutive);
    }
    CHECK(g.degree(2) == 2);
    CHECK(g.has_edge(1, 3, EdgeKind::MultiHop));
}

TEST_CASE("adjacency is symmetric and deduplicated") {
    auto sessions = random_corpus(50, 33, 8, 12);
    auto g = build_query_graph(sessions, 9);
    for (std::int64_t u = 0; u < g.node_count(); ++u) {
        std::set<std::pair<std::int64_t, EdgeKind>> seen;
        for (const auto& [v, k] : g.neighbors(u)) {
            CHECK(v != u);
            CHECK(seen.insert({v, k}).second);
            CHECK(g.has_edge(v, u, k));
        }
    }
}

TEST_CASE("graphs round-trip through files") {
    auto sessions = random_corpus(40, 44, 7, 10);
    auto g = build_doc_graph(sessions, max_doc_id(sessions) + 1);
    const std::string path = "graph_roundtrip_test.txt";
    g.save_file(path);
    auto g2 = HomogeneousGraph::load_file(path);
    CHECK(g2.domain() == g.domain());
    CHECK(g2.node_count() == g.node_count());
    CHECK(edge_set(g2) == edge_set(g));
    std::remove(path.c_str());
}

TEST_CASE("sampling an isolated node pads with self") {
    HomogeneousGraph g("query", 3);
    g.finalize();
    NeighborSampler sampler(&g, 4, 9);
    auto s = sampler.sample(1);
    CHECK(s == std::vector<std::int64_t>{1, 1, 1, 1});
}

TEST_CASE("sampling is reproducible and self-leading") {
    HomogeneousGraph g("query", 12);
    for (std::int64_t v = 1; v <= 10; ++v) { g.add_edge(0, v, EdgeKind::MultiHop); }
    g.finalize();
    CHECK(g.degree(0) == 10);

    NeighborSampler a(&g, 4, 123);
    NeighborSampler b(&g, 4, 123);
    auto sa = a.sample(0);
    auto sb = b.sample(0);
    CHECK(sa == sb);
    REQUIRE(sa.size() == 4);
    CHECK(sa[0] == 0);
    std::set<std::int64_t> uniq(sa.begin(), sa.end());
    CHECK(uniq.size() == 4);

    NeighborSampler c(&g, 4, 124);
    CHECK(c.sample(0) != sa);
}

TEST_CASE("sampler rejects K below one") {
    HomogeneousGraph g("query", 2);
    g.finalize();
    CHECK_THROWS_AS(NeighborSampler(&g, 0, 1), std::invalid_argument);
}

TEST_CASE("free-slot draws are uniform over the neighborhood") {
    HomogeneousGraph g("query", 7);
    for (std::int64_t v = 1; v <= 5; ++v) { g.add_edge(0, v, EdgeKind::MultiHop); }
    g.finalize();

    const int n = 100000;
    std::map<std::int64_t, int> counts;
    for (int i = 0; i < n; ++i) {
        NeighborSampler sampler(&g, 2, 1000 + static_cast<std::uint64_t>(i));
        auto s = sampler.sample(0);
        REQUIRE(s.size() == 2);
        CHECK(s[0] == 0);
        counts[s[1]]++;
    }
    const double p = 1.0 / 5.0;
    const double mean = n * p;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (std::int64_t v = 1; v <= 5; ++v) {
        CHECK(std::abs(counts[v] - mean) < 3 * sigma);
    }
}

TEST_CASE("extras enter the pool without duplicating neighbors") {
    HomogeneousGraph g("query", 10);
    g.finalize();
    NeighborSampler sampler(&g, 3, 77);
    std::vector<std::int64_t> extras{7, 8, 7, 2};  // 2 == the node itself
    auto s = sampler.sample(2, extras);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == 2);
    std::set<std::int64_t> rest(s.begin() + 1, s.end());
    CHECK(rest == std::set<std::int64_t>{7, 8});
}

TEST_CASE("balanced policy splits slots between edge kinds") {
    HomogeneousGraph g("query", 20);
    for (std::int64_t v = 1; v <= 6; ++v) { g.add_edge(0, v, EdgeKind::MultiHop); }
    for (std::int64_t v = 11; v <= 16; ++v) { g.add_edge(0, v, EdgeKind::Consecutive); }
    g.finalize();

    NeighborSampler sampler(&g, 5, 42, SamplePolicy::Balanced);
    auto s = sampler.sample(0);
    REQUIRE(s.size() == 5);
    CHECK(s[0] == 0);
    int multi = 0, consec = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] >= 1 && s[i] <= 6) { ++multi; }
        if (s[i] >= 11 && s[i] <= 16) { ++consec; }
    }
    CHECK(multi == 2);
    CHECK(consec == 2);

    // one side exhausted: refill from the other, never pad while neighbors remain
    HomogeneousGraph h("query", 20);
    for (std::int64_t v = 1; v <= 6; ++v) { h.add_edge(0, v, EdgeKind::MultiHop); }
    h.finalize();
    NeighborSampler hs(&h, 5, 42, SamplePolicy::Balanced);
    auto t = hs.sample(0);
    std::set<std::int64_t> uniq(t.begin(), t.end());
    CHECK(uniq.size() == 5);
    CHECK(uniq.count(0) == 1);
}

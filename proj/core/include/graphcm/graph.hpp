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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphcm/session.hpp"

namespace graphcm {

enum class EdgeKind : std::uint8_t { MultiHop = 0, Consecutive = 1 };

const char* edge_kind_name(EdgeKind k);

// Undirected homogeneous graph over dense node ids.  Edges are unweighted and
// carry a kind; the same node pair may be linked by both kinds.
class HomogeneousGraph {
  public:
    HomogeneousGraph() = default;
    HomogeneousGraph(std::string domain, std::int64_t node_count);

    // Symmetric insert; self edges are ignored.  Duplicates collapse at
    // finalize().
    void add_edge(std::int64_t u, std::int64_t v, EdgeKind kind);
    void finalize();

    const std::string& domain() const { return domain_; }
    std::int64_t node_count() const { return static_cast<std::int64_t>(adj_.size()); }

    // (neighbor, kind) sorted, unique; valid after finalize().
    const std::vector<std::pair<std::int64_t, EdgeKind>>& neighbors(std::int64_t node) const;

    // Distinct neighbor ids regardless of kind, sorted.
    std::vector<std::int64_t> neighbor_ids(std::int64_t node) const;
    std::vector<std::int64_t> neighbor_ids(std::int64_t node, EdgeKind kind) const;

    std::int64_t degree(std::int64_t node) const;
    bool has_edge(std::int64_t u, std::int64_t v, EdgeKind kind) const;

    // Undirected edge count per kind.
    std::int64_t edge_count(EdgeKind kind) const;
    std::int64_t edge_count() const;

    void save_file(const std::string& path) const;
    static HomogeneousGraph load_file(const std::string& path);

  private:
    void check_node(std::int64_t n) const;

    std::string domain_;
    std::vector<std::vector<std::pair<std::int64_t, EdgeKind>>> adj_;
    bool finalized_ = false;
};

// Query graph: MULTI_HOP links queries that clicked a common document anywhere
// in the corpus; CONSECUTIVE links adjacent queries of a session.
HomogeneousGraph build_query_graph(const std::vector<Session>& sessions,
                                   std::int64_t node_count);

// Document graph: MULTI_HOP links documents clicked under a common query;
// CONSECUTIVE links rank-adjacent documents of a SERP.
HomogeneousGraph build_doc_graph(const std::vector<Session>& sessions, std::int64_t node_count);

enum class SamplePolicy { Uniform, Balanced };

// Fixed-size neighbor sampling.  Every sample has length K and starts with the
// node itself; the remaining K-1 slots are drawn without replacement from the
// node's neighbors (plus session-local extras), padding with the node when the
// neighborhood is small.  The draw depends only on (seed, node, extras).
class NeighborSampler {
  public:
    NeighborSampler(const HomogeneousGraph* graph, int k, std::uint64_t seed,
                    SamplePolicy policy = SamplePolicy::Uniform);

    std::vector<std::int64_t> sample(std::int64_t node,
                                     std::span<const std::int64_t> extras = {}) const;

    int k() const { return k_; }

  private:
    const HomogeneousGraph* graph_;
    int k_;
    std::uint64_t seed_;
    SamplePolicy policy_;
};

// One sample per node of the graph.
std::vector<std::vector<std::int64_t>> sample_neighbors(const HomogeneousGraph& graph, int k,
                                                        std::uint64_t seed,
                                                        SamplePolicy policy =
                                                            SamplePolicy::Uniform);

}  // namespace graphcm

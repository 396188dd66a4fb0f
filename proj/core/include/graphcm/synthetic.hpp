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
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graphcm/session.hpp"

namespace graphcm {

enum class GeneratorKind { Pbm, Ubm, Sdbn, GraphPlanted };

const char* generator_kind_name(GeneratorKind k);
GeneratorKind generator_kind_from(const std::string& name);

struct SyntheticSpec {
    GeneratorKind kind = GeneratorKind::Pbm;
    std::int64_t sessions = 1000;
    std::uint64_t seed = 1;
    int n_queries = 16;
    int serp_len = 4;
    int queries_per_session = 1;
    bool shuffle_serp = true;
    // Per-rank examination for PBM / GRAPH_PLANTED; empty selects a default.
    std::vector<double> gamma;
    // Attractiveness range for PBM/UBM/SDBN pair parameters and satisfaction
    // range for SDBN.  Negative bounds select per-kind defaults: [0.1, 0.9]
    // attractiveness for PBM/UBM, [0.65, 0.95] for SDBN, and satisfaction
    // [0.6, 0.95].  The cascade counting estimator is only well calibrated in
    // a high-click regime, so SDBN defaults sit there.
    double alpha_lo = -1.0;
    double alpha_hi = -1.0;
    double sigma_lo = -1.0;
    double sigma_hi = -1.0;
    // GRAPH_PLANTED: latent topic structure.  Each session stays within one
    // topic; each SERP mixes same-topic and random documents.  Holdout
    // queries appear in exactly one session each (appended after the regular
    // sessions), as the second query after a warm same-topic query.
    int topics = 25;
    int docs_per_topic = 8;
    int same_topic_docs = 2;
    double alpha_in = 0.75;
    double alpha_out = 0.12;
    double holdout_fraction = 0.0;
};

struct SyntheticTruth {
    GeneratorKind kind = GeneratorKind::Pbm;
    int serp_len = 0;
    // PBM / GRAPH_PLANTED: per rank.  UBM: grid (rank-1)*(serp_len+1) + prev
    // with prev = previous-click rank, 0 for none.
    std::vector<double> gamma;
    std::map<std::pair<std::string, std::string>, double> alpha;  // token-keyed
    std::map<std::pair<std::string, std::string>, double> sigma;  // SDBN only
    std::map<std::string, int> query_topic;  // GRAPH_PLANTED only
    std::map<std::string, int> doc_topic;
    double alpha_in = 0.0;
    double alpha_out = 0.0;
    std::vector<std::string> holdout_queries;

    double alpha_for(const std::string& q, const std::string& d) const;
    // Conditional ground-truth click probability per impression, given the
    // session's observed preceding clicks.
    std::vector<double> true_probs(const Session& session, const Vocabulary& queries,
                                   const Vocabulary& docs) const;
    // Graded relevance derived from attractiveness, for NDCG oracles.
    std::map<std::pair<std::string, std::string>, int> relevance() const;

    void save(std::ostream& os) const;
    void save_file(const std::string& path) const;
    static SyntheticTruth load(std::istream& is);
    static SyntheticTruth load_file(const std::string& path);
};

struct SyntheticResult {
    std::vector<Session> sessions;
    Vocabulary queries;
    Vocabulary docs;
    Vocabulary verticals;
    SyntheticTruth truth;
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec);

}  // namespace graphcm

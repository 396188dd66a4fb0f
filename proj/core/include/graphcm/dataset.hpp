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

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "graphcm/session.hpp"

namespace graphcm {

struct DatasetSplit {
    std::vector<Session> train;
    std::vector<Session> valid;
    std::vector<Session> test;
};

// Seeded shuffle, then contiguous slices.  Counts follow the ratios rounded to
// the nearest session; the training slice takes the remainder.
DatasetSplit split_dataset(const std::vector<Session>& sessions, std::uint64_t seed,
                           std::array<int, 3> ratios = {8, 1, 1});

struct IdSets {
    std::unordered_set<std::int64_t> queries;
    std::unordered_set<std::int64_t> docs;
};

IdSets collect_ids(const std::vector<Session>& sessions);

enum class ColdClass { WarmQD = 0, ColdQ = 1, ColdD = 2, ColdQD = 3 };

const char* cold_class_name(ColdClass c);

// Cold = id absent from the training split.
ColdClass classify_session(const Session& s, const IdSets& train_ids);

struct ColdStartPartition {
    std::vector<Session> warm_qd;
    std::vector<Session> cold_q;
    std::vector<Session> cold_d;
    std::vector<Session> cold_qd;
};

ColdStartPartition partition_cold_start(const std::vector<Session>& test,
                                        const IdSets& train_ids);

// 1 - |distinct (q,d) pairs| / (|distinct q| * |distinct d|)
double sparsity_ratio(const std::vector<Session>& sessions);

// Relevance sidecar: "qid<TAB>did<TAB>grade" with grades 0..4.  Tokens are
// mapped through the vocabularies; lines whose tokens are unknown are skipped.
struct ParsedLog;
std::map<std::pair<std::int64_t, std::int64_t>, int> load_relevance_file(
    const std::string& path, const Vocabulary& queries, const Vocabulary& docs);

}  // namespace graphcm

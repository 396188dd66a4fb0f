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

#include "graphcm/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "graphcm/rng.hpp"

namespace graphcm {

DatasetSplit split_dataset(const std::vector<Session>& sessions, std::uint64_t seed,
                           std::array<int, 3> ratios) {
    const std::int64_t n = static_cast<std::int64_t>(sessions.size());
    if (n < 10) {
        throw std::invalid_argument("split_dataset: need at least 10 sessions, got " +
                                    std::to_string(n));
    }
    for (int r : ratios) {
        if (r < 0) { throw std::invalid_argument("split_dataset: negative ratio"); }
    }
    const int total = ratios[0] + ratios[1] + ratios[2];
    if (total <= 0 || ratios[0] <= 0) {
        throw std::invalid_argument("split_dataset: training ratio must be positive");
    }

    std::vector<std::size_t> order(sessions.size());
    for (std::size_t i = 0; i < order.size(); ++i) { order[i] = i; }
    Rng rng(mix_seed(seed, 0x9d5f5717ULL));
    rng.shuffle(order);

    const std::int64_t n_valid =
        std::llround(static_cast<double>(n) * ratios[1] / static_cast<double>(total));
    const std::int64_t n_test =
        std::llround(static_cast<double>(n) * ratios[2] / static_cast<double>(total));
    const std::int64_t n_train = n - n_valid - n_test;
    if (n_train <= 0) { throw std::invalid_argument("split_dataset: empty training slice"); }

    DatasetSplit split;
    split.train.reserve(static_cast<std::size_t>(n_train));
    split.valid.reserve(static_cast<std::size_t>(n_valid));
    split.test.reserve(static_cast<std::size_t>(n_test));
    for (std::int64_t i = 0; i < n; ++i) {
        const Session& s = sessions[order[static_cast<std::size_t>(i)]];
        if (i < n_train) {
            split.train.push_back(s);
        } else if (i < n_train + n_valid) {
            split.valid.push_back(s);
        } else {
            split.test.push_back(s);
        }
    }
    return split;
}

IdSets collect_ids(const std::vector<Session>& sessions) {
    IdSets ids;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            ids.queries.insert(q.query);
            for (const auto& imp : q.impressions) { ids.docs.insert(imp.doc); }
        }
    }
    return ids;
}

const char* cold_class_name(ColdClass c) {
    switch (c) {
        case ColdClass::WarmQD: return "warm_qd";
        case ColdClass::ColdQ: return "cold_q";
        case ColdClass::ColdD: return "cold_d";
        case ColdClass::ColdQD: return "cold_qd";
    }
    return "?";
}

ColdClass classify_session(const Session& s, const IdSets& train_ids) {
    bool cold_q = false;
    bool cold_d = false;
    for (const auto& q : s.queries) {
        if (train_ids.queries.count(q.query) == 0) { cold_q = true; }
        for (const auto& imp : q.impressions) {
            if (train_ids.docs.count(imp.doc) == 0) { cold_d = true; }
        }
    }
    if (cold_q && cold_d) { return ColdClass::ColdQD; }
    if (cold_q) { return ColdClass::ColdQ; }
    if (cold_d) { return ColdClass::ColdD; }
    return ColdClass::WarmQD;
}

ColdStartPartition partition_cold_start(const std::vector<Session>& test,
                                        const IdSets& train_ids) {
    ColdStartPartition p;
    for (const auto& s : test) {
        switch (classify_session(s, train_ids)) {
            case ColdClass::WarmQD: p.warm_qd.push_back(s); break;
            case ColdClass::ColdQ: p.cold_q.push_back(s); break;
            case ColdClass::ColdD: p.cold_d.push_back(s); break;
            case ColdClass::ColdQD: p.cold_qd.push_back(s); break;
        }
    }
    return p;
}

double sparsity_ratio(const std::vector<Session>& sessions) {
    std::unordered_set<std::int64_t> qs, ds;
    std::set<std::pair<std::int64_t, std::int64_t>> pairs;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            qs.insert(q.query);
            for (const auto& imp : q.impressions) {
                ds.insert(imp.doc);
                pairs.emplace(q.query, imp.doc);
            }
        }
    }
    if (qs.empty() || ds.empty()) {
        throw std::invalid_argument("sparsity_ratio: no queries or no documents observed");
    }
    const double denom = static_cast<double>(qs.size()) * static_cast<double>(ds.size());
    return 1.0 - static_cast<double>(pairs.size()) / denom;
}

std::map<std::pair<std::int64_t, std::int64_t>, int> load_relevance_file(
    const std::string& path, const Vocabulary& queries, const Vocabulary& docs) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open relevance file: " + path); }
    std::map<std::pair<std::int64_t, std::int64_t>, int> grades;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) { continue; }
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw std::runtime_error("relevance file " + path + " line " +
                                     std::to_string(lineno) +
                                     ": expected qid<TAB>did<TAB>grade");
        }
        const std::string qid = line.substr(0, t1);
        const std::string did = line.substr(t1 + 1, t2 - t1 - 1);
        int grade = 0;
        try {
            grade = std::stoi(line.substr(t2 + 1));
        } catch (const std::exception&) {
            throw std::runtime_error("relevance file " + path + " line " +
                                     std::to_string(lineno) + ": grade is not an integer");
        }
        if (grade < 0 || grade > 4) {
            throw std::runtime_error("relevance file " + path + " line " +
                                     std::to_string(lineno) + ": grade " +
                                     std::to_string(grade) + " outside 0..4");
        }
        const std::int64_t q = queries.lookup(qid);
        const std::int64_t d = docs.lookup(did);
        if (q == 0 || d == 0) { continue; }
        grades[{q, d}] = grade;
    }
    return grades;
}

}  // namespace graphcm

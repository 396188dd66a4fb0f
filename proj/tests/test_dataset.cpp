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
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "doctest.h"
#include "graphcm/dataset.hpp"
#include "graphcm/log_parser.hpp"
#include "graphcm/rng.hpp"

using namespace graphcm;

namespace {

Session make_session(const std::string& sid,
                     const std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>>& qs) {
    Session s;
    s.sid = sid;
    for (const auto& [q, docs] : qs) {
        QueryRecord rec;
        rec.query = q;
        int pos = 1;
        for (auto d : docs) {
            ImpressionRecord imp;
            imp.doc = d;
            imp.position = pos++;
            imp.vertical = 1;
            rec.impressions.push_back(imp);
        }
        s.queries.push_back(rec);
    }
    return s;
}

std::vector<Session> random_corpus(int n, std::uint64_t seed, std::int64_t n_queries = 20,
                                   std::int64_t n_docs = 40) {
    Rng rng(seed);
    std::vector<Session> out;
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> qs;
        const int nq = 1 + static_cast<int>(rng.uniform_int(3));
        for (int q = 0; q < nq; ++q) {
            std::vector<std::int64_t> docs;
            const int m = 1 + static_cast<int>(rng.uniform_int(4));
            for (int d = 0; d < m; ++d) { docs.push_back(1 + rng.uniform_int(n_docs)); }
            qs.emplace_back(1 + rng.uniform_int(n_queries), docs);
        }
        out.push_back(make_session("s" + std::to_string(i), qs));
    }
    return out;
}

std::multiset<std::string> sids(const std::vector<Session>& v) {
    std::multiset<std::string> out;
    for (const auto& s : v) { out.insert(s.sid); }
    return out;
}

}  // namespace

TEST_CASE("ten sessions split 8/1/1") {
    auto corpus = random_corpus(10, 5);
    auto split = split_dataset(corpus, 123);
    CHECK(split.train.size() == 8);
    CHECK(split.valid.size() == 1);
    CHECK(split.test.size() == 1);
}

TEST_CASE("same seed gives the identical split") {
    auto corpus = random_corpus(50, 9);
    auto a = split_dataset(corpus, 77);
    auto b = split_dataset(corpus, 77);
    CHECK(sids(a.train) == sids(b.train));
    CHECK(sids(a.valid) == sids(b.valid));
    CHECK(sids(a.test) == sids(b.test));
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].sid == b.train[i].sid);
    }
    auto c = split_dataset(corpus, 78);
    bool same_order = true;
    for (std::size_t i = 0; i < a.train.size() && i < c.train.size(); ++i) {
        if (a.train[i].sid != c.train[i].sid) { same_order = false; }
    }
    CHECK_FALSE(same_order);
}

TEST_CASE("1000 sessions, seed 7: exact counts, disjoint, union preserved") {
    auto corpus = random_corpus(1000, 31);
    auto split = split_dataset(corpus, 7);
    CHECK(split.train.size() == 800);
    CHECK(split.valid.size() == 100);
    CHECK(split.test.size() == 100);

    std::set<std::string> seen;
    for (const auto* part : {&split.train, &split.valid, &split.test}) {
        for (const auto& s : *part) { CHECK(seen.insert(s.sid).second); }
    }
    std::set<std::string> input;
    for (const auto& s : corpus) { input.insert(s.sid); }
    CHECK(seen == input);
}

TEST_CASE("split rejects undersized corpora and bad ratios") {
    auto corpus = random_corpus(9, 1);
    CHECK_THROWS_AS(split_dataset(corpus, 1), std::invalid_argument);
    auto ok = random_corpus(12, 1);
    CHECK_THROWS_AS(split_dataset(ok, 1, {0, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(ok, 1, {-1, 1, 1}), std::invalid_argument);
}

TEST_CASE("split honors alternative ratios") {
    auto corpus = random_corpus(100, 2);
    auto split = split_dataset(corpus, 3, {6, 2, 2});
    CHECK(split.train.size() == 60);
    CHECK(split.valid.size() == 20);
    CHECK(split.test.size() == 20);
}

TEST_CASE("cold-start classification on hand-built sessions") {
    std::vector<Session> train{make_session("t", {{1, {1, 2}}, {2, {3}}})};
    auto ids = collect_ids(train);

    CHECK(classify_session(make_session("a", {{1, {2, 3}}}), ids) == ColdClass::WarmQD);
    CHECK(classify_session(make_session("b", {{9, {1}}}), ids) == ColdClass::ColdQ);
    CHECK(classify_session(make_session("c", {{2, {9}}}), ids) == ColdClass::ColdD);
    CHECK(classify_session(make_session("d", {{9, {9}}}), ids) == ColdClass::ColdQD);
    // one cold query and one cold doc in different queries still means cold_qd
    CHECK(classify_session(make_session("e", {{9, {1}}, {1, {9}}}), ids) == ColdClass::ColdQD);
    CHECK(std::string(cold_class_name(ColdClass::WarmQD)) == "warm_qd");
    CHECK(std::string(cold_class_name(ColdClass::ColdQD)) == "cold_qd");
}

TEST_CASE("partition matches a brute-force membership oracle") {
    auto corpus = random_corpus(400, 17, 12, 18);
    auto split = split_dataset(corpus, 5);
    auto ids = collect_ids(split.train);
    auto part = partition_cold_start(split.test, ids);

    // oracle: recompute membership from raw id sets, one session at a time
    std::unordered_set<std::int64_t> tq, td;
    for (const auto& s : split.train) {
        for (const auto& q : s.queries) {
            tq.insert(q.query);
            for (const auto& imp : q.impressions) { td.insert(imp.doc); }
        }
    }
    std::vector<std::string> want[4];
    for (const auto& s : split.test) {
        bool cold_q = false, cold_d = false;
        for (const auto& q : s.queries) {
            if (!tq.count(q.query)) { cold_q = true; }
            for (const auto& imp : q.impressions) {
                if (!td.count(imp.doc)) { cold_d = true; }
            }
        }
        const int cls = cold_q && cold_d ? 3 : cold_q ? 1 : cold_d ? 2 : 0;
        want[cls].push_back(s.sid);
    }
    auto got = [](const std::vector<Session>& v) {
        std::vector<std::string> out;
        for (const auto& s : v) { out.push_back(s.sid); }
        return out;
    };
    CHECK(got(part.warm_qd) == want[0]);
    CHECK(got(part.cold_q) == want[1]);
    CHECK(got(part.cold_d) == want[2]);
    CHECK(got(part.cold_qd) == want[3]);

    // disjoint, union = test
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto* v : {&part.warm_qd, &part.cold_q, &part.cold_d, &part.cold_qd}) {
        total += v->size();
        for (const auto& s : *v) { CHECK(all.insert(s.sid).second); }
    }
    CHECK(total == split.test.size());
}

TEST_CASE("partition membership ignores training-set order") {
    auto corpus = random_corpus(200, 23, 10, 14);
    auto split = split_dataset(corpus, 11);
    auto part1 = partition_cold_start(split.test, collect_ids(split.train));

    auto shuffled = split.train;
    Rng rng(99);
    rng.shuffle(shuffled);
    auto part2 = partition_cold_start(split.test, collect_ids(shuffled));

    CHECK(sids(part1.warm_qd) == sids(part2.warm_qd));
    CHECK(sids(part1.cold_q) == sids(part2.cold_q));
    CHECK(sids(part1.cold_d) == sids(part2.cold_d));
    CHECK(sids(part1.cold_qd) == sids(part2.cold_qd));
}

TEST_CASE("sparsity on hand examples") {
    // 1 query x 1 doc, observed -> 0.0
    std::vector<Session> one{make_session("a", {{1, {1}}})};
    CHECK(sparsity_ratio(one) == doctest::Approx(0.0));

    // 2 queries x 2 docs with 2 observed pairs -> 1 - 2/4 = 0.5
    std::vector<Session> two{make_session("a", {{1, {1}}}), make_session("b", {{2, {2}}})};
    CHECK(sparsity_ratio(two) == doctest::Approx(0.5));

    CHECK_THROWS_AS(sparsity_ratio({}), std::invalid_argument);
}

TEST_CASE("sparsity matches exhaustive pair enumeration") {
    auto corpus = random_corpus(120, 41, 9, 13);
    std::set<std::int64_t> qs, ds;
    std::set<std::pair<std::int64_t, std::int64_t>> pairs;
    for (const auto& s : corpus) {
        for (const auto& q : s.queries) {
            qs.insert(q.query);
            for (const auto& imp : q.impressions) {
                ds.insert(imp.doc);
                pairs.insert({q.query, imp.doc});
            }
        }
    }
    const double want =
        1.0 - static_cast<double>(pairs.size()) / (static_cast<double>(qs.size()) * ds.size());
    CHECK(sparsity_ratio(corpus) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("sparsity never increases as impressions reuse existing ids") {
    auto corpus = random_corpus(60, 51, 8, 10);
    double prev = sparsity_ratio(corpus);
    Rng rng(3);
    for (int step = 0; step < 10; ++step) {
        // new impressions drawn from ids the corpus already contains
        const auto q = static_cast<std::int64_t>(1 + rng.uniform_int(8));
        const auto d1 = static_cast<std::int64_t>(1 + rng.uniform_int(10));
        const auto d2 = static_cast<std::int64_t>(1 + rng.uniform_int(10));
        corpus.push_back(make_session("x" + std::to_string(step), {{q, {d1, d2}}}));
        // only keep the appended session if it adds no new ids
        auto before = collect_ids({corpus.begin(), corpus.end() - 1});
        auto after = collect_ids(corpus);
        if (after.queries.size() != before.queries.size() ||
            after.docs.size() != before.docs.size()) {
            corpus.pop_back();
            continue;
        }
        const double cur = sparsity_ratio(corpus);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("relevance sidecar maps tokens and skips unknown ones") {
    const std::string log_text =
        R"({"sid": "s", "queries": [{"qid": "qa", "docs": [)"
        R"({"did": "d1", "pos": 1, "vert": "w", "click": 0},)"
        R"({"did": "d2", "pos": 2, "vert": "w", "click": 1}]}]})"
        "\n";
    std::istringstream in(log_text);
    auto log = parse_log(in);

    const std::string path = "relevance_test.tsv";
    {
        std::ofstream out(path);
        out << "qa\td1\t3\n";
        out << "qa\td2\t0\n";
        out << "ghost\td1\t4\n";
        out << "qa\tghost\t4\n";
    }
    auto rel = load_relevance_file(path, log.queries, log.docs);
    CHECK(rel.size() == 2);
    CHECK(rel.at({log.queries.lookup("qa"), log.docs.lookup("d1")}) == 3);
    CHECK(rel.at({log.queries.lookup("qa"), log.docs.lookup("d2")}) == 0);
    std::remove(path.c_str());

    {
        std::ofstream out(path);
        out << "qa\td1\t9\n";
    }
    CHECK_THROWS_AS(load_relevance_file(path, log.queries, log.docs), std::runtime_error);
    std::remove(path.c_str());
}

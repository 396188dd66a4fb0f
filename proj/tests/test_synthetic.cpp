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

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "graphcm/synthetic.hpp"

using namespace graphcm;

namespace {

bool same_sessions(const SyntheticResult& a, const SyntheticResult& b) {
    if (a.sessions.size() != b.sessions.size()) { return false; }
    for (std::size_t i = 0; i < a.sessions.size(); ++i) {
        const auto& sa = a.sessions[i];
        const auto& sb = b.sessions[i];
        if (sa.sid != sb.sid || sa.queries.size() != sb.queries.size()) { return false; }
        for (std::size_t j = 0; j < sa.queries.size(); ++j) {
            if (sa.queries[j].query != sb.queries[j].query) { return false; }
            const auto& ia = sa.queries[j].impressions;
            const auto& ib = sb.queries[j].impressions;
            if (ia.size() != ib.size()) { return false; }
            for (std::size_t r = 0; r < ia.size(); ++r) {
                if (ia[r].doc != ib[r].doc || ia[r].position != ib[r].position ||
                    ia[r].click != ib[r].click) {
                    return false;
                }
            }
        }
    }
    return true;
}

// Marginal probability of a click prefix under SDBN, by forward propagation
// of the examination state (independent of the sequential posterior update
// used inside true_probs).
double sdbn_prefix_prob(const std::vector<int>& clicks, const std::vector<double>& alpha,
                        const std::vector<double>& sigma) {
    double j1 = 1.0, j0 = 0.0;
    for (std::size_t r = 0; r < clicks.size(); ++r) {
        double n1 = 0.0, n0 = 0.0;
        if (clicks[r] == 1) {
            const double pc = j1 * alpha[r];
            n1 = pc * (1.0 - sigma[r]);
            n0 = pc * sigma[r];
        } else {
            n1 = j1 * (1.0 - alpha[r]);
            n0 = j0;
        }
        j1 = n1;
        j0 = n0;
    }
    return j1 + j0;
}

}  // namespace

TEST_CASE("degenerate examination clicks only the first rank") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::Pbm;
    spec.sessions = 2000;
    spec.seed = 3;
    spec.serp_len = 4;
    spec.gamma = {1.0, 0.0, 0.0, 0.0};
    auto res = generate_synthetic(spec);
    int rank1 = 0, elsewhere = 0;
    for (const auto& s : res.sessions) {
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) {
                if (imp.click) { (imp.position == 1 ? rank1 : elsewhere)++; }
            }
        }
    }
    CHECK(elsewhere == 0);
    CHECK(rank1 > 500);
}

TEST_CASE("per-rank click totals sit inside 3-sigma binomial bounds") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::Pbm;
    spec.sessions = 25000;
    spec.seed = 11;
    spec.serp_len = 4;
    auto res = generate_synthetic(spec);

    std::vector<double> expect(4, 0.0), var(4, 0.0);
    std::vector<int> clicks(4, 0);
    for (const auto& s : res.sessions) {
        for (const auto& q : s.queries) {
            const std::string& qtok = res.queries.token(q.query);
            for (const auto& imp : q.impressions) {
                const std::size_t r = static_cast<std::size_t>(imp.position - 1);
                const double p = res.truth.gamma[r] *
                                 res.truth.alpha_for(qtok, res.docs.token(imp.doc));
                expect[r] += p;
                var[r] += p * (1.0 - p);
                clicks[r] += imp.click;
            }
        }
    }
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(std::abs(clicks[r] - expect[r]) < 3.0 * std::sqrt(var[r]));
    }
}

TEST_CASE("generation is seed-deterministic") {
    for (auto kind : {GeneratorKind::Pbm, GeneratorKind::Ubm, GeneratorKind::Sdbn,
                      GeneratorKind::GraphPlanted}) {
        SyntheticSpec spec;
        spec.kind = kind;
        spec.sessions = 200;
        spec.seed = 42;
        spec.n_queries = kind == GeneratorKind::GraphPlanted ? 25 : 8;
        auto a = generate_synthetic(spec);
        auto b = generate_synthetic(spec);
        CHECK(same_sessions(a, b));

        spec.seed = 43;
        auto c = generate_synthetic(spec);
        CHECK_FALSE(same_sessions(a, c));
    }
}

TEST_CASE("truth tables survive serialization") {
    for (auto kind : {GeneratorKind::Pbm, GeneratorKind::Ubm, GeneratorKind::Sdbn,
                      GeneratorKind::GraphPlanted}) {
        SyntheticSpec spec;
        spec.kind = kind;
        spec.sessions = 50;
        spec.seed = 7;
        spec.n_queries = kind == GeneratorKind::GraphPlanted ? 25 : 6;
        if (kind == GeneratorKind::GraphPlanted) { spec.holdout_fraction = 0.2; }
        auto res = generate_synthetic(spec);

        std::stringstream buf;
        res.truth.save(buf);
        auto loaded = SyntheticTruth::load(buf);
        CHECK(loaded.kind == res.truth.kind);
        CHECK(loaded.serp_len == res.truth.serp_len);
        REQUIRE(loaded.gamma.size() == res.truth.gamma.size());
        for (std::size_t i = 0; i < loaded.gamma.size(); ++i) {
            CHECK(loaded.gamma[i] == res.truth.gamma[i]);
        }
        CHECK(loaded.alpha == res.truth.alpha);
        CHECK(loaded.sigma == res.truth.sigma);
        CHECK(loaded.query_topic == res.truth.query_topic);
        CHECK(loaded.doc_topic == res.truth.doc_topic);
        CHECK(loaded.holdout_queries == res.truth.holdout_queries);
        CHECK(loaded.alpha_in == res.truth.alpha_in);
        CHECK(loaded.alpha_out == res.truth.alpha_out);
    }
}

TEST_CASE("PBM and UBM conditional truths recompute independently") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::Pbm;
    spec.sessions = 100;
    spec.seed = 5;
    auto res = generate_synthetic(spec);
    for (const auto& s : res.sessions) {
        auto probs = res.truth.true_probs(s, res.queries, res.docs);
        std::size_t i = 0;
        for (const auto& q : s.queries) {
            const auto& qtok = res.queries.token(q.query);
            for (const auto& imp : q.impressions) {
                const double want =
                    res.truth.gamma[static_cast<std::size_t>(imp.position - 1)] *
                    res.truth.alpha_for(qtok, res.docs.token(imp.doc));
                CHECK(probs[i++] == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }

    spec.kind = GeneratorKind::Ubm;
    auto ubm = generate_synthetic(spec);
    const std::size_t cols = static_cast<std::size_t>(spec.serp_len + 1);
    for (const auto& s : ubm.sessions) {
        auto probs = ubm.truth.true_probs(s, ubm.queries, ubm.docs);
        std::size_t i = 0;
        for (const auto& q : s.queries) {
            const auto& qtok = ubm.queries.token(q.query);
            int prev = 0;
            for (const auto& imp : q.impressions) {
                const double g =
                    ubm.truth.gamma[static_cast<std::size_t>(imp.position - 1) * cols +
                                    static_cast<std::size_t>(prev)];
                const double want = g * ubm.truth.alpha_for(qtok, ubm.docs.token(imp.doc));
                CHECK(probs[i++] == doctest::Approx(want).epsilon(1e-12));
                if (imp.click) { prev = imp.position; }
            }
        }
    }
}

TEST_CASE("SDBN conditional truth matches the joint enumeration") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::Sdbn;
    spec.sessions = 150;
    spec.seed = 9;
    auto res = generate_synthetic(spec);
    for (const auto& s : res.sessions) {
        auto probs = res.truth.true_probs(s, res.queries, res.docs);
        std::size_t i = 0;
        for (const auto& q : s.queries) {
            const auto& qtok = res.queries.token(q.query);
            std::vector<double> alpha, sigma;
            std::vector<int> clicks;
            for (const auto& imp : q.impressions) {
                const auto& dtok = res.docs.token(imp.doc);
                alpha.push_back(res.truth.alpha_for(qtok, dtok));
                sigma.push_back(res.truth.sigma.at({qtok, dtok}));
                clicks.push_back(imp.click);
            }
            for (std::size_t r = 0; r < clicks.size(); ++r) {
                std::vector<int> prefix(clicks.begin(),
                                        clicks.begin() + static_cast<std::ptrdiff_t>(r));
                auto with_click = prefix;
                with_click.push_back(1);
                const double want = sdbn_prefix_prob(with_click, alpha, sigma) /
                                    sdbn_prefix_prob(prefix, alpha, sigma);
                CHECK(probs[i++] == doctest::Approx(want).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("UBM generator respects previous-click conditioning") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::Ubm;
    spec.sessions = 3000;
    spec.seed = 17;
    spec.serp_len = 2;
    // gamma grid rows (rank, prev): rank 2 examines only after a click at 1
    spec.gamma = {0.9, 0.0, 0.0, /* rank 2: */ 0.0, 1.0, 0.0};
    auto res = generate_synthetic(spec);
    int second_rank_clicks = 0;
    for (const auto& s : res.sessions) {
        for (const auto& q : s.queries) {
            REQUIRE(q.impressions.size() == 2);
            if (q.impressions[1].click) {
                ++second_rank_clicks;
                CHECK(q.impressions[0].click == 1);
            }
        }
    }
    CHECK(second_rank_clicks > 100);
}

TEST_CASE("planted topics shape sessions, SERPs, and attractiveness") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::GraphPlanted;
    spec.sessions = 300;
    spec.seed = 21;
    spec.n_queries = 50;
    spec.topics = 10;
    spec.docs_per_topic = 8;
    spec.same_topic_docs = 2;
    spec.queries_per_session = 2;
    auto res = generate_synthetic(spec);

    CHECK(res.truth.alpha_in == spec.alpha_in);
    CHECK(res.truth.alpha_out == spec.alpha_out);
    for (const auto& s : res.sessions) {
        std::set<int> topics;
        for (const auto& q : s.queries) {
            const auto& qtok = res.queries.token(q.query);
            const int topic = res.truth.query_topic.at(qtok);
            topics.insert(topic);
            int same = 0;
            for (const auto& imp : q.impressions) {
                if (res.truth.doc_topic.at(res.docs.token(imp.doc)) == topic) { ++same; }
            }
            CHECK(same >= spec.same_topic_docs);
        }
        CHECK(topics.size() == 1);
    }

    // alpha_for is the planted two-level map
    const auto& q0 = res.queries.token(res.sessions[0].queries[0].query);
    const int t0 = res.truth.query_topic.at(q0);
    for (const auto& [d, dt] : res.truth.doc_topic) {
        const double a = res.truth.alpha_for(q0, d);
        CHECK(a == (dt == t0 ? spec.alpha_in : spec.alpha_out));
    }
}

TEST_CASE("holdout queries appear once, after the regular sessions") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::GraphPlanted;
    spec.sessions = 200;
    spec.seed = 31;
    spec.n_queries = 40;
    spec.topics = 8;
    spec.holdout_fraction = 0.25;
    auto res = generate_synthetic(spec);

    REQUIRE(res.truth.holdout_queries.size() == 10);
    CHECK(res.sessions.size() == 210);

    std::map<std::string, int> occurrences;
    for (const auto& s : res.sessions) {
        for (const auto& q : s.queries) { occurrences[res.queries.token(q.query)]++; }
    }
    std::set<std::string> holdout(res.truth.holdout_queries.begin(),
                                  res.truth.holdout_queries.end());
    for (const auto& h : holdout) { CHECK(occurrences.at(h) == 1); }

    // regular prefix never mentions a holdout query
    for (std::size_t i = 0; i < 200; ++i) {
        for (const auto& q : res.sessions[i].queries) {
            CHECK(holdout.count(res.queries.token(q.query)) == 0);
        }
    }
    // appended sessions pair a warm query with its holdout successor, same topic
    for (std::size_t i = 200; i < 210; ++i) {
        const auto& s = res.sessions[i];
        REQUIRE(s.queries.size() == 2);
        const auto& warm = res.queries.token(s.queries[0].query);
        const auto& cold = res.queries.token(s.queries[1].query);
        CHECK(holdout.count(warm) == 0);
        CHECK(holdout.count(cold) == 1);
        CHECK(res.truth.query_topic.at(warm) == res.truth.query_topic.at(cold));
    }
}

TEST_CASE("relevance grades quantize attractiveness") {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::Pbm;
    spec.sessions = 20;
    spec.seed = 2;
    auto res = generate_synthetic(spec);
    auto rel = res.truth.relevance();
    CHECK(rel.size() == res.truth.alpha.size());
    for (const auto& [key, grade] : rel) {
        CHECK(grade >= 0);
        CHECK(grade <= 4);
        CHECK(grade == static_cast<int>(std::lround(res.truth.alpha.at(key) * 4.0)));
    }

    SyntheticSpec planted;
    planted.kind = GeneratorKind::GraphPlanted;
    planted.sessions = 20;
    planted.seed = 2;
    planted.n_queries = 25;
    auto pres = generate_synthetic(planted);
    auto prel = pres.truth.relevance();
    const auto& some_q = pres.truth.query_topic.begin()->first;
    const int qt = pres.truth.query_topic.at(some_q);
    for (const auto& [d, dt] : pres.truth.doc_topic) {
        const int want = static_cast<int>(
            std::lround((dt == qt ? planted.alpha_in : planted.alpha_out) * 4.0));
        CHECK(prel.at({some_q, d}) == want);
    }
}

TEST_CASE("invalid specifications are rejected") {
    SyntheticSpec spec;
    spec.sessions = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);

    spec = {};
    spec.gamma = {0.5, 0.5};  // wrong length for serp_len 4
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);

    spec = {};
    spec.gamma = {0.5, 0.5, 0.5, 1.5};
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);

    spec = {};
    spec.alpha_lo = 0.9;
    spec.alpha_hi = 0.1;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);

    spec = {};
    spec.kind = GeneratorKind::GraphPlanted;
    spec.n_queries = 4;
    spec.topics = 10;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);

    spec = {};
    spec.kind = GeneratorKind::GraphPlanted;
    spec.n_queries = 25;
    spec.same_topic_docs = 9;
    spec.serp_len = 4;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
}

TEST_CASE("generator names round-trip") {
    for (auto kind : {GeneratorKind::Pbm, GeneratorKind::Ubm, GeneratorKind::Sdbn,
                      GeneratorKind::GraphPlanted}) {
        CHECK(generator_kind_from(generator_kind_name(kind)) == kind);
    }
    CHECK_THROWS_AS(generator_kind_from("bogus"), std::invalid_argument);
}

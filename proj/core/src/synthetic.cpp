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

#include "graphcm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "graphcm/rng.hpp"

namespace graphcm {

namespace {

constexpr std::uint64_t kAlphaSalt = 0x7c3a1f5db2e90d41ULL;
constexpr std::uint64_t kSigmaSalt = 0x51d8ee0ba7c4f623ULL;

double unit_hash(std::uint64_t seed, std::uint64_t salt, std::uint64_t key) {
    return hash_uniform(mix_seed(mix_seed(seed, salt), key));
}

std::vector<double> default_pbm_gamma(int serp_len) {
    if (serp_len == 4) { return {0.95, 0.7, 0.45, 0.2}; }
    std::vector<double> g(static_cast<std::size_t>(serp_len));
    double v = 0.95;
    for (auto& x : g) {
        x = v;
        v *= 0.72;
    }
    return g;
}

std::vector<double> default_ubm_gamma(int serp_len) {
    const std::size_t cols = static_cast<std::size_t>(serp_len + 1);
    std::vector<double> g(static_cast<std::size_t>(serp_len) * cols);
    for (int r = 1; r <= serp_len; ++r) {
        for (int rp = 0; rp <= serp_len; ++rp) {
            double v;
            if (rp == 0) {
                v = 0.85 * std::pow(0.55, r - 1);
            } else {
                v = 0.9 * std::pow(0.6, std::max(r - rp - 1, 0));
            }
            g[static_cast<std::size_t>(r - 1) * cols + static_cast<std::size_t>(rp)] = v;
        }
    }
    return g;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void validate(const SyntheticSpec& spec) {
    if (spec.sessions < 1) { throw std::invalid_argument("synthetic: sessions must be >= 1"); }
    if (spec.n_queries < 1) { throw std::invalid_argument("synthetic: n_queries must be >= 1"); }
    if (spec.serp_len < 1) { throw std::invalid_argument("synthetic: serp_len must be >= 1"); }
    if (spec.queries_per_session < 1) {
        throw std::invalid_argument("synthetic: queries_per_session must be >= 1");
    }
    for (double g : spec.gamma) {
        if (g < 0.0 || g > 1.0) {
            throw std::invalid_argument("synthetic: gamma outside [0,1]");
        }
    }
    if (spec.kind == GeneratorKind::GraphPlanted) {
        if (spec.topics < 1) { throw std::invalid_argument("synthetic: topics must be >= 1"); }
        if (spec.n_queries < spec.topics) {
            throw std::invalid_argument("synthetic: need at least one query per topic");
        }
        if (spec.same_topic_docs > spec.serp_len) {
            throw std::invalid_argument("synthetic: same_topic_docs exceeds serp_len");
        }
        if (spec.docs_per_topic < spec.same_topic_docs) {
            throw std::invalid_argument("synthetic: docs_per_topic below same_topic_docs");
        }
        if (spec.holdout_fraction < 0.0 || spec.holdout_fraction > 1.0) {
            throw std::invalid_argument("synthetic: holdout_fraction outside [0,1]");
        }
        if (spec.alpha_in < 0.0 || spec.alpha_in > 1.0 || spec.alpha_out < 0.0 ||
            spec.alpha_out > 1.0) {
            throw std::invalid_argument("synthetic: planted alpha outside [0,1]");
        }
    }
}

}  // namespace

const char* generator_kind_name(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::Pbm: return "PBM";
        case GeneratorKind::Ubm: return "UBM";
        case GeneratorKind::Sdbn: return "SDBN";
        case GeneratorKind::GraphPlanted: return "GRAPH_PLANTED";
    }
    return "?";
}

GeneratorKind generator_kind_from(const std::string& name) {
    if (name == "PBM" || name == "pbm") { return GeneratorKind::Pbm; }
    if (name == "UBM" || name == "ubm") { return GeneratorKind::Ubm; }
    if (name == "SDBN" || name == "sdbn") { return GeneratorKind::Sdbn; }
    if (name == "GRAPH_PLANTED" || name == "graph_planted" || name == "graph-planted") {
        return GeneratorKind::GraphPlanted;
    }
    throw std::invalid_argument("unknown generator kind: " + name);
}

double SyntheticTruth::alpha_for(const std::string& q, const std::string& d) const {
    if (kind == GeneratorKind::GraphPlanted) {
        auto qt = query_topic.find(q);
        auto dt = doc_topic.find(d);
        if (qt == query_topic.end() || dt == doc_topic.end()) {
            throw std::invalid_argument("truth: unknown token " +
                                        (qt == query_topic.end() ? q : d));
        }
        return qt->second == dt->second ? alpha_in : alpha_out;
    }
    auto it = alpha.find({q, d});
    if (it == alpha.end()) {
        throw std::invalid_argument("truth: no alpha for pair (" + q + ", " + d + ")");
    }
    return it->second;
}

std::vector<double> SyntheticTruth::true_probs(const Session& session,
                                               const Vocabulary& queries,
                                               const Vocabulary& docs) const {
    std::vector<double> out;
    const std::size_t cols = static_cast<std::size_t>(serp_len + 1);
    for (const auto& qrec : session.queries) {
        const std::string& qtok = queries.token(qrec.query);
        int prev_click = 0;
        double exam = 1.0;
        for (const auto& imp : qrec.impressions) {
            const std::string& dtok = docs.token(imp.doc);
            const double a = alpha_for(qtok, dtok);
            const int r = std::clamp(imp.position, 1, serp_len);
            double p = 0.0;
            switch (kind) {
                case GeneratorKind::Pbm:
                case GeneratorKind::GraphPlanted:
                    p = gamma[static_cast<std::size_t>(r - 1)] * a;
                    break;
                case GeneratorKind::Ubm:
                    p = gamma[static_cast<std::size_t>(r - 1) * cols +
                              static_cast<std::size_t>(prev_click)] *
                        a;
                    break;
                case GeneratorKind::Sdbn: p = exam * a; break;
            }
            out.push_back(p);
            if (kind == GeneratorKind::Sdbn) {
                if (imp.click != 0) {
                    auto it = sigma.find({qtok, dtok});
                    if (it == sigma.end()) {
                        throw std::invalid_argument("truth: no sigma for pair (" + qtok + ", " +
                                                    dtok + ")");
                    }
                    exam = 1.0 - it->second;
                } else {
                    exam = exam * (1.0 - a) / std::max(1.0 - exam * a, 1e-12);
                }
            }
            if (imp.click != 0) { prev_click = imp.position; }
        }
    }
    return out;
}

std::map<std::pair<std::string, std::string>, int> SyntheticTruth::relevance() const {
    std::map<std::pair<std::string, std::string>, int> out;
    auto grade_of = [](double a) {
        return std::clamp(static_cast<int>(std::lround(a * 4.0)), 0, 4);
    };
    if (kind == GeneratorKind::GraphPlanted) {
        for (const auto& [q, qt] : query_topic) {
            for (const auto& [d, dt] : doc_topic) {
                out[{q, d}] = grade_of(qt == dt ? alpha_in : alpha_out);
            }
        }
    } else {
        for (const auto& [key, a] : alpha) { out[key] = grade_of(a); }
    }
    return out;
}

void SyntheticTruth::save(std::ostream& os) const {
    os << "graphcm-truth 1 " << generator_kind_name(kind) << "\n";
    os << "serp_len " << serp_len << "\n";
    const std::size_t cols = static_cast<std::size_t>(serp_len + 1);
    if (kind == GeneratorKind::Ubm) {
        for (int r = 1; r <= serp_len; ++r) {
            for (int rp = 0; rp <= serp_len; ++rp) {
                os << "gamma " << r << " " << rp << " "
                   << fmt(gamma[static_cast<std::size_t>(r - 1) * cols +
                                static_cast<std::size_t>(rp)])
                   << "\n";
            }
        }
    } else if (kind != GeneratorKind::Sdbn) {
        for (int r = 1; r <= serp_len; ++r) {
            os << "gamma " << r << " " << fmt(gamma[static_cast<std::size_t>(r - 1)]) << "\n";
        }
    }
    if (kind == GeneratorKind::GraphPlanted) {
        os << "alpha_in " << fmt(alpha_in) << "\n";
        os << "alpha_out " << fmt(alpha_out) << "\n";
        for (const auto& [q, t] : query_topic) { os << "topic_query " << q << " " << t << "\n"; }
        for (const auto& [d, t] : doc_topic) { os << "topic_doc " << d << " " << t << "\n"; }
        for (const auto& q : holdout_queries) { os << "holdout " << q << "\n"; }
    } else {
        for (const auto& [key, v] : alpha) {
            os << "alpha " << key.first << " " << key.second << " " << fmt(v) << "\n";
        }
        for (const auto& [key, v] : sigma) {
            os << "sigma " << key.first << " " << key.second << " " << fmt(v) << "\n";
        }
    }
}

void SyntheticTruth::save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) { throw std::runtime_error("cannot open truth file for writing: " + path); }
    save(os);
    if (!os) { throw std::runtime_error("failed writing truth file: " + path); }
}

SyntheticTruth SyntheticTruth::load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) { throw std::runtime_error("truth file: empty"); }
    std::istringstream hs(line);
    std::string magic, kind_name;
    int version = 0;
    hs >> magic >> version >> kind_name;
    if (!hs || magic != "graphcm-truth" || version != 1) {
        throw std::runtime_error("truth file: bad header \"" + line + "\"");
    }
    SyntheticTruth out;
    out.kind = generator_kind_from(kind_name);
    std::vector<std::tuple<int, int, double>> gamma_entries;
    while (std::getline(is, line)) {
        if (line.empty()) { continue; }
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "serp_len") {
            ls >> out.serp_len;
        } else if (tag == "gamma") {
            if (out.kind == GeneratorKind::Ubm) {
                int r, rp;
                double v;
                ls >> r >> rp >> v;
                gamma_entries.emplace_back(r, rp, v);
            } else {
                int r;
                double v;
                ls >> r >> v;
                gamma_entries.emplace_back(r, 0, v);
            }
        } else if (tag == "alpha") {
            std::string q, d;
            double v;
            ls >> q >> d >> v;
            out.alpha[{q, d}] = v;
        } else if (tag == "sigma") {
            std::string q, d;
            double v;
            ls >> q >> d >> v;
            out.sigma[{q, d}] = v;
        } else if (tag == "alpha_in") {
            ls >> out.alpha_in;
        } else if (tag == "alpha_out") {
            ls >> out.alpha_out;
        } else if (tag == "topic_query") {
            std::string q;
            int t;
            ls >> q >> t;
            out.query_topic[q] = t;
        } else if (tag == "topic_doc") {
            std::string d;
            int t;
            ls >> d >> t;
            out.doc_topic[d] = t;
        } else if (tag == "holdout") {
            std::string q;
            ls >> q;
            out.holdout_queries.push_back(q);
        } else {
            throw std::runtime_error("truth file: unknown tag \"" + tag + "\"");
        }
        if (!ls) { throw std::runtime_error("truth file: malformed line \"" + line + "\""); }
    }
    if (out.serp_len < 1) { throw std::runtime_error("truth file: missing serp_len"); }
    const std::size_t cols = static_cast<std::size_t>(out.serp_len + 1);
    if (out.kind == GeneratorKind::Ubm) {
        out.gamma.assign(static_cast<std::size_t>(out.serp_len) * cols, 0.5);
    } else if (out.kind != GeneratorKind::Sdbn) {
        out.gamma.assign(static_cast<std::size_t>(out.serp_len), 0.5);
    }
    for (const auto& [r, rp, v] : gamma_entries) {
        if (out.kind == GeneratorKind::Ubm) {
            out.gamma[static_cast<std::size_t>(r - 1) * cols + static_cast<std::size_t>(rp)] = v;
        } else {
            out.gamma[static_cast<std::size_t>(r - 1)] = v;
        }
    }
    return out;
}

SyntheticTruth SyntheticTruth::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open truth file: " + path); }
    return load(is);
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    SyntheticResult res;
    res.truth.kind = spec.kind;
    res.truth.serp_len = spec.serp_len;
    Rng rng(spec.seed);
    const std::int64_t vert_id = res.verticals.intern("v0");

    if (spec.kind == GeneratorKind::GraphPlanted) {
        const int n_holdout =
            static_cast<int>(std::llround(spec.holdout_fraction * spec.n_queries));
        const int n_total_q = spec.n_queries + n_holdout;
        const int n_docs = spec.topics * spec.docs_per_topic;
        res.truth.gamma = spec.gamma.empty() ? default_pbm_gamma(spec.serp_len) : spec.gamma;
        if (static_cast<int>(res.truth.gamma.size()) != spec.serp_len) {
            throw std::invalid_argument("synthetic: gamma length does not match serp_len");
        }
        res.truth.alpha_in = spec.alpha_in;
        res.truth.alpha_out = spec.alpha_out;
        std::vector<std::int64_t> qids, dids;
        for (int i = 0; i < n_total_q; ++i) {
            const std::string tok = "q" + std::to_string(i);
            qids.push_back(res.queries.intern(tok));
            res.truth.query_topic[tok] = i % spec.topics;
            if (i >= spec.n_queries) { res.truth.holdout_queries.push_back(tok); }
        }
        for (int i = 0; i < n_docs; ++i) {
            const std::string tok = "d" + std::to_string(i);
            dids.push_back(res.docs.intern(tok));
            res.truth.doc_topic[tok] = i % spec.topics;
        }
        std::vector<std::vector<int>> topic_queries(static_cast<std::size_t>(spec.topics));
        for (int i = 0; i < spec.n_queries; ++i) {
            topic_queries[static_cast<std::size_t>(i % spec.topics)].push_back(i);
        }
        std::vector<std::vector<int>> topic_docs(static_cast<std::size_t>(spec.topics));
        for (int i = 0; i < n_docs; ++i) {
            topic_docs[static_cast<std::size_t>(i % spec.topics)].push_back(i);
        }
        auto emit_serp = [&](QueryRecord& qrec, int qidx) {
            const int topic = qidx % spec.topics;
            const auto& pool = topic_docs[static_cast<std::size_t>(topic)];
            std::vector<int> chosen;
            // same-topic docs without replacement
            std::vector<int> local = pool;
            for (int j = 0; j < spec.same_topic_docs; ++j) {
                const std::size_t pick = static_cast<std::size_t>(
                    rng.uniform_int(static_cast<std::int64_t>(local.size())));
                chosen.push_back(local[pick]);
                local.erase(local.begin() + static_cast<std::ptrdiff_t>(pick));
            }
            while (static_cast<int>(chosen.size()) < spec.serp_len) {
                const int cand = static_cast<int>(rng.uniform_int(n_docs));
                if (std::find(chosen.begin(), chosen.end(), cand) != chosen.end()) { continue; }
                chosen.push_back(cand);
            }
            if (spec.shuffle_serp) { rng.shuffle(chosen); }
            for (int r = 1; r <= spec.serp_len; ++r) {
                const int didx = chosen[static_cast<std::size_t>(r - 1)];
                const double a = didx % spec.topics == topic ? spec.alpha_in : spec.alpha_out;
                const double p = res.truth.gamma[static_cast<std::size_t>(r - 1)] * a;
                ImpressionRecord imp;
                imp.doc = dids[static_cast<std::size_t>(didx)];
                imp.position = r;
                imp.vertical = vert_id;
                imp.click = rng.bernoulli(p) ? 1 : 0;
                qrec.impressions.push_back(imp);
            }
        };
        std::int64_t sid = 0;
        for (std::int64_t s = 0; s < spec.sessions; ++s) {
            Session sess;
            sess.sid = "s" + std::to_string(sid++);
            const int topic = static_cast<int>(rng.uniform_int(spec.topics));
            const auto& qpool = topic_queries[static_cast<std::size_t>(topic)];
            for (int k = 0; k < spec.queries_per_session; ++k) {
                const int qidx = qpool[static_cast<std::size_t>(
                    rng.uniform_int(static_cast<std::int64_t>(qpool.size())))];
                QueryRecord qrec;
                qrec.query = qids[static_cast<std::size_t>(qidx)];
                emit_serp(qrec, qidx);
                sess.queries.push_back(std::move(qrec));
            }
            res.sessions.push_back(std::move(sess));
        }
        for (int h = 0; h < n_holdout; ++h) {
            const int qidx = spec.n_queries + h;
            const int topic = qidx % spec.topics;
            const auto& qpool = topic_queries[static_cast<std::size_t>(topic)];
            Session sess;
            sess.sid = "s" + std::to_string(sid++);
            const int warm = qpool[static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::int64_t>(qpool.size())))];
            for (const int qi : {warm, qidx}) {
                QueryRecord qrec;
                qrec.query = qids[static_cast<std::size_t>(qi)];
                emit_serp(qrec, qi);
                sess.queries.push_back(std::move(qrec));
            }
            res.sessions.push_back(std::move(sess));
        }
        return res;
    }

    // PBM / UBM / SDBN: each query owns a fixed block of serp_len documents.
    double alpha_lo = spec.alpha_lo;
    double alpha_hi = spec.alpha_hi;
    if (alpha_lo < 0.0) { alpha_lo = spec.kind == GeneratorKind::Sdbn ? 0.65 : 0.1; }
    if (alpha_hi < 0.0) { alpha_hi = spec.kind == GeneratorKind::Sdbn ? 0.95 : 0.9; }
    double sigma_lo = spec.sigma_lo < 0.0 ? 0.6 : spec.sigma_lo;
    double sigma_hi = spec.sigma_hi < 0.0 ? 0.95 : spec.sigma_hi;
    if (alpha_hi < alpha_lo || sigma_hi < sigma_lo || alpha_lo < 0.0 || alpha_hi > 1.0 ||
        sigma_lo < 0.0 || sigma_hi > 1.0) {
        throw std::invalid_argument("synthetic: bad alpha/sigma range");
    }
    const int n_docs = spec.n_queries * spec.serp_len;
    std::vector<std::int64_t> qids, dids;
    for (int i = 0; i < spec.n_queries; ++i) {
        qids.push_back(res.queries.intern("q" + std::to_string(i)));
    }
    for (int i = 0; i < n_docs; ++i) { dids.push_back(res.docs.intern("d" + std::to_string(i))); }
    for (int q = 0; q < spec.n_queries; ++q) {
        for (int j = 0; j < spec.serp_len; ++j) {
            const int didx = q * spec.serp_len + j;
            const double a =
                alpha_lo + (alpha_hi - alpha_lo) *
                               unit_hash(spec.seed, kAlphaSalt, static_cast<std::uint64_t>(didx));
            res.truth.alpha[{"q" + std::to_string(q), "d" + std::to_string(didx)}] = a;
            if (spec.kind == GeneratorKind::Sdbn) {
                const double sg =
                    sigma_lo + (sigma_hi - sigma_lo) *
                                   unit_hash(spec.seed, kSigmaSalt,
                                             static_cast<std::uint64_t>(didx));
                res.truth.sigma[{"q" + std::to_string(q), "d" + std::to_string(didx)}] = sg;
            }
        }
    }
    if (spec.kind == GeneratorKind::Ubm) {
        res.truth.gamma = spec.gamma.empty() ? default_ubm_gamma(spec.serp_len) : spec.gamma;
        if (res.truth.gamma.size() !=
            static_cast<std::size_t>(spec.serp_len) * static_cast<std::size_t>(spec.serp_len + 1)) {
            throw std::invalid_argument("synthetic: UBM gamma must have serp_len*(serp_len+1) "
                                        "entries");
        }
    } else if (spec.kind == GeneratorKind::Sdbn) {
        // examination is cascade-driven; a gamma table would be dead weight
        if (!spec.gamma.empty()) {
            throw std::invalid_argument("synthetic: SDBN takes no gamma");
        }
    } else {
        res.truth.gamma = spec.gamma.empty() ? default_pbm_gamma(spec.serp_len) : spec.gamma;
        if (static_cast<int>(res.truth.gamma.size()) != spec.serp_len) {
            throw std::invalid_argument("synthetic: gamma length does not match serp_len");
        }
    }
    const std::size_t cols = static_cast<std::size_t>(spec.serp_len + 1);
    for (std::int64_t s = 0; s < spec.sessions; ++s) {
        Session sess;
        sess.sid = "s" + std::to_string(s);
        for (int k = 0; k < spec.queries_per_session; ++k) {
            const int q = static_cast<int>(rng.uniform_int(spec.n_queries));
            std::vector<int> order(static_cast<std::size_t>(spec.serp_len));
            std::iota(order.begin(), order.end(), 0);
            if (spec.shuffle_serp) { rng.shuffle(order); }
            QueryRecord qrec;
            qrec.query = qids[static_cast<std::size_t>(q)];
            int prev_click = 0;
            bool examining = true;
            for (int r = 1; r <= spec.serp_len; ++r) {
                const int didx = q * spec.serp_len + order[static_cast<std::size_t>(r - 1)];
                const double a = res.truth.alpha.at(
                    {"q" + std::to_string(q), "d" + std::to_string(didx)});
                int click = 0;
                switch (spec.kind) {
                    case GeneratorKind::Pbm:
                        click = rng.bernoulli(res.truth.gamma[static_cast<std::size_t>(r - 1)] *
                                              a)
                                    ? 1
                                    : 0;
                        break;
                    case GeneratorKind::Ubm: {
                        const double g = res.truth.gamma[static_cast<std::size_t>(r - 1) * cols +
                                                         static_cast<std::size_t>(prev_click)];
                        click = rng.bernoulli(g * a) ? 1 : 0;
                        if (click != 0) { prev_click = r; }
                        break;
                    }
                    case GeneratorKind::Sdbn: {
                        if (examining && rng.bernoulli(a)) {
                            click = 1;
                            const double sg = res.truth.sigma.at(
                                {"q" + std::to_string(q), "d" + std::to_string(didx)});
                            if (rng.bernoulli(sg)) { examining = false; }
                        }
                        break;
                    }
                    case GeneratorKind::GraphPlanted: break;
                }
                ImpressionRecord imp;
                imp.doc = dids[static_cast<std::size_t>(didx)];
                imp.position = r;
                imp.vertical = vert_id;
                imp.click = click;
                qrec.impressions.push_back(imp);
            }
            sess.queries.push_back(std::move(qrec));
        }
        res.sessions.push_back(std::move(sess));
    }
    return res;
}

}  // namespace graphcm

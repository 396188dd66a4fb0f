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

#include "graphcm/model.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace graphcm {

const char* aggregation_name(Aggregation a) {
    return a == Aggregation::Average ? "AVERAGE" : "CONCAT";
}

Aggregation aggregation_from(const std::string& name) {
    if (name == "AVERAGE" || name == "average") { return Aggregation::Average; }
    if (name == "CONCAT" || name == "concat") { return Aggregation::Concat; }
    throw std::invalid_argument("unknown aggregation: " + name);
}

const char* combination_name(Combination c) {
    switch (c) {
        case Combination::Mul: return "MUL";
        case Combination::ExpMul: return "EXPMUL";
        case Combination::Linear: return "LINEAR";
        case Combination::Nonlinear: return "NONLINEAR";
    }
    return "?";
}

Combination combination_from(const std::string& name) {
    if (name == "MUL" || name == "mul") { return Combination::Mul; }
    if (name == "EXPMUL" || name == "expmul") { return Combination::ExpMul; }
    if (name == "LINEAR" || name == "linear") { return Combination::Linear; }
    if (name == "NONLINEAR" || name == "nonlinear") { return Combination::Nonlinear; }
    throw std::invalid_argument("unknown combination: " + name);
}

void validate_model_config(const ModelConfig& cfg) {
    auto require = [](bool ok, const char* what) {
        if (!ok) { throw std::invalid_argument(std::string("model config: ") + what); }
    };
    require(cfg.n_queries >= 1 && cfg.n_docs >= 1 && cfg.n_verticals >= 1,
            "vocabulary sizes must be >= 1");
    require(cfg.max_rank >= 1, "max_rank must be >= 1");
    require(cfg.emb_query >= 1 && cfg.emb_doc >= 1 && cfg.emb_vertical >= 1 &&
                cfg.emb_click >= 1 && cfg.emb_position >= 1,
            "embedding sizes must be >= 1");
    require(cfg.hidden >= 1, "hidden size must be >= 1");
    require(cfg.heads >= 1, "heads must be >= 1");
    require(cfg.neighbors >= 1, "neighbors must be >= 1");
    require(cfg.leaky_slope > 0.0, "leaky slope must be positive");
    if (cfg.aggregation == Aggregation::Concat) {
        require(cfg.emb_query % cfg.heads == 0 && cfg.emb_doc % cfg.heads == 0,
                "CONCAT needs heads dividing the embedding width");
    }
    if (cfg.use_neighbor_interaction) {
        require(cfg.emb_query == cfg.emb_doc,
                "neighbor interaction needs equal query/document widths");
    }
}

std::vector<std::pair<std::string, std::string>> model_config_hyper(const ModelConfig& cfg) {
    std::ostringstream slope;
    slope << std::setprecision(17) << cfg.leaky_slope;
    return {
        {"n_queries", std::to_string(cfg.n_queries)},
        {"n_docs", std::to_string(cfg.n_docs)},
        {"n_verticals", std::to_string(cfg.n_verticals)},
        {"max_rank", std::to_string(cfg.max_rank)},
        {"emb_query", std::to_string(cfg.emb_query)},
        {"emb_doc", std::to_string(cfg.emb_doc)},
        {"emb_vertical", std::to_string(cfg.emb_vertical)},
        {"emb_click", std::to_string(cfg.emb_click)},
        {"emb_position", std::to_string(cfg.emb_position)},
        {"hidden", std::to_string(cfg.hidden)},
        {"heads", std::to_string(cfg.heads)},
        {"neighbors", std::to_string(cfg.neighbors)},
        {"leaky_slope", slope.str()},
        {"aggregation", aggregation_name(cfg.aggregation)},
        {"combination", combination_name(cfg.combination)},
        {"use_q_gat", cfg.use_q_gat ? "1" : "0"},
        {"use_d_gat", cfg.use_d_gat ? "1" : "0"},
        {"use_neighbor_interaction", cfg.use_neighbor_interaction ? "1" : "0"},
        {"doc_gru_reset", cfg.doc_gru_reset ? "1" : "0"},
    };
}

ModelConfig model_config_from_hyper(
    const std::vector<std::pair<std::string, std::string>>& hyper) {
    ModelConfig cfg;
    auto to_i64 = [](const std::string& v) { return std::stoll(v); };
    auto to_int = [](const std::string& v) { return std::stoi(v); };
    auto to_bool = [](const std::string& v) { return v == "1" || v == "true"; };
    for (const auto& [k, v] : hyper) {
        if (k == "n_queries") {
            cfg.n_queries = to_i64(v);
        } else if (k == "n_docs") {
            cfg.n_docs = to_i64(v);
        } else if (k == "n_verticals") {
            cfg.n_verticals = to_i64(v);
        } else if (k == "max_rank") {
            cfg.max_rank = to_i64(v);
        } else if (k == "emb_query") {
            cfg.emb_query = to_int(v);
        } else if (k == "emb_doc") {
            cfg.emb_doc = to_int(v);
        } else if (k == "emb_vertical") {
            cfg.emb_vertical = to_int(v);
        } else if (k == "emb_click") {
            cfg.emb_click = to_int(v);
        } else if (k == "emb_position") {
            cfg.emb_position = to_int(v);
        } else if (k == "hidden") {
            cfg.hidden = to_int(v);
        } else if (k == "heads") {
            cfg.heads = to_int(v);
        } else if (k == "neighbors") {
            cfg.neighbors = to_int(v);
        } else if (k == "leaky_slope") {
            cfg.leaky_slope = std::stod(v);
        } else if (k == "aggregation") {
            cfg.aggregation = aggregation_from(v);
        } else if (k == "combination") {
            cfg.combination = combination_from(v);
        } else if (k == "use_q_gat") {
            cfg.use_q_gat = to_bool(v);
        } else if (k == "use_d_gat") {
            cfg.use_d_gat = to_bool(v);
        } else if (k == "use_neighbor_interaction") {
            cfg.use_neighbor_interaction = to_bool(v);
        } else if (k == "doc_gru_reset") {
            cfg.doc_gru_reset = to_bool(v);
        } else {
            throw std::runtime_error("checkpoint: unknown hyper key \"" + k + "\"");
        }
    }
    return cfg;
}

SessionBatch build_batch(std::span<const Session> sessions, const HomogeneousGraph& query_graph,
                         const HomogeneousGraph& doc_graph, const BatchOptions& opt) {
    if (sessions.empty()) { throw std::invalid_argument("build_batch: empty session span"); }
    if (opt.k < 1) { throw std::invalid_argument("build_batch: k must be >= 1"); }
    if (opt.unknown_substitution > 0.0 && opt.substitution_rng == nullptr) {
        throw std::invalid_argument("build_batch: substitution requires a generator");
    }
    if (opt.unknown_substitution < 0.0 || opt.unknown_substitution > 1.0) {
        throw std::invalid_argument("build_batch: substitution probability outside [0,1]");
    }

    SessionBatch batch;
    batch.b = static_cast<std::int64_t>(sessions.size());
    batch.k = opt.k;
    for (const auto& s : sessions) {
        batch.tq = std::max(batch.tq, static_cast<std::int64_t>(s.queries.size()));
        std::int64_t imps = 0;
        for (const auto& q : s.queries) {
            imps += static_cast<std::int64_t>(q.impressions.size());
        }
        batch.ti = std::max(batch.ti, imps);
    }
    if (batch.tq == 0 || batch.ti == 0) {
        throw std::invalid_argument("build_batch: sessions carry no impressions");
    }

    const std::int64_t b = batch.b, tq = batch.tq, ti = batch.ti, k = batch.k;
    batch.qid = IndexArray({b, tq});
    batch.qnb = IndexArray({b, tq, k});
    batch.did = IndexArray({b, ti});
    batch.dnb = IndexArray({b, ti, k});
    batch.dnb2 = IndexArray({b, ti, k, k});
    batch.pos = IndexArray({b, ti});
    batch.vert = IndexArray({b, ti});
    batch.cidx = IndexArray({b, ti});
    batch.qindex = IndexArray({b, ti});
    batch.clicks = ad::Array<double>({b, ti});
    batch.imask = ad::Array<double>({b, ti});
    batch.reset = ad::Array<double>({b, ti});
    batch.counts.assign(static_cast<std::size_t>(b), 0);

    NeighborSampler qsampler(&query_graph, opt.k, mix_seed(opt.sampler_seed, 1), opt.policy);
    NeighborSampler dsampler(&doc_graph, opt.k, mix_seed(opt.sampler_seed, 2), opt.policy);

    auto remap_q = [&](std::int64_t id) {
        if (opt.train_ids != nullptr && opt.train_ids->queries.count(id) == 0) { return std::int64_t(0); }
        return id;
    };
    auto remap_d = [&](std::int64_t id) {
        if (opt.train_ids != nullptr && opt.train_ids->docs.count(id) == 0) { return std::int64_t(0); }
        return id;
    };
    auto substitute = [&]() {
        return opt.unknown_substitution > 0.0 &&
               opt.substitution_rng->bernoulli(opt.unknown_substitution);
    };

    for (std::int64_t s = 0; s < b; ++s) {
        const Session& sess = sessions[static_cast<std::size_t>(s)];
        std::int64_t prev_q = 0;
        for (std::int64_t j = 0; j < static_cast<std::int64_t>(sess.queries.size()); ++j) {
            const std::int64_t q = remap_q(sess.queries[static_cast<std::size_t>(j)].query);
            std::vector<std::int64_t> extras;
            if (opt.extras && j > 0 && prev_q != 0) { extras.push_back(prev_q); }
            const auto sample = qsampler.sample(q, extras);
            batch.qid[s * tq + j] = q;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                batch.qnb[(s * tq + j) * k + kk] = sample[static_cast<std::size_t>(kk)];
            }
            if (substitute()) {
                batch.qid[s * tq + j] = 0;
                batch.qnb[(s * tq + j) * k + 0] = 0;
            }
            prev_q = q;
        }

        std::int64_t t = 0;
        std::int64_t click_state = 0;  // 0 session start, else previous click + 1
        for (std::int64_t j = 0; j < static_cast<std::int64_t>(sess.queries.size()); ++j) {
            const auto& rec = sess.queries[static_cast<std::size_t>(j)];
            std::int64_t prev_d = 0;
            for (std::size_t m = 0; m < rec.impressions.size(); ++m, ++t) {
                const auto& imp = rec.impressions[m];
                const std::int64_t d = remap_d(imp.doc);
                std::int64_t position = imp.position;
                if (opt.max_rank > 0) { position = std::min(position, opt.max_rank); }
                const std::int64_t cell = s * ti + t;
                batch.did[cell] = d;
                batch.pos[cell] = position;
                batch.vert[cell] = imp.vertical;
                batch.cidx[cell] = click_state;
                batch.qindex[cell] = j;
                batch.clicks[cell] = imp.click != 0 ? 1.0 : 0.0;
                batch.imask[cell] = 1.0;
                batch.reset[cell] = m == 0 ? 1.0 : 0.0;

                std::vector<std::int64_t> extras;
                if (opt.extras && m > 0 && prev_d != 0) { extras.push_back(prev_d); }
                const auto sample = dsampler.sample(d, extras);
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    batch.dnb[cell * k + kk] = sample[static_cast<std::size_t>(kk)];
                }
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const auto pure = dsampler.sample(batch.dnb[cell * k + kk], {});
                    for (std::int64_t kk2 = 0; kk2 < k; ++kk2) {
                        batch.dnb2[(cell * k + kk) * k + kk2] =
                            pure[static_cast<std::size_t>(kk2)];
                    }
                }
                if (substitute()) {
                    batch.did[cell] = 0;
                    batch.dnb[cell * k + 0] = 0;
                    batch.dnb2[cell * k * k + 0] = 0;
                }
                click_state = imp.click != 0 ? 2 : 1;
                prev_d = d;
            }
        }
        batch.counts[static_cast<std::size_t>(s)] = t;
        batch.impressions_total += t;
    }
    return batch;
}

}  // namespace graphcm

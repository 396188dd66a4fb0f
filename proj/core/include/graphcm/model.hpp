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
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "graphcm/autodiff.hpp"
#include "graphcm/dataset.hpp"
#include "graphcm/graph.hpp"
#include "graphcm/params.hpp"
#include "graphcm/rng.hpp"
#include "graphcm/session.hpp"

namespace graphcm {

using ad::IndexArray;

enum class Aggregation { Average, Concat };
enum class Combination { Mul, ExpMul, Linear, Nonlinear };

const char* aggregation_name(Aggregation a);
Aggregation aggregation_from(const std::string& name);
const char* combination_name(Combination c);
Combination combination_from(const std::string& name);

// Everything the network needs to rebuild itself from a checkpoint.  Vocab
// sizes already include the UNKNOWN row 0.
struct ModelConfig {
    std::int64_t n_queries = 0;
    std::int64_t n_docs = 0;
    std::int64_t n_verticals = 0;
    std::int64_t max_rank = 0;
    int emb_query = 64;
    int emb_doc = 64;
    int emb_vertical = 8;
    int emb_click = 4;
    int emb_position = 4;
    int hidden = 64;
    int heads = 2;
    int neighbors = 8;
    double leaky_slope = 0.2;
    Aggregation aggregation = Aggregation::Average;
    Combination combination = Combination::ExpMul;
    bool use_q_gat = true;
    bool use_d_gat = true;
    bool use_neighbor_interaction = true;
    bool doc_gru_reset = false;
};

void validate_model_config(const ModelConfig& cfg);
std::vector<std::pair<std::string, std::string>> model_config_hyper(const ModelConfig& cfg);
ModelConfig model_config_from_hyper(
    const std::vector<std::pair<std::string, std::string>>& hyper);

// Padded per-session grids.  Sessions occupy rows in span order; query steps
// and impressions are left-aligned, padding sits at the end of each row.  All
// neighbor rows start with the node itself.
struct SessionBatch {
    std::int64_t b = 0;   // sessions
    std::int64_t tq = 0;  // max query steps
    std::int64_t ti = 0;  // max impressions per session
    int k = 1;

    IndexArray qid;     // [B,Tq]
    IndexArray qnb;     // [B,Tq,K]
    IndexArray did;     // [B,Ti]
    IndexArray dnb;     // [B,Ti,K]
    IndexArray dnb2;    // [B,Ti,K,K] pure-graph samples of each dnb entry
    IndexArray pos;     // [B,Ti] 1-based display position, 0 on padding
    IndexArray vert;    // [B,Ti]
    IndexArray cidx;    // [B,Ti] 0 none, 1 previous not clicked, 2 previous clicked
    IndexArray qindex;  // [B,Ti] query step owning the impression
    ad::Array<double> clicks;  // [B,Ti]
    ad::Array<double> imask;   // [B,Ti] 1 on real impressions
    ad::Array<double> reset;   // [B,Ti] 1 at each query record's first impression

    std::vector<std::int64_t> counts;  // impressions per session
    std::int64_t impressions_total = 0;
};

struct BatchOptions {
    int k = 8;
    std::uint64_t sampler_seed = 1;
    SamplePolicy policy = SamplePolicy::Uniform;
    // On-the-fly consecutive extras from the session being scored: the
    // preceding query for the query sample, the preceding-rank document for
    // the document sample.  Only items already shown enter a neighborhood, so
    // predictions never depend on later impressions.
    bool extras = true;
    // Map ids absent from `train_ids` to the UNKNOWN row.
    const IdSets* train_ids = nullptr;
    // Training-time UNKNOWN exposure: with this probability a center id (and
    // its self slot in the neighbor grids) is replaced by 0.
    double unknown_substitution = 0.0;
    Rng* substitution_rng = nullptr;
    // Clamp display positions into [1, max_rank]; 0 disables.
    std::int64_t max_rank = 0;
};

SessionBatch build_batch(std::span<const Session> sessions, const HomogeneousGraph& query_graph,
                         const HomogeneousGraph& doc_graph, const BatchOptions& opt);

struct ForwardOptions {
    bool train = false;
    double dropout = 0.0;
    Rng* dropout_rng = nullptr;
};

template <class Real>
struct ForwardResult {
    ad::Var<Real> exam;  // [B,Ti], clamped
    ad::Var<Real> attr;  // [B,Ti], clamped
    ad::Var<Real> prob;  // [B,Ti], clamped
    ad::Var<Real> loss;  // masked mean BCE (L2 handled by the optimizer)
    double count = 0;    // real impressions in the batch
};

// Row-major [B,Ti] grid values for the real impressions, in session order.
template <class Real>
std::vector<double> flatten_impressions(const ad::Array<Real>& grid, const SessionBatch& batch) {
    if (grid.shape() != ad::Shape{batch.b, batch.ti}) {
        throw std::invalid_argument("flatten_impressions: grid shape mismatch");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(batch.impressions_total));
    for (std::int64_t s = 0; s < batch.b; ++s) {
        for (std::int64_t t = 0; t < batch.counts[static_cast<std::size_t>(s)]; ++t) {
            out.push_back(static_cast<double>(grid[s * batch.ti + t]));
        }
    }
    return out;
}

namespace detail {

inline ad::Shape cat_shape(ad::Shape s, std::int64_t last) {
    s.push_back(last);
    return s;
}

}  // namespace detail

// The GraphCM network.  Parameter values depend only on (init seed, name), so
// ablated variants share identical initial values for shared parameters.
template <class Real>
class GraphCm {
  public:
    GraphCm(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
        validate_model_config(cfg_);
        build_params(init_seed);
    }

    GraphCm(const ModelConfig& cfg, ParamStore<Real> store)
        : cfg_(cfg), store_(std::move(store)) {
        validate_model_config(cfg_);
        verify_params();
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<Real>& params() { return store_; }
    const ParamStore<Real>& params() const { return store_; }

    ForwardResult<Real> forward(const SessionBatch& batch, const ForwardOptions& opt = {}) {
        using ad::Var;
        if (batch.b < 1) { throw std::invalid_argument("forward: empty batch"); }
        if (batch.k != cfg_.neighbors) {
            throw std::invalid_argument("forward: batch K does not match the model config");
        }
        const std::int64_t b = batch.b, ti = batch.ti;

        // Query tower: adjusted embeddings, session GRU, per-impression gather.
        Var<Real> emb_q = store_.get("emb.query");
        Var<Real> vq = cfg_.use_q_gat ? gat_apply("q_gat", emb_q, batch.qid, batch.qnb)
                                      : ad::embedding_lookup(emb_q, batch.qid);
        vq = maybe_dropout(vq, opt);
        Var<Real> hq = run_gru(vq, "gru_q", nullptr);            // [B,Tq,H]
        Var<Real> hq_imp = gather_steps(hq, batch.qindex, ti);   // [B,Ti,H]
        Var<Real> vq_imp = gather_steps(vq, batch.qindex, ti);   // [B,Ti,D]

        // Shared categorical embeddings.
        Var<Real> v_p = ad::embedding_lookup(store_.get("emb.position"), batch.pos);
        Var<Real> v_v = ad::embedding_lookup(store_.get("emb.vertical"), batch.vert);
        Var<Real> v_c = ad::embedding_lookup(store_.get("emb.click"), batch.cidx);

        // Document tower.
        Var<Real> emb_d = store_.get("emb.doc");
        Var<Real> vd = cfg_.use_d_gat ? gat_apply("d_gat", emb_d, batch.did, batch.dnb)
                                      : ad::embedding_lookup(emb_d, batch.did);
        Var<Real> xd = maybe_dropout(ad::concat<Real>({vd, v_v, v_c, v_p}), opt);
        Var<Real> hd = run_gru(xd, "gru_d", cfg_.doc_gru_reset ? &batch.reset : nullptr);

        // Neighbor interaction over the document's sampled neighborhood.
        Var<Real> hi = cfg_.use_neighbor_interaction
                           ? neighbor_interaction(emb_d, vq_imp, batch)
                           : Var<Real>::constant(ad::Array<Real>({b, ti, cfg_.emb_query}));

        // Attractiveness MLP over [h^q, h^d, h^i].
        Var<Real> za = ad::concat<Real>({hq_imp, hd, hi});
        const std::int64_t za_w = cfg_.hidden * 2 + cfg_.emb_query;
        Var<Real> a1 = ad::leaky_relu(
            linear(ad::reshape(za, {b * ti, za_w}), "attr.w1", "attr.b1"),
            Real(cfg_.leaky_slope));
        a1 = maybe_dropout(a1, opt);
        Var<Real> a2 = ad::leaky_relu(linear(a1, "attr.w2", "attr.b2"),
                                      Real(cfg_.leaky_slope));
        Var<Real> attr = ad::reshape(ad::sigmoid(a2), {b, ti});

        // Examination tower: positions, verticals, previous click only.
        Var<Real> xe = maybe_dropout(ad::concat<Real>({v_p, v_v, v_c}), opt);
        Var<Real> he = run_gru(xe, "gru_e", nullptr);
        Var<Real> exam = ad::reshape(
            ad::sigmoid(linear(ad::reshape(he, {b * ti, cfg_.hidden}), "exam.w", "exam.b")),
            {b, ti});

        ForwardResult<Real> out;
        out.exam = ad::clamp(exam, Real(kEps), Real(1.0 - kEps));
        out.attr = ad::clamp(attr, Real(kEps), Real(1.0 - kEps));
        out.prob = ad::clamp(combine(out.exam, out.attr), Real(kEps), Real(1.0 - kEps));

        ad::Array<Real> clicks = cast_array(batch.clicks);
        Var<Real> mask = Var<Real>::constant(cast_array(batch.imask));
        Var<Real> masked = ad::elementwise_mul(ad::bce_terms(out.prob, clicks), mask);
        out.count = static_cast<double>(batch.impressions_total);
        out.loss = ad::affine(ad::sum_all(masked), Real(1.0 / out.count), Real(0));
        return out;
    }

    // Learned combination scalars; only EXPMUL and LINEAR own them.
    std::pair<double, double> combination_scalars() const {
        if (cfg_.combination != Combination::ExpMul &&
            cfg_.combination != Combination::Linear) {
            throw std::logic_error(std::string("combination ") +
                                   combination_name(cfg_.combination) +
                                   " has no alpha/beta scalars");
        }
        return {static_cast<double>(store_.get("comb.alpha").value()[0]),
                static_cast<double>(store_.get("comb.beta").value()[0])};
    }

    void save(std::ostream& os) const { store_.save(os, model_config_hyper(cfg_)); }
    void save_file(const std::string& path) const {
        store_.save_file(path, model_config_hyper(cfg_));
    }
    static GraphCm load(std::istream& is) {
        auto [store, hyper] = ParamStore<Real>::load(is);
        return GraphCm(model_config_from_hyper(hyper), std::move(store));
    }
    static GraphCm load_file(const std::string& path) {
        auto [store, hyper] = ParamStore<Real>::load_file(path);
        return GraphCm(model_config_from_hyper(hyper), std::move(store));
    }

    static constexpr double kEps = 1e-7;

  private:
    ModelConfig cfg_;
    ParamStore<Real> store_;

    // --- parameter construction ---------------------------------------------

    struct ParamSpec {
        std::string name;
        ad::Shape shape;
        ParamInit init;
        double arg;
    };

    std::vector<ParamSpec> param_specs() const {
        std::vector<ParamSpec> specs;
        auto emb = [&](const char* name, std::int64_t rows, int dim) {
            specs.push_back({name, {rows, dim}, ParamInit::NormalEmbedding, 0.0});
        };
        emb("emb.query", cfg_.n_queries, cfg_.emb_query);
        emb("emb.doc", cfg_.n_docs, cfg_.emb_doc);
        emb("emb.vertical", cfg_.n_verticals, cfg_.emb_vertical);
        emb("emb.click", 3, cfg_.emb_click);
        emb("emb.position", cfg_.max_rank + 1, cfg_.emb_position);
        auto gat = [&](const std::string& prefix, int dim) {
            for (int h = 0; h < cfg_.heads; ++h) {
                const std::string p = prefix + ".h" + std::to_string(h) + ".";
                specs.push_back({p + "a_self", {dim, 1}, ParamInit::UniformFanIn, 0.0});
                specs.push_back({p + "a_nb", {dim, 1}, ParamInit::UniformFanIn, 0.0});
                specs.push_back({p + "bias", {1, 1}, ParamInit::Zeros, 0.0});
                if (cfg_.aggregation == Aggregation::Concat) {
                    specs.push_back({p + "proj", {dim, dim / cfg_.heads},
                                     ParamInit::UniformFanIn, 0.0});
                }
            }
        };
        if (cfg_.use_q_gat) { gat("q_gat", cfg_.emb_query); }
        if (cfg_.use_d_gat || cfg_.use_neighbor_interaction) { gat("d_gat", cfg_.emb_doc); }
        auto gru = [&](const std::string& prefix, std::int64_t in) {
            for (const char* g : {"z", "r", "h"}) {
                specs.push_back({prefix + ".w" + g, {in, cfg_.hidden},
                                 ParamInit::UniformFanIn, 0.0});
                specs.push_back({prefix + ".u" + g, {cfg_.hidden, cfg_.hidden},
                                 ParamInit::UniformFanIn, 0.0});
                specs.push_back({prefix + ".b" + g, {1, cfg_.hidden}, ParamInit::Zeros, 0.0});
            }
        };
        gru("gru_q", cfg_.emb_query);
        gru("gru_d", cfg_.emb_doc + cfg_.emb_vertical + cfg_.emb_click + cfg_.emb_position);
        gru("gru_e", cfg_.emb_position + cfg_.emb_vertical + cfg_.emb_click);
        if (cfg_.use_neighbor_interaction) {
            specs.push_back({"inter.w", {cfg_.emb_query, 1}, ParamInit::UniformFanIn, 0.0});
            specs.push_back({"inter.b", {1, 1}, ParamInit::Zeros, 0.0});
        }
        const std::int64_t za_w = cfg_.hidden * 2 + cfg_.emb_query;
        specs.push_back({"attr.w1", {za_w, cfg_.hidden}, ParamInit::UniformFanIn, 0.0});
        specs.push_back({"attr.b1", {1, cfg_.hidden}, ParamInit::Zeros, 0.0});
        specs.push_back({"attr.w2", {cfg_.hidden, 1}, ParamInit::UniformFanIn, 0.0});
        specs.push_back({"attr.b2", {1, 1}, ParamInit::Zeros, 0.0});
        specs.push_back({"exam.w", {cfg_.hidden, 1}, ParamInit::UniformFanIn, 0.0});
        specs.push_back({"exam.b", {1, 1}, ParamInit::Zeros, 0.0});
        switch (cfg_.combination) {
            case Combination::Mul: break;
            case Combination::ExpMul:
                specs.push_back({"comb.alpha", {1, 1}, ParamInit::Constant, 1.0});
                specs.push_back({"comb.beta", {1, 1}, ParamInit::Constant, 1.0});
                break;
            case Combination::Linear:
                specs.push_back({"comb.alpha", {1, 1}, ParamInit::Constant, 0.5});
                specs.push_back({"comb.beta", {1, 1}, ParamInit::Constant, 0.5});
                break;
            case Combination::Nonlinear:
                specs.push_back({"comb.w1", {2, 8}, ParamInit::UniformFanIn, 0.0});
                specs.push_back({"comb.b1", {1, 8}, ParamInit::Zeros, 0.0});
                specs.push_back({"comb.w2", {8, 1}, ParamInit::UniformFanIn, 0.0});
                specs.push_back({"comb.b2", {1, 1}, ParamInit::Zeros, 0.0});
                break;
        }
        return specs;
    }

    void build_params(std::uint64_t seed) {
        for (const auto& s : param_specs()) {
            store_.create(s.name, s.shape, s.init, seed, s.arg);
        }
    }

    void verify_params() const {
        auto specs = param_specs();
        for (const auto& s : specs) {
            if (!store_.has(s.name)) {
                throw std::runtime_error("checkpoint missing parameter " + s.name);
            }
            if (store_.get(s.name).shape() != s.shape) {
                throw std::runtime_error("checkpoint parameter " + s.name +
                                         " has unexpected shape");
            }
        }
        if (store_.names().size() != specs.size()) {
            throw std::runtime_error("checkpoint carries parameters foreign to this config");
        }
    }

    // --- building blocks -----------------------------------------------------

    static ad::Array<Real> cast_array(const ad::Array<double>& a) {
        ad::Array<Real> out(a.shape());
        for (std::int64_t i = 0; i < a.numel(); ++i) { out[i] = static_cast<Real>(a[i]); }
        return out;
    }

    ad::Var<Real> maybe_dropout(const ad::Var<Real>& x, const ForwardOptions& opt) {
        if (!opt.train || opt.dropout <= 0.0) { return x; }
        if (opt.dropout_rng == nullptr) {
            throw std::invalid_argument("forward: dropout requires a generator");
        }
        return ad::dropout(x, opt.dropout, true, *opt.dropout_rng);
    }

    ad::Var<Real> linear(const ad::Var<Real>& x, const char* w, const char* b) {
        return ad::add(ad::matmul(x, store_.get(w)), store_.get(b));
    }

    // Attention over each node's fixed-K sample.  `centers` has shape S, `nbs`
    // S+[K]; the result is S+[D] with D the table width.
    ad::Var<Real> gat_apply(const std::string& tower, const ad::Var<Real>& table,
                            const IndexArray& centers, const IndexArray& nbs) {
        using ad::Var;
        const ad::Shape s = centers.shape();
        ad::Shape snb = nbs.shape();
        if (ad::Shape(snb.begin(), snb.end() - 1) != s || snb.back() != cfg_.neighbors) {
            throw std::invalid_argument("gat_apply: neighbor grid shape mismatch");
        }
        const std::int64_t d = table.shape()[1];
        std::int64_t n = 1;
        for (auto v : s) { n *= v; }
        const std::int64_t k = cfg_.neighbors;

        Var<Real> nb_emb = ad::embedding_lookup(table, nbs);        // S+[K,D]
        Var<Real> self_emb = ad::embedding_lookup(table, centers);  // S+[D]
        Var<Real> nb2d = ad::reshape(nb_emb, {n * k, d});
        Var<Real> self2d = ad::reshape(self_emb, {n, d});

        const std::int64_t kaxis = static_cast<std::int64_t>(s.size());
        std::vector<Var<Real>> heads;
        for (int h = 0; h < cfg_.heads; ++h) {
            const std::string p = tower + ".h" + std::to_string(h) + ".";
            Var<Real> s_nb = ad::reshape(ad::matmul(nb2d, store_.get(p + "a_nb")),
                                         detail::cat_shape(s, k));
            Var<Real> s_self = ad::reshape(ad::matmul(self2d, store_.get(p + "a_self")),
                                           detail::cat_shape(s, 1));
            Var<Real> score = ad::leaky_relu(
                ad::add(ad::add(s_nb, s_self), store_.get(p + "bias")),
                Real(cfg_.leaky_slope));
            Var<Real> alpha = ad::softmax(score);  // over K
            Var<Real> weighted = ad::elementwise_mul(
                nb_emb, ad::reshape(alpha, detail::cat_shape(detail::cat_shape(s, k), 1)));
            heads.push_back(ad::sum_axis(weighted, kaxis));  // S+[D]
        }
        if (cfg_.aggregation == Aggregation::Average) {
            Var<Real> acc = heads[0];
            for (std::size_t h = 1; h < heads.size(); ++h) { acc = ad::add(acc, heads[h]); }
            acc = ad::affine(acc, Real(1.0 / cfg_.heads), Real(0));
            return ad::leaky_relu(acc, Real(cfg_.leaky_slope));
        }
        std::vector<Var<Real>> projected;
        for (int h = 0; h < cfg_.heads; ++h) {
            const std::string p = tower + ".h" + std::to_string(h) + ".";
            Var<Real> flat = ad::reshape(heads[static_cast<std::size_t>(h)], {n, d});
            projected.push_back(ad::leaky_relu(ad::matmul(flat, store_.get(p + "proj")),
                                               Real(cfg_.leaky_slope)));
        }
        return ad::reshape(ad::concat<Real>(projected), detail::cat_shape(s, d));
    }

    // GRU over the step axis of [B,T,In]; optional per-step state reset.
    ad::Var<Real> run_gru(const ad::Var<Real>& inputs, const std::string& prefix,
                          const ad::Array<double>* reset) {
        using ad::Var;
        const std::int64_t b = inputs.shape()[0];
        const std::int64_t t = inputs.shape()[1];
        ad::GruParams<Real> p{store_.get(prefix + ".wz"), store_.get(prefix + ".uz"),
                              store_.get(prefix + ".bz"), store_.get(prefix + ".wr"),
                              store_.get(prefix + ".ur"), store_.get(prefix + ".br"),
                              store_.get(prefix + ".wh"), store_.get(prefix + ".uh"),
                              store_.get(prefix + ".bh")};
        Var<Real> h = Var<Real>::constant(ad::Array<Real>({b, cfg_.hidden}));
        std::vector<Var<Real>> states;
        for (std::int64_t step = 0; step < t; ++step) {
            if (reset != nullptr) {
                ad::Array<Real> keep({b, 1});
                for (std::int64_t r = 0; r < b; ++r) {
                    keep[r] = Real(1) - static_cast<Real>((*reset)[r * t + step]);
                }
                h = ad::elementwise_mul(h, Var<Real>::constant(std::move(keep)));
            }
            h = ad::gru_cell(select_const_step(inputs, step), h, p);
            states.push_back(h);
        }
        return ad::stack_steps(states);
    }

    static ad::Var<Real> select_const_step(const ad::Var<Real>& x, std::int64_t step) {
        IndexArray idx({x.shape()[0]}, step);
        return ad::select_step(x, idx);
    }

    // Per-impression gather from a per-query-step grid via qindex columns.
    static ad::Var<Real> gather_steps(const ad::Var<Real>& grid, const IndexArray& qindex,
                                      std::int64_t ti) {
        const std::int64_t b = grid.shape()[0];
        std::vector<ad::Var<Real>> cols;
        cols.reserve(static_cast<std::size_t>(ti));
        for (std::int64_t t = 0; t < ti; ++t) {
            IndexArray idx({b});
            for (std::int64_t r = 0; r < b; ++r) { idx[r] = qindex[r * ti + t]; }
            cols.push_back(ad::select_step(grid, idx));
        }
        return ad::stack_steps(cols);
    }

    ad::Var<Real> neighbor_interaction(const ad::Var<Real>& emb_d, const ad::Var<Real>& vq_imp,
                                       const SessionBatch& batch) {
        using ad::Var;
        const std::int64_t b = batch.b, ti = batch.ti, k = cfg_.neighbors;
        const std::int64_t d = cfg_.emb_doc;
        // Adjusted embedding of every sampled neighbor (self first), each over
        // its own pure-graph sample.
        Var<Real> vnb = cfg_.use_d_gat ? gat_apply("d_gat", emb_d, batch.dnb, batch.dnb2)
                                       : ad::embedding_lookup(emb_d, batch.dnb);  // [B,Ti,K,D]
        Var<Real> x = ad::elementwise_mul(vnb, ad::reshape(vq_imp, {b, ti, 1, d}));
        Var<Real> score = ad::leaky_relu(
            ad::add(ad::reshape(ad::matmul(ad::reshape(x, {b * ti * k, d}),
                                           store_.get("inter.w")),
                                {b, ti, k}),
                    store_.get("inter.b")),
            Real(cfg_.leaky_slope));
        Var<Real> gamma = ad::softmax(score);
        return ad::sum_axis(ad::elementwise_mul(x, ad::reshape(gamma, {b, ti, k, 1})), 2);
    }

    ad::Var<Real> combine(const ad::Var<Real>& exam, const ad::Var<Real>& attr) {
        using ad::Var;
        switch (cfg_.combination) {
            case Combination::Mul: return ad::elementwise_mul(exam, attr);
            case Combination::ExpMul:
                return ad::pow_pair(exam, attr, store_.get("comb.alpha"),
                                    store_.get("comb.beta"));
            case Combination::Linear:
                return ad::add(ad::elementwise_mul(exam, store_.get("comb.alpha")),
                               ad::elementwise_mul(attr, store_.get("comb.beta")));
            case Combination::Nonlinear: {
                const std::int64_t n = exam.shape()[0] * exam.shape()[1];
                Var<Real> z = ad::concat<Real>(
                    {ad::reshape(exam, {n, 1}), ad::reshape(attr, {n, 1})});
                Var<Real> h1 = ad::leaky_relu(linear(z, "comb.w1", "comb.b1"),
                                              Real(cfg_.leaky_slope));
                return ad::reshape(ad::sigmoid(linear(h1, "comb.w2", "comb.b2")),
                                   exam.shape());
            }
        }
        throw std::logic_error("combine: unreachable");
    }
};

}  // namespace graphcm

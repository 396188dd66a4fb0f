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

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "graphcm/dataset.hpp"
#include "graphcm/metrics.hpp"
#include "graphcm/model.hpp"

namespace graphcm {

struct EvalOptions {
    int batch_size = 128;
    int k = 8;
    std::uint64_t sampler_seed = 1;
    SamplePolicy policy = SamplePolicy::Uniform;
    bool extras = true;
    const IdSets* train_ids = nullptr;  // ids absent here evaluate as UNKNOWN
    std::int64_t max_rank = 0;
};

// Per-impression outputs in session order.
struct EvalOutput {
    std::vector<double> probs;
    std::vector<double> exams;
    std::vector<double> attrs;
    std::vector<int> clicks;
    std::vector<int> positions;
};

template <class Real>
EvalOutput evaluate_model(GraphCm<Real>& model, const std::vector<Session>& sessions,
                          const HomogeneousGraph& query_graph,
                          const HomogeneousGraph& doc_graph, const EvalOptions& opt) {
    EvalOutput out;
    if (sessions.empty()) { return out; }
    BatchOptions bo;
    bo.k = opt.k;
    bo.sampler_seed = opt.sampler_seed;
    bo.policy = opt.policy;
    bo.extras = opt.extras;
    bo.train_ids = opt.train_ids;
    bo.max_rank = opt.max_rank;
    const std::size_t bs = static_cast<std::size_t>(opt.batch_size);
    for (std::size_t start = 0; start < sessions.size(); start += bs) {
        const std::size_t n = std::min(bs, sessions.size() - start);
        auto batch = build_batch(std::span<const Session>(sessions.data() + start, n),
                                 query_graph, doc_graph, bo);
        auto fr = model.forward(batch);
        auto p = flatten_impressions(fr.prob.value(), batch);
        auto e = flatten_impressions(fr.exam.value(), batch);
        auto a = flatten_impressions(fr.attr.value(), batch);
        out.probs.insert(out.probs.end(), p.begin(), p.end());
        out.exams.insert(out.exams.end(), e.begin(), e.end());
        out.attrs.insert(out.attrs.end(), a.begin(), a.end());
    }
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) {
                out.clicks.push_back(imp.click != 0 ? 1 : 0);
                out.positions.push_back(static_cast<int>(
                    opt.max_rank > 0 ? std::min<std::int64_t>(imp.position, opt.max_rank)
                                     : imp.position));
            }
        }
    }
    return out;
}

struct TrainOptions {
    int batch_size = 128;
    int epochs = 50;
    int patience = 5;
    double lr = 1e-3;
    double l2 = 1e-5;
    double dropout = 0.5;
    double unknown_substitution = 0.01;
    int k = 8;
    std::uint64_t shuffle_seed = 1;
    std::uint64_t sampler_seed = 1;
    SamplePolicy policy = SamplePolicy::Uniform;
    bool extras = true;
    std::int64_t max_rank = 0;
    std::ostream* log_stream = nullptr;  // one line per epoch when set
};

struct EpochLog {
    int epoch = 0;        // 1-based
    double train_loss = 0;  // masked BCE + l2 * ||theta||^2, impression-weighted
    double train_bce = 0;
    double valid_ll = 0;
    double valid_ppl = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = 0;  // 1-based; 0 when no epoch finished
    double best_valid_ppl = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::string message;
};

// Adam with validation-PPL selection and early stopping.  On a non-finite
// loss the model is rolled back to the best checkpoint seen so far (the
// initial state when divergence hits before any validation pass).
template <class Real>
TrainResult train_model(GraphCm<Real>& model, const std::vector<Session>& train,
                        const std::vector<Session>& valid,
                        const HomogeneousGraph& query_graph,
                        const HomogeneousGraph& doc_graph, const TrainOptions& opt) {
    if (train.empty()) { throw std::invalid_argument("train_model: empty training split"); }
    TrainResult result;
    const IdSets train_ids = collect_ids(train);

    auto snapshot = [&]() {
        std::ostringstream os;
        model.save(os);
        return os.str();
    };
    auto restore = [&](const std::string& blob) {
        std::istringstream is(blob);
        model = GraphCm<Real>::load(is);
    };
    std::string best_blob = snapshot();

    AdamConfig adam;
    adam.lr = opt.lr;
    adam.weight_decay = opt.l2;

    EvalOptions ev;
    ev.batch_size = opt.batch_size;
    ev.k = opt.k;
    ev.sampler_seed = opt.sampler_seed;
    ev.policy = opt.policy;
    ev.extras = opt.extras;
    ev.train_ids = &train_ids;
    ev.max_rank = opt.max_rank;

    int stale = 0;
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        Rng order_rng(mix_seed(opt.shuffle_seed, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) { order[i] = i; }
        order_rng.shuffle(order);

        Rng subst_rng(mix_seed(mix_seed(opt.shuffle_seed, 0x5b5u),
                               static_cast<std::uint64_t>(epoch)));
        Rng drop_rng(mix_seed(mix_seed(opt.shuffle_seed, 0xd40u),
                              static_cast<std::uint64_t>(epoch)));

        BatchOptions bo;
        bo.k = opt.k;
        bo.sampler_seed = mix_seed(opt.sampler_seed, static_cast<std::uint64_t>(epoch));
        bo.policy = opt.policy;
        bo.extras = opt.extras;
        bo.unknown_substitution = opt.unknown_substitution;
        bo.substitution_rng = &subst_rng;
        bo.max_rank = opt.max_rank;

        ForwardOptions fo;
        fo.train = true;
        fo.dropout = opt.dropout;
        fo.dropout_rng = &drop_rng;

        double loss_sum = 0, bce_sum = 0, count_sum = 0;
        std::vector<Session> scratch;
        const std::size_t bs = static_cast<std::size_t>(opt.batch_size);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            scratch.clear();
            for (std::size_t i = start; i < std::min(start + bs, order.size()); ++i) {
                scratch.push_back(train[order[i]]);
            }
            auto batch = build_batch(std::span<const Session>(scratch.data(), scratch.size()),
                                     query_graph, doc_graph, bo);
            model.params().zero_grad();
            auto fr = model.forward(batch, fo);
            const double bce = static_cast<double>(fr.loss.value()[0]);
            const double l2_term = opt.l2 * model.params().l2_sum_squares();
            if (!std::isfinite(bce)) {
                restore(best_blob);
                result.diverged = true;
                result.message = "training diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + "; rolled back to " +
                                 (result.best_epoch > 0
                                      ? "the epoch-" + std::to_string(result.best_epoch) +
                                            " checkpoint"
                                      : "the initial parameters");
                return result;
            }
            ad::backward(fr.loss);
            model.params().adam_step(adam);
            loss_sum += (bce + l2_term) * fr.count;
            bce_sum += bce * fr.count;
            count_sum += fr.count;
        }

        auto evo = evaluate_model(model, valid, query_graph, doc_graph, ev);
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / count_sum;
        log.train_bce = bce_sum / count_sum;
        if (!evo.probs.empty()) {
            log.valid_ll = log_likelihood(evo.probs, evo.clicks);
            log.valid_ppl = perplexity(evo.probs, evo.clicks, evo.positions).average;
        }
        result.log.push_back(log);
        if (opt.log_stream != nullptr) {
            (*opt.log_stream) << "epoch " << epoch << " train_loss " << log.train_loss
                              << " train_bce " << log.train_bce << " valid_ll " << log.valid_ll
                              << " valid_ppl " << log.valid_ppl << "\n";
        }

        const double score = evo.probs.empty() ? log.train_bce : log.valid_ppl;
        if (score < result.best_valid_ppl) {
            result.best_valid_ppl = score;
            result.best_epoch = epoch;
            best_blob = snapshot();
            stale = 0;
        } else {
            ++stale;
            if (stale > opt.patience) { break; }
        }
    }
    restore(best_blob);
    return result;
}

}  // namespace graphcm

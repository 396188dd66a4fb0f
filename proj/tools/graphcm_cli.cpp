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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "graphcm/baselines.hpp"
#include "graphcm/config.hpp"
#include "graphcm/dataset.hpp"
#include "graphcm/graph.hpp"
#include "graphcm/log_parser.hpp"
#include "graphcm/metrics.hpp"
#include "graphcm/model.hpp"
#include "graphcm/synthetic.hpp"
#include "graphcm/trainer.hpp"

namespace fs = std::filesystem;
using namespace graphcm;

namespace {

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

fs::path data_path(const ExperimentConfig& cfg, const std::string& file) {
    return fs::path(resolve_root_path(cfg.data_dir)) / file;
}

fs::path run_path(const ExperimentConfig& cfg, const std::string& file) {
    return fs::path(resolve_root_path(cfg.run_dir)) / file;
}

struct ConfigCli {
    std::string path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

// --config FILE plus one --key override per config field.
void attach_config(CLI::App* cmd, ConfigCli& cc) {
    cmd->add_option("--config", cc.path, "flat key-value config file");
    ExperimentConfig defaults;
    for (const auto& [key, value] : config_items(defaults)) {
        cmd->add_option_function<std::string>(
            "--" + key,
            [&cc, k = key](const std::string& v) { cc.overrides.emplace_back(k, v); },
            "override (default: " + (value.empty() ? "unset" : value) + ")");
    }
}

ExperimentConfig resolve_config(const ConfigCli& cc) {
    ExperimentConfig cfg;
    if (!cc.path.empty()) { cfg = load_config_file(resolve_root_path(cc.path)); }
    for (const auto& [k, v] : cc.overrides) { apply_config_kv(cfg, k, v); }
    validate_config(cfg);
    return cfg;
}

void require_file(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) {
        throw std::runtime_error("missing " + p.string() + " (" + hint + ")");
    }
}

ParsedLog load_vocab_bundle(const ExperimentConfig& cfg) {
    auto p = data_path(cfg, "vocab.tsv");
    require_file(p, "run `graphcm parse` or `graphcm synth` first");
    return load_vocab_file(p.string());
}

std::vector<Session> load_split(const ExperimentConfig& cfg, const ParsedLog& vocab,
                                const std::string& name) {
    auto p = data_path(cfg, name);
    require_file(p, "run `graphcm split` first");
    return parse_log_file_with_vocab(p.string(), vocab);
}

std::int64_t max_rank_of(const std::vector<Session>& sessions) {
    std::int64_t m = 1;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) {
                m = std::max<std::int64_t>(m, imp.position);
            }
        }
    }
    return m;
}

SamplePolicy policy_from(const std::string& name) {
    return name == "balanced" ? SamplePolicy::Balanced : SamplePolicy::Uniform;
}

ModelConfig model_config_from(const ExperimentConfig& cfg, const ParsedLog& vocab,
                              std::int64_t max_rank) {
    ModelConfig mc;
    mc.n_queries = vocab.queries.size();
    mc.n_docs = vocab.docs.size();
    mc.n_verticals = vocab.verticals.size();
    mc.max_rank = max_rank;
    mc.emb_query = cfg.emb_query;
    mc.emb_doc = cfg.emb_doc;
    mc.emb_vertical = cfg.emb_vertical;
    mc.emb_click = cfg.emb_click;
    mc.emb_position = cfg.emb_position;
    mc.hidden = cfg.hidden_size;
    mc.heads = cfg.heads;
    mc.neighbors = cfg.neighbors;
    mc.leaky_slope = cfg.leaky_slope;
    mc.aggregation = aggregation_from(cfg.aggregation);
    mc.combination = combination_from(cfg.combination);
    mc.use_q_gat = cfg.use_q_gat;
    mc.use_d_gat = cfg.use_d_gat;
    mc.use_neighbor_interaction = cfg.use_neighbor_interaction;
    mc.doc_gru_reset = cfg.doc_gru_reset;
    validate_model_config(mc);
    return mc;
}

TrainOptions train_options_from(const ExperimentConfig& cfg, std::int64_t max_rank) {
    TrainOptions to;
    to.batch_size = cfg.batch_size;
    to.epochs = cfg.epochs;
    to.patience = cfg.patience;
    to.lr = cfg.lr;
    to.l2 = cfg.l2;
    to.dropout = cfg.dropout;
    to.unknown_substitution = cfg.unknown_substitution;
    to.k = cfg.neighbors;
    to.shuffle_seed = cfg.init_seed;
    to.sampler_seed = cfg.sampler_seed;
    to.policy = policy_from(cfg.sample_policy);
    to.max_rank = max_rank;
    return to;
}

using RelevanceMap = std::map<std::pair<std::int64_t, std::int64_t>, int>;

// Empty map when no relevance file is configured or present.
RelevanceMap load_relevance(const ExperimentConfig& cfg, const ParsedLog& vocab) {
    fs::path p;
    if (!cfg.relevance_path.empty()) {
        p = resolve_root_path(cfg.relevance_path);
        require_file(p, "relevance_path points nowhere");
    } else {
        p = data_path(cfg, "relevance.tsv");
        if (!fs::exists(p)) { return {}; }
    }
    return load_relevance_file(p.string(), vocab.queries, vocab.docs);
}

// Per-query ranked lists in session order; `scores` holds one entry per
// impression in the same order.
std::vector<RankedQuery> ranked_lists(const std::vector<Session>& sessions,
                                      const std::vector<double>& scores,
                                      const RelevanceMap& rel) {
    std::vector<RankedQuery> out;
    std::size_t off = 0;
    for (const auto& s : sessions) {
        for (const auto& q : s.queries) {
            RankedQuery rq;
            for (const auto& imp : q.impressions) {
                rq.scores.push_back(scores[off++]);
                auto it = rel.find({q.query, imp.doc});
                rq.grades.push_back(it == rel.end() ? 0 : it->second);
            }
            out.push_back(std::move(rq));
        }
    }
    return out;
}

const std::vector<double>& scores_by(const EvalOutput& evo, const std::string& rank_by) {
    if (rank_by == "E") { return evo.exams; }
    if (rank_by == "P") { return evo.probs; }
    return evo.attrs;
}

void write_text_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    if (!out) { throw std::runtime_error("cannot write " + p.string()); }
    out << content;
}

struct PartitionData {
    std::string label;
    const std::vector<Session>* sessions;
};

// Shared by `evaluate` and `baseline-eval`: full test set plus the four
// cold-start partitions, empty ones skipped.
template <class PredictFn>
std::vector<MetricsReport> partition_reports(const std::vector<Session>& test,
                                             const IdSets& train_ids, const RelevanceMap& rel,
                                             const std::vector<int>& cutoffs,
                                             PredictFn&& predict) {
    ColdStartPartition part = partition_cold_start(test, train_ids);
    std::vector<PartitionData> parts = {
        {"full", &test},
        {cold_class_name(ColdClass::WarmQD), &part.warm_qd},
        {cold_class_name(ColdClass::ColdQ), &part.cold_q},
        {cold_class_name(ColdClass::ColdD), &part.cold_d},
        {cold_class_name(ColdClass::ColdQD), &part.cold_qd},
    };
    std::vector<MetricsReport> reports;
    for (const auto& p : parts) {
        if (p.sessions->empty()) { continue; }
        std::vector<double> probs, scores;
        std::vector<int> clicks, positions;
        predict(*p.sessions, probs, scores, clicks, positions);
        auto ranked = rel.empty() ? std::vector<RankedQuery>{}
                                  : ranked_lists(*p.sessions, scores, rel);
        reports.push_back(compute_metrics(p.label, probs, clicks, positions,
                                          static_cast<std::int64_t>(p.sessions->size()),
                                          ranked, cutoffs));
    }
    return reports;
}

void emit_reports(const std::vector<MetricsReport>& reports, const fs::path& lines_path) {
    std::string lines;
    for (const auto& r : reports) { lines += format_report_lines(r); }
    write_text_file(lines_path, lines);
    std::cout << format_report_table(reports);
    std::cout << "report lines: " << lines_path.string() << "\n";
}

// ---------------------------------------------------------------- parse

struct ParseArgs {
    ConfigCli cc;
    std::string input;
    bool strict = false;
};

int cmd_parse(const ParseArgs& args) {
    auto cfg = resolve_config(args.cc);
    ParsedLog log;
    if (args.input == "-") {
        log = parse_log(std::cin);
    } else {
        auto p = fs::path(resolve_root_path(args.input));
        require_file(p, "input log");
        log = parse_log_file(p.string());
    }
    for (const auto& d : log.diagnostics) {
        std::cerr << "line " << d.line << ": " << d.message << "\n";
    }
    if (args.strict && !log.diagnostics.empty()) {
        std::cerr << log.diagnostics.size() << " rejected record(s)\n";
        return 1;
    }
    if (log.sessions.empty()) {
        std::cerr << "no valid sessions\n";
        return 1;
    }
    fs::create_directories(data_path(cfg, ""));
    write_log_file(data_path(cfg, "log.jsonl").string(), log.sessions, log);
    write_vocab_file(data_path(cfg, "vocab.tsv").string(), log);
    std::int64_t impressions = 0;
    for (const auto& s : log.sessions) { impressions += session_impressions(s); }
    std::cout << "sessions " << log.sessions.size() << "\n"
              << "queries " << log.queries.distinct() << "\n"
              << "docs " << log.docs.distinct() << "\n"
              << "verticals " << log.verticals.distinct() << "\n"
              << "impressions " << impressions << "\n"
              << "sparsity " << fmt_g17(sparsity_ratio(log.sessions)) << "\n";
    return 0;
}

// ---------------------------------------------------------------- split

struct SplitArgs {
    ConfigCli cc;
    bool holdout_to_test = false;
};

int cmd_split(const SplitArgs& args) {
    auto cfg = resolve_config(args.cc);
    auto vocab = load_vocab_bundle(cfg);
    auto p = data_path(cfg, "log.jsonl");
    require_file(p, "run `graphcm parse` or `graphcm synth` first");
    auto sessions = parse_log_file_with_vocab(p.string(), vocab);
    std::vector<Session> held;
    if (args.holdout_to_test) {
        auto tp = data_path(cfg, "truth.txt");
        require_file(tp, "holdout routing needs a synthetic truth file");
        auto truth = SyntheticTruth::load_file(tp.string());
        std::unordered_set<std::int64_t> hold_ids;
        for (const auto& tok : truth.holdout_queries) {
            auto id = vocab.queries.lookup(tok);
            if (id != 0) { hold_ids.insert(id); }
        }
        std::vector<Session> pool;
        for (auto& s : sessions) {
            bool h = false;
            for (const auto& q : s.queries) { h = h || hold_ids.count(q.query) != 0; }
            (h ? held : pool).push_back(std::move(s));
        }
        sessions = std::move(pool);
    }
    auto split = split_dataset(sessions, cfg.split_seed,
                               {cfg.train_ratio, cfg.valid_ratio, cfg.test_ratio});
    for (auto& s : held) { split.test.push_back(std::move(s)); }
    write_log_file(data_path(cfg, "train.jsonl").string(), split.train, vocab);
    write_log_file(data_path(cfg, "valid.jsonl").string(), split.valid, vocab);
    write_log_file(data_path(cfg, "test.jsonl").string(), split.test, vocab);
    std::cout << "train " << split.train.size() << "\n"
              << "valid " << split.valid.size() << "\n"
              << "test " << split.test.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------- build-graph

int cmd_build_graph(const ConfigCli& cc) {
    auto cfg = resolve_config(cc);
    auto vocab = load_vocab_bundle(cfg);
    auto train = load_split(cfg, vocab, "train.jsonl");
    auto qg = build_query_graph(train, vocab.queries.size());
    auto dg = build_doc_graph(train, vocab.docs.size());
    qg.save_file(data_path(cfg, "query_graph.txt").string());
    dg.save_file(data_path(cfg, "doc_graph.txt").string());
    for (const auto* g : {&qg, &dg}) {
        std::cout << g->domain() << " nodes " << g->node_count() << " "
                  << edge_kind_name(EdgeKind::MultiHop) << " "
                  << g->edge_count(EdgeKind::MultiHop) << " "
                  << edge_kind_name(EdgeKind::Consecutive) << " "
                  << g->edge_count(EdgeKind::Consecutive) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- partition

int cmd_partition(const ConfigCli& cc) {
    auto cfg = resolve_config(cc);
    auto vocab = load_vocab_bundle(cfg);
    auto train = load_split(cfg, vocab, "train.jsonl");
    auto test = load_split(cfg, vocab, "test.jsonl");
    IdSets ids = collect_ids(train);
    ColdStartPartition part = partition_cold_start(test, ids);
    const std::vector<std::pair<ColdClass, const std::vector<Session>*>> rows = {
        {ColdClass::WarmQD, &part.warm_qd},
        {ColdClass::ColdQ, &part.cold_q},
        {ColdClass::ColdD, &part.cold_d},
        {ColdClass::ColdQD, &part.cold_qd},
    };
    std::size_t total = 0;
    for (const auto& [cls, sess] : rows) {
        write_log_file(data_path(cfg, std::string("test_") + cold_class_name(cls) + ".jsonl").string(),
                       *sess, vocab);
        std::cout << cold_class_name(cls) << " " << sess->size() << "\n";
        total += sess->size();
    }
    if (total != test.size()) {
        throw std::runtime_error("partition classes do not cover the test set");
    }
    std::cout << "total " << total << "\n";
    return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    ConfigCli cc;
    SyntheticSpec spec;
    std::string kind = "PBM";
    std::string gamma_csv;
};

int cmd_synth(SynthArgs& args) {
    auto cfg = resolve_config(args.cc);
    args.spec.kind = generator_kind_from(args.kind);
    if (!args.gamma_csv.empty()) { args.spec.gamma = parse_double_list(args.gamma_csv); }
    auto gen = generate_synthetic(args.spec);

    ParsedLog bundle;
    bundle.sessions = gen.sessions;
    bundle.queries = gen.queries;
    bundle.docs = gen.docs;
    bundle.verticals = gen.verticals;
    fs::create_directories(data_path(cfg, ""));
    write_log_file(data_path(cfg, "log.jsonl").string(), bundle.sessions, bundle);
    write_vocab_file(data_path(cfg, "vocab.tsv").string(), bundle);
    gen.truth.save_file(data_path(cfg, "truth.txt").string());
    {
        std::ofstream rel(data_path(cfg, "relevance.tsv"));
        for (const auto& [key, grade] : gen.truth.relevance()) {
            rel << key.first << "\t" << key.second << "\t" << grade << "\n";
        }
    }
    std::int64_t impressions = 0, clicks = 0;
    for (const auto& s : gen.sessions) {
        for (const auto& q : s.queries) {
            impressions += static_cast<std::int64_t>(q.impressions.size());
            for (const auto& imp : q.impressions) { clicks += imp.click; }
        }
    }
    std::cout << "kind " << generator_kind_name(gen.truth.kind) << "\n"
              << "sessions " << gen.sessions.size() << "\n"
              << "queries " << gen.queries.distinct() << "\n"
              << "docs " << gen.docs.distinct() << "\n"
              << "impressions " << impressions << "\n"
              << "ctr " << fmt_g17(static_cast<double>(clicks) / static_cast<double>(impressions))
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    ConfigCli cc;
    bool grid = false;
    bool quiet = false;
};

struct LoadedData {
    ParsedLog vocab;
    std::vector<Session> train;
    std::vector<Session> valid;
    HomogeneousGraph qg;
    HomogeneousGraph dg;
    std::int64_t max_rank = 1;
};

LoadedData load_training_data(const ExperimentConfig& cfg) {
    LoadedData d;
    d.vocab = load_vocab_bundle(cfg);
    d.train = load_split(cfg, d.vocab, "train.jsonl");
    d.valid = load_split(cfg, d.vocab, "valid.jsonl");
    auto qp = data_path(cfg, "query_graph.txt");
    auto dp = data_path(cfg, "doc_graph.txt");
    require_file(qp, "run `graphcm build-graph` first");
    require_file(dp, "run `graphcm build-graph` first");
    d.qg = HomogeneousGraph::load_file(qp.string());
    d.dg = HomogeneousGraph::load_file(dp.string());
    d.max_rank = std::max(max_rank_of(d.train), max_rank_of(d.valid));
    return d;
}

void write_train_log(const fs::path& p, const std::vector<EpochLog>& log) {
    std::string out = "epoch\ttrain_loss\ttrain_bce\tvalid_ll\tvalid_ppl\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "\t" + fmt_g17(e.train_loss) + "\t" +
               fmt_g17(e.train_bce) + "\t" + fmt_g17(e.valid_ll) + "\t" +
               fmt_g17(e.valid_ppl) + "\n";
    }
    write_text_file(p, out);
}

void write_manifest(const fs::path& p, const ExperimentConfig& cfg, const LoadedData& d,
                    const TrainResult& result, const std::string& note) {
    std::string out = "graphcm 0.1.0\n";
    out += "config:\n";
    for (const auto& [k, v] : config_items(cfg)) { out += "  " + k + " " + v + "\n"; }
    out += "data:\n";
    out += "  n_queries " + std::to_string(d.vocab.queries.size()) + "\n";
    out += "  n_docs " + std::to_string(d.vocab.docs.size()) + "\n";
    out += "  n_verticals " + std::to_string(d.vocab.verticals.size()) + "\n";
    out += "  max_rank " + std::to_string(d.max_rank) + "\n";
    out += "  train_sessions " + std::to_string(d.train.size()) + "\n";
    out += "  valid_sessions " + std::to_string(d.valid.size()) + "\n";
    out += "result:\n";
    out += "  epochs_run " + std::to_string(result.log.size()) + "\n";
    out += "  best_epoch " + std::to_string(result.best_epoch) + "\n";
    out += "  best_valid_ppl " + fmt_g17(result.best_valid_ppl) + "\n";
    out += "  diverged " + std::string(result.diverged ? "1" : "0") + "\n";
    if (!note.empty()) { out += "  " + note + "\n"; }
    write_text_file(p, out);
}

int cmd_train(const TrainArgs& args) {
    auto cfg = resolve_config(args.cc);
    auto d = load_training_data(cfg);
    fs::create_directories(run_path(cfg, ""));

    if (args.grid) {
        const auto lrs = parse_double_list(cfg.lr_grid);
        const auto l2s = parse_double_list(cfg.l2_grid);
        const auto drops = parse_double_list(cfg.dropout_grid);
        const auto ks = parse_int_list(cfg.k_grid);
        std::string grid_log = "lr\tl2\tdropout\tk\tbest_epoch\tvalid_ppl\n";
        double best_ppl = std::numeric_limits<double>::infinity();
        ExperimentConfig best_cfg = cfg;
        for (double lr : lrs) {
            for (double l2 : l2s) {
                for (double drop : drops) {
                    for (int k : ks) {
                        ExperimentConfig c = cfg;
                        c.lr = lr;
                        c.l2 = l2;
                        c.dropout = drop;
                        c.neighbors = k;
                        GraphCm<double> model(model_config_from(c, d.vocab, d.max_rank),
                                              c.init_seed);
                        TrainOptions to = train_options_from(c, d.max_rank);
                        if (!args.quiet) {
                            std::cerr << "grid lr=" << lr << " l2=" << l2 << " dropout=" << drop
                                      << " k=" << k << "\n";
                        }
                        auto r = train_model(model, d.train, d.valid, d.qg, d.dg, to);
                        grid_log += fmt_g17(lr) + "\t" + fmt_g17(l2) + "\t" + fmt_g17(drop) +
                                    "\t" + std::to_string(k) + "\t" +
                                    std::to_string(r.best_epoch) + "\t" +
                                    fmt_g17(r.best_valid_ppl) + "\n";
                        if (r.best_valid_ppl < best_ppl) {
                            best_ppl = r.best_valid_ppl;
                            best_cfg = c;
                        }
                    }
                }
            }
        }
        write_text_file(run_path(cfg, "grid_log.tsv"), grid_log);
        std::cout << "grid winner: lr " << fmt_g17(best_cfg.lr) << " l2 " << fmt_g17(best_cfg.l2)
                  << " dropout " << fmt_g17(best_cfg.dropout) << " k " << best_cfg.neighbors
                  << " valid_ppl " << fmt_g17(best_ppl) << "\n";
        cfg = best_cfg;
    }

    GraphCm<double> model(model_config_from(cfg, d.vocab, d.max_rank), cfg.init_seed);
    TrainOptions to = train_options_from(cfg, d.max_rank);
    if (!args.quiet) { to.log_stream = &std::cerr; }
    auto result = train_model(model, d.train, d.valid, d.qg, d.dg, to);

    model.save_file(run_path(cfg, "model.ckpt").string());
    write_train_log(run_path(cfg, "train_log.tsv"), result.log);
    write_manifest(run_path(cfg, "manifest.txt"), cfg, d, result,
                   args.grid ? "grid 1" : std::string());
    if (result.diverged) {
        std::cerr << result.message << "\n";
        std::cout << "checkpoint " << run_path(cfg, "model.ckpt").string() << " (last good)\n";
        return 3;
    }
    std::cout << "best_epoch " << result.best_epoch << "\n"
              << "best_valid_ppl " << fmt_g17(result.best_valid_ppl) << "\n"
              << "checkpoint " << run_path(cfg, "model.ckpt").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    ConfigCli cc;
    std::string checkpoint;
};

int cmd_evaluate(const EvaluateArgs& args) {
    auto cfg = resolve_config(args.cc);
    auto vocab = load_vocab_bundle(cfg);
    auto train = load_split(cfg, vocab, "train.jsonl");
    auto test = load_split(cfg, vocab, "test.jsonl");
    fs::path ckpt = args.checkpoint.empty() ? run_path(cfg, "model.ckpt")
                                            : fs::path(resolve_root_path(args.checkpoint));
    require_file(ckpt, "run `graphcm train` first");
    auto model = GraphCm<double>::load_file(ckpt.string());
    if (model.config().n_queries != vocab.queries.size() ||
        model.config().n_docs != vocab.docs.size()) {
        throw std::runtime_error("checkpoint vocabulary sizes do not match " +
                                 data_path(cfg, "vocab.tsv").string());
    }
    auto qp = data_path(cfg, "query_graph.txt");
    auto dp = data_path(cfg, "doc_graph.txt");
    require_file(qp, "run `graphcm build-graph` first");
    require_file(dp, "run `graphcm build-graph` first");
    auto qg = HomogeneousGraph::load_file(qp.string());
    auto dg = HomogeneousGraph::load_file(dp.string());

    IdSets ids = collect_ids(train);
    RelevanceMap rel = load_relevance(cfg, vocab);
    auto cutoffs = parse_int_list(cfg.ndcg_cutoffs);

    EvalOptions ev;
    ev.batch_size = cfg.batch_size;
    ev.k = model.config().neighbors;
    ev.sampler_seed = cfg.sampler_seed;
    ev.policy = policy_from(cfg.sample_policy);
    ev.train_ids = &ids;
    ev.max_rank = model.config().max_rank;

    auto reports = partition_reports(
        test, ids, rel, cutoffs,
        [&](const std::vector<Session>& sessions, std::vector<double>& probs,
            std::vector<double>& scores, std::vector<int>& clicks, std::vector<int>& positions) {
            auto evo = evaluate_model(model, sessions, qg, dg, ev);
            probs = evo.probs;
            scores = scores_by(evo, cfg.rank_by);
            clicks = evo.clicks;
            positions = evo.positions;
        });
    fs::create_directories(run_path(cfg, ""));
    emit_reports(reports, run_path(cfg, "report.txt"));
    return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
    ConfigCli cc;
    std::string variants = "full,no_qgat,no_dgat,no_inter,ncm";
    bool quiet = false;
};

ExperimentConfig variant_config(const ExperimentConfig& base, const std::string& name) {
    ExperimentConfig c = base;
    if (name == "full") {
        return c;
    } else if (name == "no_qgat") {
        c.use_q_gat = false;
    } else if (name == "no_dgat") {
        c.use_d_gat = false;
    } else if (name == "no_inter") {
        c.use_neighbor_interaction = false;
    } else if (name == "ncm") {
        c.use_q_gat = false;
        c.use_d_gat = false;
        c.use_neighbor_interaction = false;
    } else {
        throw std::invalid_argument("unknown ablation variant: " + name);
    }
    return c;
}

int cmd_ablate(const AblateArgs& args) {
    auto cfg = resolve_config(args.cc);
    auto d = load_training_data(cfg);
    auto test = load_split(cfg, d.vocab, "test.jsonl");
    IdSets ids = collect_ids(d.train);
    RelevanceMap rel = load_relevance(cfg, d.vocab);
    auto cutoffs = parse_int_list(cfg.ndcg_cutoffs);
    fs::create_directories(run_path(cfg, ""));

    std::vector<std::string> names;
    {
        std::string cur;
        for (char ch : args.variants + ",") {
            if (ch == ',') {
                if (!cur.empty()) { names.push_back(cur); }
                cur.clear();
            } else {
                cur += ch;
            }
        }
    }

    std::string tsv = "variant\tbest_epoch\tvalid_ppl\ttest_ll\ttest_ppl";
    if (!rel.empty()) {
        for (int k : cutoffs) { tsv += "\tndcg@" + std::to_string(k); }
    }
    tsv += "\n";
    std::printf("%-10s %10s %12s %12s %12s\n", "variant", "best_epoch", "valid_ppl", "test_ll",
                "test_ppl");
    for (const auto& name : names) {
        ExperimentConfig c = variant_config(cfg, name);
        GraphCm<double> model(model_config_from(c, d.vocab, d.max_rank), c.init_seed);
        TrainOptions to = train_options_from(c, d.max_rank);
        if (!args.quiet) { std::cerr << "variant " << name << "\n"; }
        auto r = train_model(model, d.train, d.valid, d.qg, d.dg, to);
        model.save_file(run_path(cfg, "ablate_" + name + ".ckpt").string());

        EvalOptions ev;
        ev.batch_size = c.batch_size;
        ev.k = c.neighbors;
        ev.sampler_seed = c.sampler_seed;
        ev.policy = policy_from(c.sample_policy);
        ev.train_ids = &ids;
        ev.max_rank = d.max_rank;
        auto evo = evaluate_model(model, test, d.qg, d.dg, ev);
        auto ranked = rel.empty() ? std::vector<RankedQuery>{}
                                  : ranked_lists(test, scores_by(evo, c.rank_by), rel);
        auto rep = compute_metrics(name, evo.probs, evo.clicks, evo.positions,
                                   static_cast<std::int64_t>(test.size()), ranked, cutoffs);

        tsv += name + "\t" + std::to_string(r.best_epoch) + "\t" + fmt_g17(r.best_valid_ppl) +
               "\t" + fmt_g17(rep.ll) + "\t" + fmt_g17(rep.ppl.average);
        if (!rel.empty()) {
            for (double v : rep.ndcg) { tsv += "\t" + fmt_g17(v); }
        }
        tsv += "\n";
        std::printf("%-10s %10d %12.6f %12.6f %12.6f\n", name.c_str(), r.best_epoch,
                    r.best_valid_ppl, rep.ll, rep.ppl.average);
    }
    write_text_file(run_path(cfg, "ablation.tsv"), tsv);
    std::cout << "table: " << run_path(cfg, "ablation.tsv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
    ConfigCli cc;
    std::string checkpoint;
    bool params = false;
};

int cmd_inspect(const InspectArgs& args) {
    auto cfg = resolve_config(args.cc);
    fs::path ckpt = args.checkpoint.empty() ? run_path(cfg, "model.ckpt")
                                            : fs::path(resolve_root_path(args.checkpoint));
    require_file(ckpt, "run `graphcm train` first");
    auto model = GraphCm<double>::load_file(ckpt.string());
    const auto& mc = model.config();
    for (const auto& [k, v] : model_config_hyper(mc)) { std::cout << k << " " << v << "\n"; }
    std::cout << "parameters " << model.params().total_params() << "\n";
    if (args.params) {
        for (const auto& name : model.params().names()) {
            const auto& value = model.params().value(name);
            std::cout << "param " << name;
            for (std::int64_t dim : value.shape()) { std::cout << " " << dim; }
            std::cout << "\n";
        }
    }
    if (mc.combination == Combination::ExpMul || mc.combination == Combination::Linear) {
        auto [alpha, beta] = model.combination_scalars();
        std::cout << "alpha " << fmt_g17(alpha) << "\n"
                  << "beta " << fmt_g17(beta) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- baseline-fit

struct BaselineFitArgs {
    ConfigCli cc;
    std::string model = "PBM";
    int iters = 200;
    double tol = 1e-9;
    bool no_smoothing = false;
};

std::string baseline_file_name(BaselineKind kind) {
    return std::string("baseline_") + baseline_kind_name(kind) + ".txt";
}

int cmd_baseline_fit(const BaselineFitArgs& args) {
    auto cfg = resolve_config(args.cc);
    auto vocab = load_vocab_bundle(cfg);
    auto train = load_split(cfg, vocab, "train.jsonl");
    BaselineKind kind = baseline_kind_from(args.model);
    FittedBaseline fb;
    fb.kind = kind;
    EmTrace trace;
    switch (kind) {
        case BaselineKind::Pbm:
        case BaselineKind::Ubm:
            fb = fit_baseline(kind, train, args.iters, args.tol, &trace);
            std::cout << "em_iterations " << trace.iterations << "\n"
                      << "ll_init " << fmt_g17(trace.ll.front()) << "\n"
                      << "ll_final " << fmt_g17(trace.ll.back()) << "\n";
            break;
        case BaselineKind::Dcm:
            fb.cascade = fit_cascade(train, CascadeVariant::Dcm, !args.no_smoothing);
            break;
        case BaselineKind::Sdbn:
            fb.cascade = fit_cascade(train, CascadeVariant::Sdbn, !args.no_smoothing);
            break;
    }
    fs::create_directories(run_path(cfg, ""));
    auto out = run_path(cfg, baseline_file_name(kind));
    fb.save_file(out.string());
    std::cout << "model " << baseline_kind_name(kind) << "\n"
              << "saved " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- baseline-eval

struct BaselineEvalArgs {
    ConfigCli cc;
    std::string model = "PBM";
    std::string baseline_file;
};

double baseline_alpha(const FittedBaseline& fb, std::int64_t q, std::int64_t d) {
    const QueryDocKey key{q, d};
    switch (fb.kind) {
        case BaselineKind::Pbm: {
            auto it = fb.pbm.alpha.find(key);
            return it == fb.pbm.alpha.end() ? fb.pbm.global_alpha : it->second;
        }
        case BaselineKind::Ubm: {
            auto it = fb.ubm.alpha.find(key);
            return it == fb.ubm.alpha.end() ? fb.ubm.global_alpha : it->second;
        }
        case BaselineKind::Dcm:
        case BaselineKind::Sdbn: {
            auto it = fb.cascade.alpha.find(key);
            return it == fb.cascade.alpha.end() ? fb.cascade.global_alpha : it->second;
        }
    }
    return 0.5;
}

int cmd_baseline_eval(const BaselineEvalArgs& args) {
    auto cfg = resolve_config(args.cc);
    auto vocab = load_vocab_bundle(cfg);
    auto train = load_split(cfg, vocab, "train.jsonl");
    auto test = load_split(cfg, vocab, "test.jsonl");
    BaselineKind kind = baseline_kind_from(args.model);
    fs::path in = args.baseline_file.empty()
                      ? run_path(cfg, baseline_file_name(kind))
                      : fs::path(resolve_root_path(args.baseline_file));
    require_file(in, "run `graphcm baseline-fit` first");
    auto fb = FittedBaseline::load_file(in.string());

    IdSets ids = collect_ids(train);
    RelevanceMap rel = load_relevance(cfg, vocab);
    auto cutoffs = parse_int_list(cfg.ndcg_cutoffs);
    auto reports = partition_reports(
        test, ids, rel, cutoffs,
        [&](const std::vector<Session>& sessions, std::vector<double>& probs,
            std::vector<double>& scores, std::vector<int>& clicks, std::vector<int>& positions) {
            for (const auto& s : sessions) {
                auto p = fb.predict(s);
                probs.insert(probs.end(), p.begin(), p.end());
                for (const auto& q : s.queries) {
                    for (const auto& imp : q.impressions) {
                        scores.push_back(baseline_alpha(fb, q.query, imp.doc));
                        clicks.push_back(imp.click != 0 ? 1 : 0);
                        positions.push_back(imp.position);
                    }
                }
            }
        });
    fs::create_directories(run_path(cfg, ""));
    emit_reports(reports, run_path(cfg, std::string("baseline_") + baseline_kind_name(kind) +
                                            "_report.txt"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graphcm: a graph-enhanced neural click model toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    ParseArgs parse_args;
    auto* parse_cmd = app.add_subcommand("parse", "validate a session log, write canonical data");
    attach_config(parse_cmd, parse_args.cc);
    parse_cmd->add_option("--input", parse_args.input, "session log (jsonl, - for stdin)")
        ->required();
    parse_cmd->add_flag("--strict", parse_args.strict, "fail on any rejected record");
    parse_cmd->callback([&] { rc = cmd_parse(parse_args); });

    SplitArgs split_args;
    auto* split_cmd = app.add_subcommand("split", "split the canonical log into train/valid/test");
    attach_config(split_cmd, split_args.cc);
    split_cmd->add_flag("--holdout-to-test", split_args.holdout_to_test,
                        "route synthetic holdout-query sessions into the test split");
    split_cmd->callback([&] { rc = cmd_split(split_args); });

    ConfigCli graph_cc;
    auto* graph_cmd = app.add_subcommand("build-graph", "build query/doc graphs from the train split");
    attach_config(graph_cmd, graph_cc);
    graph_cmd->callback([&] { rc = cmd_build_graph(graph_cc); });

    ConfigCli part_cc;
    auto* part_cmd = app.add_subcommand("partition", "cold-start partition of the test split");
    attach_config(part_cmd, part_cc);
    part_cmd->callback([&] { rc = cmd_partition(part_cc); });

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic log with ground truth");
    attach_config(synth_cmd, synth_args.cc);
    synth_cmd->add_option("--kind", synth_args.kind, "PBM, UBM, SDBN, or GRAPH_PLANTED");
    synth_cmd->add_option("--sessions", synth_args.spec.sessions, "session count");
    synth_cmd->add_option("--seed", synth_args.spec.seed, "generator seed");
    synth_cmd->add_option("--n-queries", synth_args.spec.n_queries, "distinct queries");
    synth_cmd->add_option("--serp-len", synth_args.spec.serp_len, "documents per SERP");
    synth_cmd->add_option("--queries-per-session", synth_args.spec.queries_per_session,
                          "queries per session");
    synth_cmd->add_option("--gamma", synth_args.gamma_csv, "examination per rank (csv)");
    synth_cmd->add_option("--alpha-lo", synth_args.spec.alpha_lo, "attractiveness lower bound");
    synth_cmd->add_option("--alpha-hi", synth_args.spec.alpha_hi, "attractiveness upper bound");
    synth_cmd->add_option("--sigma-lo", synth_args.spec.sigma_lo, "satisfaction lower bound");
    synth_cmd->add_option("--sigma-hi", synth_args.spec.sigma_hi, "satisfaction upper bound");
    synth_cmd->add_option("--topics", synth_args.spec.topics, "latent topics (GRAPH_PLANTED)");
    synth_cmd->add_option("--docs-per-topic", synth_args.spec.docs_per_topic,
                          "documents per topic (GRAPH_PLANTED)");
    synth_cmd->add_option("--same-topic-docs", synth_args.spec.same_topic_docs,
                          "same-topic documents per SERP (GRAPH_PLANTED)");
    synth_cmd->add_option("--alpha-in", synth_args.spec.alpha_in,
                          "within-topic attractiveness (GRAPH_PLANTED)");
    synth_cmd->add_option("--alpha-out", synth_args.spec.alpha_out,
                          "off-topic attractiveness (GRAPH_PLANTED)");
    synth_cmd->add_option("--holdout-fraction", synth_args.spec.holdout_fraction,
                          "fraction of queries held out to single sessions (GRAPH_PLANTED)");
    synth_cmd->add_flag("!--no-shuffle-serp", synth_args.spec.shuffle_serp,
                        "keep SERPs in block order");
    synth_cmd->callback([&] { rc = cmd_synth(synth_args); });

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train the model, keep the best checkpoint");
    attach_config(train_cmd, train_args.cc);
    train_cmd->add_flag("--grid", train_args.grid, "exhaustive grid search before the final run");
    train_cmd->add_flag("--quiet", train_args.quiet, "suppress per-epoch progress");
    train_cmd->callback([&] { rc = cmd_train(train_args); });

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "metric reports for the test split");
    attach_config(eval_cmd, eval_args.cc);
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint path");
    eval_cmd->callback([&] { rc = cmd_evaluate(eval_args); });

    AblateArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "train ablation variants side by side");
    attach_config(ablate_cmd, ablate_args.cc);
    ablate_cmd->add_option("--variants", ablate_args.variants,
                           "csv of full,no_qgat,no_dgat,no_inter,ncm");
    ablate_cmd->add_flag("--quiet", ablate_args.quiet, "suppress progress");
    ablate_cmd->callback([&] { rc = cmd_ablate(ablate_args); });

    InspectArgs inspect_args;
    auto* inspect_cmd = app.add_subcommand("inspect", "print checkpoint hyperparameters and "
                                                      "combination scalars");
    attach_config(inspect_cmd, inspect_args.cc);
    inspect_cmd->add_option("--checkpoint", inspect_args.checkpoint, "model checkpoint path");
    inspect_cmd->add_flag("--params", inspect_args.params, "list parameter shapes");
    inspect_cmd->callback([&] { rc = cmd_inspect(inspect_args); });

    BaselineFitArgs bf_args;
    auto* bf_cmd = app.add_subcommand("baseline-fit", "fit a PGM baseline on the train split");
    attach_config(bf_cmd, bf_args.cc);
    bf_cmd->add_option("--model", bf_args.model, "PBM, UBM, DCM, or SDBN")->required();
    bf_cmd->add_option("--iters", bf_args.iters, "EM iteration cap");
    bf_cmd->add_option("--tol", bf_args.tol, "EM convergence tolerance");
    bf_cmd->add_flag("--no-smoothing", bf_args.no_smoothing,
                     "raw count ratios for DCM/SDBN (no pseudo counts)");
    bf_cmd->callback([&] { rc = cmd_baseline_fit(bf_args); });

    BaselineEvalArgs be_args;
    auto* be_cmd = app.add_subcommand("baseline-eval", "metric reports for a fitted baseline");
    attach_config(be_cmd, be_args.cc);
    be_cmd->add_option("--model", be_args.model, "PBM, UBM, DCM, or SDBN")->required();
    be_cmd->add_option("--baseline-file", be_args.baseline_file, "fitted baseline path");
    be_cmd->callback([&] { rc = cmd_baseline_eval(be_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}

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

#include "graphcm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace graphcm {

namespace {

using Member = std::variant<std::string ExperimentConfig::*, int ExperimentConfig::*,
                            double ExperimentConfig::*, bool ExperimentConfig::*,
                            std::uint64_t ExperimentConfig::*>;

struct Field {
    const char* key;
    Member member;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"data_dir", &ExperimentConfig::data_dir},
        {"run_dir", &ExperimentConfig::run_dir},
        {"relevance_path", &ExperimentConfig::relevance_path},
        {"split_seed", &ExperimentConfig::split_seed},
        {"train_ratio", &ExperimentConfig::train_ratio},
        {"valid_ratio", &ExperimentConfig::valid_ratio},
        {"test_ratio", &ExperimentConfig::test_ratio},
        {"batch_size", &ExperimentConfig::batch_size},
        {"hidden_size", &ExperimentConfig::hidden_size},
        {"emb_query", &ExperimentConfig::emb_query},
        {"emb_doc", &ExperimentConfig::emb_doc},
        {"emb_vertical", &ExperimentConfig::emb_vertical},
        {"emb_click", &ExperimentConfig::emb_click},
        {"emb_position", &ExperimentConfig::emb_position},
        {"combination", &ExperimentConfig::combination},
        {"aggregation", &ExperimentConfig::aggregation},
        {"sample_policy", &ExperimentConfig::sample_policy},
        {"heads", &ExperimentConfig::heads},
        {"neighbors", &ExperimentConfig::neighbors},
        {"leaky_slope", &ExperimentConfig::leaky_slope},
        {"use_q_gat", &ExperimentConfig::use_q_gat},
        {"use_d_gat", &ExperimentConfig::use_d_gat},
        {"use_neighbor_interaction", &ExperimentConfig::use_neighbor_interaction},
        {"doc_gru_reset", &ExperimentConfig::doc_gru_reset},
        {"lr", &ExperimentConfig::lr},
        {"l2", &ExperimentConfig::l2},
        {"dropout", &ExperimentConfig::dropout},
        {"epochs", &ExperimentConfig::epochs},
        {"patience", &ExperimentConfig::patience},
        {"init_seed", &ExperimentConfig::init_seed},
        {"sampler_seed", &ExperimentConfig::sampler_seed},
        {"unknown_substitution", &ExperimentConfig::unknown_substitution},
        {"rank_by", &ExperimentConfig::rank_by},
        {"ndcg_cutoffs", &ExperimentConfig::ndcg_cutoffs},
        {"lr_grid", &ExperimentConfig::lr_grid},
        {"l2_grid", &ExperimentConfig::l2_grid},
        {"dropout_grid", &ExperimentConfig::dropout_grid},
        {"k_grid", &ExperimentConfig::k_grid},
    };
    return f;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("config: bad value for " + key + ": \"" + value + "\"");
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

void apply_config_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key != f.key) { continue; }
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, std::string>) {
                    cfg.*member = value;
                } else if constexpr (std::is_same_v<T, bool>) {
                    if (value == "1" || value == "true") {
                        cfg.*member = true;
                    } else if (value == "0" || value == "false") {
                        cfg.*member = false;
                    } else {
                        bad_value(key, value);
                    }
                } else {
                    std::istringstream is(value);
                    T parsed{};
                    is >> parsed;
                    if (!is || !is.eof()) { bad_value(key, value); }
                    cfg.*member = parsed;
                }
            },
            f.member);
        return;
    }
    throw std::invalid_argument("config: unknown key \"" + key + "\"");
}

ExperimentConfig load_config(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) { line.resize(hash); }
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) { continue; }
        ls >> value;
        if (value == "=") {
            value.clear();
            ls >> value;
        }
        // an absent value is legal for string fields (an unset path saves as
        // a bare key); apply_config_kv rejects it for every other type
        std::string extra;
        if (ls >> extra) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": trailing tokens after \"" + key + "\"");
        }
        apply_config_kv(cfg, key, value);
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) { throw std::runtime_error("cannot open config file: " + path); }
    return load_config(in);
}

std::vector<std::pair<std::string, std::string>> config_items(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) {
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, std::string>) {
                    out.emplace_back(f.key, cfg.*member);
                } else if constexpr (std::is_same_v<T, bool>) {
                    out.emplace_back(f.key, (cfg.*member) ? "1" : "0");
                } else if constexpr (std::is_same_v<T, double>) {
                    out.emplace_back(f.key, fmt_double(cfg.*member));
                } else {
                    out.emplace_back(f.key, std::to_string(cfg.*member));
                }
            },
            f.member);
    }
    return out;
}

void save_config(const ExperimentConfig& cfg, std::ostream& out) {
    for (const auto& [k, v] : config_items(cfg)) { out << k << " " << v << "\n"; }
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) { continue; }
        std::istringstream vs(item);
        double v;
        vs >> v;
        if (!vs || !vs.eof()) { throw std::invalid_argument("bad list entry \"" + item + "\""); }
        out.push_back(v);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) { continue; }
        std::istringstream vs(item);
        int v;
        vs >> v;
        if (!vs || !vs.eof()) { throw std::invalid_argument("bad list entry \"" + item + "\""); }
        out.push_back(v);
    }
    return out;
}

void validate_config(const ExperimentConfig& cfg) {
    auto require = [](bool ok, const char* what) {
        if (!ok) { throw std::invalid_argument(std::string("config: ") + what); }
    };
    require(cfg.batch_size >= 1, "batch_size must be >= 1");
    require(cfg.hidden_size >= 1, "hidden_size must be >= 1");
    require(cfg.emb_query >= 1 && cfg.emb_doc >= 1 && cfg.emb_vertical >= 1 &&
                cfg.emb_click >= 1 && cfg.emb_position >= 1,
            "embedding sizes must be >= 1");
    require(cfg.heads >= 1, "heads must be >= 1");
    require(cfg.neighbors >= 1, "neighbors must be >= 1");
    require(cfg.leaky_slope > 0.0, "leaky_slope must be positive");
    require(cfg.lr > 0.0, "lr must be positive");
    require(cfg.l2 >= 0.0, "l2 must be nonnegative");
    require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout must be in [0,1)");
    require(cfg.epochs >= 1, "epochs must be >= 1");
    require(cfg.patience >= 0, "patience must be >= 0");
    require(cfg.train_ratio >= 1 && cfg.valid_ratio >= 0 && cfg.test_ratio >= 0,
            "split ratios must be nonnegative with train >= 1");
    require(cfg.unknown_substitution >= 0.0 && cfg.unknown_substitution <= 1.0,
            "unknown_substitution must be in [0,1]");
    require(cfg.combination == "MUL" || cfg.combination == "EXPMUL" ||
                cfg.combination == "LINEAR" || cfg.combination == "NONLINEAR",
            "combination must be MUL, EXPMUL, LINEAR, or NONLINEAR");
    require(cfg.aggregation == "AVERAGE" || cfg.aggregation == "CONCAT",
            "aggregation must be AVERAGE or CONCAT");
    require(cfg.sample_policy == "uniform" || cfg.sample_policy == "balanced",
            "sample_policy must be uniform or balanced");
    require(cfg.rank_by == "A" || cfg.rank_by == "P" || cfg.rank_by == "E",
            "rank_by must be A, P, or E");
    if (cfg.aggregation == "CONCAT") {
        require(cfg.emb_query % cfg.heads == 0 && cfg.emb_doc % cfg.heads == 0,
                "CONCAT needs heads dividing the embedding size");
    }
    for (int k : parse_int_list(cfg.ndcg_cutoffs)) { require(k >= 1, "ndcg cutoff must be >= 1"); }
    for (double v : parse_double_list(cfg.lr_grid)) { require(v > 0.0, "lr_grid entries must be positive"); }
    for (double v : parse_double_list(cfg.l2_grid)) { require(v > 0.0, "l2_grid entries must be positive"); }
    for (double v : parse_double_list(cfg.dropout_grid)) {
        require(v > 0.0 && v < 1.0, "dropout_grid entries must be in (0,1)");
    }
    for (int k : parse_int_list(cfg.k_grid)) { require(k >= 1, "k_grid entries must be >= 1"); }
}

std::string resolve_root_path(const std::string& path) {
    if (path.empty() || path.front() == '/') { return path; }
    const char* root = std::getenv("GRAPHCM_ROOT");
    if (root == nullptr || root[0] == '\0') { return path; }
    std::string out = root;
    if (out.back() != '/') { out += '/'; }
    return out + path;
}

}  // namespace graphcm

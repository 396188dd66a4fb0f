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
#include <string>
#include <utility>
#include <vector>

namespace graphcm {

// Flat experiment configuration.  Every field maps to one "key value" line in
// a config file and to one --key CLI override.
struct ExperimentConfig {
    // paths (relative paths resolve against $GRAPHCM_ROOT when set)
    std::string data_dir = "data";
    std::string run_dir = "runs/default";
    std::string relevance_path;

    // dataset split
    std::uint64_t split_seed = 17;
    int train_ratio = 8;
    int valid_ratio = 1;
    int test_ratio = 1;

    // model
    int batch_size = 128;
    int hidden_size = 64;
    int emb_query = 64;
    int emb_doc = 64;
    int emb_vertical = 8;
    int emb_click = 4;
    int emb_position = 4;
    std::string combination = "EXPMUL";
    std::string aggregation = "AVERAGE";
    std::string sample_policy = "uniform";
    int heads = 2;
    int neighbors = 8;
    double leaky_slope = 0.2;
    bool use_q_gat = true;
    bool use_d_gat = true;
    bool use_neighbor_interaction = true;
    bool doc_gru_reset = false;

    // optimization
    double lr = 1e-3;
    double l2 = 1e-5;
    double dropout = 0.5;
    int epochs = 50;
    int patience = 5;
    std::uint64_t init_seed = 1;
    std::uint64_t sampler_seed = 1;
    double unknown_substitution = 0.01;

    // evaluation
    std::string rank_by = "A";
    std::string ndcg_cutoffs = "1,3,5,10";

    // grid search (train --grid)
    std::string lr_grid = "1e-3,5e-4,1e-4";
    std::string l2_grid = "1e-4,1e-5";
    std::string dropout_grid = "0.25,0.5";
    std::string k_grid = "1,2,4,8,16,32";
};

// Throws std::invalid_argument on unknown keys or unparsable values.
void apply_config_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Defaults overlaid with the file's "key value" lines ('#' comments, blank
// lines, and an optional '=' between key and value are accepted).
ExperimentConfig load_config(std::istream& in);
ExperimentConfig load_config_file(const std::string& path);

// All keys in declaration order as "key value" lines / pairs.
void save_config(const ExperimentConfig& cfg, std::ostream& out);
std::vector<std::pair<std::string, std::string>> config_items(const ExperimentConfig& cfg);

// Range and enum checks; throws std::invalid_argument with the offending key.
void validate_config(const ExperimentConfig& cfg);

std::vector<double> parse_double_list(const std::string& csv);
std::vector<int> parse_int_list(const std::string& csv);

// Relative paths resolve against $GRAPHCM_ROOT when the variable is set.
std::string resolve_root_path(const std::string& path);

}  // namespace graphcm

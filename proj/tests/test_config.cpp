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

#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "graphcm/config.hpp"

using namespace graphcm;

TEST_CASE("defaults survive a save and load cycle") {
    ExperimentConfig cfg;
    std::stringstream buf;
    save_config(cfg, buf);
    auto back = load_config(buf);
    CHECK(config_items(back) == config_items(cfg));

    // a second cycle reproduces the bytes exactly
    std::stringstream buf2;
    save_config(back, buf2);
    std::stringstream buf3;
    save_config(cfg, buf3);
    CHECK(buf2.str() == buf3.str());
}

TEST_CASE("modified values survive the cycle too") {
    ExperimentConfig cfg;
    cfg.lr = 0.0125;
    cfg.combination = "LINEAR";
    cfg.use_d_gat = false;
    cfg.split_seed = 123456789012345ULL;
    cfg.relevance_path = "rel.tsv";
    cfg.leaky_slope = 0.1;
    std::stringstream buf;
    save_config(cfg, buf);
    auto back = load_config(buf);
    CHECK(back.lr == cfg.lr);
    CHECK(back.combination == "LINEAR");
    CHECK(back.use_d_gat == false);
    CHECK(back.split_seed == cfg.split_seed);
    CHECK(back.relevance_path == "rel.tsv");
    CHECK(back.leaky_slope == cfg.leaky_slope);
    CHECK(config_items(back) == config_items(cfg));
}

TEST_CASE("the file format accepts comments, equals signs, and blanks") {
    std::istringstream in(
        "# experiment setup\n"
        "\n"
        "lr = 0.01\n"
        "heads 4\n"
        "use_q_gat false   # trailing comment\n"
        "combination=MUL # no spaces around '='? separate token required\n");
    CHECK_THROWS_AS(load_config(in), std::invalid_argument);

    std::istringstream ok(
        "# experiment setup\n"
        "\n"
        "lr = 0.01\n"
        "heads 4\n"
        "use_q_gat false   # trailing comment\n"
        "combination = MUL\n");
    auto cfg = load_config(ok);
    CHECK(cfg.lr == 0.01);
    CHECK(cfg.heads == 4);
    CHECK(cfg.use_q_gat == false);
    CHECK(cfg.combination == "MUL");
    CHECK(cfg.epochs == 50);  // untouched keys keep their defaults
}

TEST_CASE("string fields may be set empty, numbers may not") {
    std::istringstream in("relevance_path\n");
    auto cfg = load_config(in);
    CHECK(cfg.relevance_path.empty());

    std::istringstream eq("relevance_path =\n");
    CHECK(load_config(eq).relevance_path.empty());

    std::istringstream num("lr\n");
    CHECK_THROWS_AS(load_config(num), std::invalid_argument);
    std::istringstream flag("use_q_gat\n");
    CHECK_THROWS_AS(load_config(flag), std::invalid_argument);
}

TEST_CASE("key-value application checks keys and parses types") {
    ExperimentConfig cfg;
    apply_config_kv(cfg, "epochs", "7");
    CHECK(cfg.epochs == 7);
    apply_config_kv(cfg, "dropout", "0.75");
    CHECK(cfg.dropout == 0.75);
    apply_config_kv(cfg, "init_seed", "18446744073709551615");
    CHECK(cfg.init_seed == 18446744073709551615ULL);
    apply_config_kv(cfg, "doc_gru_reset", "1");
    CHECK(cfg.doc_gru_reset == true);
    apply_config_kv(cfg, "doc_gru_reset", "false");
    CHECK(cfg.doc_gru_reset == false);
    apply_config_kv(cfg, "run_dir", "runs/x");
    CHECK(cfg.run_dir == "runs/x");

    CHECK_THROWS_WITH_AS(apply_config_kv(cfg, "learning_rate", "0.1"),
                         doctest::Contains("unknown key"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "epochs", "seven"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "epochs", "7x"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "lr", "fast"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "use_q_gat", "yes"), std::invalid_argument);
}

TEST_CASE("malformed lines carry their line number") {
    std::istringstream in("lr 0.01\nheads 4 8\n");
    CHECK_THROWS_WITH_AS(load_config(in), doctest::Contains("line 2"),
                         std::invalid_argument);
}

TEST_CASE("validation rejects out-of-range and misspelled settings") {
    auto reject = [](auto&& mutate, const char* hint) {
        ExperimentConfig cfg;
        mutate(cfg);
        CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains(hint),
                             std::invalid_argument);
    };
    ExperimentConfig ok;
    validate_config(ok);

    reject([](auto& c) { c.batch_size = 0; }, "batch_size");
    reject([](auto& c) { c.hidden_size = -1; }, "hidden_size");
    reject([](auto& c) { c.emb_click = 0; }, "embedding sizes");
    reject([](auto& c) { c.heads = 0; }, "heads");
    reject([](auto& c) { c.neighbors = 0; }, "neighbors");
    reject([](auto& c) { c.leaky_slope = 0.0; }, "leaky_slope");
    reject([](auto& c) { c.lr = 0.0; }, "lr");
    reject([](auto& c) { c.l2 = -1e-9; }, "l2");
    reject([](auto& c) { c.dropout = 1.0; }, "dropout");
    reject([](auto& c) { c.epochs = 0; }, "epochs");
    reject([](auto& c) { c.patience = -1; }, "patience");
    reject([](auto& c) { c.train_ratio = 0; }, "split ratios");
    reject([](auto& c) { c.unknown_substitution = 1.5; }, "unknown_substitution");
    reject([](auto& c) { c.combination = "PRODUCT"; }, "combination");
    reject([](auto& c) { c.aggregation = "MEAN"; }, "aggregation");
    reject([](auto& c) { c.sample_policy = "weighted"; }, "sample_policy");
    reject([](auto& c) { c.rank_by = "B"; }, "rank_by");
    reject([](auto& c) { c.ndcg_cutoffs = "1,0"; }, "cutoff");
    reject([](auto& c) { c.lr_grid = "0.1,-0.1"; }, "lr_grid");
    reject([](auto& c) { c.dropout_grid = "0.5,1.5"; }, "dropout_grid");
    reject([](auto& c) { c.k_grid = "0"; }, "k_grid");

    // CONCAT divisibility
    ExperimentConfig concat;
    concat.aggregation = "CONCAT";
    concat.heads = 3;  // emb 64 % 3 != 0
    CHECK_THROWS_WITH_AS(validate_config(concat), doctest::Contains("CONCAT"),
                         std::invalid_argument);
    concat.heads = 4;
    validate_config(concat);
}

TEST_CASE("comma lists parse and reject junk") {
    CHECK(parse_double_list("1e-3,5e-4,1e-4") == std::vector<double>{1e-3, 5e-4, 1e-4});
    CHECK(parse_int_list("1,2,4,8") == std::vector<int>{1, 2, 4, 8});
    CHECK(parse_int_list("") == std::vector<int>{});
    CHECK(parse_int_list("5,,6") == std::vector<int>{5, 6});
    CHECK_THROWS_AS(parse_int_list("1,two"), std::invalid_argument);
    CHECK_THROWS_AS(parse_double_list("0.1,fast"), std::invalid_argument);
    CHECK_THROWS_AS(parse_int_list("1,2.5"), std::invalid_argument);
}

TEST_CASE("relative paths resolve against the root variable") {
    unsetenv("GRAPHCM_ROOT");
    CHECK(resolve_root_path("data") == "data");
    CHECK(resolve_root_path("/abs/data") == "/abs/data");
    CHECK(resolve_root_path("") == "");

    setenv("GRAPHCM_ROOT", "/work/exp", 1);
    CHECK(resolve_root_path("data") == "/work/exp/data");
    CHECK(resolve_root_path("/abs/data") == "/abs/data");
    setenv("GRAPHCM_ROOT", "/work/exp/", 1);
    CHECK(resolve_root_path("data") == "/work/exp/data");
    unsetenv("GRAPHCM_ROOT");
}

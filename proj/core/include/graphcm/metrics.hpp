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
#include <span>
#include <string>
#include <vector>

namespace graphcm {

// Mean of C log p + (1 - C) log(1 - p) over all impressions.
double log_likelihood(std::span<const double> predictions, std::span<const int> clicks);

struct PerplexityReport {
    // Indexed by rank - 1; ranks with no impressions carry count 0 and are
    // excluded from the average.
    std::vector<double> per_rank;
    std::vector<std::int64_t> counts;
    double average = 0.0;
};

// PPL@r = 2^(-mean log2-likelihood at rank r); average is the arithmetic
// mean over ranks that occur.
PerplexityReport perplexity(std::span<const double> predictions, std::span<const int> clicks,
                            std::span<const int> positions);

struct RankedQuery {
    std::vector<double> scores;  // model scores, SERP order
    std::vector<int> grades;     // relevance grades 0..4, same order
};

// Mean over queries of DCG@k / IDCG@k with gain 2^g - 1 and log2(rank + 1)
// discount.  Ties in score keep SERP order; queries whose grades are all
// zero are skipped.  Returns -1 when every query is skipped.
double ndcg_at_k(const std::vector<RankedQuery>& queries, int k);

struct MetricsReport {
    std::string partition;
    std::int64_t impressions = 0;
    std::int64_t sessions = 0;
    double ll = 0.0;
    PerplexityReport ppl;
    // Parallel arrays: cutoffs and their NDCG values; empty when no
    // relevance grades were supplied.
    std::vector<int> ndcg_cutoffs;
    std::vector<double> ndcg;
};

MetricsReport compute_metrics(const std::string& partition, std::span<const double> predictions,
                              std::span<const int> clicks, std::span<const int> positions,
                              std::int64_t sessions, const std::vector<RankedQuery>& ranked = {},
                              std::span<const int> ndcg_cutoffs = {});

// One "partition metric value" line per metric, with %.17g values.
std::string format_report_lines(const MetricsReport& report);

// Aligned human-readable block.
std::string format_report_table(const std::vector<MetricsReport>& reports);

}  // namespace graphcm

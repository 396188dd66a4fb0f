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

#include "graphcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace graphcm {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": length mismatch, " +
                                    std::to_string(a) + " vs " + std::to_string(b));
    }
}

std::string fmt_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

double log_likelihood(std::span<const double> predictions, std::span<const int> clicks) {
    check_lengths(predictions.size(), clicks.size(), "log_likelihood");
    if (predictions.empty()) {
        throw std::invalid_argument("log_likelihood: empty input");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double p = predictions[i];
        total += clicks[i] != 0 ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(predictions.size());
}

PerplexityReport perplexity(std::span<const double> predictions, std::span<const int> clicks,
                            std::span<const int> positions) {
    check_lengths(predictions.size(), clicks.size(), "perplexity");
    check_lengths(predictions.size(), positions.size(), "perplexity");
    if (predictions.empty()) {
        throw std::invalid_argument("perplexity: empty input");
    }
    int max_rank = 0;
    for (int r : positions) {
        if (r < 1) {
            throw std::invalid_argument("perplexity: rank " + std::to_string(r) +
                                        " is not 1-based");
        }
        max_rank = std::max(max_rank, r);
    }
    PerplexityReport rep;
    std::vector<double> sums(static_cast<std::size_t>(max_rank), 0.0);
    rep.counts.assign(static_cast<std::size_t>(max_rank), 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const std::size_t r = static_cast<std::size_t>(positions[i] - 1);
        const double p = predictions[i];
        sums[r] += clicks[i] != 0 ? std::log2(p) : std::log2(1.0 - p);
        rep.counts[r] += 1;
    }
    rep.per_rank.assign(static_cast<std::size_t>(max_rank), 0.0);
    double total = 0.0;
    std::int64_t occupied = 0;
    for (std::size_t r = 0; r < sums.size(); ++r) {
        if (rep.counts[r] == 0) { continue; }
        rep.per_rank[r] = std::exp2(-sums[r] / static_cast<double>(rep.counts[r]));
        total += rep.per_rank[r];
        ++occupied;
    }
    rep.average = total / static_cast<double>(occupied);
    return rep;
}

double ndcg_at_k(const std::vector<RankedQuery>& queries, int k) {
    if (k < 1) {
        throw std::invalid_argument("ndcg_at_k: k must be >= 1, got " + std::to_string(k));
    }
    double total = 0.0;
    std::int64_t used = 0;
    for (const auto& q : queries) {
        check_lengths(q.scores.size(), q.grades.size(), "ndcg_at_k");
        if (std::all_of(q.grades.begin(), q.grades.end(), [](int g) { return g == 0; })) {
            continue;
        }
        std::vector<std::size_t> order(q.scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&q](std::size_t a, std::size_t b) {
            return q.scores[a] > q.scores[b];
        });
        const std::size_t cut = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
        double dcg = 0.0;
        for (std::size_t r = 0; r < cut; ++r) {
            const double gain = std::exp2(static_cast<double>(q.grades[order[r]])) - 1.0;
            dcg += gain / std::log2(static_cast<double>(r) + 2.0);
        }
        std::vector<int> ideal = q.grades;
        std::sort(ideal.begin(), ideal.end(), std::greater<int>());
        double idcg = 0.0;
        for (std::size_t r = 0; r < cut; ++r) {
            const double gain = std::exp2(static_cast<double>(ideal[r])) - 1.0;
            idcg += gain / std::log2(static_cast<double>(r) + 2.0);
        }
        total += dcg / idcg;
        ++used;
    }
    return used == 0 ? -1.0 : total / static_cast<double>(used);
}

MetricsReport compute_metrics(const std::string& partition, std::span<const double> predictions,
                              std::span<const int> clicks, std::span<const int> positions,
                              std::int64_t sessions, const std::vector<RankedQuery>& ranked,
                              std::span<const int> ndcg_cutoffs) {
    MetricsReport rep;
    rep.partition = partition;
    rep.impressions = static_cast<std::int64_t>(predictions.size());
    rep.sessions = sessions;
    rep.ll = log_likelihood(predictions, clicks);
    rep.ppl = perplexity(predictions, clicks, positions);
    if (!ranked.empty()) {
        for (int k : ndcg_cutoffs) {
            const double v = ndcg_at_k(ranked, k);
            if (v < 0.0) { continue; }
            rep.ndcg_cutoffs.push_back(k);
            rep.ndcg.push_back(v);
        }
    }
    return rep;
}

std::string format_report_lines(const MetricsReport& report) {
    std::ostringstream os;
    os << report.partition << " sessions " << report.sessions << "\n";
    os << report.partition << " impressions " << report.impressions << "\n";
    os << report.partition << " LL " << fmt_value(report.ll) << "\n";
    os << report.partition << " PPL " << fmt_value(report.ppl.average) << "\n";
    for (std::size_t r = 0; r < report.ppl.per_rank.size(); ++r) {
        if (report.ppl.counts[r] == 0) { continue; }
        os << report.partition << " PPL@" << r + 1 << " " << fmt_value(report.ppl.per_rank[r])
           << "\n";
    }
    for (std::size_t i = 0; i < report.ndcg.size(); ++i) {
        os << report.partition << " NDCG@" << report.ndcg_cutoffs[i] << " "
           << fmt_value(report.ndcg[i]) << "\n";
    }
    return os.str();
}

std::string format_report_table(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    char buf[64];
    os << "partition        sessions  impressions        LL        PPL";
    if (!reports.empty()) {
        for (std::size_t i = 0; i < reports.front().ndcg.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "  NDCG@%-2d", reports.front().ndcg_cutoffs[i]);
            os << buf;
        }
    }
    os << "\n";
    for (const auto& rep : reports) {
        std::snprintf(buf, sizeof(buf), "%-16s %8lld  %11lld  %8.4f  %9.4f",
                      rep.partition.c_str(), static_cast<long long>(rep.sessions),
                      static_cast<long long>(rep.impressions), rep.ll, rep.ppl.average);
        os << buf;
        for (double v : rep.ndcg) {
            std::snprintf(buf, sizeof(buf), "  %7.4f", v);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace graphcm

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

#include "graphcm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace graphcm {

namespace {

constexpr double kPredEps = 1e-7;
constexpr double kLlSlack = 1e-9;

double clamp_pred(double p) { return std::clamp(p, kPredEps, 1.0 - kPredEps); }

// Impressions flattened for EM, with the pair index into a dense alpha
// vector and the previous-click rank within the SERP (0 = none).
struct FlatData {
    std::vector<std::int32_t> pair_idx;
    std::vector<std::int32_t> rank;  // 0-based
    std::vector<std::int32_t> prev;  // previous-click rank, 0-based grid of size max_rank+1
    std::vector<std::int8_t> click;
    std::vector<QueryDocKey> pairs;
    int max_rank = 0;
};

FlatData flatten(const std::vector<Session>& train) {
    if (train.empty()) { throw std::invalid_argument("baseline fit: empty training set"); }
    FlatData f;
    std::map<QueryDocKey, std::int32_t> index;
    for (const auto& s : train) {
        for (const auto& q : s.queries) {
            int prev_click = 0;
            for (const auto& imp : q.impressions) {
                const QueryDocKey key{q.query, imp.doc};
                auto [it, fresh] = index.emplace(key, static_cast<std::int32_t>(f.pairs.size()));
                if (fresh) { f.pairs.push_back(key); }
                f.pair_idx.push_back(it->second);
                f.rank.push_back(imp.position - 1);
                f.prev.push_back(prev_click);
                f.click.push_back(static_cast<std::int8_t>(imp.click));
                f.max_rank = std::max(f.max_rank, imp.position);
                if (imp.click != 0) { prev_click = imp.position; }
            }
        }
    }
    return f;
}

void check_monotone(const std::vector<double>& ll, const char* what) {
    if (ll.size() >= 2 && ll.back() + kLlSlack < ll[ll.size() - 2]) {
        throw std::logic_error(std::string(what) + ": log-likelihood decreased from " +
                               std::to_string(ll[ll.size() - 2]) + " to " +
                               std::to_string(ll.back()));
    }
}

// Shared EM loop; ExamIdx maps an impression to its examination cell.
template <class ExamIdx>
void run_em(const FlatData& f, std::vector<double>& gamma, std::vector<double>& alpha,
            int iters, double tol, EmTrace* trace, ExamIdx exam_idx, const char* what) {
    if (iters < 1) { throw std::invalid_argument(std::string(what) + ": iters must be >= 1"); }
    const std::size_t n = f.pair_idx.size();
    std::vector<double> a_num(alpha.size()), a_den(alpha.size());
    std::vector<double> g_num(gamma.size()), g_den(gamma.size());
    EmTrace local;
    EmTrace& tr = trace ? *trace : local;
    tr.ll.clear();
    tr.iterations = 0;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int t = 0;; ++t) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = gamma[exam_idx(i)];
            const double a = alpha[static_cast<std::size_t>(f.pair_idx[i])];
            const double p = g * a;
            ll += f.click[i] != 0 ? std::log(p) : std::log(1.0 - p);
        }
        ll /= static_cast<double>(n);
        tr.ll.push_back(ll);
        check_monotone(tr.ll, what);
        if (t == iters || (t > 0 && ll - prev_ll < tol)) {
            tr.iterations = t;
            break;
        }
        prev_ll = ll;
        std::fill(a_num.begin(), a_num.end(), 0.0);
        std::fill(a_den.begin(), a_den.end(), 0.0);
        std::fill(g_num.begin(), g_num.end(), 0.0);
        std::fill(g_den.begin(), g_den.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t gi = exam_idx(i);
            const std::size_t ai = static_cast<std::size_t>(f.pair_idx[i]);
            const double g = gamma[gi];
            const double a = alpha[ai];
            if (f.click[i] != 0) {
                a_num[ai] += 1.0;
                g_num[gi] += 1.0;
            } else {
                const double denom = std::max(1.0 - g * a, 1e-12);
                a_num[ai] += a * (1.0 - g) / denom;
                g_num[gi] += g * (1.0 - a) / denom;
            }
            a_den[ai] += 1.0;
            g_den[gi] += 1.0;
        }
        for (std::size_t i = 0; i < alpha.size(); ++i) { alpha[i] = a_num[i] / a_den[i]; }
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            if (g_den[i] > 0.0) { gamma[i] = g_num[i] / g_den[i]; }
        }
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) { s += x; }
    return v.empty() ? 0.5 : s / static_cast<double>(v.size());
}

std::map<QueryDocKey, double> to_alpha_map(const FlatData& f, const std::vector<double>& alpha) {
    std::map<QueryDocKey, double> out;
    for (std::size_t i = 0; i < f.pairs.size(); ++i) { out.emplace(f.pairs[i], alpha[i]); }
    return out;
}

double pair_or(const std::map<QueryDocKey, double>& m, QueryDocKey key, double fallback) {
    auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

const char* baseline_kind_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::Pbm: return "PBM";
        case BaselineKind::Ubm: return "UBM";
        case BaselineKind::Dcm: return "DCM";
        case BaselineKind::Sdbn: return "SDBN";
    }
    return "?";
}

BaselineKind baseline_kind_from(const std::string& name) {
    if (name == "PBM" || name == "pbm") { return BaselineKind::Pbm; }
    if (name == "UBM" || name == "ubm") { return BaselineKind::Ubm; }
    if (name == "DCM" || name == "dcm") { return BaselineKind::Dcm; }
    if (name == "SDBN" || name == "sdbn") { return BaselineKind::Sdbn; }
    throw std::invalid_argument("unknown baseline kind: " + name);
}

PbmParams em_fit_pbm(const std::vector<Session>& train, int iters, double tol, EmTrace* trace) {
    const FlatData f = flatten(train);
    PbmParams params;
    params.max_rank = f.max_rank;
    params.gamma.assign(static_cast<std::size_t>(f.max_rank), 0.5);
    std::vector<double> alpha(f.pairs.size(), 0.5);
    run_em(
        f, params.gamma, alpha, iters, tol, trace,
        [&f](std::size_t i) { return static_cast<std::size_t>(f.rank[i]); }, "em_fit_pbm");
    params.alpha = to_alpha_map(f, alpha);
    params.global_alpha = mean_of(alpha);
    return params;
}

UbmParams em_fit_ubm(const std::vector<Session>& train, int iters, double tol, EmTrace* trace) {
    const FlatData f = flatten(train);
    UbmParams params;
    params.max_rank = f.max_rank;
    const std::size_t cols = static_cast<std::size_t>(f.max_rank + 1);
    params.gamma.assign(static_cast<std::size_t>(f.max_rank) * cols, 0.5);
    std::vector<double> alpha(f.pairs.size(), 0.5);
    run_em(
        f, params.gamma, alpha, iters, tol, trace,
        [&f, cols](std::size_t i) {
            return static_cast<std::size_t>(f.rank[i]) * cols +
                   static_cast<std::size_t>(f.prev[i]);
        },
        "em_fit_ubm");
    params.alpha = to_alpha_map(f, alpha);
    params.global_alpha = mean_of(alpha);
    return params;
}

CascadeParams fit_cascade(const std::vector<Session>& train, CascadeVariant variant,
                          bool smoothing) {
    if (train.empty()) { throw std::invalid_argument("fit_cascade: empty training set"); }
    CascadeParams params;
    params.variant = variant;
    std::map<QueryDocKey, std::pair<double, double>> a_counts;  // clicks, appearances
    std::map<QueryDocKey, std::pair<double, double>> s_counts;  // last-clicks, clicks
    std::vector<double> l_num, l_den;
    double ga_num = 0.0, ga_den = 0.0, gs_num = 0.0, gs_den = 0.0;
    for (const auto& s : train) {
        for (const auto& q : s.queries) {
            for (const auto& imp : q.impressions) {
                params.max_rank = std::max(params.max_rank, imp.position);
            }
            int last = 0;
            for (const auto& imp : q.impressions) {
                if (imp.click != 0) { last = std::max(last, imp.position); }
            }
            if (last == 0) { continue; }
            if (static_cast<std::size_t>(params.max_rank) > l_num.size()) {
                l_num.resize(static_cast<std::size_t>(params.max_rank), 0.0);
                l_den.resize(static_cast<std::size_t>(params.max_rank), 0.0);
            }
            for (const auto& imp : q.impressions) {
                if (imp.position > last) { continue; }
                const QueryDocKey key{q.query, imp.doc};
                auto& ac = a_counts[key];
                ac.first += imp.click;
                ac.second += 1.0;
                ga_num += imp.click;
                ga_den += 1.0;
                if (imp.click != 0) {
                    const std::size_t r = static_cast<std::size_t>(imp.position - 1);
                    l_den[r] += 1.0;
                    if (imp.position < last) { l_num[r] += 1.0; }
                    auto& sc = s_counts[key];
                    sc.second += 1.0;
                    gs_den += 1.0;
                    if (imp.position == last) {
                        sc.first += 1.0;
                        gs_num += 1.0;
                    }
                }
            }
        }
    }
    const double add = smoothing ? 1.0 : 0.0;
    auto ratio = [add](double num, double den) {
        return den + 2.0 * add > 0.0 ? (num + add) / (den + 2.0 * add) : 0.5;
    };
    for (const auto& [key, c] : a_counts) { params.alpha.emplace(key, ratio(c.first, c.second)); }
    params.global_alpha = ratio(ga_num, ga_den);
    l_num.resize(static_cast<std::size_t>(params.max_rank), 0.0);
    l_den.resize(static_cast<std::size_t>(params.max_rank), 0.0);
    if (variant == CascadeVariant::Dcm) {
        params.lambda.resize(static_cast<std::size_t>(params.max_rank), 0.5);
        for (std::size_t r = 0; r < params.lambda.size(); ++r) {
            params.lambda[r] = l_den[r] + 2.0 * add > 0.0 ? ratio(l_num[r], l_den[r]) : 0.5;
        }
    } else {
        for (const auto& [key, c] : s_counts) {
            params.sigma.emplace(key, ratio(c.first, c.second));
        }
        params.global_sigma = ratio(gs_num, gs_den);
    }
    return params;
}

std::vector<double> predict_clicks(const PbmParams& params, const Session& session) {
    std::vector<double> out;
    for (const auto& q : session.queries) {
        for (const auto& imp : q.impressions) {
            const int r = std::clamp(imp.position, 1, params.max_rank);
            const double a = pair_or(params.alpha, {q.query, imp.doc}, params.global_alpha);
            out.push_back(clamp_pred(params.gamma[static_cast<std::size_t>(r - 1)] * a));
        }
    }
    return out;
}

std::vector<double> predict_clicks(const UbmParams& params, const Session& session) {
    std::vector<double> out;
    for (const auto& q : session.queries) {
        int prev_click = 0;
        for (const auto& imp : q.impressions) {
            const int r = std::clamp(imp.position, 1, params.max_rank);
            const int rp = std::clamp(prev_click, 0, params.max_rank);
            const double a = pair_or(params.alpha, {q.query, imp.doc}, params.global_alpha);
            out.push_back(clamp_pred(params.gamma_at(r, rp) * a));
            if (imp.click != 0) { prev_click = imp.position; }
        }
    }
    return out;
}

std::vector<double> predict_clicks(const CascadeParams& params, const Session& session) {
    std::vector<double> out;
    for (const auto& q : session.queries) {
        double exam = 1.0;
        for (const auto& imp : q.impressions) {
            const double a = pair_or(params.alpha, {q.query, imp.doc}, params.global_alpha);
            out.push_back(clamp_pred(exam * a));
            if (imp.click != 0) {
                if (params.variant == CascadeVariant::Dcm) {
                    const int r = std::clamp(imp.position, 1, params.max_rank);
                    exam = params.lambda[static_cast<std::size_t>(r - 1)];
                } else {
                    exam = 1.0 - pair_or(params.sigma, {q.query, imp.doc}, params.global_sigma);
                }
            } else {
                const double denom = std::max(1.0 - exam * a, 1e-12);
                exam = exam * (1.0 - a) / denom;
            }
        }
    }
    return out;
}

std::vector<double> FittedBaseline::predict(const Session& session) const {
    switch (kind) {
        case BaselineKind::Pbm: return predict_clicks(pbm, session);
        case BaselineKind::Ubm: return predict_clicks(ubm, session);
        case BaselineKind::Dcm:
        case BaselineKind::Sdbn: return predict_clicks(cascade, session);
    }
    throw std::logic_error("FittedBaseline::predict: bad kind");
}

void FittedBaseline::save(std::ostream& os) const {
    os << "graphcm-baseline 1 " << baseline_kind_name(kind) << "\n";
    switch (kind) {
        case BaselineKind::Pbm:
            os << "max_rank " << pbm.max_rank << "\n";
            os << "global_alpha " << fmt(pbm.global_alpha) << "\n";
            for (int r = 1; r <= pbm.max_rank; ++r) {
                os << "gamma " << r << " " << fmt(pbm.gamma[static_cast<std::size_t>(r - 1)])
                   << "\n";
            }
            for (const auto& [key, v] : pbm.alpha) {
                os << "alpha " << key.first << " " << key.second << " " << fmt(v) << "\n";
            }
            break;
        case BaselineKind::Ubm:
            os << "max_rank " << ubm.max_rank << "\n";
            os << "global_alpha " << fmt(ubm.global_alpha) << "\n";
            for (int r = 1; r <= ubm.max_rank; ++r) {
                for (int rp = 0; rp <= ubm.max_rank; ++rp) {
                    os << "gamma " << r << " " << rp << " " << fmt(ubm.gamma_at(r, rp)) << "\n";
                }
            }
            for (const auto& [key, v] : ubm.alpha) {
                os << "alpha " << key.first << " " << key.second << " " << fmt(v) << "\n";
            }
            break;
        case BaselineKind::Dcm:
        case BaselineKind::Sdbn:
            os << "max_rank " << cascade.max_rank << "\n";
            os << "global_alpha " << fmt(cascade.global_alpha) << "\n";
            if (kind == BaselineKind::Dcm) {
                for (int r = 1; r <= cascade.max_rank; ++r) {
                    os << "lambda " << r << " "
                       << fmt(cascade.lambda[static_cast<std::size_t>(r - 1)]) << "\n";
                }
            } else {
                os << "global_sigma " << fmt(cascade.global_sigma) << "\n";
            }
            for (const auto& [key, v] : cascade.alpha) {
                os << "alpha " << key.first << " " << key.second << " " << fmt(v) << "\n";
            }
            if (kind == BaselineKind::Sdbn) {
                for (const auto& [key, v] : cascade.sigma) {
                    os << "sigma " << key.first << " " << key.second << " " << fmt(v) << "\n";
                }
            }
            break;
    }
}

void FittedBaseline::save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) { throw std::runtime_error("cannot open baseline file for writing: " + path); }
    save(os);
    if (!os) { throw std::runtime_error("failed writing baseline file: " + path); }
}

FittedBaseline FittedBaseline::load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) { throw std::runtime_error("baseline file: empty"); }
    std::istringstream hs(line);
    std::string magic, kind_name;
    int version = 0;
    hs >> magic >> version >> kind_name;
    if (!hs || magic != "graphcm-baseline" || version != 1) {
        throw std::runtime_error("baseline file: bad header \"" + line + "\"");
    }
    FittedBaseline out;
    out.kind = baseline_kind_from(kind_name);
    out.cascade.variant =
        out.kind == BaselineKind::Sdbn ? CascadeVariant::Sdbn : CascadeVariant::Dcm;
    int max_rank = 0;
    std::vector<std::tuple<int, int, double>> gamma_entries;
    while (std::getline(is, line)) {
        if (line.empty()) { continue; }
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "max_rank") {
            ls >> max_rank;
        } else if (tag == "global_alpha") {
            double v;
            ls >> v;
            out.pbm.global_alpha = out.ubm.global_alpha = out.cascade.global_alpha = v;
        } else if (tag == "global_sigma") {
            ls >> out.cascade.global_sigma;
        } else if (tag == "gamma") {
            if (out.kind == BaselineKind::Pbm) {
                int r;
                double v;
                ls >> r >> v;
                gamma_entries.emplace_back(r, 0, v);
            } else {
                int r, rp;
                double v;
                ls >> r >> rp >> v;
                gamma_entries.emplace_back(r, rp, v);
            }
        } else if (tag == "lambda") {
            int r;
            double v;
            ls >> r >> v;
            gamma_entries.emplace_back(r, -1, v);
        } else if (tag == "alpha" || tag == "sigma") {
            std::int64_t q, d;
            double v;
            ls >> q >> d >> v;
            if (tag == "alpha") {
                out.pbm.alpha[{q, d}] = v;
                out.ubm.alpha[{q, d}] = v;
                out.cascade.alpha[{q, d}] = v;
            } else {
                out.cascade.sigma[{q, d}] = v;
            }
        } else {
            throw std::runtime_error("baseline file: unknown tag \"" + tag + "\"");
        }
        if (!ls) { throw std::runtime_error("baseline file: malformed line \"" + line + "\""); }
    }
    if (max_rank < 1) { throw std::runtime_error("baseline file: missing max_rank"); }
    out.pbm.max_rank = out.ubm.max_rank = out.cascade.max_rank = max_rank;
    out.pbm.gamma.assign(static_cast<std::size_t>(max_rank), 0.5);
    out.ubm.gamma.assign(static_cast<std::size_t>(max_rank) *
                             static_cast<std::size_t>(max_rank + 1),
                         0.5);
    out.cascade.lambda.assign(static_cast<std::size_t>(max_rank), 0.5);
    for (const auto& [r, rp, v] : gamma_entries) {
        if (r < 1 || r > max_rank) {
            throw std::runtime_error("baseline file: rank " + std::to_string(r) + " out of range");
        }
        if (rp < 0) {
            out.cascade.lambda[static_cast<std::size_t>(r - 1)] = v;
        } else if (out.kind == BaselineKind::Pbm) {
            out.pbm.gamma[static_cast<std::size_t>(r - 1)] = v;
        } else {
            out.ubm.gamma[static_cast<std::size_t>((r - 1) * (max_rank + 1) + rp)] = v;
        }
    }
    return out;
}

FittedBaseline FittedBaseline::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open baseline file: " + path); }
    return load(is);
}

FittedBaseline fit_baseline(BaselineKind kind, const std::vector<Session>& train, int iters,
                            double tol, EmTrace* trace) {
    FittedBaseline out;
    out.kind = kind;
    switch (kind) {
        case BaselineKind::Pbm: out.pbm = em_fit_pbm(train, iters, tol, trace); break;
        case BaselineKind::Ubm: out.ubm = em_fit_ubm(train, iters, tol, trace); break;
        case BaselineKind::Dcm: out.cascade = fit_cascade(train, CascadeVariant::Dcm); break;
        case BaselineKind::Sdbn: out.cascade = fit_cascade(train, CascadeVariant::Sdbn); break;
    }
    return out;
}

}  // namespace graphcm

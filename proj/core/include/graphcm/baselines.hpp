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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graphcm/session.hpp"

namespace graphcm {

enum class BaselineKind { Pbm, Ubm, Dcm, Sdbn };

const char* baseline_kind_name(BaselineKind k);
BaselineKind baseline_kind_from(const std::string& name);

using QueryDocKey = std::pair<std::int64_t, std::int64_t>;

struct PbmParams {
    int max_rank = 0;
    std::vector<double> gamma;  // examination per rank, index r - 1
    std::map<QueryDocKey, double> alpha;
    double global_alpha = 0.5;  // fallback for unseen pairs
};

struct UbmParams {
    int max_rank = 0;
    // Examination per (rank, previous-click rank); previous-click rank 0
    // means no click above.  Row-major, (r - 1) * (max_rank + 1) + rp.
    std::vector<double> gamma;
    std::map<QueryDocKey, double> alpha;
    double global_alpha = 0.5;

    double gamma_at(int rank, int prev_click_rank) const {
        return gamma[static_cast<std::size_t>((rank - 1) * (max_rank + 1) + prev_click_rank)];
    }
};

enum class CascadeVariant { Dcm, Sdbn };

struct CascadeParams {
    CascadeVariant variant = CascadeVariant::Dcm;
    int max_rank = 0;
    std::map<QueryDocKey, double> alpha;
    double global_alpha = 0.5;
    std::vector<double> lambda;  // DCM continuation after a click, index r - 1
    std::map<QueryDocKey, double> sigma;  // SDBN satisfaction after a click
    double global_sigma = 0.5;
};

struct EmTrace {
    std::vector<double> ll;  // training log-likelihood, entry 0 at init
    int iterations = 0;
};

// EM fits are pure maximum likelihood (no smoothing) so the log-likelihood
// trace is guaranteed nondecreasing; a violation beyond 1e-9 throws.
PbmParams em_fit_pbm(const std::vector<Session>& train, int iters, double tol,
                     EmTrace* trace = nullptr);
UbmParams em_fit_ubm(const std::vector<Session>& train, int iters, double tol,
                     EmTrace* trace = nullptr);

// Closed-form count-ratio estimators over the cascade window (ranks up to the
// last click; SERPs without clicks contribute nothing).  With smoothing, one
// pseudo success and one pseudo failure keep estimates off the 0/1 atoms.
CascadeParams fit_cascade(const std::vector<Session>& train, CascadeVariant variant,
                          bool smoothing = true);

// Conditional click probabilities given the observed preceding clicks, one
// value per impression in session order, clamped to [1e-7, 1 - 1e-7].
std::vector<double> predict_clicks(const PbmParams& params, const Session& session);
std::vector<double> predict_clicks(const UbmParams& params, const Session& session);
std::vector<double> predict_clicks(const CascadeParams& params, const Session& session);

// Tagged union over the four baselines for uniform fitting, prediction, and
// round-trippable text serialization.
struct FittedBaseline {
    BaselineKind kind = BaselineKind::Pbm;
    PbmParams pbm;
    UbmParams ubm;
    CascadeParams cascade;

    std::vector<double> predict(const Session& session) const;
    void save(std::ostream& os) const;
    void save_file(const std::string& path) const;
    static FittedBaseline load(std::istream& is);
    static FittedBaseline load_file(const std::string& path);
};

FittedBaseline fit_baseline(BaselineKind kind, const std::vector<Session>& train, int iters,
                            double tol, EmTrace* trace = nullptr);

}  // namespace graphcm

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
#include <string>
#include <unordered_map>
#include <vector>

namespace graphcm {

struct ImpressionRecord {
    std::int64_t doc = 0;
    int position = 0;  // 1-based rank in the SERP
    std::int64_t vertical = 0;
    int click = 0;
};

struct QueryRecord {
    std::int64_t query = 0;
    std::vector<ImpressionRecord> impressions;  // ordered by ascending position
};

struct Session {
    std::string sid;
    std::vector<QueryRecord> queries;  // in issue order
};

// Token <-> dense index map.  Index 0 is reserved for UNKNOWN; real tokens get
// indices 1.. in first-appearance order.
class Vocabulary {
  public:
    Vocabulary() { tokens_.push_back("<unk>"); }

    std::int64_t intern(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) { return it->second; }
        const std::int64_t id = static_cast<std::int64_t>(tokens_.size());
        tokens_.push_back(token);
        index_.emplace(token, id);
        return id;
    }

    // 0 when the token is unknown.
    std::int64_t lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? 0 : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    const std::string& token(std::int64_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    // Row count including the UNKNOWN row.
    std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }

    // Distinct real tokens (excludes UNKNOWN).
    std::int64_t distinct() const { return size() - 1; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int64_t> index_;
};

inline std::int64_t session_impressions(const Session& s) {
    std::int64_t n = 0;
    for (const auto& q : s.queries) { n += static_cast<std::int64_t>(q.impressions.size()); }
    return n;
}

}  // namespace graphcm

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

#include <iosfwd>
#include <string>
#include <vector>

#include "graphcm/session.hpp"

namespace graphcm {

struct ParseDiagnostic {
    int line = 0;
    std::string message;
};

struct ParsedLog {
    std::vector<Session> sessions;
    Vocabulary queries;
    Vocabulary docs;
    Vocabulary verticals;
    std::vector<ParseDiagnostic> diagnostics;
};

// Parses the newline-delimited session log.  One JSON object per line:
//
//   {"sid": "...", "queries": [{"qid": "...",
//     "docs": [{"did": "...", "pos": 1, "vert": "...", "click": 0}, ...]}, ...]}
//
// Field sets are exact; records with duplicate or gapped positions are
// rejected; sessions left with no queries are dropped.  Every rejection is
// reported in `diagnostics` with its 1-based line number.  Dense ids are
// assigned in first-appearance order over accepted records; impressions are
// stored sorted by position.
ParsedLog parse_log(std::istream& in);

// Same validation, but maps tokens through `vocab` instead of growing it.
// Tokens absent from the vocabulary map to index 0.
std::vector<Session> parse_log_with_vocab(std::istream& in, const ParsedLog& vocab,
                                          std::vector<ParseDiagnostic>* diagnostics = nullptr);

// Canonical serialization: objects with fixed key order, no whitespace,
// impressions by ascending position; one session per line.
std::string serialize_session(const Session& s, const ParsedLog& vocab);
void serialize_log(std::ostream& out, const std::vector<Session>& sessions,
                   const ParsedLog& vocab);
void write_log_file(const std::string& path, const std::vector<Session>& sessions,
                    const ParsedLog& vocab);

ParsedLog parse_log_file(const std::string& path);
std::vector<Session> parse_log_file_with_vocab(const std::string& path, const ParsedLog& vocab);

// Vocabulary sidecar: "<kind>\t<index>\t<token>" lines for kinds query/doc/vert.
void write_vocab_file(const std::string& path, const ParsedLog& vocab);
ParsedLog load_vocab_file(const std::string& path);

}  // namespace graphcm

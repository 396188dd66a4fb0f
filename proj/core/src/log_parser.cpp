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

#include "graphcm/log_parser.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace graphcm {

namespace {

using nlohmann::json;

// Raw string tokens of one record, validated but not yet interned.
struct RawImpression {
    std::string did;
    int pos = 0;
    std::string vert;
    int click = 0;
};
struct RawQuery {
    std::string qid;
    std::vector<RawImpression> docs;
};
struct RawSession {
    std::string sid;
    std::vector<RawQuery> queries;
};

bool has_exact_keys(const json& obj, std::initializer_list<const char*> keys,
                    std::string* error) {
    if (!obj.is_object()) {
        *error = "expected an object";
        return false;
    }
    if (obj.size() != keys.size()) {
        *error = "unexpected field count (" + std::to_string(obj.size()) + ")";
        return false;
    }
    for (const char* k : keys) {
        if (!obj.contains(k)) {
            *error = std::string("missing field \"") + k + "\"";
            return false;
        }
    }
    return true;
}

// Validates one line into a RawSession.  Returns false with an error message
// on any malformed structure.  `warnings` collects non-fatal drops.
bool validate_line(const std::string& text, RawSession* out, std::string* error,
                   std::vector<std::string>* warnings) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        *error = std::string("invalid JSON: ") + e.what();
        return false;
    }
    if (!has_exact_keys(root, {"sid", "queries"}, error)) { return false; }
    if (!root["sid"].is_string()) {
        *error = "\"sid\" must be a string";
        return false;
    }
    if (!root["queries"].is_array()) {
        *error = "\"queries\" must be an array";
        return false;
    }
    out->sid = root["sid"].get<std::string>();
    for (const auto& q : root["queries"]) {
        if (!has_exact_keys(q, {"qid", "docs"}, error)) { return false; }
        if (!q["qid"].is_string()) {
            *error = "\"qid\" must be a string";
            return false;
        }
        if (!q["docs"].is_array()) {
            *error = "\"docs\" must be an array";
            return false;
        }
        RawQuery rq;
        rq.qid = q["qid"].get<std::string>();
        for (const auto& d : q["docs"]) {
            if (!has_exact_keys(d, {"did", "pos", "vert", "click"}, error)) { return false; }
            if (!d["did"].is_string() || !d["vert"].is_string()) {
                *error = "\"did\" and \"vert\" must be strings";
                return false;
            }
            if (!d["pos"].is_number_integer()) {
                *error = "\"pos\" must be an integer";
                return false;
            }
            if (!d["click"].is_number_integer()) {
                *error = "\"click\" must be an integer";
                return false;
            }
            RawImpression ri;
            ri.did = d["did"].get<std::string>();
            ri.pos = d["pos"].get<int>();
            ri.vert = d["vert"].get<std::string>();
            ri.click = d["click"].get<int>();
            if (ri.pos <= 0) {
                *error = "non-positive position " + std::to_string(ri.pos) + " for doc \"" +
                         ri.did + "\"";
                return false;
            }
            if (ri.click != 0 && ri.click != 1) {
                *error = "click must be 0 or 1, got " + std::to_string(ri.click);
                return false;
            }
            rq.docs.push_back(std::move(ri));
        }
        if (rq.docs.empty()) {
            warnings->push_back("query \"" + rq.qid + "\" has no docs; query dropped");
            continue;
        }
        // positions must form a permutation of 1..M
        std::vector<int> seen(rq.docs.size() + 1, 0);
        for (const auto& d : rq.docs) {
            if (d.pos > static_cast<int>(rq.docs.size())) {
                *error = "positions are not a permutation of 1.." +
                         std::to_string(rq.docs.size()) + " (found pos " +
                         std::to_string(d.pos) + ")";
                return false;
            }
            if (seen[d.pos]++) {
                *error = "duplicate position " + std::to_string(d.pos) + " within query \"" +
                         rq.qid + "\"";
                return false;
            }
        }
        out->queries.push_back(std::move(rq));
    }
    return true;
}

Session intern_session(const RawSession& raw, Vocabulary* q, Vocabulary* d, Vocabulary* v,
                       bool grow) {
    Session s;
    s.sid = raw.sid;
    for (const auto& rq : raw.queries) {
        QueryRecord qr;
        qr.query = grow ? q->intern(rq.qid) : q->lookup(rq.qid);
        for (const auto& ri : rq.docs) {
            ImpressionRecord imp;
            imp.doc = grow ? d->intern(ri.did) : d->lookup(ri.did);
            imp.position = ri.pos;
            imp.vertical = grow ? v->intern(ri.vert) : v->lookup(ri.vert);
            imp.click = ri.click;
            qr.impressions.push_back(imp);
        }
        std::sort(qr.impressions.begin(), qr.impressions.end(),
                  [](const ImpressionRecord& a, const ImpressionRecord& b) {
                      return a.position < b.position;
                  });
        s.queries.push_back(std::move(qr));
    }
    return s;
}

void parse_stream(std::istream& in, Vocabulary* q, Vocabulary* d, Vocabulary* v, bool grow,
                  std::vector<Session>* sessions, std::vector<ParseDiagnostic>* diagnostics) {
    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) { continue; }
        RawSession raw;
        std::string error;
        std::vector<std::string> warnings;
        if (!validate_line(text, &raw, &error, &warnings)) {
            if (diagnostics) { diagnostics->push_back({line, "record rejected: " + error}); }
            continue;
        }
        if (diagnostics) {
            for (auto& w : warnings) { diagnostics->push_back({line, "warning: " + w}); }
        }
        if (raw.queries.empty()) {
            if (diagnostics) {
                diagnostics->push_back({line, "warning: session \"" + raw.sid +
                                                  "\" has no queries; session dropped"});
            }
            continue;
        }
        sessions->push_back(intern_session(raw, q, d, v, grow));
    }
}

}  // namespace

ParsedLog parse_log(std::istream& in) {
    ParsedLog log;
    parse_stream(in, &log.queries, &log.docs, &log.verticals, /*grow=*/true, &log.sessions,
                 &log.diagnostics);
    return log;
}

std::vector<Session> parse_log_with_vocab(std::istream& in, const ParsedLog& vocab,
                                          std::vector<ParseDiagnostic>* diagnostics) {
    std::vector<Session> sessions;
    auto q = vocab.queries;
    auto d = vocab.docs;
    auto v = vocab.verticals;
    parse_stream(in, &q, &d, &v, /*grow=*/false, &sessions, diagnostics);
    return sessions;
}

std::string serialize_session(const Session& s, const ParsedLog& vocab) {
    std::ostringstream os;
    os << "{\"sid\":" << json(s.sid).dump() << ",\"queries\":[";
    for (std::size_t qi = 0; qi < s.queries.size(); ++qi) {
        const auto& q = s.queries[qi];
        if (qi > 0) { os << ","; }
        os << "{\"qid\":" << json(vocab.queries.token(q.query)).dump() << ",\"docs\":[";
        for (std::size_t di = 0; di < q.impressions.size(); ++di) {
            const auto& imp = q.impressions[di];
            if (di > 0) { os << ","; }
            os << "{\"did\":" << json(vocab.docs.token(imp.doc)).dump()
               << ",\"pos\":" << imp.position
               << ",\"vert\":" << json(vocab.verticals.token(imp.vertical)).dump()
               << ",\"click\":" << imp.click << "}";
        }
        os << "]}";
    }
    os << "]}";
    return os.str();
}

void serialize_log(std::ostream& out, const std::vector<Session>& sessions,
                   const ParsedLog& vocab) {
    for (const auto& s : sessions) { out << serialize_session(s, vocab) << "\n"; }
}

void write_log_file(const std::string& path, const std::vector<Session>& sessions,
                    const ParsedLog& vocab) {
    std::ofstream os(path, std::ios::binary);
    if (!os) { throw std::runtime_error("cannot open log for writing: " + path); }
    serialize_log(os, sessions, vocab);
    if (!os) { throw std::runtime_error("failed writing log: " + path); }
}

ParsedLog parse_log_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open log: " + path); }
    return parse_log(is);
}

std::vector<Session> parse_log_file_with_vocab(const std::string& path, const ParsedLog& vocab) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open log: " + path); }
    return parse_log_with_vocab(is, vocab);
}

void write_vocab_file(const std::string& path, const ParsedLog& vocab) {
    std::ofstream os(path, std::ios::binary);
    if (!os) { throw std::runtime_error("cannot open vocab for writing: " + path); }
    const auto dump = [&os](const char* kind, const Vocabulary& v) {
        for (std::int64_t i = 1; i < v.size(); ++i) {
            os << kind << "\t" << i << "\t" << v.token(i) << "\n";
        }
    };
    dump("query", vocab.queries);
    dump("doc", vocab.docs);
    dump("vert", vocab.verticals);
    if (!os) { throw std::runtime_error("failed writing vocab: " + path); }
}

ParsedLog load_vocab_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) { throw std::runtime_error("cannot open vocab: " + path); }
    ParsedLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) { continue; }
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw std::runtime_error("vocab file " + path + " line " + std::to_string(lineno) +
                                     ": expected kind<TAB>index<TAB>token");
        }
        const std::string kind = line.substr(0, t1);
        const std::int64_t index = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
        const std::string token = line.substr(t2 + 1);
        Vocabulary* v = nullptr;
        if (kind == "query") {
            v = &log.queries;
        } else if (kind == "doc") {
            v = &log.docs;
        } else if (kind == "vert") {
            v = &log.verticals;
        } else {
            throw std::runtime_error("vocab file " + path + " line " + std::to_string(lineno) +
                                     ": unknown kind \"" + kind + "\"");
        }
        const std::int64_t got = v->intern(token);
        if (got != index) {
            throw std::runtime_error("vocab file " + path + " line " + std::to_string(lineno) +
                                     ": non-contiguous index " + std::to_string(index));
        }
    }
    return log;
}

}  // namespace graphcm

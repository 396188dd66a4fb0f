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

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graphcm/autodiff.hpp"
#include "graphcm/rng.hpp"

namespace graphcm {

enum class ParamInit { Zeros, Ones, UniformFanIn, NormalEmbedding, Constant };

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // applied as gradient addition 2*lambda*theta
};

// Named trainable parameters with per-parameter Adam state.
//
// Initial values depend only on (seed, name), never on creation order, so two
// model variants sharing a parameter start from identical values.
template <class Real>
class ParamStore {
  public:
    ad::Var<Real> create(const std::string& name, ad::Shape shape, ParamInit init,
                         std::uint64_t seed, double arg = 0.0) {
        if (entries_.count(name) != 0) {
            throw std::invalid_argument("ParamStore::create: duplicate parameter " + name);
        }
        Rng rng(mix_seed(seed, hash_str(name)));
        ad::Array<Real> value(shape);
        switch (init) {
            case ParamInit::Zeros: break;
            case ParamInit::Ones: value.fill(Real(1)); break;
            case ParamInit::Constant: value.fill(static_cast<Real>(arg)); break;
            case ParamInit::UniformFanIn: {
                const double fan_in = arg > 0 ? arg : static_cast<double>(shape.front());
                const double bound = 1.0 / std::sqrt(fan_in);
                for (std::int64_t i = 0; i < value.numel(); ++i) {
                    value[i] = static_cast<Real>(rng.uniform(-bound, bound));
                }
                break;
            }
            case ParamInit::NormalEmbedding: {
                for (std::int64_t i = 0; i < value.numel(); ++i) {
                    value[i] = static_cast<Real>(rng.normal(0.0, 0.01));
                }
                break;
            }
        }
        Entry e;
        e.var = ad::Var<Real>::leaf(std::move(value), true);
        entries_.emplace(name, std::move(e));
        return entries_.at(name).var;
    }

    ad::Var<Real> add_existing(const std::string& name, ad::Array<Real> value) {
        if (entries_.count(name) != 0) {
            throw std::invalid_argument("ParamStore::add_existing: duplicate parameter " + name);
        }
        Entry e;
        e.var = ad::Var<Real>::leaf(std::move(value), true);
        entries_.emplace(name, std::move(e));
        return entries_.at(name).var;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    ad::Var<Real> get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw std::out_of_range("ParamStore::get: no parameter named " + name);
        }
        return it->second.var;
    }

    ad::Array<Real>& value(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw std::out_of_range("ParamStore::value: no parameter named " + name);
        }
        return it->second.var.value();
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, v] : entries_) { out.push_back(k); }
        return out;
    }

    std::size_t size() const { return entries_.size(); }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const auto& [k, e] : entries_) { n += e.var.numel(); }
        return n;
    }

    void zero_grad() {
        for (auto& [k, e] : entries_) {
            auto& node = e.var.node();
            ad::detail::ensure_grad(node);
            node.grad.fill(Real(0));
        }
    }

    double l2_sum_squares() const {
        double s = 0.0;
        for (const auto& [k, e] : entries_) {
            const auto& v = e.var.value();
            for (std::int64_t i = 0; i < v.numel(); ++i) {
                s += static_cast<double>(v[i]) * static_cast<double>(v[i]);
            }
        }
        return s;
    }

    void adam_step(const AdamConfig& cfg) {
        if (cfg.lr <= 0.0) {
            throw std::invalid_argument("adam_step: lr must be positive, got " +
                                        std::to_string(cfg.lr));
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        for (auto& [k, e] : entries_) {
            auto& node = e.var.node();
            ad::detail::ensure_grad(node);
            auto& theta = node.value;
            auto& grad = node.grad;
            if (e.m.numel() != theta.numel()) {
                e.m = ad::Array<Real>(theta.shape());
                e.v = ad::Array<Real>(theta.shape());
            }
            for (std::int64_t i = 0; i < theta.numel(); ++i) {
                const double g = static_cast<double>(grad[i]) +
                                 2.0 * cfg.weight_decay * static_cast<double>(theta[i]);
                const double m = cfg.beta1 * static_cast<double>(e.m[i]) + (1.0 - cfg.beta1) * g;
                const double v = cfg.beta2 * static_cast<double>(e.v[i]) + (1.0 - cfg.beta2) * g * g;
                e.m[i] = static_cast<Real>(m);
                e.v[i] = static_cast<Real>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                theta[i] = static_cast<Real>(static_cast<double>(theta[i]) -
                                             cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        }
    }

    std::int64_t step_count() const { return step_; }

    // --- serialization ------------------------------------------------------
    //
    // Text header followed by a raw little-endian payload:
    //
    //   graphcm-checkpoint 1
    //   dtype f32|f64
    //   hyper <key> <value-to-end-of-line>     (zero or more)
    //   param <name> <rank> <d0> ... <dn-1> <offset>
    //   payload
    //   <param values in listed order, little-endian>
    //
    // Offsets are in elements from the start of the payload.

    void save(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& hyper)
        const {
        static_assert(std::endian::native == std::endian::little,
                      "checkpoint writer assumes a little-endian host");
        os << "graphcm-checkpoint 1\n";
        os << "dtype " << dtype_name() << "\n";
        for (const auto& [k, v] : hyper) { os << "hyper " << k << " " << v << "\n"; }
        std::int64_t off = 0;
        for (const auto& [name, e] : entries_) {
            os << "param " << name << " " << e.var.shape().size();
            for (auto d : e.var.shape()) { os << " " << d; }
            os << " " << off << "\n";
            off += e.var.numel();
        }
        os << "payload\n";
        for (const auto& [name, e] : entries_) {
            const auto& v = e.var.value();
            os.write(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::streamsize>(sizeof(Real) * v.numel()));
        }
    }

    void save_file(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& hyper) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) { throw std::runtime_error("cannot open checkpoint for writing: " + path); }
        save(os, hyper);
        if (!os) { throw std::runtime_error("failed writing checkpoint: " + path); }
    }

    std::string save_string(const std::vector<std::pair<std::string, std::string>>& hyper) const {
        std::ostringstream os(std::ios::binary);
        save(os, hyper);
        return os.str();
    }

    static std::pair<ParamStore, std::vector<std::pair<std::string, std::string>>> load(
        std::istream& is) {
        std::string line;
        if (!std::getline(is, line) || line != "graphcm-checkpoint 1") {
            throw std::runtime_error("checkpoint: bad magic line");
        }
        if (!std::getline(is, line) || line.rfind("dtype ", 0) != 0) {
            throw std::runtime_error("checkpoint: missing dtype line");
        }
        const std::string dtype = line.substr(6);
        if (dtype != "f32" && dtype != "f64") {
            throw std::runtime_error("checkpoint: unknown dtype " + dtype);
        }
        std::vector<std::pair<std::string, std::string>> hyper;
        struct Rec {
            std::string name;
            ad::Shape shape;
        };
        std::vector<Rec> recs;
        while (std::getline(is, line)) {
            if (line == "payload") { break; }
            if (line.rfind("hyper ", 0) == 0) {
                const std::string rest = line.substr(6);
                const auto sp = rest.find(' ');
                if (sp == std::string::npos) {
                    throw std::runtime_error("checkpoint: malformed hyper line: " + line);
                }
                hyper.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
            } else if (line.rfind("param ", 0) == 0) {
                std::istringstream ls(line.substr(6));
                Rec r;
                std::size_t rank = 0;
                std::int64_t off = 0;
                ls >> r.name >> rank;
                r.shape.resize(rank);
                for (auto& d : r.shape) { ls >> d; }
                ls >> off;
                if (!ls) { throw std::runtime_error("checkpoint: malformed param line: " + line); }
                recs.push_back(std::move(r));
            } else {
                throw std::runtime_error("checkpoint: unexpected line: " + line);
            }
        }
        ParamStore store;
        for (const auto& r : recs) {
            ad::Array<Real> value(r.shape);
            if (dtype == dtype_name()) {
                is.read(reinterpret_cast<char*>(value.data()),
                        static_cast<std::streamsize>(sizeof(Real) * value.numel()));
            } else if (dtype == "f32") {
                std::vector<float> buf(static_cast<std::size_t>(value.numel()));
                is.read(reinterpret_cast<char*>(buf.data()),
                        static_cast<std::streamsize>(sizeof(float) * value.numel()));
                for (std::int64_t i = 0; i < value.numel(); ++i) {
                    value[i] = static_cast<Real>(buf[static_cast<std::size_t>(i)]);
                }
            } else {
                std::vector<double> buf(static_cast<std::size_t>(value.numel()));
                is.read(reinterpret_cast<char*>(buf.data()),
                        static_cast<std::streamsize>(sizeof(double) * value.numel()));
                for (std::int64_t i = 0; i < value.numel(); ++i) {
                    value[i] = static_cast<Real>(buf[static_cast<std::size_t>(i)]);
                }
            }
            if (!is) { throw std::runtime_error("checkpoint: truncated payload"); }
            store.add_existing(r.name, std::move(value));
        }
        return {std::move(store), std::move(hyper)};
    }

    static std::pair<ParamStore, std::vector<std::pair<std::string, std::string>>> load_file(
        const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) { throw std::runtime_error("cannot open checkpoint: " + path); }
        return load(is);
    }

  private:
    static const char* dtype_name() {
        if constexpr (sizeof(Real) == 4) {
            return "f32";
        } else {
            return "f64";
        }
    }

    struct Entry {
        ad::Var<Real> var;
        ad::Array<Real> m, v;
    };

    std::map<std::string, Entry> entries_;
    std::int64_t step_ = 0;
};

// Sum of squares of every parameter, on the tape.
template <class Real>
ad::Var<Real> l2_penalty(const ParamStore<Real>& store) {
    ad::Var<Real> total;
    for (const auto& name : store.names()) {
        auto v = store.get(name);
        auto sq = ad::sum_all(ad::elementwise_mul(v, v));
        total = total.defined() ? ad::add(total, sq) : sq;
    }
    if (!total.defined()) { throw std::invalid_argument("l2_penalty: empty parameter store"); }
    return total;
}

}  // namespace graphcm

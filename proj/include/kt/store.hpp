#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "kt/graph.hpp"
#include "kt/rng.hpp"
#include "kt/tensor.hpp"

namespace kt::num {

// The persistent weight bank shared by every sampled sub-model in a
// search run. Tensors are created and initialized exactly once (at
// declaration) and live at stable addresses afterwards; sampled models
// bind Graph nodes to these Parameters directly, so a weight trained by
// one candidate is read, not copied, by the next.
//
// Writes (training steps) require exclusive access; concurrent read-only
// forward passes between steps are fine.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : rng_(seed), seed_(seed) {}

    // Declare-or-fetch. Matrices get Glorot-uniform init
    // (r = sqrt(6/(fan_in+fan_out))), vectors start at zero. Repeated
    // declarations return the existing tensor untouched; shape must agree.
    Parameter& declare(const std::string& name, Shape shape) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second->value.shape != shape)
                throw shape_error("store: '" + name + "' redeclared as " + shape_str(shape) +
                                  ", was " + shape_str(it->second->value.shape));
            return *it->second;
        }
        if (sealed_)
            throw state_error("store: sealed; refusing to initialize new parameter '" + name + "'");
        Tensor t = Tensor::zeros(shape);
        if (shape.size() == 2) {
            const double r = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
            for (auto& v : t.data) v = rng_.uniform(-r, r);
        }
        ++init_events_;
        auto p = std::make_unique<Parameter>(name, std::move(t));
        Parameter& ref = *p;
        params_.emplace(name, std::move(p));
        return ref;
    }

    Parameter& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw state_error("store: unknown parameter '" + name + "'");
        return *it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::size_t size() const { return params_.size(); }
    std::uint64_t init_events() const { return init_events_; }

    // Freeze: after sealing, any further declaration of a NEW tensor is an
    // error. The search loop seals the store once the first candidate has
    // been built, turning accidental re-initialization into a hard fault.
    void seal() { sealed_ = true; }
    bool sealed() const { return sealed_; }

    std::vector<Parameter*> all() {
        std::vector<Parameter*> out;
        out.reserve(params_.size());
        for (auto& [k, v] : params_) out.push_back(v.get());
        return out;
    }

    // Deep copy for snapshot-mode candidate evaluation.
    std::unique_ptr<ParamStore> clone() const {
        auto other = std::make_unique<ParamStore>(seed_);
        other->rng_ = rng_;
        other->init_events_ = init_events_;
        other->sealed_ = sealed_;
        for (const auto& [k, v] : params_)
            other->params_.emplace(k, std::make_unique<Parameter>(k, v->value));
        return other;
    }

    // Last-writer-wins merge of the named tensors from `src`.
    void merge_values(const ParamStore& src, const std::vector<std::string>& names) {
        for (const auto& n : names) {
            auto it = src.params_.find(n);
            if (it == src.params_.end()) continue;
            get(n).value = it->second->value;
        }
    }

    std::mutex& write_mutex() { return write_mutex_; }

private:
    std::map<std::string, std::unique_ptr<Parameter>> params_;
    Rng rng_;
    std::uint64_t seed_;
    std::uint64_t init_events_ = 0;
    bool sealed_ = false;
    std::mutex write_mutex_;
};

} // namespace kt::num

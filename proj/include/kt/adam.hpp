#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "kt/error.hpp"
#include "kt/graph.hpp"

namespace kt::num {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled (applied directly to the weights)
};

// Adam with bias correction. Moments and step counts are kept per
// parameter and a step only touches the parameters it is given, so
// training one sampled sub-model changes exactly that model's tensors in
// the shared store and nothing else.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    AdamConfig& config() { return cfg_; }

    void step(const std::vector<Parameter*>& params) {
        for (Parameter* p : params) step_one(*p);
    }

    // Update one parameter from its accumulated gradient, then clear it.
    void step_one(Parameter& p) {
        if (!p.grad.finite())
            throw numeric_error("adam: nonfinite gradient for parameter '" + p.name + "'");
        Slot& s = slot(p);
        s.t += 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            double w = p.value.data[i];
            w -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            if (cfg_.weight_decay != 0.0) w -= cfg_.lr * cfg_.weight_decay * w;
            p.value.data[i] = w;
        }
        p.zero_grad();
    }

    // Step count of a parameter's slot (0 if never touched).
    std::uint64_t steps_of(const Parameter& p) const {
        auto it = slots_.find(p.name);
        return it == slots_.end() ? 0 : it->second.t;
    }

private:
    struct Slot {
        std::vector<double> m, v;
        std::uint64_t t = 0;
    };

    Slot& slot(const Parameter& p) {
        Slot& s = slots_[p.name];
        if (s.m.empty()) {
            s.m.assign(p.value.size(), 0.0);
            s.v.assign(p.value.size(), 0.0);
        }
        return s;
    }

    AdamConfig cfg_;
    std::unordered_map<std::string, Slot> slots_;
};

} // namespace kt::num

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crovca/errors.hpp"
#include "crovca/hashcoder.hpp"

namespace crovca {

struct AdamWConfig {
    double lr = 1e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// AdamW with decoupled weight decay: w <- w - lr*wd*w, then the bias-corrected
// Adam step. Slots flagged decay=false (biases, BatchNorm affine) skip the decay.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {
        if (!(cfg_.lr > 0.0)) throw ConfigError("AdamW: learning rate must be positive");
        if (!(cfg_.weight_decay >= 0.0)) throw ConfigError("AdamW: weight decay must be >= 0");
        if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
            throw ConfigError("AdamW: betas must be in [0, 1)");
        }
    }

    const AdamWConfig& config() const noexcept { return cfg_; }
    std::uint64_t step_count() const noexcept { return t_; }

    void step(std::span<const ParamSlot> slots) {
        for (const auto& s : slots) {
            if (s.grad.size() != s.value.size()) throw ShapeError("AdamW: gradient shape mismatch for " + s.name);
            for (double g : s.grad) {
                if (!std::isfinite(g)) throw NumericalError("AdamW: non-finite gradient in " + s.name);
            }
        }
        if (moments_.empty()) {
            for (const auto& s : slots) {
                names_.push_back(s.name);
                moments_.push_back({std::vector<double>(s.value.size(), 0.0), std::vector<double>(s.value.size(), 0.0)});
            }
        } else if (moments_.size() != slots.size()) {
            throw ShapeError("AdamW: parameter set changed between steps");
        }

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < slots.size(); ++k) {
            const auto& s = slots[k];
            auto& [m, v] = moments_[k];
            if (names_[k] != s.name || m.size() != s.value.size()) {
                throw ShapeError("AdamW: parameter " + s.name + " does not match optimizer state");
            }
            for (std::size_t i = 0; i < s.value.size(); ++i) {
                double w = s.value[i];
                const double g = s.grad[i];
                if (s.decay) w -= cfg_.lr * cfg_.weight_decay * w;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                w -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
                s.value[i] = w;
            }
        }
    }

private:
    struct Moments {
        std::vector<double> first;
        std::vector<double> second;
    };

    AdamWConfig cfg_;
    std::vector<std::string> names_;
    std::vector<Moments> moments_;
    std::uint64_t t_ = 0;
};

} // namespace crovca

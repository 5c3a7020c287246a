#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pdn/errors.hpp"
#include "pdn/tensor.hpp"

namespace pdn {

struct Param {
    std::string name;
    Tensor value;
};

struct AdamWOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
public:
    explicit AdamW(AdamWOptions opt = {}) : opt_(opt) {}

    const AdamWOptions& options() const { return opt_; }
    int64_t step_count() const { return step_; }

    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    void restore(int64_t step, std::vector<std::vector<double>> m,
                 std::vector<std::vector<double>> v) {
        step_ = step;
        m_ = std::move(m);
        v_ = std::move(v);
    }

    void step(std::vector<Param>& params) {
        if (m_.empty()) {
            for (auto& p : params) {
                m_.emplace_back(p.value.values().size(), 0.0);
                v_.emplace_back(p.value.values().size(), 0.0);
            }
        }
        if (m_.size() != params.size())
            throw ShapeError("adamw: state holds " + std::to_string(m_.size()) +
                             " parameters, got " + std::to_string(params.size()));
        step_ += 1;
        const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& theta = params[pi].value.values();
            const auto& g = params[pi].value.grad();
            if (g.size() != theta.size())
                throw ShapeError("adamw: parameter '" + params[pi].name + "' grad size " +
                                 std::to_string(g.size()) + " vs value size " +
                                 std::to_string(theta.size()));
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (size_t i = 0; i < theta.size(); ++i) {
                if (!std::isfinite(g[i]))
                    throw NonFiniteError("adamw: non-finite gradient in parameter '" +
                                         params[pi].name + "' at step " + std::to_string(step_));
                m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
                v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                // decoupled decay: decay term uses the pre-update parameter
                theta[i] -= opt_.lr * m_hat / (std::sqrt(v_hat) + opt_.eps) +
                            opt_.lr * opt_.weight_decay * theta[i];
            }
        }
    }

private:
    AdamWOptions opt_;
    int64_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace pdn

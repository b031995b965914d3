// SPDX-License-Identifier: Apache-2.0

#include "cdsp/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cdsp::optim {

std::size_t AdamW::add_group(std::vector<Matrix*> params, const GroupConfig& cfg) {
    GroupState g;
    g.cfg = cfg;
    for (Matrix* p : params) {
        g.m.emplace_back(p->rows, p->cols);
        g.v.emplace_back(p->rows, p->cols);
    }
    g.params = std::move(params);
    groups_.push_back(std::move(g));
    return groups_.size() - 1;
}

void AdamW::step(const std::vector<std::vector<const Matrix*>>& grads_by_group) {
    if (grads_by_group.size() != groups_.size()) {
        throw std::invalid_argument("AdamW::step: group count mismatch");
    }
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        GroupState& group = groups_[gi];
        const auto& grads = grads_by_group[gi];
        if (grads.size() != group.params.size()) {
            throw std::invalid_argument("AdamW::step: parameter count mismatch");
        }
        const GroupConfig& c = group.cfg;
        const double bc1 = 1.0 - std::pow(c.beta1, t);
        const double bc2 = 1.0 - std::pow(c.beta2, t);
        for (std::size_t pi = 0; pi < group.params.size(); ++pi) {
            Matrix& p = *group.params[pi];
            const Matrix& g = *grads[pi];
            if (!p.same_shape(g)) {
                throw std::invalid_argument("AdamW::step: gradient shape mismatch");
            }
            Matrix& m = group.m[pi];
            Matrix& v = group.v[pi];
            for (std::size_t k = 0; k < p.data.size(); ++k) {
                m.data[k] = c.beta1 * m.data[k] + (1.0 - c.beta1) * g.data[k];
                v.data[k] = c.beta2 * v.data[k] + (1.0 - c.beta2) * g.data[k] * g.data[k];
                const double m_hat = m.data[k] / bc1;
                const double v_hat = v.data[k] / bc2;
                // Decoupled decay acts on the parameter directly.
                p.data[k] -= c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) +
                                     c.weight_decay * p.data[k]);
            }
        }
    }
}

}  // namespace cdsp::optim

#include "zsil/iq/soft_math.hpp"

#include "zsil/common/error.hpp"

#include <algorithm>
#include <cmath>

namespace zsil::iq {

double soft_value(std::span<const double> q) {
    if (q.empty()) throw ContractViolation("soft_value: no actions");
    const double m = *std::max_element(q.begin(), q.end());
    double s = 0.0;
    for (double v : q) s += std::exp(v - m);
    return m + std::log(s);
}

double phi(double x, double alpha) {
    if (!(alpha > 0.0)) throw ContractViolation("phi: alpha must be positive");
    return x - x * x / (4.0 * alpha);
}

double phi_derivative(double x, double alpha) {
    if (!(alpha > 0.0)) throw ContractViolation("phi: alpha must be positive");
    return 1.0 - x / (2.0 * alpha);
}

std::vector<double> softmax(std::span<const double> q) {
    const double v = soft_value(q);
    std::vector<double> p(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) p[i] = std::exp(q[i] - v);
    return p;
}

int greedy_action(std::span<const double> q) {
    if (q.empty()) throw ContractViolation("greedy_action: no actions");
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

double recover_reward(double q_sa, double next_soft_value, bool done, double gamma) {
    return done ? q_sa : q_sa - gamma * next_soft_value;
}

IqTerms iq_objective_terms(std::span<const double> q_sa, std::span<const double> v_state,
                           std::span<const double> v_next, std::span<const std::uint8_t> done,
                           double gamma, double alpha) {
    const std::size_t n = q_sa.size();
    if (n == 0) throw ContractViolation("iq_objective: empty batch");
    if (v_state.size() != n || v_next.size() != n || done.size() != n) {
        throw DimensionMismatch("iq_objective: batch arrays differ in length");
    }
    IqTerms t;
    for (std::size_t i = 0; i < n; ++i) {
        const double next = done[i] ? 0.0 : gamma * v_next[i];
        t.expert_term += phi(q_sa[i] - next, alpha);
        t.value_term += v_state[i] - next;
    }
    t.expert_term /= static_cast<double>(n);
    t.value_term /= static_cast<double>(n);
    t.objective = t.expert_term - t.value_term;
    return t;
}

} // namespace zsil::iq

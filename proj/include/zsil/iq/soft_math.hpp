#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace zsil::iq {

// Soft state value log(sum_a exp q[a]), computed stably.
double soft_value(std::span<const double> q);

// phi(x) = x - x^2 / (4 alpha); the concave link of the inverse soft-Q objective.
double phi(double x, double alpha);
double phi_derivative(double x, double alpha);

// Boltzmann policy exp(q) / sum exp(q).
std::vector<double> softmax(std::span<const double> q);

// Argmax with lowest-index tie-breaking.
int greedy_action(std::span<const double> q);

// r = Q(s,a) - gamma * V(s'), with V(s') = 0 past a terminal transition.
double recover_reward(double q_sa, double next_soft_value, bool done, double gamma);

struct IqTerms {
    double objective = 0.0;   // expert_term - value_term, to be maximized
    double expert_term = 0.0; // mean phi(Q(s,a) - gamma (1-done) V(s'))
    double value_term = 0.0;  // mean (V(s) - gamma (1-done) V(s'))
};

// Offline inverse soft-Q objective over a batch of expert transitions, from
// per-sample Q(s,a), V(s) and V(s'). V(s') is ignored where done != 0.
IqTerms iq_objective_terms(std::span<const double> q_sa, std::span<const double> v_state,
                           std::span<const double> v_next, std::span<const std::uint8_t> done,
                           double gamma, double alpha);

} // namespace zsil::iq

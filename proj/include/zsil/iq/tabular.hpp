#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace zsil::iq {

// Finite MDP used as a brute-force oracle for the inverse soft-Q objective.
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transitions; // P(s'|s,a) at [(s * n_actions + a) * n_states + s']
    std::vector<double> rewards;     // r(s,a) at [s * n_actions + a]
    std::vector<double> initial;     // start-state distribution
    double discount = 0.0;

    double p(int s, int a, int next) const { return transitions[(static_cast<std::size_t>(s) * n_actions + a) * n_states + next]; }
    double r(int s, int a) const { return rewards[static_cast<std::size_t>(s) * n_actions + a]; }

    // Throws ContractViolation for a non-stochastic transition tensor,
    // bad initial distribution, or discount outside [0, 1).
    void validate() const;
};

struct QTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> values;

    QTable() = default;
    QTable(int states, int actions) : n_states(states), n_actions(actions), values(static_cast<std::size_t>(states) * actions) {}

    double& operator()(int s, int a) { return values[static_cast<std::size_t>(s) * n_actions + a]; }
    double operator()(int s, int a) const { return values[static_cast<std::size_t>(s) * n_actions + a]; }
    std::span<const double> row(int s) const {
        return {values.data() + static_cast<std::size_t>(s) * n_actions, static_cast<std::size_t>(n_actions)};
    }
};

// Row-major pi(a|s).
using TabularPolicy = std::vector<double>;

struct SoftQSolution {
    QTable q;
    TabularPolicy policy;
    int iterations = 0;
    double residual = 0.0;
};

// Soft value iteration Q <- r + gamma P logsumexp(Q) to sup-norm `tolerance`.
SoftQSolution solve_tabular_soft_q(const TabularMdp& mdp, double tolerance, int max_iterations = 1'000'000);

TabularPolicy boltzmann_policy(const QTable& q);

// Normalised discounted state-action occupancy (1-gamma) sum_t gamma^t Pr(s_t, a_t).
std::vector<double> discounted_occupancy(const TabularMdp& mdp, const TabularPolicy& policy);

// Dirichlet(1) transition rows, U[0,1) rewards, uniform start distribution.
TabularMdp random_mdp(int n_states, int n_actions, double discount, std::mt19937_64& rng);

struct TabularIqValue {
    double objective = 0.0;
    double expert_term = 0.0;
    double value_term = 0.0;
    std::vector<double> gradient; // dJ/dQ, same layout as QTable::values
};

// Inverse soft-Q objective with exact expectations over `occupancy` and P:
//   sum rho(s,a) phi(Q(s,a) - g E V(s')) - sum rho(s,a) (V(s) - g E V(s')).
TabularIqValue tabular_iq_objective(const TabularMdp& mdp, std::span<const double> occupancy,
                                    const QTable& q, double alpha);

struct TabularIqConfig {
    double alpha = 10.0;
    double learning_rate = 0.05;
    int max_steps = 50'000;
    double gradient_tolerance = 1e-9;
};

struct TabularIqResult {
    QTable q;
    int steps = 0;
    double objective = 0.0;
};

// Adam ascent on tabular_iq_objective from Q = 0, learning rate decayed linearly.
TabularIqResult train_tabular_iq(const TabularMdp& mdp, std::span<const double> occupancy,
                                 const TabularIqConfig& config);

// r(s,a) = Q(s,a) - g E_{s'} V(s') with exact expectation.
std::vector<double> recover_tabular_rewards(const TabularMdp& mdp, const QTable& q);

// max over states of 0.5 * sum_a |p(a|s) - q(a|s)|.
double max_total_variation(const TabularPolicy& p, const TabularPolicy& q, int n_actions);

} // namespace zsil::iq

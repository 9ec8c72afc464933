#include "zsil/iq/tabular.hpp"

#include "zsil/common/error.hpp"
#include "zsil/iq/soft_math.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace zsil::iq {

void TabularMdp::validate() const {
    if (n_states <= 0 || n_actions <= 0) throw ContractViolation("TabularMdp: empty state or action set");
    const auto sa = static_cast<std::size_t>(n_states) * n_actions;
    if (transitions.size() != sa * n_states || rewards.size() != sa || initial.size() != static_cast<std::size_t>(n_states)) {
        throw ContractViolation("TabularMdp: array sizes do not match n_states/n_actions");
    }
    if (!(discount >= 0.0 && discount < 1.0)) throw ContractViolation("TabularMdp: discount must lie in [0, 1)");
    for (std::size_t row = 0; row < sa; ++row) {
        double total = 0.0;
        for (int s2 = 0; s2 < n_states; ++s2) {
            const double v = transitions[row * n_states + s2];
            if (!(v >= 0.0)) throw ContractViolation("TabularMdp: negative transition probability");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw ContractViolation("TabularMdp: P(.|s,a) row " + std::to_string(row) + " sums to " + std::to_string(total));
        }
    }
    double total = 0.0;
    for (double v : initial) total += v;
    if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("TabularMdp: initial distribution does not sum to 1");
}

namespace {

std::vector<double> soft_values(const QTable& q) {
    std::vector<double> v(q.n_states);
    for (int s = 0; s < q.n_states; ++s) v[s] = soft_value(q.row(s));
    return v;
}

// E_{s'~P(.|s,a)} v(s') for every (s,a).
std::vector<double> expected_next(const TabularMdp& mdp, const std::vector<double>& v) {
    std::vector<double> out(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            double e = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) e += mdp.p(s, a, s2) * v[s2];
            out[static_cast<std::size_t>(s) * mdp.n_actions + a] = e;
        }
    }
    return out;
}

} // namespace

SoftQSolution solve_tabular_soft_q(const TabularMdp& mdp, double tolerance, int max_iterations) {
    mdp.validate();
    SoftQSolution sol;
    sol.q = QTable(mdp.n_states, mdp.n_actions);
    for (int it = 1; it <= max_iterations; ++it) {
        const auto next = expected_next(mdp, soft_values(sol.q));
        double residual = 0.0;
        for (std::size_t i = 0; i < sol.q.values.size(); ++i) {
            const double updated = mdp.rewards[i] + mdp.discount * next[i];
            residual = std::max(residual, std::abs(updated - sol.q.values[i]));
            sol.q.values[i] = updated;
        }
        sol.iterations = it;
        sol.residual = residual;
        if (residual < tolerance) break;
    }
    sol.policy = boltzmann_policy(sol.q);
    return sol;
}

TabularPolicy boltzmann_policy(const QTable& q) {
    TabularPolicy pi;
    pi.reserve(q.values.size());
    for (int s = 0; s < q.n_states; ++s) {
        const auto p = softmax(q.row(s));
        pi.insert(pi.end(), p.begin(), p.end());
    }
    return pi;
}

std::vector<double> discounted_occupancy(const TabularMdp& mdp, const TabularPolicy& policy) {
    mdp.validate();
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const double w = policy[static_cast<std::size_t>(s) * A + a];
            for (int s2 = 0; s2 < S; ++s2) system(s2, s) -= mdp.discount * w * mdp.p(s, a, s2);
        }
    }
    Eigen::VectorXd start(S);
    for (int s = 0; s < S; ++s) start[s] = (1.0 - mdp.discount) * mdp.initial[s];
    const Eigen::VectorXd d = system.partialPivLu().solve(start);

    std::vector<double> rho(static_cast<std::size_t>(S) * A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) rho[static_cast<std::size_t>(s) * A + a] = d[s] * policy[static_cast<std::size_t>(s) * A + a];
    }
    return rho;
}

TabularMdp random_mdp(int n_states, int n_actions, double discount, std::mt19937_64& rng) {
    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.discount = discount;
    std::exponential_distribution<double> unit_gamma(1.0); // Gamma(1) draws give a Dirichlet(1) row
    std::uniform_real_distribution<double> reward(0.0, 1.0);
    mdp.transitions.resize(static_cast<std::size_t>(n_states) * n_actions * n_states);
    for (std::size_t row = 0; row < static_cast<std::size_t>(n_states) * n_actions; ++row) {
        double total = 0.0;
        for (int s2 = 0; s2 < n_states; ++s2) total += mdp.transitions[row * n_states + s2] = unit_gamma(rng);
        for (int s2 = 0; s2 < n_states; ++s2) mdp.transitions[row * n_states + s2] /= total;
    }
    mdp.rewards.resize(static_cast<std::size_t>(n_states) * n_actions);
    for (auto& r : mdp.rewards) r = reward(rng);
    mdp.initial.assign(n_states, 1.0 / n_states);
    return mdp;
}

TabularIqValue tabular_iq_objective(const TabularMdp& mdp, std::span<const double> occupancy,
                                    const QTable& q, double alpha) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    const double g = mdp.discount;
    if (occupancy.size() != q.values.size() || q.n_states != S || q.n_actions != A) {
        throw DimensionMismatch("tabular_iq_objective: Q table / occupancy do not match the MDP");
    }
    const auto v = soft_values(q);
    const auto ev = expected_next(mdp, v);
    const auto pi = boltzmann_policy(q);

    TabularIqValue out;
    out.gradient.assign(q.values.size(), 0.0);
    // weighted[s'] = sum_{s,a} w(s,a) P(s'|s,a) for w = rho * phi'(x) and w = rho
    std::vector<double> phi_inflow(S, 0.0), rho_inflow(S, 0.0), state_mass(S, 0.0);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const auto i = static_cast<std::size_t>(s) * A + a;
            const double x = q.values[i] - g * ev[i];
            const double rho = occupancy[i];
            out.expert_term += rho * phi(x, alpha);
            out.value_term += rho * (v[s] - g * ev[i]);
            const double dphi = phi_derivative(x, alpha);
            out.gradient[i] += rho * dphi;
            state_mass[s] += rho;
            for (int s2 = 0; s2 < S; ++s2) {
                phi_inflow[s2] += rho * dphi * mdp.p(s, a, s2);
                rho_inflow[s2] += rho * mdp.p(s, a, s2);
            }
        }
    }
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            const auto i = static_cast<std::size_t>(s) * A + a;
            out.gradient[i] -= pi[i] * (g * phi_inflow[s] + state_mass[s] - g * rho_inflow[s]);
        }
    }
    out.objective = out.expert_term - out.value_term;
    return out;
}

TabularIqResult train_tabular_iq(const TabularMdp& mdp, std::span<const double> occupancy,
                                 const TabularIqConfig& config) {
    mdp.validate();
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-12;
    TabularIqResult res;
    res.q = QTable(mdp.n_states, mdp.n_actions);
    std::vector<double> m(res.q.values.size(), 0.0), v(res.q.values.size(), 0.0);
    for (int t = 1; t <= config.max_steps; ++t) {
        const auto val = tabular_iq_objective(mdp, occupancy, res.q, config.alpha);
        double gnorm = 0.0;
        for (double gi : val.gradient) gnorm = std::max(gnorm, std::abs(gi));
        res.steps = t;
        res.objective = val.objective;
        if (!std::isfinite(val.objective)) throw DiagnosticsError("train_tabular_iq: non-finite objective");
        if (gnorm < config.gradient_tolerance) break;
        // linear decay to zero damps Adam's limit cycle near the optimum
        const double lr = config.learning_rate * (1.0 - static_cast<double>(t - 1) / config.max_steps);
        const double c1 = 1.0 - std::pow(beta1, t);
        const double c2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = beta1 * m[i] + (1 - beta1) * val.gradient[i];
            v[i] = beta2 * v[i] + (1 - beta2) * val.gradient[i] * val.gradient[i];
            res.q.values[i] += lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
    return res;
}

std::vector<double> recover_tabular_rewards(const TabularMdp& mdp, const QTable& q) {
    const auto ev = expected_next(mdp, soft_values(q));
    std::vector<double> r(q.values.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = q.values[i] - mdp.discount * ev[i];
    return r;
}

double max_total_variation(const TabularPolicy& p, const TabularPolicy& q, int n_actions) {
    if (p.size() != q.size() || n_actions <= 0 || p.size() % n_actions != 0) {
        throw DimensionMismatch("max_total_variation: policy shapes differ");
    }
    double worst = 0.0;
    for (std::size_t s = 0; s < p.size() / n_actions; ++s) {
        double tv = 0.0;
        for (int a = 0; a < n_actions; ++a) tv += std::abs(p[s * n_actions + a] - q[s * n_actions + a]);
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

} // namespace zsil::iq

#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's algorithms.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

struct BoxQp {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::VectorXd l;
    Eigen::VectorXd u;
};

/// Random strictly convex box-constrained QP with n variables.
inline BoxQp random_box_qp(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    BoxQp qp;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = g(rng);
    qp.P = M.transpose() * M + 0.1 * Eigen::MatrixXd::Identity(n, n);
    qp.q.resize(n);
    qp.l.resize(n);
    qp.u.resize(n);
    for (int i = 0; i < n; ++i) {
        qp.q[i] = 3.0 * g(rng);
        qp.l[i] = -2.0 * U(rng);
        qp.u[i] = qp.l[i] + 0.1 + 3.0 * U(rng);
    }
    return qp;
}

/// Enumerates all 3^n (free, lower, upper) patterns, solves each reduced
/// stationarity system, and keeps the feasible point of least objective.
inline Eigen::VectorXd box_qp_active_set(const BoxQp& qp) {
    const int n = static_cast<int>(qp.q.size());
    int patterns = 1;
    for (int i = 0; i < n; ++i) patterns *= 3;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    for (int code = 0; code < patterns; ++code) {
        std::vector<int> state(static_cast<std::size_t>(n));
        int c = code;
        for (int i = 0; i < n; ++i, c /= 3) state[static_cast<std::size_t>(i)] = c % 3;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        std::vector<int> free;
        for (int i = 0; i < n; ++i) {
            const int s = state[static_cast<std::size_t>(i)];
            if (s == 0) free.push_back(i);
            else x[i] = s == 1 ? qp.l[i] : qp.u[i];
        }
        if (!free.empty()) {
            const int nf = static_cast<int>(free.size());
            Eigen::MatrixXd Pff(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (int a = 0; a < nf; ++a) {
                rhs[a] = -qp.q[free[a]];
                for (int j = 0; j < n; ++j)
                    if (state[static_cast<std::size_t>(j)] != 0) rhs[a] -= qp.P(free[a], j) * x[j];
                for (int b = 0; b < nf; ++b) Pff(a, b) = qp.P(free[a], free[b]);
            }
            const Eigen::VectorXd xf = Pff.ldlt().solve(rhs);
            for (int a = 0; a < nf; ++a) x[free[a]] = xf[a];
        }
        bool feasible = true;
        for (int i = 0; i < n; ++i)
            if (x[i] < qp.l[i] - 1e-12 || x[i] > qp.u[i] + 1e-12) feasible = false;
        if (!feasible) continue;
        const double obj = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
        if (obj < best) {
            best = obj;
            best_x = x;
        }
    }
    return best_x;
}

}  // namespace oracle

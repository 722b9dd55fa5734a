#include "gustdock/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gustdock {

namespace {

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqTol = 1e-4;
constexpr double kTiny = 1e-30;

using Triplets = std::vector<Eigen::Triplet<double>>;
using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

double inf_norm(const VecX& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

bool is_equality(double l, double u) { return u - l < kEqTol; }

VecX project(const VecX& v, const VecX& l, const VecX& u) { return v.cwiseMax(l).cwiseMin(u); }

// Full symmetric quasi-definite matrix [P + top I, B'; B, -diag(bottom)].
SpMat kkt_matrix(const SpMat& P, const SpMat& B, double top, const VecX& bottom) {
    const Eigen::Index n = P.rows();
    const Eigen::Index m = B.rows();
    Triplets t;
    t.reserve(static_cast<std::size_t>(P.nonZeros() + 2 * B.nonZeros() + n + m));
    for (int k = 0; k < P.outerSize(); ++k)
        for (SpMat::InnerIterator it(P, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, top);
    for (int k = 0; k < B.outerSize(); ++k) {
        for (SpMat::InnerIterator it(B, k); it; ++it) {
            t.emplace_back(n + it.row(), it.col(), it.value());
            t.emplace_back(it.col(), n + it.row(), it.value());
        }
    }
    for (Eigen::Index i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -bottom[i]);
    SpMat K(n + m, n + m);
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

struct Residuals {
    double prim = 0.0;
    double dual = 0.0;
    double eps_prim = 0.0;
    double eps_dual = 0.0;
    double prim_scale = 0.0;
    double dual_scale = 0.0;

    bool converged() const { return prim <= eps_prim && dual <= eps_dual; }
    double merit() const { return std::max(prim / eps_prim, dual / eps_dual); }
};

Residuals residuals(const QProblem& p, const QpSettings& s, const VecX& x, const VecX& y, const VecX& z) {
    const VecX Ax = p.A * x;
    const VecX Px = p.P * x;
    const VecX Aty = p.A.transpose() * y;
    Residuals r;
    r.prim = inf_norm(Ax - z);
    r.dual = inf_norm(Px + p.q + Aty);
    r.prim_scale = std::max(inf_norm(Ax), inf_norm(z));
    r.dual_scale = std::max({inf_norm(Px), inf_norm(Aty), inf_norm(p.q)});
    r.eps_prim = s.eps_abs + s.eps_rel * r.prim_scale;
    r.eps_dual = s.eps_abs + s.eps_rel * r.dual_scale;
    return r;
}

bool primal_infeasible(const QProblem& p, const VecX& dy, double eps) {
    const double norm_dy = inf_norm(dy);
    if (norm_dy < 1e-12) return false;
    if (inf_norm(p.A.transpose() * dy) > eps * norm_dy) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
        if (dy[i] > 0.0) {
            if (p.u[i] >= kQpInf) return false;
            support += p.u[i] * dy[i];
        } else if (dy[i] < 0.0) {
            if (p.l[i] <= -kQpInf) return false;
            support += p.l[i] * dy[i];
        }
    }
    return support < -eps * norm_dy;
}

VecX row_rho(const QProblem& p, double rho, double eq_scale) {
    VecX r(p.m());
    for (Eigen::Index i = 0; i < p.m(); ++i) {
        if (p.l[i] <= -kQpInf && p.u[i] >= kQpInf) r[i] = kRhoMin;
        else if (is_equality(p.l[i], p.u[i])) r[i] = eq_scale * rho;
        else r[i] = rho;
    }
    return r;
}

// Active side of a constraint row in the polishing step.
enum class Side : signed char { none = 0, lower = -1, upper = 1 };

// Solves the equality-constrained problem on an active set guessed from the
// ADMM iterate, then corrects the guess a few times (drop rows whose
// multiplier has the wrong sign, add violated rows). Leaves `sol` untouched
// when no pass yields a KKT point within tolerance.
bool polish(const QProblem& p, const QpSettings& s, QSolution& sol) {
    const Eigen::Index n = p.n();
    const Eigen::Index m = p.m();
    std::vector<Side> side(static_cast<std::size_t>(m), Side::none);
    for (Eigen::Index i = 0; i < m; ++i) {
        const bool eq = is_equality(p.l[i], p.u[i]);
        const bool lower = p.l[i] > -kQpInf && (eq || sol.z[i] - p.l[i] < -sol.y[i]);
        const bool upper = p.u[i] < kQpInf && (eq || p.u[i] - sol.z[i] < sol.y[i]);
        if (eq) side[static_cast<std::size_t>(i)] = Side::lower;
        else if (lower) side[static_cast<std::size_t>(i)] = Side::lower;
        else if (upper) side[static_cast<std::size_t>(i)] = Side::upper;
    }

    for (int pass = 0; pass < s.polish_passes; ++pass) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < m; ++i)
            if (side[static_cast<std::size_t>(i)] != Side::none) rows.push_back(i);
        const auto mr = static_cast<Eigen::Index>(rows.size());
        std::vector<Eigen::Index> map(static_cast<std::size_t>(m), -1);
        for (Eigen::Index k = 0; k < mr; ++k) map[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)])] = k;

        Triplets t;
        for (int c = 0; c < p.A.outerSize(); ++c)
            for (SpMat::InnerIterator it(p.A, c); it; ++it) {
                const Eigen::Index k = map[static_cast<std::size_t>(it.row())];
                if (k >= 0) t.emplace_back(k, it.col(), it.value());
            }
        SpMat Ared(mr, n);
        Ared.setFromTriplets(t.begin(), t.end());
        VecX bred(mr);
        for (Eigen::Index k = 0; k < mr; ++k) {
            const Eigen::Index i = rows[static_cast<std::size_t>(k)];
            bred[k] = side[static_cast<std::size_t>(i)] == Side::lower ? p.l[i] : p.u[i];
        }

        const SpMat K = kkt_matrix(p.P, Ared, s.polish_delta, VecX::Constant(mr, s.polish_delta));
        const SpMat K0 = kkt_matrix(p.P, Ared, 0.0, VecX::Zero(mr));
        Ldlt ldlt(K);
        if (ldlt.info() != Eigen::Success) return false;
        VecX rhs(n + mr);
        rhs << -p.q, bred;
        VecX kkt = ldlt.solve(rhs);
        for (int k = 0; k < s.polish_refine_iter; ++k) kkt += ldlt.solve(rhs - K0 * kkt);
        if (!kkt.allFinite()) return false;

        const VecX x = kkt.head(n);
        VecX y = VecX::Zero(m);
        for (Eigen::Index k = 0; k < mr; ++k) y[rows[static_cast<std::size_t>(k)]] = kkt[n + k];
        const VecX Ax = p.A * x;
        const VecX z = project(Ax, p.l, p.u);
        const Residuals r = residuals(p, s, x, y, z);

        // Drop the single worst wrong-sign row (degenerate active sets admit
        // mixed-sign multiplier splits) and add every violated row.
        bool changed = false;
        Eigen::Index worst = -1;
        double worst_val = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            Side& sd = side[static_cast<std::size_t>(i)];
            if (is_equality(p.l[i], p.u[i])) continue;
            const double wrong = sd == Side::lower ? y[i] : sd == Side::upper ? -y[i] : 0.0;
            if (wrong > r.eps_dual && wrong > worst_val) {
                worst = i;
                worst_val = wrong;
            }
            if (sd == Side::none && Ax[i] < p.l[i] - r.eps_prim) {
                sd = Side::lower;
                changed = true;
            } else if (sd == Side::none && Ax[i] > p.u[i] + r.eps_prim) {
                sd = Side::upper;
                changed = true;
            }
        }
        if (worst >= 0) {
            side[static_cast<std::size_t>(worst)] = Side::none;
            changed = true;
        }
        if (changed) continue;
        if (!r.converged()) return false;
        sol.x = x;
        sol.y = y;
        sol.z = z;
        sol.primal_residual = r.prim;
        sol.dual_residual = r.dual;
        sol.polished = true;
        return true;
    }
    return false;
}

}  // namespace

const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::solved: return "solved";
        case QpStatus::max_iter: return "max_iter";
        case QpStatus::primal_infeasible: return "primal_infeasible";
    }
    return "unknown";
}

void QProblem::validate() const {
    const Eigen::Index nn = q.size();
    const Eigen::Index mm = l.size();
    if (P.rows() != nn || P.cols() != nn) throw std::invalid_argument("qp: P must be n x n");
    if (A.rows() != mm || A.cols() != nn) throw std::invalid_argument("qp: A must be m x n");
    if (u.size() != mm) throw std::invalid_argument("qp: l and u sizes differ");
    if (nn == 0) throw std::invalid_argument("qp: empty problem");
    const SpMat asym = SpMat(P.transpose()) - P;
    for (int k = 0; k < asym.outerSize(); ++k)
        for (SpMat::InnerIterator it(asym, k); it; ++it)
            if (std::abs(it.value()) > 1e-12) throw std::invalid_argument("qp: P is not symmetric");
    for (Eigen::Index i = 0; i < mm; ++i)
        if (!(l[i] <= u[i])) throw std::invalid_argument("qp: l > u in row " + std::to_string(i));
    if (!q.allFinite()) throw std::invalid_argument("qp: q not finite");
}

double QProblem::objective(const VecX& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }

WarmStart warm_start(const QSolution& solution) { return {solution.x, solution.y, solution.z}; }

QSolution solve(const QProblem& p, const QpSettings& s, const std::optional<WarmStart>& warm) {
    p.validate();
    const Eigen::Index n = p.n();
    const Eigen::Index m = p.m();
    const VecX l = p.l.cwiseMax(-kQpInf);
    const VecX u = p.u.cwiseMin(kQpInf);

    QSolution sol;
    VecX x = VecX::Zero(n);
    VecX z = VecX::Zero(m);
    VecX y = VecX::Zero(m);
    if (warm) {
        if (warm->x.size() == n && warm->y.size() == m && warm->z.size() == m) {
            x = warm->x;
            y = warm->y;
            z = project(warm->z, l, u);
            sol.warm_started = true;
        } else {
            std::cerr << "qp: warm start dimensions do not match the problem; cold start\n";
        }
    }

    double rho = std::clamp(s.rho, kRhoMin, kRhoMax);
    VecX rho_vec = row_rho(p, rho, s.eq_rho_scale);
    Ldlt ldlt;
    auto factor = [&] {
        ldlt.compute(kkt_matrix(p.P, p.A, s.sigma, rho_vec.cwiseInverse()));
        if (ldlt.info() != Eigen::Success) throw std::runtime_error("qp: KKT factorisation failed");
    };
    factor();

    VecX rhs(n + m);
    VecX best_x = x, best_y = y, best_z = z;
    double best_merit = std::numeric_limits<double>::infinity();
    Residuals last;

    for (int iter = 1; iter <= s.max_iter; ++iter) {
        rhs.head(n) = s.sigma * x - p.q;
        rhs.tail(m) = z - y.cwiseQuotient(rho_vec);
        const VecX kkt_sol = ldlt.solve(rhs);
        const VecX x_tilde = kkt_sol.head(n);
        const VecX z_tilde = z + (kkt_sol.tail(m) - y).cwiseQuotient(rho_vec);

        const VecX x_new = s.alpha * x_tilde + (1.0 - s.alpha) * x;
        const VecX z_relax = s.alpha * z_tilde + (1.0 - s.alpha) * z;
        const VecX z_new = project(z_relax + y.cwiseQuotient(rho_vec), l, u);
        const VecX y_new = y + rho_vec.cwiseProduct(z_relax - z_new);
        const VecX dy = y_new - y;
        x = x_new;
        z = z_new;
        y = y_new;
        sol.iterations = iter;

        last = residuals(p, s, x, y, z);
        if (last.converged()) {
            sol.status = QpStatus::solved;
            break;
        }
        if (m > 0 && primal_infeasible(p, dy, s.eps_prim_inf)) {
            sol.status = QpStatus::primal_infeasible;
            sol.y = dy / inf_norm(dy);  // certificate
            break;
        }
        if (last.merit() < best_merit) {
            best_merit = last.merit();
            best_x = x;
            best_y = y;
            best_z = z;
        }
        if (s.adaptive_rho && m > 0 && iter % s.adaptive_rho_interval == 0) {
            const double pr = last.prim / std::max(last.prim_scale, kTiny);
            const double du = last.dual / std::max(last.dual_scale, kTiny);
            const double candidate = std::clamp(rho * std::sqrt(pr / std::max(du, kTiny)), kRhoMin, kRhoMax);
            if (candidate > s.adaptive_rho_tolerance * rho || candidate * s.adaptive_rho_tolerance < rho) {
                rho = candidate;
                rho_vec = row_rho(p, rho, s.eq_rho_scale);
                factor();
                ++sol.rho_updates;
            }
        }
    }

    if (sol.status == QpStatus::primal_infeasible) {
        sol.x = x;
        sol.z = z;
    } else if (sol.status == QpStatus::solved) {
        sol.x = x;
        sol.y = y;
        sol.z = z;
        sol.primal_residual = last.prim;
        sol.dual_residual = last.dual;
        if (s.polish && m > 0) polish(p, s, sol);
    } else {
        sol.x = best_x;
        sol.y = best_y;
        sol.z = best_z;
        const Residuals r = residuals(p, s, best_x, best_y, best_z);
        sol.primal_residual = r.prim;
        sol.dual_residual = r.dual;
    }
    sol.objective = p.objective(sol.x);
    return sol;
}

void write_problem(std::ostream& out, const QProblem& p) {
    const auto dump = [&out](const char* name, const SpMat& M) {
        out << "%%MatrixMarket matrix coordinate real general\n% " << name << '\n'
            << M.rows() << ' ' << M.cols() << ' ' << M.nonZeros() << '\n';
        for (int k = 0; k < M.outerSize(); ++k)
            for (SpMat::InnerIterator it(M, k); it; ++it)
                out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    };
    const auto vec = [&out](const char* name, const VecX& v) {
        out << "% " << name << ' ' << v.size() << '\n';
        for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
    };
    out.precision(17);
    dump("P", p.P);
    dump("A", p.A);
    vec("q", p.q);
    vec("l", p.l);
    vec("u", p.u);
}

}  // namespace gustdock

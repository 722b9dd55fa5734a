#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <optional>

namespace gustdock {

using SpMat = Eigen::SparseMatrix<double>;
using VecX = Eigen::VectorXd;

/// Bounds at or beyond this magnitude are treated as infinite.
inline constexpr double kQpInf = 1e20;

/// minimize 1/2 x'Px + q'x  subject to  l <= Ax <= u.
struct QProblem {
    SpMat P;  ///< n x n, symmetric PSD (full storage)
    VecX q;
    SpMat A;  ///< m x n
    VecX l;
    VecX u;

    Eigen::Index n() const { return q.size(); }
    Eigen::Index m() const { return l.size(); }
    void validate() const;
    double objective(const VecX& x) const;
};

enum class QpStatus { solved, max_iter, primal_infeasible };

const char* to_string(QpStatus s);

struct QpSettings {
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    double eps_abs = 1e-5;
    double eps_rel = 1e-5;
    double eps_prim_inf = 1e-5;
    int max_iter = 4000;
    bool adaptive_rho = true;
    int adaptive_rho_interval = 25;
    double adaptive_rho_tolerance = 10.0;  ///< rescale when the balance drifts beyond this factor
    double eq_rho_scale = 1e3;             ///< rho multiplier on rows with l == u
    bool polish = true;
    double polish_delta = 1e-9;
    int polish_refine_iter = 5;
    int polish_passes = 25;  ///< active-set corrections tried while polishing
};

struct QSolution {
    VecX x;
    VecX y;
    VecX z;
    QpStatus status = QpStatus::max_iter;
    int iterations = 0;
    double primal_residual = 0.0;  ///< ||Ax - z||_inf
    double dual_residual = 0.0;    ///< ||Px + q + A'y||_inf
    double objective = 0.0;
    bool polished = false;
    bool warm_started = false;
    int rho_updates = 0;
};

struct WarmStart {
    VecX x;
    VecX y;
    VecX z;
};

/// Warm-start fragment carrying the (x, y, z) of a previous solve.
WarmStart warm_start(const QSolution& solution);

/// OSQP-style ADMM. Dimension-mismatched warm starts are ignored with a
/// warning on stderr.
QSolution solve(const QProblem& problem, const QpSettings& settings = {},
                const std::optional<WarmStart>& warm = std::nullopt);

/// Matrix-market-style text dump of a problem, for offline inspection.
void write_problem(std::ostream& out, const QProblem& problem);

}  // namespace gustdock

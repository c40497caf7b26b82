#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace qdgrasp {

    template <typename Scalar>
    struct LpSolution {
        enum class Status { optimal, infeasible, unbounded };
        Status status = Status::infeasible;
        Scalar objective = std::numeric_limits<Scalar>::quiet_NaN();
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
    };

    /// Dense two-phase tableau simplex for  min c'x  s.t.  A x = b, x >= 0.
    /// Bland's rule throughout, so it terminates on degenerate problems. Meant
    /// for the tiny LPs of the grasp kernel (3 rows, a handful of columns).
    template <typename Scalar>
    LpSolution<Scalar> solve_lp(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b,
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& c, Scalar tol = Scalar(1e-10))
    {
        using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
        const Eigen::Index m = a.rows(), n = a.cols();
        const Eigen::Index cols = n + m; // structural + artificial
        const Eigen::Index rhs = cols;

        Mat t = Mat::Zero(m + 1, cols + 1);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Scalar sign = b[i] < Scalar(0) ? Scalar(-1) : Scalar(1);
            t.row(i).head(n) = sign * a.row(i);
            t(i, n + i) = Scalar(1);
            t(i, rhs) = sign * b[i];
        }
        std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i)
            basis[static_cast<std::size_t>(i)] = n + i;

        const Scalar scale = std::max(Scalar(1), t.topRows(m).cwiseAbs().maxCoeff());
        const Scalar eps = tol * scale;

        auto pivot = [&](Eigen::Index row, Eigen::Index col) {
            t.row(row) /= t(row, col);
            for (Eigen::Index i = 0; i <= m; ++i) {
                if (i != row && t(i, col) != Scalar(0))
                    t.row(i) -= t(i, col) * t.row(row);
            }
            basis[static_cast<std::size_t>(row)] = col;
        };

        // Returns false when unbounded.
        auto iterate = [&](Eigen::Index allowed_cols) {
            for (int guard = 0; guard < 10000; ++guard) {
                Eigen::Index enter = -1;
                for (Eigen::Index j = 0; j < allowed_cols; ++j) {
                    if (t(m, j) < -eps) {
                        enter = j;
                        break;
                    }
                }
                if (enter < 0)
                    return true;
                Eigen::Index leave = -1;
                Scalar best = std::numeric_limits<Scalar>::infinity();
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (t(i, enter) > eps) {
                        const Scalar ratio = t(i, rhs) / t(i, enter);
                        if (ratio < best - eps || (ratio <= best + eps && leave >= 0 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
                            best = std::min(best, ratio);
                            leave = i;
                        }
                    }
                }
                if (leave < 0)
                    return false;
                pivot(leave, enter);
            }
            return true;
        };

        // Phase 1: minimize the sum of artificials.
        for (Eigen::Index i = 0; i < m; ++i)
            t.row(m) -= t.row(i);
        for (Eigen::Index i = 0; i < m; ++i)
            t(m, n + i) = Scalar(0);
        iterate(cols);

        LpSolution<Scalar> sol;
        if (-t(m, rhs) > eps)
            return sol; // infeasible

        // Drive remaining artificials out of the basis.
        for (Eigen::Index i = 0; i < m; ++i) {
            if (basis[static_cast<std::size_t>(i)] < n)
                continue;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (std::abs(t(i, j)) > eps) {
                    pivot(i, j);
                    break;
                }
            }
        }

        // Phase 2 on the structural columns.
        t.row(m).setZero();
        t.row(m).head(n) = c.transpose();
        for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Index bi = basis[static_cast<std::size_t>(i)];
            if (bi < n && t(m, bi) != Scalar(0))
                t.row(m) -= t(m, bi) * t.row(i);
        }
        if (!iterate(n)) {
            sol.status = LpSolution<Scalar>::Status::unbounded;
            sol.objective = -std::numeric_limits<Scalar>::infinity();
            return sol;
        }

        sol.status = LpSolution<Scalar>::Status::optimal;
        sol.x = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Index bi = basis[static_cast<std::size_t>(i)];
            if (bi < n)
                sol.x[bi] = t(i, rhs);
        }
        sol.objective = c.dot(sol.x);
        return sol;
    }

} // namespace qdgrasp

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include "errors.hpp"
#include "geometry.hpp"
#include "simplex.hpp"

namespace qdgrasp {

    enum class FingerId : std::uint8_t { left = 0, right = 1 };

    template <typename Scalar>
    struct Contact {
        Vector2<Scalar> point; ///< on the polygon boundary, world frame
        Vector2<Scalar> normal; ///< unit, pointing into the object
        FingerId finger = FingerId::left;
        Scalar penetration = Scalar(0);
        /// Direction in which the object must translate to remove penetration
        /// (the minimum-translation axis; equals `normal` for face contacts).
        Vector2<Scalar> push_axis;
    };

    using ContactD = Contact<double>;

    /// Primitive wrenches, one per column: (f_x, f_y, torque / rho).
    template <typename Scalar>
    struct WrenchSet {
        Eigen::Matrix<Scalar, 3, Eigen::Dynamic> wrenches;

        Eigen::Index size() const { return wrenches.cols(); }
    };

    using WrenchSetD = WrenchSet<double>;

    namespace detail {

        /// Of the two edges incident to vertex k, the one along which the
        /// segment penetrates least (largest separation); ties go to the lower index.
        template <typename Scalar>
        Eigen::Index corner_edge(const std::vector<Scalar>& edge_sep, Eigen::Index k, Eigen::Index n)
        {
            const Eigen::Index e_prev = (k + n - 1) % n, e_next = k;
            const Scalar sp = edge_sep[static_cast<std::size_t>(e_prev)], sn = edge_sep[static_cast<std::size_t>(e_next)];
            if (sp > sn)
                return e_prev;
            if (sn > sp)
                return e_next;
            return std::min(e_prev, e_next);
        }

        /// Contact point on edge `e` for a segment lying along it: the midpoint
        /// of the stretch of the edge facing the part of the segment within
        /// `band` of its deepest point. Reduces to the deepest point for
        /// oblique segments; returns `fallback` when that stretch misses the edge.
        template <typename Scalar>
        Vector2<Scalar> patch_point(const Segment2<Scalar>& seg, const Polygon2<Scalar>& poly, Eigen::Index e, const Vector2<Scalar>& fallback, Scalar band = Scalar(1e-8))
        {
            const Eigen::Index n = poly.cols();
            const Vector2<Scalar> v0 = poly.col(e), v1 = poly.col((e + 1) % n);
            const Vector2<Scalar> edge = v1 - v0;
            const Scalar len2 = edge.squaredNorm();
            const Vector2<Scalar> nrm = edge_normal(poly, e);
            const Scalar sa = nrm.dot(seg.a - v0), sb = nrm.dot(seg.b - v0);
            const Scalar smin = std::min(sa, sb);

            Scalar u0 = Scalar(0), u1 = Scalar(1);
            if (std::abs(sb - sa) > band) {
                const Scalar u = (smin + band - sa) / (sb - sa);
                if (sa < sb)
                    u1 = std::min(Scalar(1), u);
                else
                    u0 = std::max(Scalar(0), u);
            }
            const Vector2<Scalar> d = seg.b - seg.a;
            const Scalar t0 = edge.dot(seg.a + u0 * d - v0) / len2, t1 = edge.dot(seg.a + u1 * d - v0) / len2;
            const Scalar lo = std::max(Scalar(0), std::min(t0, t1)), hi = std::min(Scalar(1), std::max(t0, t1));
            if (lo > hi)
                return fallback;
            return v0 + Scalar(0.5) * (lo + hi) * edge;
        }

    } // namespace detail

    /// Contact between one finger segment and a convex CCW polygon (world
    /// frame), or nothing when they are farther apart than `tolerance`.
    ///
    /// Penetration is the separating-axis depth over the polygon edge normals
    /// and the segment normal. When the least-penetration axis is a polygon
    /// edge, the contact lies on that edge; when it is the segment normal, a
    /// polygon corner pokes into the finger and the contact normal is taken
    /// from the incident edge with the smallest penetration. Separated pairs
    /// within tolerance report the closest boundary point with zero penetration.
    /// A segment lying flush along an edge touches at the middle of the overlap.
    template <typename Scalar>
    std::optional<Contact<Scalar>> detect_contact(const Segment2<Scalar>& seg, const Polygon2<Scalar>& poly, FingerId finger, Scalar tolerance = Scalar(1e-4))
    {
        const Eigen::Index n = poly.cols();
        std::vector<Scalar> edge_sep(static_cast<std::size_t>(n));

        Scalar best = -std::numeric_limits<Scalar>::infinity();
        Eigen::Index best_edge = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector2<Scalar> nrm = edge_normal(poly, i);
            const Scalar s = std::min(nrm.dot(seg.a - poly.col(i)), nrm.dot(seg.b - poly.col(i)));
            edge_sep[static_cast<std::size_t>(i)] = s;
            if (s > best) {
                best = s;
                best_edge = i;
            }
        }

        // Segment-normal axis.
        bool segment_axis = false;
        Vector2<Scalar> seg_push = Vector2<Scalar>::Zero();
        Eigen::Index deep_vertex = -1;
        const Vector2<Scalar> d = seg.b - seg.a;
        if (d.norm() > Scalar(0)) {
            const Vector2<Scalar> m = perp<Scalar>(d).normalized();
            const auto proj = (m.transpose() * poly).eval();
            Eigen::Index imin, imax;
            const Scalar pmin = proj.minCoeff(&imin), pmax = proj.maxCoeff(&imax);
            const Scalar sa = m.dot(seg.a);
            const Scalar s_plus = pmin - sa, s_minus = sa - pmax;
            const Scalar s_m = std::max(s_plus, s_minus);
            if (s_m > best + Scalar(1e-12)) {
                best = s_m;
                segment_axis = true;
                seg_push = s_plus >= s_minus ? m : Vector2<Scalar>(-m);
                deep_vertex = s_plus >= s_minus ? imin : imax;
            }
        }

        if (best > tolerance)
            return std::nullopt;

        Contact<Scalar> c;
        c.finger = finger;

        if (best > Scalar(0)) {
            // Separated: exact closest features.
            Scalar dist = std::numeric_limits<Scalar>::infinity();
            Vector2<Scalar> point;
            Eigen::Index edge = -1, vertex = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vector2<Scalar> v0 = poly.col(i), v1 = poly.col((i + 1) % n);
                for (const Vector2<Scalar>& p : {seg.a, seg.b}) {
                    Scalar t;
                    const Vector2<Scalar> q = closest_on_segment(v0, v1, p, &t);
                    const Scalar dd = (q - p).norm();
                    if (dd < dist) {
                        dist = dd;
                        point = q;
                        if (t <= Scalar(0)) {
                            vertex = i;
                            edge = -1;
                        }
                        else if (t >= Scalar(1)) {
                            vertex = (i + 1) % n;
                            edge = -1;
                        }
                        else {
                            edge = i;
                            vertex = -1;
                        }
                    }
                }
                const Scalar dv = point_segment_distance(seg, v0);
                if (dv < dist) {
                    dist = dv;
                    point = v0;
                    vertex = i;
                    edge = -1;
                }
            }
            if (dist > tolerance)
                return std::nullopt;
            if (vertex >= 0)
                edge = detail::corner_edge(edge_sep, vertex, n);
            c.point = detail::patch_point(seg, poly, edge, point);
            c.normal = -edge_normal(poly, edge);
            c.penetration = Scalar(0);
            c.push_axis = c.normal;
            return c;
        }

        c.penetration = -best;
        if (!segment_axis) {
            const Vector2<Scalar> nrm = edge_normal(poly, best_edge);
            const Vector2<Scalar> v0 = poly.col(best_edge), v1 = poly.col((best_edge + 1) % n);
            const Vector2<Scalar> deep = nrm.dot(seg.a - v0) <= nrm.dot(seg.b - v0) ? seg.a : seg.b;
            c.point = detail::patch_point(seg, poly, best_edge, closest_on_segment(v0, v1, deep));
            c.normal = -nrm;
            c.push_axis = c.normal;
        }
        else {
            c.point = poly.col(deep_vertex);
            c.normal = -edge_normal(poly, detail::corner_edge(edge_sep, deep_vertex, n));
            c.push_axis = seg_push;
        }
        return c;
    }

    template <typename Scalar>
    std::vector<Contact<Scalar>> detect_contacts(const std::array<Segment2<Scalar>, 2>& fingers, const Polygon2<Scalar>& poly, Scalar tolerance = Scalar(1e-4))
    {
        std::vector<Contact<Scalar>> out;
        for (int f = 0; f < 2; ++f) {
            if (auto c = detect_contact(fingers[static_cast<std::size_t>(f)], poly, static_cast<FingerId>(f), tolerance))
                out.push_back(*c);
        }
        return out;
    }

    /// Planar friction-cone wrenches. Each contact contributes its two cone
    /// edges n +/- mu t (unit-normalized); torques are taken about `com` and
    /// divided by `rho`. A positive `torsional` moment (N m per unit force)
    /// doubles every edge into +/- torsional variants.
    template <typename Scalar>
    WrenchSet<Scalar> build_wrench_set(const std::vector<Contact<Scalar>>& contacts, Scalar mu, Scalar torsional, Scalar rho, const Vector2<Scalar>& com)
    {
        if (contacts.empty())
            throw PreconditionError("build_wrench_set needs at least one contact");
        if (mu < Scalar(0) || torsional < Scalar(0) || !(rho > Scalar(0)))
            throw PreconditionError("build_wrench_set needs mu >= 0, torsional >= 0, rho > 0");

        const bool with_torsion = torsional > Scalar(0);
        const Eigen::Index per_edge = with_torsion ? 2 : 1;
        WrenchSet<Scalar> ws;
        ws.wrenches.resize(3, static_cast<Eigen::Index>(contacts.size()) * 2 * per_edge);

        Eigen::Index col = 0;
        for (const auto& c : contacts) {
            const Vector2<Scalar> t = perp<Scalar>(c.normal);
            const Vector2<Scalar> r = c.point - com;
            for (const Scalar side : {Scalar(1), Scalar(-1)}) {
                const Vector2<Scalar> f = (c.normal + side * mu * t).normalized();
                const Scalar tau = cross2<Scalar>(r, f);
                if (with_torsion) {
                    ws.wrenches.col(col++) << f, (tau + torsional) / rho;
                    ws.wrenches.col(col++) << f, (tau - torsional) / rho;
                }
                else {
                    ws.wrenches.col(col++) << f, tau / rho;
                }
            }
        }
        return ws;
    }

    /// Radius of the largest origin-centered ball inside the convex hull of
    /// the primitive wrenches; 0 without force closure. Facets are found by
    /// enumerating wrench triples whose plane supports the whole set.
    template <typename Scalar>
    Scalar force_closure_margin(const WrenchSet<Scalar>& ws)
    {
        using V3 = Eigen::Matrix<Scalar, 3, 1>;
        const auto& w = ws.wrenches;
        const Eigen::Index n = w.cols();
        if (n < 4)
            return Scalar(0);

        const Scalar scale = std::max(Scalar(1e-300), w.colwise().norm().maxCoeff());
        {
            const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> diff = w.rightCols(n - 1).colwise() - w.col(0);
            Eigen::FullPivLU<Eigen::Matrix<Scalar, 3, Eigen::Dynamic>> lu(diff);
            lu.setThreshold(Scalar(1e-10));
            if (lu.rank() < 3)
                return Scalar(0);
        }

        const Scalar tol = Scalar(1e-12) * scale;
        Scalar margin = std::numeric_limits<Scalar>::infinity();
        bool found = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                for (Eigen::Index k = j + 1; k < n; ++k) {
                    V3 nrm = (w.col(j) - w.col(i)).cross(w.col(k) - w.col(i));
                    const Scalar len = nrm.norm();
                    if (len <= Scalar(1e-12) * scale * scale)
                        continue;
                    nrm /= len;
                    const Scalar offset = nrm.dot(w.col(i));
                    const auto dist = ((nrm.transpose() * w).array() - offset).eval();
                    Scalar facet_offset;
                    if (dist.maxCoeff() <= tol)
                        facet_offset = offset;
                    else if (dist.minCoeff() >= -tol)
                        facet_offset = -offset;
                    else
                        continue;
                    found = true;
                    margin = std::min(margin, facet_offset);
                }
            }
        }
        if (!found || !(margin > tol))
            return Scalar(0);
        return margin;
    }

    /// Whether the grasp can balance `external` with nonnegative primitive
    /// coefficients summing to at most `force_budget` (in unit-force multiples).
    template <typename Scalar>
    bool can_resist_wrench(const WrenchSet<Scalar>& ws, const Eigen::Matrix<Scalar, 3, 1>& external, Scalar force_budget = Scalar(20))
    {
        if (external.isZero(Scalar(0)))
            return ws.size() > 0;
        const Eigen::Index n = ws.size();
        if (n == 0)
            return false;
        using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
        using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
        const Mat a = ws.wrenches;
        const Vec b = -external;
        const Vec cost = Vec::Ones(n);
        const auto sol = solve_lp<Scalar>(a, b, cost);
        if (sol.status != LpSolution<Scalar>::Status::optimal)
            return false;
        return sol.objective <= force_budget * (Scalar(1) + Scalar(1e-9));
    }

} // namespace qdgrasp

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Core>

namespace qdgrasp {

    template <typename Scalar>
    using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

    /// Convex polygon, one vertex per column, counter-clockwise.
    template <typename Scalar>
    using Polygon2 = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;

    template <typename Scalar>
    struct Segment2 {
        Vector2<Scalar> a;
        Vector2<Scalar> b;
    };

    using Vec2 = Vector2<double>;
    using Polygon = Polygon2<double>;
    using Segment = Segment2<double>;

    template <typename Scalar>
    Scalar cross2(const Vector2<Scalar>& u, const Vector2<Scalar>& v)
    {
        return u.x() * v.y() - u.y() * v.x();
    }

    template <typename Scalar>
    Vector2<Scalar> perp(const Vector2<Scalar>& v)
    {
        return Vector2<Scalar>(-v.y(), v.x());
    }

    template <typename Scalar>
    Eigen::Matrix<Scalar, 2, 2> rotation2(Scalar theta)
    {
        using std::cos;
        using std::sin;
        const Scalar c = cos(theta), s = sin(theta);
        Eigen::Matrix<Scalar, 2, 2> r;
        r << c, -s, s, c;
        return r;
    }

    /// Wraps to [-pi, pi].
    template <typename Scalar>
    Scalar wrap_angle(Scalar a)
    {
        const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
        Scalar w = std::remainder(a, two_pi);
        if (w < -std::numbers::pi_v<Scalar>)
            w = -std::numbers::pi_v<Scalar>;
        if (w > std::numbers::pi_v<Scalar>)
            w = std::numbers::pi_v<Scalar>;
        return w;
    }

    template <typename Scalar>
    Scalar polygon_signed_area(const Polygon2<Scalar>& poly)
    {
        Scalar area(0);
        const Eigen::Index n = poly.cols();
        for (Eigen::Index i = 0; i < n; ++i)
            area += cross2<Scalar>(poly.col(i), poly.col((i + 1) % n));
        return area / Scalar(2);
    }

    template <typename Scalar>
    Vector2<Scalar> polygon_centroid(const Polygon2<Scalar>& poly)
    {
        const Eigen::Index n = poly.cols();
        Vector2<Scalar> c = Vector2<Scalar>::Zero();
        Scalar twice_area(0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector2<Scalar> p = poly.col(i), q = poly.col((i + 1) % n);
            const Scalar w = cross2(p, q);
            c += w * (p + q);
            twice_area += w;
        }
        return c / (Scalar(3) * twice_area);
    }

    /// Outward unit normal of edge i (from vertex i to i+1) of a CCW polygon.
    template <typename Scalar>
    Vector2<Scalar> edge_normal(const Polygon2<Scalar>& poly, Eigen::Index i)
    {
        const Vector2<Scalar> e = poly.col((i + 1) % poly.cols()) - poly.col(i);
        return Vector2<Scalar>(e.y(), -e.x()).normalized();
    }

    template <typename Scalar>
    bool is_strictly_convex_ccw(const Polygon2<Scalar>& poly, Scalar tol = Scalar(1e-12))
    {
        const Eigen::Index n = poly.cols();
        if (n < 3)
            return false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector2<Scalar> e0 = poly.col((i + 1) % n) - poly.col(i);
            const Vector2<Scalar> e1 = poly.col((i + 2) % n) - poly.col((i + 1) % n);
            if (e0.norm() <= tol || cross2(e0, e1) <= tol * e0.norm() * e1.norm())
                return false;
        }
        // Turning number of one rules out self-overlapping star shapes.
        return polygon_signed_area(poly) > Scalar(0);
    }

    /// Strict interior test for a convex CCW polygon.
    template <typename Scalar>
    bool contains_strictly(const Polygon2<Scalar>& poly, const Vector2<Scalar>& p)
    {
        const Eigen::Index n = poly.cols();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (edge_normal(poly, i).dot(p - poly.col(i)) >= Scalar(0))
                return false;
        }
        return true;
    }

    /// Closest point on segment [a, b] to p, with its parameter in [0, 1].
    template <typename Scalar>
    Vector2<Scalar> closest_on_segment(const Vector2<Scalar>& a, const Vector2<Scalar>& b, const Vector2<Scalar>& p, Scalar* param = nullptr)
    {
        const Vector2<Scalar> d = b - a;
        const Scalar len2 = d.squaredNorm();
        Scalar t = len2 > Scalar(0) ? (p - a).dot(d) / len2 : Scalar(0);
        t = std::clamp(t, Scalar(0), Scalar(1));
        if (param)
            *param = t;
        return a + t * d;
    }

    template <typename Scalar>
    Scalar point_segment_distance(const Segment2<Scalar>& s, const Vector2<Scalar>& p)
    {
        return (closest_on_segment(s.a, s.b, p) - p).norm();
    }

    /// Moves every edge of a convex CCW polygon inward by `inward` (negative
    /// dilates). Vertices are the intersections of adjacent offset lines.
    template <typename Scalar>
    Polygon2<Scalar> offset_polygon(const Polygon2<Scalar>& poly, Scalar inward)
    {
        const Eigen::Index n = poly.cols();
        Polygon2<Scalar> out(2, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index prev = (i + n - 1) % n;
            const Vector2<Scalar> n0 = edge_normal(poly, prev), n1 = edge_normal(poly, i);
            // Lines n0.x = n0.v_i - inward, n1.x = n1.v_i - inward.
            Eigen::Matrix<Scalar, 2, 2> a;
            a.row(0) = n0.transpose();
            a.row(1) = n1.transpose();
            const Vector2<Scalar> rhs(n0.dot(poly.col(i)) - inward, n1.dot(poly.col(i)) - inward);
            out.col(i) = a.inverse() * rhs;
        }
        return out;
    }

    /// Smallest t >= 0 such that the segment translated by t * dir touches the
    /// polygon; infinity when it never does.
    template <typename Scalar>
    Scalar sweep_distance(const Segment2<Scalar>& seg, const Vector2<Scalar>& dir, const Polygon2<Scalar>& poly)
    {
        constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();
        Scalar best = inf;

        // Ray p + t*d against segment q + s*e.
        auto ray_hit = [&](const Vector2<Scalar>& p, const Vector2<Scalar>& d, const Vector2<Scalar>& q, const Vector2<Scalar>& e) {
            const Scalar det = cross2(d, e);
            if (std::abs(det) < Scalar(1e-15))
                return;
            const Vector2<Scalar> w = q - p;
            const Scalar t = cross2(w, e) / det;
            const Scalar s = cross2(w, d) / det;
            constexpr Scalar slack = Scalar(1e-12);
            if (t >= -slack && s >= -slack && s <= Scalar(1) + slack)
                best = std::min(best, std::max(t, Scalar(0)));
        };

        const Eigen::Index n = poly.cols();
        const Vector2<Scalar> seg_dir = seg.b - seg.a;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector2<Scalar> v = poly.col(i);
            const Vector2<Scalar> e = poly.col((i + 1) % n) - v;
            ray_hit(v, -dir, seg.a, seg_dir);
            ray_hit(seg.a, dir, v, e);
            ray_hit(seg.b, dir, v, e);
        }
        return best;
    }

    /// Part of the segment with y >= floor, if any.
    template <typename Scalar>
    std::optional<Segment2<Scalar>> clip_above(const Segment2<Scalar>& s, Scalar floor)
    {
        const bool a_ok = s.a.y() >= floor, b_ok = s.b.y() >= floor;
        if (a_ok && b_ok)
            return s;
        if (!a_ok && !b_ok)
            return std::nullopt;
        const Scalar t = (floor - s.a.y()) / (s.b.y() - s.a.y());
        const Vector2<Scalar> cut = s.a + t * (s.b - s.a);
        return a_ok ? Segment2<Scalar>{s.a, cut} : Segment2<Scalar>{cut, s.b};
    }

} // namespace qdgrasp

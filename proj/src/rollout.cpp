#include "qdgrasp/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qdgrasp/errors.hpp"
#include "qdgrasp/random.hpp"

namespace qdgrasp {

    void NoiseModel::validate(int joints) const
    {
        if (object_pose_sigma < 0.0 || object_theta_sigma < 0.0 || joint_sigma < 0.0)
            throw DomainError("noise sigmas must be non-negative");
        for (const auto& r : {zeta_s_range, zeta_r_range}) {
            if (!(r[0] <= r[1]) || r[0] < 0.0 || r[1] > 1.0)
                throw DomainError("friction ranges must satisfy 0 <= min <= max <= 1");
        }
        if (joint_bias.size() != 0 && joint_bias.size() != joints)
            throw DimensionError("joint bias must be empty or have one entry per joint");
    }

    std::string_view to_string(FailureReason reason)
    {
        switch (reason) {
        case FailureReason::no_contact:
            return "no_contact";
        case FailureReason::no_closure:
            return "no_closure";
        case FailureReason::lift_fail:
            return "lift_fail";
        case FailureReason::shake_fail:
            return "shake_fail";
        case FailureReason::object_lost:
            return "object_lost";
        }
        return "unknown";
    }

    namespace {

        using FingerPair = std::array<std::optional<Segment>, 2>;

        /// Object pose plus cached world geometry.
        class Body {
        public:
            Body(const PolygonObject& object, const Pose2& pose) : _local(object.vertices), _com_local(local_com(object)), _pose(pose) { refresh(); }

            const Pose2& pose() const { return _pose; }
            const Polygon& world() const { return _world; }
            const Vec2& com() const { return _com; }

            void translate(const Vec2& d)
            {
                _pose.x += d.x();
                _pose.y += d.y();
                _world.colwise() += d;
                _com += d;
            }

            void rotate_about_com(double dtheta)
            {
                const Vec2 origin(_pose.x, _pose.y);
                const Vec2 moved = _com + rotation2(dtheta) * (origin - _com);
                _pose = {moved.x(), moved.y(), _pose.theta + dtheta};
                refresh();
            }

        private:
            void refresh()
            {
                const auto r = rotation2(_pose.theta);
                const Vec2 t(_pose.x, _pose.y);
                _world = (r * _local).colwise() + t;
                _com = r * _com_local + t;
            }

            Polygon _local;
            Vec2 _com_local;
            Pose2 _pose;
            Polygon _world;
            Vec2 _com;
        };

        struct Context {
            const SceneConfig& scene;
            const SimParams& sim;
            double rho;
            double rotation_damping;
            double tol;
        };

        FingerPair clip_fingers(const GripperState& g, double table)
        {
            return {clip_above(g.fingers[0], table), clip_above(g.fingers[1], table)};
        }

        std::optional<ContactD> finger_contact(const Context& ctx, const Body& body, const FingerPair& fingers, int f)
        {
            const auto& seg = fingers[static_cast<std::size_t>(f)];
            if (!seg || point_segment_distance(*seg, body.com()) > ctx.rho + ctx.tol)
                return std::nullopt;
            return detect_contact<double>(*seg, body.world(), static_cast<FingerId>(f), ctx.tol);
        }

        std::vector<ContactD> finger_contacts(const Context& ctx, const Body& body, const FingerPair& fingers)
        {
            std::vector<ContactD> out;
            for (int f = 0; f < 2; ++f)
                if (auto c = finger_contact(ctx, body, fingers, f))
                    out.push_back(*c);
            return out;
        }

        double max_penetration(const Context& ctx, const Body& body, const FingerPair& fingers)
        {
            double pen = 0.0;
            for (int f = 0; f < 2; ++f)
                if (auto c = finger_contact(ctx, body, fingers, f))
                    pen = std::max(pen, c->penetration);
            return pen;
        }

        /// Removes finger penetration by pushing the object. The first pass
        /// applies the minimum-norm rigid motion (rotation scaled by the rolling
        /// damping, translation making up the rest along the push axis); later
        /// passes translate only. Returns false when the object is knocked away
        /// or jammed between the fingers and the table.
        bool resolve_penetration(const Context& ctx, Body& body, const FingerPair& fingers)
        {
            const Polygon start = body.world();
            const double floor_level = std::min(ctx.scene.table_height, start.row(1).minCoeff());
            const double rho2 = ctx.rho * ctx.rho;

            constexpr int passes = 8;
            for (int pass = 0; pass < passes; ++pass) {
                bool pushed = false;
                for (int f = 0; f < 2; ++f) {
                    const auto c = finger_contact(ctx, body, fingers, f);
                    if (!c || c->penetration <= 1e-12)
                        continue;
                    pushed = true;
                    const double depth = c->penetration;
                    const Vec2& axis = c->push_axis;
                    // A finger cannot wedge under an object resting on the table.
                    if (axis.y() > 0.5 && body.world().row(1).minCoeff() <= ctx.scene.table_height + ctx.tol)
                        return false;
                    if (pass == 0) {
                        const double arm = cross2<double>(c->point - body.com(), axis);
                        const double lambda = depth / (1.0 + arm * arm / rho2);
                        const double dtheta = lambda * arm * ctx.rotation_damping / rho2;
                        body.rotate_about_com(dtheta);
                        body.translate((depth - arm * dtheta) * axis);
                    }
                    else {
                        body.translate(depth * axis);
                    }
                }
                const double low = body.world().row(1).minCoeff();
                if (low < floor_level)
                    body.translate(Vec2(0.0, floor_level - low));
                if (!pushed)
                    break;
            }

            if (max_penetration(ctx, body, fingers) > ctx.tol)
                return false;
            const double moved = (body.world() - start).colwise().norm().maxCoeff();
            return moved <= ctx.sim.knock_away_distance;
        }

        /// An object no finger touches falls onto its most downward-facing
        /// edge and rests on the table.
        bool settle(const Context& ctx, Body& body, const FingerPair& fingers)
        {
            for (int f = 0; f < 2; ++f)
                if (finger_contact(ctx, body, fingers, f))
                    return false;

            const Polygon& w = body.world();
            const Eigen::Index n = w.cols();
            Eigen::Index down = 0;
            double best = -2.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = -edge_normal<double>(w, i).y();
                if (d > best + 1e-12) {
                    best = d;
                    down = i;
                }
            }
            const Vec2 nrm = edge_normal<double>(w, down);
            const double dtheta = wrap_angle(-0.5 * std::numbers::pi - std::atan2(nrm.y(), nrm.x()));
            bool moved = false;
            if (std::abs(dtheta) > 1e-12) {
                body.rotate_about_com(dtheta);
                moved = true;
            }

            double drop = body.world().row(1).minCoeff() - ctx.scene.table_height;
            for (const auto& seg : fingers)
                if (seg)
                    drop = std::min(drop, sweep_distance<double>(*seg, Vec2(0.0, 1.0), body.world()));
            if (drop > 0.0) {
                body.translate(Vec2(0.0, -drop));
                moved = true;
            }
            return moved;
        }

        /// Penetration resolution followed by settling of a released object.
        bool update_object(const Context& ctx, Body& body, const FingerPair& fingers)
        {
            if (!resolve_penetration(ctx, body, fingers))
                return false;
            if (settle(ctx, body, fingers))
                return resolve_penetration(ctx, body, fingers);
            return true;
        }

        /// Squeezing a slightly tilted object turns its faces flush with the
        /// jaws. Leaves everything unchanged when the faces are too far from
        /// parallel or the aligned object would not fit.
        void align_in_jaws(const Context& ctx, Body& body, const PlanarArm& arm, const Eigen::VectorXd& joints, GripperState& g, FingerPair& fingers)
        {
            constexpr double max_tilt = 0.5;
            const auto left = finger_contact(ctx, body, fingers, 0);
            const auto right = finger_contact(ctx, body, fingers, 1);
            if (!left || !right)
                return;
            const Vec2 c = g.closing_axis();
            const Vec2 n_left = -left->normal;
            const double phi = wrap_angle(std::atan2(c.y(), c.x()) - std::atan2(n_left.y(), n_left.x()));
            if (std::abs(phi) > max_tilt || (rotation2(phi) * -right->normal).dot(-c) < std::cos(max_tilt))
                return;

            Body aligned = body;
            aligned.rotate_about_com(phi);
            const auto s = (c.transpose() * (aligned.world().colwise() - g.position)).eval();
            const double lo = s.minCoeff(), hi = s.maxCoeff();
            aligned.translate(-0.5 * (lo + hi) * c);
            const double width = hi - lo;
            if (width > g.aperture + ctx.tol || aligned.world().row(1).minCoeff() < ctx.scene.table_height - 1e-9)
                return;

            const GripperState g2 = gripper_state(arm, joints, width);
            const FingerPair f2 = clip_fingers(g2, ctx.scene.table_height);
            const Body candidate = aligned;
            for (int f = 0; f < 2; ++f) {
                const auto con = finger_contact(ctx, candidate, f2, f);
                if (!con || con->penetration > ctx.tol)
                    return;
            }
            body = aligned;
            g = g2;
            fingers = f2;
        }

        Vec2 to_object_frame(const Body& body, const Vec2& world_point)
        {
            return rotation2(-body.pose().theta) * (world_point - body.com());
        }

    } // namespace

    GraspOutcome run_episode(const Trajectory& traj, const SceneConfig& scene, const NoiseModel& noise, const TraceSink& trace)
    {
        const PlanarArm& arm = scene.arm;
        const int joints = arm.joints();
        const int steps = traj.steps();
        if (traj.waypoints.rows() != joints || traj.commands.rows() != joints || traj.commands.cols() != steps - 1)
            throw DimensionError("trajectory does not match the arm's joint count");
        if (steps < 2 || traj.close_step < 0 || traj.close_step >= steps)
            throw DomainError("trajectory close step outside [0, T)");
        noise.validate(joints);

        const PolygonObject& object = scene.object;
        const double mg = object.mass * scene.gravity;
        const double kappa = mg * scene.sim.rolling_scale;

        GraspOutcome out;
        out.energy = traj.commands.squaredNorm();

        // Once-per-rollout draws, one stream per channel.
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Pose2 pose0 = object.pose;
        if (noise.pose_enabled) {
            Rng rng(mix_seed({noise.seed, 1}));
            pose0.x += noise.object_pose_sigma * gauss(rng);
            pose0.y += noise.object_pose_sigma * gauss(rng);
            pose0.theta += noise.object_theta_sigma * gauss(rng);
        }
        double zeta_s = object.zeta_s, zeta_r = object.zeta_r;
        if (noise.friction_enabled) {
            Rng rng(mix_seed({noise.seed, 2}));
            zeta_s = noise.zeta_s_range[0] + unit(rng) * (noise.zeta_s_range[1] - noise.zeta_s_range[0]);
            zeta_r = noise.zeta_r_range[0] + unit(rng) * (noise.zeta_r_range[1] - noise.zeta_r_range[0]);
        }
        out.zeta_s = zeta_s;
        out.zeta_r = zeta_r;
        Rng joint_rng(mix_seed({noise.seed, 3}));

        const Context ctx{scene, scene.sim, characteristic_length(object), 1.0 / (1.0 + zeta_r * kappa), scene.sim.contact_tolerance};
        Body body(object, pose0);

        const Eigen::VectorXd bias = noise.joint_bias.size() == joints ? noise.joint_bias : Eigen::VectorXd::Zero(joints);
        Eigen::VectorXd q = traj.waypoints.col(0);
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(joints);

        auto emit = [&](int step, Phase phase, const GripperState& g, const FingerPair& fingers) {
            if (!trace)
                return;
            StepTrace st;
            st.step = step;
            st.phase = phase;
            st.joints = q + bias;
            st.joint_noise = delta;
            st.gripper = {g.position.x(), g.position.y(), g.orientation};
            st.aperture = g.aperture;
            st.object = body.pose();
            const auto cs = finger_contacts(ctx, body, fingers);
            st.contacts = static_cast<int>(cs.size());
            for (const auto& c : cs)
                st.max_penetration = std::max(st.max_penetration, c.penetration);
            st.zeta_s = zeta_s;
            st.zeta_r = zeta_r;
            trace(st);
        };

        GripperState g = gripper_state(arm, q + bias, arm.max_aperture);
        bool closing = false;
        auto fail = [&](FailureReason reason) {
            out.success = false;
            out.gripper_orientation_at_close = g.orientation;
            if (!closing)
                out.approach_angle = wrap_angle(g.orientation - body.pose().theta);
            out.failure_reason = reason;
            out.object_pose_at_close = body.pose();
            out.object_final_pose = body.pose();
            return out;
        };

        double closest = std::numeric_limits<double>::infinity();
        auto track_approach = [&](const GripperState& g) {
            const Vec2 center = g.position + 0.5 * arm.finger_length * g.approach_axis();
            const double d = (center - body.com()).norm();
            if (d < closest) {
                closest = d;
                out.closest_approach = to_object_frame(body, center);
            }
        };

        // Reach: states 0 .. close_step with the gripper open.
        FingerPair fingers = clip_fingers(g, scene.table_height);
        if (!update_object(ctx, body, fingers))
            return fail(FailureReason::object_lost);
        track_approach(g);
        emit(0, Phase::reach, g, fingers);

        for (int j = 0; j < traj.close_step; ++j) {
            if (noise.joint_enabled) {
                for (int i = 0; i < joints; ++i)
                    delta[i] = noise.joint_sigma * gauss(joint_rng);
            }
            q = (q + traj.commands.col(j) + delta).cwiseMax(arm.joint_min).cwiseMin(arm.joint_max);
            g = gripper_state(arm, q + bias, arm.max_aperture);
            fingers = clip_fingers(g, scene.table_height);
            if (!update_object(ctx, body, fingers))
                return fail(FailureReason::object_lost);
            track_approach(g);
            emit(j + 1, Phase::reach, g, fingers);
        }
        delta.setZero();
        out.approach_angle = wrap_angle(g.orientation - body.pose().theta);
        closing = true;

        // Close: fingers move symmetrically; a finger already touching pushes
        // the object toward the other one.
        const double tol = ctx.tol;
        double aperture = arm.max_aperture;
        for (int it = 0; it < 1000; ++it) {
            std::array<bool, 2> touch{};
            std::array<double, 2> gap{};
            for (int f = 0; f < 2; ++f) {
                const auto& seg = fingers[static_cast<std::size_t>(f)];
                if (!seg) {
                    gap[static_cast<std::size_t>(f)] = std::numeric_limits<double>::infinity();
                    continue;
                }
                touch[static_cast<std::size_t>(f)] = detect_contact<double>(*seg, body.world(), static_cast<FingerId>(f), tol).has_value();
                const Vec2 dir = f == 0 ? Vec2(-g.closing_axis()) : g.closing_axis();
                gap[static_cast<std::size_t>(f)] = touch[static_cast<std::size_t>(f)] ? 0.0 : sweep_distance<double>(*seg, dir, body.world());
            }
            if ((touch[0] && touch[1]) || aperture <= 0.0)
                break;

            double step;
            if (!touch[0] && !touch[1]) {
                step = std::min(gap[0], gap[1]);
            }
            else {
                const double other = touch[0] ? gap[1] : gap[0];
                step = std::min(scene.sim.close_increment, 0.5 * other - 0.25 * tol);
                step = std::max(step, 1e-7);
            }
            step = std::min(step, 0.5 * aperture);
            aperture = std::max(0.0, aperture - 2.0 * step);

            g = gripper_state(arm, q + bias, aperture);
            fingers = clip_fingers(g, scene.table_height);
            if (!update_object(ctx, body, fingers))
                return fail(FailureReason::object_lost);
            emit(traj.close_step, Phase::close, g, fingers);
        }

        align_in_jaws(ctx, body, arm, q + bias, g, fingers);
        out.contacts = finger_contacts(ctx, body, fingers);
        out.object_pose_at_close = body.pose();
        out.object_final_pose = body.pose();
        out.gripper_orientation_at_close = g.orientation;
        emit(traj.close_step, Phase::evaluate, g, fingers);

        if (out.contacts.empty())
            return fail(FailureReason::no_contact);

        const WrenchSetD ws = build_wrench_set<double>(out.contacts, object.mu, zeta_s * ctx.rho, ctx.rho, body.com());
        out.epsilon = force_closure_margin(ws);
        if (out.contacts.size() < 2 || out.epsilon <= scene.sim.epsilon_min)
            return fail(FailureReason::no_closure);

        const double budget = scene.sim.force_budget;
        auto resist = [&](const Eigen::Vector3d& w) {
            // Anything inside the epsilon-ball scaled to the budget is feasible.
            if (w.norm() <= out.epsilon * budget)
                return true;
            return can_resist_wrench<double>(ws, w, budget);
        };

        const Eigen::Vector3d gravity(0.0, -mg, 0.0);
        if (!resist(gravity))
            return fail(FailureReason::lift_fail);

        const double fs = scene.sim.shake_force_factor * mg;
        const double ts = scene.sim.shake_torque_factor * mg * ctx.rho;
        for (const double sx : {1.0, -1.0})
            for (const double sy : {1.0, -1.0})
                for (const double st : {1.0, -1.0})
                    if (!resist(gravity + Eigen::Vector3d(sx * fs, sy * fs, st * ts / ctx.rho)))
                        return fail(FailureReason::shake_fail);

        out.success = true;
        out.failure_reason.reset();
        out.object_final_pose.y += scene.lift_height;
        return out;
    }

    int grasp_success(const Trajectory& traj, const SceneConfig& scene, const NoiseModel& noise) { return run_episode(traj, scene, noise).success ? 1 : 0; }

} // namespace qdgrasp

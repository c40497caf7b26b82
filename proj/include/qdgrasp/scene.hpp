#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "geometry.hpp"

namespace qdgrasp {

    /// Shape-aware equality for dynamic Eigen objects.
    template <typename A, typename B>
    bool same_values(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b)
    {
        return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || (a.derived().array() == b.derived().array()).all());
    }

    struct Pose2 {
        double x = 0.0;
        double y = 0.0;
        double theta = 0.0;

        bool operator==(const Pose2&) const = default;
    };

    /// Rigid convex object. Vertices live in the object frame; `pose` places
    /// that frame in the world. The COM is the area centroid plus `com_offset`.
    struct PolygonObject {
        Polygon vertices;
        Vec2 com_offset = Vec2::Zero();
        double mass = 0.1;
        Pose2 pose;
        double zeta_s = 0.1; ///< spinning friction, torsional term at finger contacts
        double zeta_r = 0.01; ///< rolling friction, damps rotation when pushed
        double mu = 0.5; ///< sliding friction at finger contacts

        bool operator==(const PolygonObject& o) const
        {
            return same_values(vertices, o.vertices) && com_offset == o.com_offset && mass == o.mass && pose == o.pose && zeta_s == o.zeta_s
                && zeta_r == o.zeta_r && mu == o.mu;
        }
    };

    struct PlanarArm {
        Pose2 base;
        Eigen::VectorXd link_lengths;
        Eigen::VectorXd joint_min;
        Eigen::VectorXd joint_max;
        double finger_length = 0.05;
        double max_aperture = 0.12;

        int joints() const { return static_cast<int>(link_lengths.size()); }

        bool operator==(const PlanarArm& o) const
        {
            return base == o.base && same_values(link_lengths, o.link_lengths) && same_values(joint_min, o.joint_min) && same_values(joint_max, o.joint_max)
                && finger_length == o.finger_length && max_aperture == o.max_aperture;
        }
    };

    /// Contact and grasp-test constants of the quasi-static kernel.
    struct SimParams {
        double contact_tolerance = 1e-4; ///< m
        double epsilon_min = 1e-3; ///< minimum wrench margin for a valid closure
        double force_budget = 20.0; ///< F_max, N
        double shake_force_factor = 0.5; ///< F_s = factor * m * g
        double shake_torque_factor = 0.25; ///< T_s = factor * m * g * rho
        double knock_away_distance = 0.02; ///< m per step
        double rolling_scale = 25.0; ///< kappa = mass * g * rolling_scale
        double close_increment = 0.01; ///< m, finger travel per squeeze increment

        bool operator==(const SimParams&) const = default;
    };

    struct SceneConfig {
        std::string name = "custom";
        PolygonObject object;
        PlanarArm arm;
        double table_height = 0.0;
        double gravity = 9.81;
        int episode_steps = 40;
        double lift_height = 0.1;
        SimParams sim;

        bool operator==(const SceneConfig&) const = default;
    };

    void validate(const PolygonObject& object);
    void validate(const PlanarArm& arm);
    void validate(const SceneConfig& scene);

    Polygon world_vertices(const PolygonObject& object, const Pose2& pose);
    Vec2 local_com(const PolygonObject& object);
    Vec2 world_com(const PolygonObject& object, const Pose2& pose);

    /// Moves the object vertically so its lowest vertex rests on the table.
    void seat_object(SceneConfig& scene);

    /// Maximum vertex distance from the COM; makes torques commensurable with forces.
    double characteristic_length(const PolygonObject& object);

    /// Gripper frame at the tip of the last link; fingers extend from it along
    /// the approach axis, offset by +/- aperture/2 along the closing axis.
    struct GripperState {
        Vec2 position = Vec2::Zero();
        double orientation = 0.0;
        double aperture = 0.0;
        std::array<Segment, 2> fingers; ///< [0] left (+closing axis), [1] right

        Vec2 approach_axis() const { return {std::cos(orientation), std::sin(orientation)}; }
        Vec2 closing_axis() const { return {-std::sin(orientation), std::cos(orientation)}; }
    };

    /// Throws DimensionError on length mismatch and DomainError on limit violation.
    /// `aperture` defaults to the arm's max_aperture.
    GripperState forward_kinematics(const PlanarArm& arm, const Eigen::Ref<const Eigen::VectorXd>& joints, std::optional<double> aperture = std::nullopt);

    /// No limit checks; used by the rollout where joint bias may push past limits.
    GripperState gripper_state(const PlanarArm& arm, const Eigen::Ref<const Eigen::VectorXd>& joints, double aperture);

    struct Genome {
        Eigen::VectorXd params;

        bool operator==(const Genome& o) const { return same_values(params, o.params); }
    };

    /// Joint-waypoint open-loop trajectory. Column k of `waypoints` is X_k;
    /// column j of `commands` is the per-step joint displacement X_{j+1} - X_j.
    struct Trajectory {
        Eigen::MatrixXd waypoints;
        Eigen::MatrixXd commands;
        int close_step = 0;

        int steps() const { return static_cast<int>(waypoints.cols()); }
    };

    /// 3 joint waypoints plus one close-time fraction.
    inline Eigen::Index genome_size(const PlanarArm& arm) { return 3 * arm.joints() + 1; }

    int close_step_for(double fraction, int steps);

    Trajectory decode_genome(const Genome& genome, const SceneConfig& scene);

    /// "square", "hexagon" or "bar".
    SceneConfig builtin_scene(std::string_view name);
    std::vector<std::string> builtin_scene_names();

    SceneConfig scene_from_json(const std::string& text);
    std::string scene_to_json(const SceneConfig& scene);

    /// Built-in name, or path to a JSON scene document.
    SceneConfig load_scene(const std::string& name_or_path);

} // namespace qdgrasp

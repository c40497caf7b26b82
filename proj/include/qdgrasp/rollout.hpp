#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "physics.hpp"
#include "scene.hpp"

namespace qdgrasp {

    /// Perturbations applied to one rollout. Every channel draws from its own
    /// stream derived from `seed`, so enabling one channel never shifts the
    /// samples of another.
    struct NoiseModel {
        double object_pose_sigma = 0.0; ///< m, per axis, applied once to the initial position
        double object_theta_sigma = 0.0; ///< rad, applied once to the initial orientation
        double joint_sigma = 0.0; ///< rad, per transition and joint
        std::array<double, 2> zeta_s_range{0.1, 0.4};
        std::array<double, 2> zeta_r_range{0.01, 0.04};
        bool pose_enabled = false;
        bool joint_enabled = false;
        bool friction_enabled = false;
        /// Constant joint calibration offset (empty = none).
        Eigen::VectorXd joint_bias;
        std::uint64_t seed = 0;

        static NoiseModel disabled() { return {}; }

        /// Throws DomainError / DimensionError.
        void validate(int joints) const;
    };

    enum class FailureReason { no_contact, no_closure, lift_fail, shake_fail, object_lost };

    std::string_view to_string(FailureReason reason);

    struct GraspOutcome {
        bool success = false;
        std::vector<ContactD> contacts;
        double epsilon = 0.0;
        double energy = 0.0; ///< sum of squared joint displacements, rad^2
        Pose2 object_final_pose;
        std::optional<FailureReason> failure_reason;

        // Diagnostics used for behavior descriptors.
        Pose2 object_pose_at_close; ///< after the fingers closed, before lifting
        double gripper_orientation_at_close = 0.0;
        /// Gripper orientation relative to the object when closing starts.
        double approach_angle = 0.0;
        /// Gripper center at its closest approach, object frame, relative to the COM.
        Vec2 closest_approach = Vec2::Zero();

        double zeta_s = 0.0; ///< coefficients the rollout actually used
        double zeta_r = 0.0;
    };

    enum class Phase { reach, close, evaluate };

    struct StepTrace {
        int step = 0;
        Phase phase = Phase::reach;
        Eigen::VectorXd joints;
        Eigen::VectorXd joint_noise;
        Pose2 gripper;
        double aperture = 0.0;
        Pose2 object;
        int contacts = 0;
        double max_penetration = 0.0;
        double zeta_s = 0.0;
        double zeta_r = 0.0;
    };

    using TraceSink = std::function<void(const StepTrace&)>;

    /// Executes the trajectory in the quasi-static scene. Physical failures are
    /// reported through `failure_reason`; only malformed inputs throw.
    GraspOutcome run_episode(const Trajectory& traj, const SceneConfig& scene, const NoiseModel& noise, const TraceSink& trace = {});

    /// f_c: 1 iff the rollout succeeds.
    int grasp_success(const Trajectory& traj, const SceneConfig& scene, const NoiseModel& noise);

} // namespace qdgrasp

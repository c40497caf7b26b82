#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "rollout.hpp"
#include "scene.hpp"

namespace qdgrasp {

    enum class DRVariant { osdr, jsdr, fdr, mdr };

    std::string_view to_string(DRVariant variant);

    /// Accepts "osdr", "jsdr", "fdr", "mdr" (any case). Throws ConfigError.
    DRVariant parse_dr_variant(std::string_view text);

    struct DRConfig {
        DRVariant variant = DRVariant::mdr;
        int N = 100;
        double sigma0 = 0.005; ///< m
        double joint_sigma = 0.002; ///< rad per transition
        double zeta_s_nominal = 0.1;
        double zeta_r_nominal = 0.01;
        std::array<double, 2> zeta_s_range{0.1, 0.4};
        std::array<double, 2> zeta_r_range{0.01, 0.04};
        std::uint64_t master_seed = 0;

        /// Throws ConfigError.
        void validate() const;

        bool operator==(const DRConfig&) const = default;
    };

    /// Content hash of the waypoints and close step.
    std::uint64_t trajectory_id(const Trajectory& traj);

    /// Noise model of sample i: only the variant's channels are enabled.
    NoiseModel dr_noise_model(const DRConfig& cfg, std::uint64_t traj_id, int sample);

    /// Copy of the scene with the configured nominal friction coefficients.
    SceneConfig with_nominal_friction(const SceneConfig& scene, const DRConfig& cfg);

    /// Number of successful samples out of cfg.N.
    int dr_success_count(const Trajectory& traj, const SceneConfig& scene, const DRConfig& cfg, unsigned workers = 1);

    double eval_dr_fitness(const Trajectory& traj, const SceneConfig& scene, const DRConfig& cfg, unsigned workers = 1);

} // namespace qdgrasp

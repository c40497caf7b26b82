#include "qdgrasp/drfitness.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

#include "qdgrasp/errors.hpp"
#include "qdgrasp/parallel.hpp"
#include "qdgrasp/random.hpp"

namespace qdgrasp {

    std::string_view to_string(DRVariant variant)
    {
        switch (variant) {
        case DRVariant::osdr:
            return "osdr";
        case DRVariant::jsdr:
            return "jsdr";
        case DRVariant::fdr:
            return "fdr";
        case DRVariant::mdr:
            return "mdr";
        }
        return "unknown";
    }

    DRVariant parse_dr_variant(std::string_view text)
    {
        std::string lower(text);
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        for (const auto v : {DRVariant::osdr, DRVariant::jsdr, DRVariant::fdr, DRVariant::mdr})
            if (lower == to_string(v))
                return v;
        throw ConfigError("unknown DR variant '" + std::string(text) + "'");
    }

    void DRConfig::validate() const
    {
        if (N < 1)
            throw ConfigError("DR sample count N must be >= 1");
        if (!(sigma0 >= 0.0) || !(joint_sigma >= 0.0))
            throw ConfigError("DR sigmas must be non-negative");
        for (const auto& r : {zeta_s_range, zeta_r_range})
            if (!(r[0] <= r[1]) || r[0] < 0.0 || r[1] > 1.0)
                throw ConfigError("DR friction ranges must satisfy 0 <= min <= max <= 1");
        for (const double z : {zeta_s_nominal, zeta_r_nominal})
            if (!(z >= 0.0 && z <= 1.0))
                throw ConfigError("DR nominal friction coefficients must lie in [0, 1]");
    }

    std::uint64_t trajectory_id(const Trajectory& traj)
    {
        std::uint64_t h = hash_bytes(traj.waypoints.data(), sizeof(double) * static_cast<std::size_t>(traj.waypoints.size()));
        const std::int64_t dims[3] = {traj.waypoints.rows(), traj.waypoints.cols(), traj.close_step};
        return hash_bytes(dims, sizeof(dims), h);
    }

    NoiseModel dr_noise_model(const DRConfig& cfg, std::uint64_t traj_id, int sample)
    {
        NoiseModel noise;
        noise.object_pose_sigma = cfg.sigma0;
        noise.joint_sigma = cfg.joint_sigma;
        noise.zeta_s_range = cfg.zeta_s_range;
        noise.zeta_r_range = cfg.zeta_r_range;
        noise.pose_enabled = cfg.variant == DRVariant::osdr || cfg.variant == DRVariant::mdr;
        noise.joint_enabled = cfg.variant == DRVariant::jsdr || cfg.variant == DRVariant::mdr;
        noise.friction_enabled = cfg.variant == DRVariant::fdr || cfg.variant == DRVariant::mdr;
        noise.seed = mix_seed({cfg.master_seed, traj_id, static_cast<std::uint64_t>(sample)});
        return noise;
    }

    SceneConfig with_nominal_friction(const SceneConfig& scene, const DRConfig& cfg)
    {
        SceneConfig out = scene;
        out.object.zeta_s = cfg.zeta_s_nominal;
        out.object.zeta_r = cfg.zeta_r_nominal;
        return out;
    }

    int dr_success_count(const Trajectory& traj, const SceneConfig& scene, const DRConfig& cfg, unsigned workers)
    {
        cfg.validate();
        const SceneConfig nominal = with_nominal_friction(scene, cfg);
        const std::uint64_t id = trajectory_id(traj);
        std::vector<int> hits(static_cast<std::size_t>(cfg.N), 0);
        parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i] = grasp_success(traj, nominal, dr_noise_model(cfg, id, static_cast<int>(i))); });
        int total = 0;
        for (const int h : hits)
            total += h;
        return total;
    }

    double eval_dr_fitness(const Trajectory& traj, const SceneConfig& scene, const DRConfig& cfg, unsigned workers)
    {
        return static_cast<double>(dr_success_count(traj, scene, cfg, workers)) / cfg.N;
    }

} // namespace qdgrasp

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qd.hpp"
#include "rollout.hpp"
#include "scene.hpp"

namespace qdgrasp {

    /// Magnitudes of the hidden biases of a pseudo-real domain at severity 1.
    struct PseudoRealParams {
        std::array<double, 2> zeta_s_range{0.1, 0.4};
        std::array<double, 2> zeta_r_range{0.01, 0.04};
        double sigma0 = 0.005; ///< m, object position bias
        double joint_sigma = 0.002; ///< rad
        double joint_bias_factor = 5.0; ///< joint bias sigma = factor * joint_sigma
        double shape_offset = 0.002; ///< m, uniform in +/- this
        double com_shift_fraction = 0.15; ///< disc radius as a fraction of rho
        double noise_fraction = 0.5; ///< per-rollout sigmas relative to the DR ones
    };

    struct PseudoRealDomain {
        std::uint64_t seed = 0;
        double severity = 0.0;

        // Fixed offsets, already scaled by severity.
        double zeta_s = 0.0;
        double zeta_r = 0.0;
        Vec2 pose_bias = Vec2::Zero();
        Eigen::VectorXd joint_bias;
        double shape_offset = 0.0; ///< applied outward offset, m (negative erodes)
        Vec2 com_shift = Vec2::Zero();

        SceneConfig scene; ///< transformed scene
        NoiseModel noise; ///< per-rollout template; the seed is set per rollout
    };

    /// Throws DomainError when severity lies outside [0, 1].
    PseudoRealDomain make_pseudo_real(const SceneConfig& scene, std::uint64_t seed, double severity, const PseudoRealParams& params = {});

    /// Domains seeded mix_seed(study_seed, i) for i in [0, count).
    std::vector<PseudoRealDomain> make_pseudo_real_set(const SceneConfig& scene, std::uint64_t study_seed, int count, double severity, const PseudoRealParams& params = {});

    /// Seed of rollout `rep` of an elite in a domain.
    std::uint64_t deploy_seed(const PseudoRealDomain& domain, std::uint64_t elite_id, int rep);

    struct EliteDeployment {
        std::uint64_t elite_id = 0;
        std::vector<int> successes; ///< per domain
        int attempts = 0;
        double eta = 0.0;
    };

    std::vector<EliteDeployment> deploy_repertoire(const Repertoire& rep, const std::vector<PseudoRealDomain>& domains, int reps_per_domain, unsigned workers = 1);

    // Statistics.

    /// Regularized incomplete beta I_x(a, b).
    double incomplete_beta(double a, double b, double x);

    /// Two-tailed p-value of Student's t with `df` degrees of freedom.
    double student_t_two_tailed(double t, double df);

    struct Correlation {
        double r = 0.0;
        double p_value = 1.0;
    };

    /// Throws DimensionError for mismatched or short (< 3) inputs and
    /// UndefinedCorrelationError for zero variance.
    Correlation pearson_r(const std::vector<double>& x, const std::vector<double>& y);

    struct TransferRow {
        std::uint64_t elite_id = 0;
        std::string dr_variant;
        double dr_fitness = 0.0;
        double eta = 0.0;
    };

    struct TransferBin {
        int index = 0;
        double lower = 0.0;
        double upper = 0.0;
        int count = 0;
        double mean_fitness = 0.0;
        double mean_eta = 0.0;
    };

    struct TransferReport {
        std::vector<TransferRow> rows;
        std::vector<TransferBin> bins; ///< retained bins only, in fitness order
        int bin_count = 30;
        int min_bin_size = 30;
        std::size_t n = 0;
        double pearson_r = 0.0;
        double p_value = 1.0;
        double slope = 0.0;
        double intercept = 0.0;
        /// Mean eta per deployment domain, when known.
        std::vector<double> domain_eta;
    };

    TransferReport analyze_transfer(const std::vector<double>& fitnesses, const std::vector<double>& etas, int bin_count = 30, int min_bin_size = 30);

    /// Same, keeping the rows in the report.
    TransferReport analyze_transfer(const std::vector<TransferRow>& rows, int bin_count = 30, int min_bin_size = 30);

} // namespace qdgrasp

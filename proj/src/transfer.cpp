#include "qdgrasp/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qdgrasp/errors.hpp"
#include "qdgrasp/parallel.hpp"
#include "qdgrasp/random.hpp"

namespace qdgrasp {

    namespace {

        bool valid_shape(const PolygonObject& object)
        {
            return object.vertices.cols() >= 3 && is_strictly_convex_ccw<double>(object.vertices) && polygon_signed_area<double>(object.vertices) > 0.0
                && contains_strictly<double>(object.vertices, local_com(object));
        }

        /// Largest t in [0, 1] (by bisection) for which apply(t) is valid, given apply(0) is.
        template <typename Apply>
        std::pair<PolygonObject, double> largest_valid(const PolygonObject& base, Apply apply)
        {
            PolygonObject full = apply(1.0);
            if (valid_shape(full))
                return {full, 1.0};
            double lo = 0.0, hi = 1.0;
            for (int i = 0; i < 60; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (valid_shape(apply(mid)))
                    lo = mid;
                else
                    hi = mid;
            }
            if (lo > 0.0)
                return {apply(lo), lo};
            return {base, 0.0};
        }

    } // namespace

    PseudoRealDomain make_pseudo_real(const SceneConfig& scene, std::uint64_t seed, double severity, const PseudoRealParams& params)
    {
        if (!(severity >= 0.0 && severity <= 1.0))
            throw DomainError("severity must lie in [0, 1]");
        validate(scene);
        const int joints = scene.arm.joints();

        PseudoRealDomain d;
        d.seed = seed;
        d.severity = severity;
        d.zeta_s = scene.object.zeta_s;
        d.zeta_r = scene.object.zeta_r;
        d.joint_bias = Eigen::VectorXd::Zero(joints);
        d.scene = scene;
        d.noise = NoiseModel::disabled();
        if (severity == 0.0)
            return d;

        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double s = severity;

        {
            Rng rng(mix_seed({seed, 1}));
            const double ds = params.zeta_s_range[0] + unit(rng) * (params.zeta_s_range[1] - params.zeta_s_range[0]);
            const double dr = params.zeta_r_range[0] + unit(rng) * (params.zeta_r_range[1] - params.zeta_r_range[0]);
            d.zeta_s = scene.object.zeta_s + s * (ds - scene.object.zeta_s);
            d.zeta_r = scene.object.zeta_r + s * (dr - scene.object.zeta_r);
        }
        {
            Rng rng(mix_seed({seed, 2}));
            d.pose_bias.x() = s * params.sigma0 * gauss(rng);
            d.pose_bias.y() = s * params.sigma0 * gauss(rng);
        }
        {
            Rng rng(mix_seed({seed, 3}));
            for (int i = 0; i < joints; ++i)
                d.joint_bias[i] = s * params.joint_bias_factor * params.joint_sigma * gauss(rng);
        }
        double offset, shift_radius, shift_angle;
        {
            Rng rng(mix_seed({seed, 4}));
            offset = s * params.shape_offset * (2.0 * unit(rng) - 1.0);
        }
        {
            Rng rng(mix_seed({seed, 5}));
            shift_radius = s * params.com_shift_fraction * characteristic_length(scene.object) * std::sqrt(unit(rng));
            shift_angle = 2.0 * std::numbers::pi * unit(rng);
        }

        SceneConfig& out = d.scene;
        out.object.zeta_s = d.zeta_s;
        out.object.zeta_r = d.zeta_r;

        // Shape: edge offset, clamped to the largest valid erosion.
        const PolygonObject base = scene.object;
        const auto [shaped, shape_t] = largest_valid(base, [&](double t) {
            PolygonObject o = base;
            o.vertices = offset_polygon<double>(base.vertices, -t * offset);
            o.com_offset = base.com_offset + polygon_centroid<double>(base.vertices) - polygon_centroid<double>(o.vertices);
            return o;
        });
        d.shape_offset = shape_t * offset;

        // COM shift within the (possibly eroded) shape.
        const Vec2 shift = shift_radius * Vec2(std::cos(shift_angle), std::sin(shift_angle));
        const auto [shifted, shift_t] = largest_valid(shaped, [&](double t) {
            PolygonObject o = shaped;
            o.com_offset = shaped.com_offset + t * shift;
            return o;
        });
        d.com_shift = shift_t * shift;
        out.object.vertices = shifted.vertices;
        out.object.com_offset = shifted.com_offset;

        seat_object(out);
        out.object.pose.x += d.pose_bias.x();
        out.object.pose.y += d.pose_bias.y();

        d.noise.object_pose_sigma = s * params.noise_fraction * params.sigma0;
        d.noise.joint_sigma = s * params.noise_fraction * params.joint_sigma;
        d.noise.pose_enabled = true;
        d.noise.joint_enabled = true;
        d.noise.friction_enabled = false;
        d.noise.joint_bias = d.joint_bias;
        return d;
    }

    std::vector<PseudoRealDomain> make_pseudo_real_set(const SceneConfig& scene, std::uint64_t study_seed, int count, double severity, const PseudoRealParams& params)
    {
        if (count < 0)
            throw DomainError("domain count must be non-negative");
        std::vector<PseudoRealDomain> out;
        out.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
            out.push_back(make_pseudo_real(scene, mix_seed({study_seed, static_cast<std::uint64_t>(i)}), severity, params));
        return out;
    }

    std::uint64_t deploy_seed(const PseudoRealDomain& domain, std::uint64_t elite_id, int rep) { return mix_seed({domain.seed, elite_id, static_cast<std::uint64_t>(rep)}); }

    std::vector<EliteDeployment> deploy_repertoire(const Repertoire& rep, const std::vector<PseudoRealDomain>& domains, int reps_per_domain, unsigned workers)
    {
        if (reps_per_domain < 1)
            throw DomainError("reps_per_domain must be >= 1");
        const std::vector<Elite> elites = rep.elites();
        std::vector<EliteDeployment> out(elites.size());
        if (elites.empty())
            return out;

        const std::size_t nd = domains.size();
        const std::size_t per_elite = nd * static_cast<std::size_t>(reps_per_domain);
        std::vector<int> hits(elites.size() * per_elite, 0);
        std::vector<Trajectory> trajs(elites.size());
        // Domains never alter the arm, so one decode serves all of them.
        if (nd > 0)
            for (std::size_t e = 0; e < elites.size(); ++e)
                trajs[e] = decode_genome(elites[e].genome, domains.front().scene);

        parallel_for(hits.size(), workers, [&](std::size_t k) {
            const std::size_t e = k / per_elite;
            const std::size_t rest = k % per_elite;
            const std::size_t di = rest / static_cast<std::size_t>(reps_per_domain);
            const int r = static_cast<int>(rest % static_cast<std::size_t>(reps_per_domain));
            NoiseModel noise = domains[di].noise;
            noise.seed = deploy_seed(domains[di], elites[e].elite_id, r);
            hits[k] = grasp_success(trajs[e], domains[di].scene, noise);
        });

        for (std::size_t e = 0; e < elites.size(); ++e) {
            EliteDeployment& d = out[e];
            d.elite_id = elites[e].elite_id;
            d.successes.assign(nd, 0);
            int total = 0;
            for (std::size_t di = 0; di < nd; ++di)
                for (int r = 0; r < reps_per_domain; ++r) {
                    const int h = hits[e * per_elite + di * static_cast<std::size_t>(reps_per_domain) + static_cast<std::size_t>(r)];
                    d.successes[di] += h;
                    total += h;
                }
            d.attempts = static_cast<int>(per_elite);
            d.eta = per_elite == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(per_elite);
        }
        return out;
    }

    double incomplete_beta(double a, double b, double x)
    {
        if (!(a > 0.0) || !(b > 0.0))
            throw DomainError("incomplete_beta needs a, b > 0");
        if (!(x >= 0.0 && x <= 1.0))
            throw DomainError("incomplete_beta needs x in [0, 1]");
        if (x == 0.0 || x == 1.0)
            return x;

        // Continued fraction, modified Lentz.
        auto fraction = [](double a, double b, double x) {
            constexpr double tiny = 1e-300;
            constexpr double eps = 1e-16;
            double c = 1.0;
            double d = 1.0 - (a + b) * x / (a + 1.0);
            if (std::abs(d) < tiny)
                d = tiny;
            d = 1.0 / d;
            double h = d;
            for (int m = 1; m < 10000; ++m) {
                const double m2 = 2.0 * m;
                double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
                d = 1.0 + num * d;
                c = 1.0 + num / c;
                d = std::abs(d) < tiny ? 1.0 / tiny : 1.0 / d;
                c = std::abs(c) < tiny ? tiny : c;
                h *= d * c;
                num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
                d = 1.0 + num * d;
                c = 1.0 + num / c;
                d = std::abs(d) < tiny ? 1.0 / tiny : 1.0 / d;
                c = std::abs(c) < tiny ? tiny : c;
                const double step = d * c;
                h *= step;
                if (std::abs(step - 1.0) < eps)
                    break;
            }
            return h;
        };

        const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
        if (x < (a + 1.0) / (a + b + 2.0))
            return std::exp(log_front) * fraction(a, b, x) / a;
        return 1.0 - std::exp(log_front) * fraction(b, a, 1.0 - x) / b;
    }

    double student_t_two_tailed(double t, double df)
    {
        if (!(df > 0.0))
            throw DomainError("degrees of freedom must be positive");
        if (std::isinf(t))
            return 0.0;
        return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    }

    Correlation pearson_r(const std::vector<double>& x, const std::vector<double>& y)
    {
        if (x.size() != y.size())
            throw DimensionError("pearson_r needs equal-length inputs");
        const std::size_t n = x.size();
        if (n < 3)
            throw DimensionError("pearson_r needs at least 3 points");

        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
        const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n));
        const Eigen::VectorXd dx = xv.array() - xv.mean();
        const Eigen::VectorXd dy = yv.array() - yv.mean();
        const double sxx = dx.squaredNorm(), syy = dy.squaredNorm();
        if (xv.minCoeff() == xv.maxCoeff() || yv.minCoeff() == yv.maxCoeff() || !(sxx > 0.0) || !(syy > 0.0))
            throw UndefinedCorrelationError("correlation undefined for zero-variance input");

        Correlation c;
        c.r = std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
        const double df = static_cast<double>(n) - 2.0;
        if (std::abs(c.r) >= 1.0) {
            c.p_value = 0.0;
            return c;
        }
        const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
        c.p_value = student_t_two_tailed(t, df);
        return c;
    }

    TransferReport analyze_transfer(const std::vector<double>& fitnesses, const std::vector<double>& etas, int bin_count, int min_bin_size)
    {
        if (fitnesses.size() != etas.size())
            throw DimensionError("analyze_transfer needs equal-length inputs");
        if (fitnesses.size() < 3)
            throw DimensionError("analyze_transfer needs at least 3 points");
        if (bin_count < 1)
            throw DomainError("bin count must be >= 1");

        TransferReport rep;
        rep.bin_count = bin_count;
        rep.min_bin_size = min_bin_size;
        rep.n = fitnesses.size();
        const Correlation c = pearson_r(fitnesses, etas);
        rep.pearson_r = c.r;
        rep.p_value = c.p_value;

        const auto n = static_cast<Eigen::Index>(fitnesses.size());
        const Eigen::Map<const Eigen::VectorXd> x(fitnesses.data(), n);
        const Eigen::Map<const Eigen::VectorXd> y(etas.data(), n);
        const Eigen::VectorXd dx = x.array() - x.mean();
        rep.slope = dx.dot(y.array().matrix() - Eigen::VectorXd::Constant(n, y.mean())) / dx.squaredNorm();
        rep.intercept = y.mean() - rep.slope * x.mean();

        std::vector<int> count(static_cast<std::size_t>(bin_count), 0);
        std::vector<double> sum_f(count.size(), 0.0), sum_e(count.size(), 0.0);
        for (std::size_t i = 0; i < fitnesses.size(); ++i) {
            const double f = std::clamp(fitnesses[i], 0.0, 1.0);
            const auto b = static_cast<std::size_t>(std::min(bin_count - 1, static_cast<int>(std::floor(f * bin_count))));
            ++count[b];
            sum_f[b] += fitnesses[i];
            sum_e[b] += etas[i];
        }
        for (int b = 0; b < bin_count; ++b) {
            const auto k = static_cast<std::size_t>(b);
            if (count[k] == 0 || count[k] < min_bin_size)
                continue;
            TransferBin bin;
            bin.index = b;
            bin.lower = static_cast<double>(b) / bin_count;
            bin.upper = static_cast<double>(b + 1) / bin_count;
            bin.count = count[k];
            bin.mean_fitness = sum_f[k] / count[k];
            bin.mean_eta = sum_e[k] / count[k];
            rep.bins.push_back(bin);
        }
        return rep;
    }

    TransferReport analyze_transfer(const std::vector<TransferRow>& rows, int bin_count, int min_bin_size)
    {
        std::vector<double> f, e;
        for (const auto& r : rows) {
            f.push_back(r.dr_fitness);
            e.push_back(r.eta);
        }
        TransferReport rep = analyze_transfer(f, e, bin_count, min_bin_size);
        rep.rows = rows;
        return rep;
    }

} // namespace qdgrasp

#include "qdgrasp/qd.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "qdgrasp/errors.hpp"
#include "qdgrasp/parallel.hpp"

namespace qdgrasp {

    namespace {

        std::string lowercase(std::string_view text)
        {
            std::string out(text);
            std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            std::replace(out.begin(), out.end(), '-', '_');
            return out;
        }

        int axis_bin(double angle, int bins)
        {
            if (std::isnan(angle))
                return 0;
            const double u = (angle + std::numbers::pi) / (2.0 * std::numbers::pi);
            const double b = std::floor(u * bins);
            return static_cast<int>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
        }

    } // namespace

    BehaviorDescriptor compute_descriptor(const GraspOutcome& outcome, const SceneConfig& scene)
    {
        const Pose2& pose = outcome.object_pose_at_close;
        Vec2 rel = outcome.closest_approach;
        if (!outcome.contacts.empty()) {
            const auto& c = outcome.contacts.front();
            rel = rotation2(-pose.theta) * (c.point - world_com(scene.object, pose));
        }
        BehaviorDescriptor d;
        d.contact_angle = std::atan2(rel.y(), rel.x());
        d.approach_angle = wrap_angle(outcome.approach_angle);
        return d;
    }

    std::string_view to_string(Strategy strategy) { return strategy == Strategy::success_greedy ? "success_greedy" : "fitness_greedy"; }

    std::string_view to_string(FitnessKind kind) { return kind == FitnessKind::stability_energy ? "stability_energy" : "mdr"; }

    Strategy parse_strategy(std::string_view text)
    {
        const std::string s = lowercase(text);
        if (s == "success_greedy" || s == "me_scs")
            return Strategy::success_greedy;
        if (s == "fitness_greedy" || s == "me_fit")
            return Strategy::fitness_greedy;
        throw ConfigError("unknown selection strategy '" + std::string(text) + "'");
    }

    FitnessKind parse_fitness_kind(std::string_view text)
    {
        const std::string s = lowercase(text);
        if (s == "stability_energy")
            return FitnessKind::stability_energy;
        if (s == "mdr")
            return FitnessKind::mdr;
        throw ConfigError("unknown fitness kind '" + std::string(text) + "'");
    }

    std::string_view to_string(InsertResult result)
    {
        switch (result) {
        case InsertResult::inserted:
            return "inserted";
        case InsertResult::replaced:
            return "replaced";
        case InsertResult::rejected:
            return "rejected";
        }
        return "unknown";
    }

    Repertoire::Repertoire(int rows, int cols) : _rows(rows), _cols(cols)
    {
        if (rows < 1 || cols < 1)
            throw DomainError("repertoire grid must have at least one cell per axis");
        _cells.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    }

    std::size_t Repertoire::cell_index(const BehaviorDescriptor& d) const
    {
        return static_cast<std::size_t>(axis_bin(d.contact_angle, _rows)) * static_cast<std::size_t>(_cols) + static_cast<std::size_t>(axis_bin(d.approach_angle, _cols));
    }

    std::size_t Repertoire::size() const
    {
        return static_cast<std::size_t>(std::count_if(_cells.begin(), _cells.end(), [](const auto& c) { return c.has_value(); }));
    }

    std::size_t Repertoire::success_count() const
    {
        return static_cast<std::size_t>(std::count_if(_cells.begin(), _cells.end(), [](const auto& c) { return c && c->success; }));
    }

    std::vector<Elite> Repertoire::elites() const
    {
        std::vector<Elite> out;
        for (const auto& c : _cells)
            if (c)
                out.push_back(*c);
        return out;
    }

    std::optional<std::uint64_t> Repertoire::max_elite_id() const
    {
        std::optional<std::uint64_t> best;
        for (const auto& c : _cells)
            if (c && (!best || c->elite_id > *best))
                best = c->elite_id;
        return best;
    }

    bool Repertoire::operator==(const Repertoire& o) const { return _rows == o._rows && _cols == o._cols && _cells == o._cells && metadata == o.metadata; }

    InsertResult archive_insert(Repertoire& rep, const Elite& cand)
    {
        auto& slot = rep.cell(rep.cell_index(cand.descriptor));
        if (!slot) {
            slot = cand;
            return InsertResult::inserted;
        }
        if (cand.fitness > slot->fitness) {
            slot = cand;
            return InsertResult::replaced;
        }
        return InsertResult::rejected;
    }

    Genome random_genome(Eigen::Index size, Rng& rng)
    {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Genome g{Eigen::VectorXd(size)};
        for (Eigen::Index i = 0; i < size; ++i)
            g.params[i] = unit(rng);
        return g;
    }

    Genome select_parent(const Repertoire& rep, Strategy strategy, Rng& rng, Eigen::Index genome_size)
    {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < rep.cell_count(); ++i) {
            const auto& c = rep.cell(i);
            if (c && (strategy == Strategy::fitness_greedy || c->success))
                pool.push_back(i);
        }
        if (pool.empty())
            return random_genome(genome_size, rng);

        if (strategy == Strategy::success_greedy) {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            return rep.cell(pool[pick(rng)])->genome;
        }

        // Tournament without replacement.
        const std::size_t k = std::min<std::size_t>(tournament_size, pool.size());
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        const Elite* best = nullptr;
        for (std::size_t i = 0; i < k; ++i) {
            const Elite& e = *rep.cell(pool[i]);
            if (!best || e.fitness > best->fitness || (e.fitness == best->fitness && e.elite_id < best->elite_id))
                best = &e;
        }
        return best->genome;
    }

    Genome mutate(const Genome& genome, Rng& rng, double eta, double p_mut)
    {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double power = 1.0 / (eta + 1.0);
        auto perturb = [&](double x) {
            const double u = unit(rng);
            const double delta = u < 0.5 ? std::pow(2.0 * u, power) - 1.0 : 1.0 - std::pow(2.0 * (1.0 - u), power);
            return std::clamp(x + delta, 0.0, 1.0);
        };

        Genome out = genome;
        bool any = false;
        for (Eigen::Index i = 0; i < out.params.size(); ++i) {
            if (unit(rng) < p_mut) {
                out.params[i] = perturb(out.params[i]);
                any = true;
            }
        }
        if (!any && out.params.size() > 0) {
            std::uniform_int_distribution<Eigen::Index> pick(0, out.params.size() - 1);
            const Eigen::Index i = pick(rng);
            out.params[i] = perturb(out.params[i]);
        }
        return out;
    }

    double top_k_mean_fitness(const Repertoire& rep, std::size_t k)
    {
        std::vector<double> f;
        for (const auto& e : rep.elites())
            f.push_back(e.fitness);
        if (f.empty() || k == 0)
            return 0.0;
        k = std::min(k, f.size());
        std::partial_sort(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(k), f.end(), std::greater<>());
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            sum += f[i];
        return sum / static_cast<double>(k);
    }

    Elite evaluate_genome(const Genome& genome, const SceneConfig& scene, FitnessKind kind, const DRConfig& dr, double energy_lambda)
    {
        const Trajectory traj = decode_genome(genome, scene);
        const SceneConfig nominal = with_nominal_friction(scene, dr);
        const GraspOutcome outcome = run_episode(traj, nominal, NoiseModel::disabled());

        Elite e;
        e.genome = genome;
        e.descriptor = compute_descriptor(outcome, nominal);
        e.success = outcome.success;
        e.epsilon = outcome.epsilon;
        e.energy = outcome.energy;
        if (kind == FitnessKind::stability_energy)
            e.fitness = (outcome.success ? outcome.epsilon : -1.0) - energy_lambda * outcome.energy;
        else
            e.fitness = outcome.success ? eval_dr_fitness(traj, nominal, dr) : 0.0;
        return e;
    }

    Repertoire rescore(const Repertoire& rep, const SceneConfig& scene, FitnessKind kind, const DRConfig& dr, double energy_lambda, unsigned workers)
    {
        const std::vector<Elite> old = rep.elites();
        std::vector<Elite> fresh(old.size());
        parallel_for(old.size(), workers, [&](std::size_t i) {
            fresh[i] = evaluate_genome(old[i].genome, scene, kind, dr, energy_lambda);
            fresh[i].elite_id = old[i].elite_id;
        });

        Repertoire out(rep.rows(), rep.cols());
        out.metadata = rep.metadata;
        out.metadata.fitness_kind = kind;
        out.metadata.energy_lambda = energy_lambda;
        out.metadata.dr = dr;
        for (const auto& e : fresh) {
            if (kind == FitnessKind::mdr && !e.success)
                continue;
            archive_insert(out, e);
        }
        return out;
    }

    Repertoire run_map_elites(const SceneConfig& scene, const MapElitesOptions& options, const Repertoire* init_rep)
    {
        if (options.budget < 0)
            throw DomainError("evaluation budget must be non-negative");
        if (options.batch_size < 1)
            throw ConfigError("batch size must be >= 1");
        options.dr.validate();
        validate(scene);

        if (init_rep && options.budget == 0 && init_rep->metadata.fitness_kind == options.fitness_kind)
            return *init_rep;

        Repertoire rep(options.rows, options.cols);
        if (init_rep) {
            rep = init_rep->metadata.fitness_kind == options.fitness_kind
                ? *init_rep
                : rescore(*init_rep, scene, options.fitness_kind, options.dr, options.energy_lambda, options.workers);
        }
        rep.metadata.scene = scene.name;
        rep.metadata.seed = options.seed;
        rep.metadata.fitness_kind = options.fitness_kind;
        rep.metadata.energy_lambda = options.energy_lambda;
        rep.metadata.dr = options.dr;
        if (options.strategy == Strategy::success_greedy) {
            rep.metadata.budget_stage1 = options.budget;
            rep.metadata.stage = "me-scs";
        }
        else {
            rep.metadata.budget_stage2 = options.budget;
            rep.metadata.stage = "me-fit";
        }

        const Eigen::Index gsize = genome_size(scene.arm);
        Rng rng(mix_seed({options.seed, 0x4d41502d454cULL}));
        std::uint64_t next_id = init_rep && init_rep->max_elite_id() ? *init_rep->max_elite_id() + 1 : 0;

        std::int64_t evaluations = 0;
        std::int64_t generation = 0;
        while (evaluations < options.budget) {
            const auto n = static_cast<std::size_t>(std::min<std::int64_t>(options.batch_size, options.budget - evaluations));
            std::vector<Genome> genomes;
            genomes.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                genomes.push_back(mutate(select_parent(rep, options.strategy, rng, gsize), rng));

            std::vector<Elite> batch(n);
            parallel_for(n, options.workers,
                [&](std::size_t i) { batch[i] = evaluate_genome(genomes[i], scene, options.fitness_kind, options.dr, options.energy_lambda); });

            for (auto& cand : batch) {
                cand.elite_id = next_id++;
                ++evaluations;
                const std::size_t cell = rep.cell_index(cand.descriptor);
                InsertionEvent ev;
                ev.evaluation = evaluations;
                ev.cell = cell;
                ev.candidate_fitness = cand.fitness;
                if (rep.cell(cell))
                    ev.previous_fitness = rep.cell(cell)->fitness;
                ev.result = options.fitness_kind == FitnessKind::mdr && !cand.success ? InsertResult::rejected : archive_insert(rep, cand);
                if (options.on_insert)
                    options.on_insert(ev);
            }

            ++generation;
            if (options.on_progress) {
                ProgressEntry p;
                p.generation = generation;
                p.evaluations = evaluations;
                p.archive_size = rep.size();
                p.successes = rep.success_count();
                p.best_fitness = top_k_mean_fitness(rep, 1);
                p.top5_mean_fitness = top_k_mean_fitness(rep, 5);
                options.on_progress(p);
            }
        }
        return rep;
    }

    Repertoire robustify(const Repertoire& stage1, const SceneConfig& scene, const TrMeOptions& options)
    {
        Repertoire successful(stage1.rows(), stage1.cols());
        successful.metadata = stage1.metadata;
        for (const auto& e : stage1.elites())
            if (e.success)
                archive_insert(successful, e);

        const std::int64_t budget1 = stage1.metadata.budget_stage1;
        if (successful.empty()) {
            Repertoire out(stage1.rows(), stage1.cols());
            out.metadata = stage1.metadata;
            out.metadata.scene = scene.name;
            out.metadata.seed = options.seed;
            out.metadata.fitness_kind = FitnessKind::mdr;
            out.metadata.dr = options.dr;
            out.metadata.energy_lambda = options.energy_lambda;
            out.metadata.budget_stage1 = budget1;
            out.metadata.budget_stage2 = options.budget_stage2;
            out.metadata.stage = "tr-me";
            out.metadata.no_successes = true;
            return out;
        }

        const Repertoire seeded = rescore(successful, scene, FitnessKind::mdr, options.dr, options.energy_lambda, options.workers);

        MapElitesOptions me;
        me.strategy = Strategy::fitness_greedy;
        me.fitness_kind = FitnessKind::mdr;
        me.budget = options.budget_stage2;
        me.seed = mix_seed({options.seed, 2});
        me.dr = options.dr;
        me.energy_lambda = options.energy_lambda;
        me.workers = options.workers;
        me.rows = stage1.rows();
        me.cols = stage1.cols();
        me.on_progress = options.on_progress_stage2;

        Repertoire out = run_map_elites(scene, me, &seeded);
        out.metadata.scene = scene.name;
        out.metadata.seed = options.seed;
        out.metadata.fitness_kind = FitnessKind::mdr;
        out.metadata.dr = options.dr;
        out.metadata.energy_lambda = options.energy_lambda;
        out.metadata.budget_stage1 = budget1;
        out.metadata.budget_stage2 = options.budget_stage2;
        out.metadata.stage = "tr-me";
        out.metadata.no_successes = false;
        return out;
    }

    Repertoire run_tr_me(const SceneConfig& scene, const TrMeOptions& options, Repertoire* stage1_out)
    {
        if (options.budget_stage1 < 0 || options.budget_stage2 < 0)
            throw DomainError("stage budgets must be non-negative");
        MapElitesOptions me;
        me.strategy = Strategy::success_greedy;
        me.fitness_kind = FitnessKind::stability_energy;
        me.budget = options.budget_stage1;
        me.seed = options.seed;
        me.dr = options.dr;
        me.energy_lambda = options.energy_lambda;
        me.workers = options.workers;
        me.on_progress = options.on_progress_stage1;
        const Repertoire stage1 = run_map_elites(scene, me);
        if (stage1_out)
            *stage1_out = stage1;
        return robustify(stage1, scene, options);
    }

} // namespace qdgrasp

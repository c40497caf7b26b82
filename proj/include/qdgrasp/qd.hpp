#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drfitness.hpp"
#include "random.hpp"
#include "rollout.hpp"
#include "scene.hpp"

namespace qdgrasp {

    struct BehaviorDescriptor {
        double contact_angle = 0.0; ///< bearing of the first contact around the COM, object frame
        double approach_angle = 0.0; ///< gripper orientation relative to the object at close

        bool operator==(const BehaviorDescriptor&) const = default;
    };

    /// Falls back to the bearing of the gripper's closest approach when the
    /// outcome has no contacts.
    BehaviorDescriptor compute_descriptor(const GraspOutcome& outcome, const SceneConfig& scene);

    struct Elite {
        Genome genome;
        BehaviorDescriptor descriptor;
        double fitness = 0.0;
        bool success = false;
        double epsilon = 0.0;
        double energy = 0.0;
        std::uint64_t elite_id = 0;

        bool operator==(const Elite&) const = default;
    };

    enum class Strategy { success_greedy, fitness_greedy };
    enum class FitnessKind { stability_energy, mdr };

    std::string_view to_string(Strategy strategy);
    std::string_view to_string(FitnessKind kind);
    /// Throw ConfigError on unknown names.
    Strategy parse_strategy(std::string_view text);
    FitnessKind parse_fitness_kind(std::string_view text);

    struct RepertoireMetadata {
        std::string scene;
        std::uint64_t seed = 0;
        std::int64_t budget_stage1 = 0;
        std::int64_t budget_stage2 = 0;
        std::string stage = "empty";
        FitnessKind fitness_kind = FitnessKind::stability_energy;
        double energy_lambda = 0.01;
        DRConfig dr;
        /// Set when TR-ME stage 1 produced no successful elite.
        bool no_successes = false;

        bool operator==(const RepertoireMetadata&) const = default;
    };

    class Repertoire {
    public:
        explicit Repertoire(int rows = 25, int cols = 25);

        int rows() const { return _rows; }
        int cols() const { return _cols; }

        /// Cell of a descriptor; out-of-range values clamp to the boundary cell.
        std::size_t cell_index(const BehaviorDescriptor& d) const;

        const std::optional<Elite>& cell(std::size_t index) const { return _cells.at(index); }
        std::optional<Elite>& cell(std::size_t index) { return _cells.at(index); }
        std::size_t cell_count() const { return _cells.size(); }

        std::size_t size() const;
        bool empty() const { return size() == 0; }
        std::size_t success_count() const;

        /// Occupied cells in cell order.
        std::vector<Elite> elites() const;

        /// Largest elite_id present, or nothing when empty.
        std::optional<std::uint64_t> max_elite_id() const;

        RepertoireMetadata metadata;

        bool operator==(const Repertoire& o) const;

    private:
        int _rows;
        int _cols;
        std::vector<std::optional<Elite>> _cells;
    };

    enum class InsertResult { inserted, replaced, rejected };

    std::string_view to_string(InsertResult result);

    InsertResult archive_insert(Repertoire& rep, const Elite& cand);

    Genome random_genome(Eigen::Index size, Rng& rng);

    /// Tournament size used by fitness-greedy selection.
    inline constexpr int tournament_size = 8;

    Genome select_parent(const Repertoire& rep, Strategy strategy, Rng& rng, Eigen::Index genome_size);

    /// Polynomial mutation, clipped to [0, 1]. One gene is forced when the
    /// per-gene draws select none.
    Genome mutate(const Genome& genome, Rng& rng, double eta = 15.0, double p_mut = 0.2);

    /// Mean of the k largest fitness values (fewer when the repertoire is smaller).
    double top_k_mean_fitness(const Repertoire& rep, std::size_t k);

    struct ProgressEntry {
        std::int64_t generation = 0;
        std::int64_t evaluations = 0;
        std::size_t archive_size = 0;
        std::size_t successes = 0;
        double best_fitness = 0.0;
        double top5_mean_fitness = 0.0;
    };

    struct InsertionEvent {
        std::int64_t evaluation = 0; ///< 1-based running count
        std::size_t cell = 0;
        InsertResult result = InsertResult::rejected;
        std::optional<double> previous_fitness;
        double candidate_fitness = 0.0;
    };

    struct MapElitesOptions {
        Strategy strategy = Strategy::success_greedy;
        FitnessKind fitness_kind = FitnessKind::stability_energy;
        std::int64_t budget = 0;
        std::uint64_t seed = 0;
        DRConfig dr;
        double energy_lambda = 0.01;
        int batch_size = 32;
        unsigned workers = 1;
        int rows = 25;
        int cols = 25;
        std::function<void(const ProgressEntry&)> on_progress;
        std::function<void(const InsertionEvent&)> on_insert;
    };

    /// Scores a genome. Under `mdr`, candidates failing the unperturbed
    /// rollout are marked unsuccessful and get no DR score (fitness 0).
    Elite evaluate_genome(const Genome& genome, const SceneConfig& scene, FitnessKind kind, const DRConfig& dr, double energy_lambda);

    /// Re-evaluates every elite under `kind`, keeping ids. Under `mdr` only
    /// elites whose unperturbed rollout succeeds are kept.
    Repertoire rescore(const Repertoire& rep, const SceneConfig& scene, FitnessKind kind, const DRConfig& dr, double energy_lambda, unsigned workers = 1);

    /// Batched MAP-Elites. Exactly `budget` candidates are evaluated; init_rep
    /// is re-scored first when its fitness kind differs from the requested one.
    Repertoire run_map_elites(const SceneConfig& scene, const MapElitesOptions& options, const Repertoire* init_rep = nullptr);

    struct TrMeOptions {
        std::int64_t budget_stage1 = 400000;
        std::int64_t budget_stage2 = 20000;
        std::uint64_t seed = 0;
        DRConfig dr;
        double energy_lambda = 0.01;
        unsigned workers = 1;
        std::function<void(const ProgressEntry&)> on_progress_stage1;
        std::function<void(const ProgressEntry&)> on_progress_stage2;
    };

    /// Stage 2 alone: keeps the successful elites of a stage-1 repertoire,
    /// re-scores them with the MDR fitness and runs fitness-greedy MAP-Elites on top.
    Repertoire robustify(const Repertoire& stage1, const SceneConfig& scene, const TrMeOptions& options);

    /// Both stages. When `stage1_out` is given it receives the stage-1 repertoire.
    Repertoire run_tr_me(const SceneConfig& scene, const TrMeOptions& options, Repertoire* stage1_out = nullptr);

} // namespace qdgrasp

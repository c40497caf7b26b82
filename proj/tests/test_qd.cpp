#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "generators.hpp"
#include "qdgrasp/errors.hpp"
#include "qdgrasp/qd.hpp"

using namespace qdgrasp;

namespace {

    constexpr double pi = std::numbers::pi;

    double bin_center(int i, int bins) { return -pi + (i + 0.5) * 2 * pi / bins; }

    Elite make_elite(int row, int col, double fitness, bool success, std::uint64_t id)
    {
        Elite e;
        e.genome.params = Eigen::VectorXd::Constant(1, static_cast<double>(id));
        e.descriptor = {bin_center(row, 25), bin_center(col, 25)};
        e.fitness = fitness;
        e.success = success;
        e.elite_id = id;
        return e;
    }

    double binomial(int n, int k)
    {
        if (k < 0 || k > n)
            return 0.0;
        return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
    }

    MapElitesOptions small_run(std::int64_t budget, std::uint64_t seed)
    {
        MapElitesOptions o;
        o.budget = budget;
        o.seed = seed;
        return o;
    }

    DRConfig cheap_dr()
    {
        DRConfig dr;
        dr.N = 8;
        return dr;
    }

} // namespace

TEST_SUITE("qd")
{
    TEST_CASE("descriptor bearings in the object frame")
    {
        const SceneConfig scene = builtin_scene("square");
        GraspOutcome o;
        o.object_pose_at_close = scene.object.pose;
        const Vec2 com = world_com(scene.object, o.object_pose_at_close);
        ContactD c;
        c.normal = Vec2(-1, 0);
        c.point = com + Vec2(0.02, 0);
        o.contacts = {c};
        CHECK(compute_descriptor(o, scene).contact_angle == doctest::Approx(0.0));
        o.contacts[0].point = com + Vec2(0, -0.02);
        CHECK(compute_descriptor(o, scene).contact_angle == doctest::Approx(-pi / 2));
        o.contacts[0].point = com + Vec2(0, 0.02);
        CHECK(compute_descriptor(o, scene).contact_angle == doctest::Approx(pi / 2));

        // Only the first contact determines the bearing.
        ContactD other = c;
        other.point = com + Vec2(-0.02, 0);
        o.contacts.push_back(other);
        CHECK(compute_descriptor(o, scene).contact_angle == doctest::Approx(pi / 2));
    }

    TEST_CASE("descriptor matches a rotation oracle on random poses")
    {
        const SceneConfig scene = builtin_scene("hexagon");
        std::mt19937_64 rng(17);
        for (int k = 0; k < 500; ++k) {
            GraspOutcome o;
            o.object_pose_at_close = {gen::uniform(rng, -0.2, 0.2), gen::uniform(rng, 0, 0.2), gen::uniform(rng, -pi, pi)};
            o.approach_angle = gen::uniform(rng, -10, 10);
            const Vec2 com = world_com(scene.object, o.object_pose_at_close);
            ContactD c;
            c.point = com + Vec2(gen::uniform(rng, -0.05, 0.05), gen::uniform(rng, -0.05, 0.05));
            c.normal = Vec2(1, 0);
            o.contacts = {c};
            const double th = o.object_pose_at_close.theta;
            const Vec2 d = c.point - com;
            const double lx = std::cos(th) * d.x() + std::sin(th) * d.y();
            const double ly = -std::sin(th) * d.x() + std::cos(th) * d.y();
            const BehaviorDescriptor bd = compute_descriptor(o, scene);
            CHECK(bd.contact_angle == doctest::Approx(std::atan2(ly, lx)).epsilon(1e-12));
            CHECK(bd.approach_angle >= -pi);
            CHECK(bd.approach_angle < pi + 1e-12);
            CHECK(std::abs(std::remainder(bd.approach_angle - o.approach_angle, 2 * pi)) < 1e-9);
        }
    }

    TEST_CASE("descriptor without contacts uses the closest approach")
    {
        const SceneConfig scene = builtin_scene("square");
        GraspOutcome o;
        o.object_pose_at_close = scene.object.pose;
        o.closest_approach = Vec2(-0.1, 0.1);
        CHECK(compute_descriptor(o, scene).contact_angle == doctest::Approx(3 * pi / 4));
    }

    TEST_CASE("grid cells and clamping")
    {
        const Repertoire rep;
        CHECK(rep.rows() == 25);
        CHECK(rep.cols() == 25);
        CHECK(rep.cell_count() == 625);
        CHECK(rep.cell_index({-pi, -pi}) == 0);
        CHECK(rep.cell_index({pi, pi}) == 624);
        CHECK(rep.cell_index({-50, 50}) == 24);
        CHECK(rep.cell_index({50, -50}) == 600);
        for (int i = 0; i < 25; ++i)
            for (int j = 0; j < 25; ++j)
                CHECK(rep.cell_index({bin_center(i, 25), bin_center(j, 25)}) == static_cast<std::size_t>(i * 25 + j));
        CHECK_THROWS_AS(Repertoire(0, 5), DomainError);
    }

    TEST_CASE("archive insertion rules")
    {
        Repertoire rep;
        CHECK(archive_insert(rep, make_elite(3, 4, 0.5, true, 1)) == InsertResult::inserted);
        CHECK(archive_insert(rep, make_elite(3, 4, 0.5, true, 2)) == InsertResult::rejected);
        CHECK(archive_insert(rep, make_elite(3, 4, 0.4, true, 3)) == InsertResult::rejected);
        CHECK(rep.cell(3 * 25 + 4)->elite_id == 1);
        CHECK(archive_insert(rep, make_elite(3, 4, 0.6, false, 4)) == InsertResult::replaced);
        CHECK(rep.cell(3 * 25 + 4)->elite_id == 4);
        CHECK(archive_insert(rep, make_elite(0, 0, -2.0, false, 5)) == InsertResult::inserted);
        CHECK(rep.size() == 2);
        CHECK(rep.success_count() == 0);
        CHECK(*rep.max_elite_id() == 5);
        CHECK(top_k_mean_fitness(rep, 1) == doctest::Approx(0.6));
        CHECK(top_k_mean_fitness(rep, 5) == doctest::Approx(-0.7));
        CHECK(top_k_mean_fitness(Repertoire(), 5) == 0.0);
        CHECK_FALSE(Repertoire().max_elite_id().has_value());
    }

    TEST_CASE("parent selection from empty or unsuccessful archives is random")
    {
        Rng rng(1);
        const Genome g = select_parent(Repertoire(), Strategy::fitness_greedy, rng, 10);
        CHECK(g.params.size() == 10);
        CHECK(g.params.minCoeff() >= 0.0);
        CHECK(g.params.maxCoeff() <= 1.0);

        Repertoire failures;
        archive_insert(failures, make_elite(1, 1, -1.0, false, 7));
        const Genome h = select_parent(failures, Strategy::success_greedy, rng, 10);
        CHECK(h.params.size() == 10);
        CHECK(select_parent(failures, Strategy::fitness_greedy, rng, 10).params[0] == 7.0);
    }

    TEST_CASE("success-greedy selection is uniform over successful elites")
    {
        Repertoire rep;
        for (int i = 0; i < 10; ++i)
            archive_insert(rep, make_elite(i, i, i * 0.1, i % 2 == 0, static_cast<std::uint64_t>(i)));
        Rng rng(5);
        std::map<int, int> counts;
        const int draws = 10000;
        for (int k = 0; k < draws; ++k)
            ++counts[static_cast<int>(select_parent(rep, Strategy::success_greedy, rng, 1).params[0])];
        CHECK(counts.size() == 5);
        const double sd = std::sqrt(draws * 0.2 * 0.8);
        for (const auto& [id, n] : counts) {
            CHECK(id % 2 == 0);
            CHECK(std::abs(n - draws * 0.2) <= 4 * sd);
        }
    }

    TEST_CASE("tournament selection follows the hypergeometric rank law")
    {
        const int M = 20;
        Repertoire rep;
        for (int i = 0; i < M; ++i)
            archive_insert(rep, make_elite(i, 0, 1.0 - i * 0.01, false, static_cast<std::uint64_t>(i)));
        Rng rng(9);
        std::vector<int> counts(M, 0);
        const int draws = 40000;
        for (int k = 0; k < draws; ++k)
            ++counts[static_cast<std::size_t>(select_parent(rep, Strategy::fitness_greedy, rng, 1).params[0])];
        for (int r = 0; r < M; ++r) {
            // Rank r wins when it is drawn and every better elite is not.
            const double p = binomial(M - r - 1, tournament_size - 1) / binomial(M, tournament_size);
            const double sd = std::sqrt(draws * p * (1 - p));
            CHECK(std::abs(counts[static_cast<std::size_t>(r)] - draws * p) <= 4 * sd + 1);
        }
        CHECK(static_cast<double>(counts[0]) / draws == doctest::Approx(8.0 / M).epsilon(0.05));

        Repertoire small;
        for (int i = 0; i < 5; ++i)
            archive_insert(small, make_elite(i, 0, i * 0.1, false, static_cast<std::uint64_t>(i)));
        for (int k = 0; k < 50; ++k)
            CHECK(select_parent(small, Strategy::fitness_greedy, rng, 1).params[0] == 4.0);

        Repertoire ties;
        archive_insert(ties, make_elite(0, 0, 0.3, false, 9));
        archive_insert(ties, make_elite(1, 0, 0.3, false, 4));
        for (int k = 0; k < 20; ++k)
            CHECK(select_parent(ties, Strategy::fitness_greedy, rng, 1).params[0] == 4.0);
    }

    TEST_CASE("mutation with zero rate changes exactly one gene")
    {
        Rng rng(21);
        const Genome g{Eigen::VectorXd::Constant(10, 0.5)};
        for (int k = 0; k < 500; ++k) {
            const Genome m = mutate(g, rng, 15.0, 0.0);
            CHECK((m.params.array() != g.params.array()).count() == 1);
        }
    }

    TEST_CASE("mutation rate and step distribution")
    {
        Rng rng(23);
        const int L = 100;
        const Genome g{Eigen::VectorXd::Constant(L, 0.5)};
        long changed = 0, large = 0;
        const int trials = 4000;
        for (int k = 0; k < trials; ++k) {
            const Genome m = mutate(g, rng);
            CHECK(m.params.minCoeff() >= 0.0);
            CHECK(m.params.maxCoeff() <= 1.0);
            for (int i = 0; i < L; ++i) {
                const double d = m.params[i] - 0.5;
                if (d != 0.0)
                    ++changed;
                if (d <= -0.1)
                    ++large;
            }
        }
        const double rate = static_cast<double>(changed) / (static_cast<double>(trials) * L);
        CHECK(rate == doctest::Approx(0.2 + std::pow(0.8, L) / L).epsilon(0.05));
        CHECK(std::abs(rate - 0.2) <= 0.01);
        // P(delta <= -t) = (1 - t)^(eta + 1) / 2 for polynomial mutation.
        const double expected = 0.5 * std::pow(0.9, 16);
        const double frac = static_cast<double>(large) / static_cast<double>(changed);
        CHECK(frac == doctest::Approx(expected).epsilon(0.06));

        const Genome edge{Eigen::VectorXd::Constant(L, 1.0)};
        for (int k = 0; k < 200; ++k) {
            const Genome m = mutate(edge, rng, 15.0, 0.5);
            CHECK(m.params.minCoeff() >= 0.0);
            CHECK(m.params.maxCoeff() <= 1.0);
        }
    }

    TEST_CASE("strategy and fitness names")
    {
        CHECK(parse_strategy("success_greedy") == Strategy::success_greedy);
        CHECK(parse_strategy("ME_SCS") == Strategy::success_greedy);
        CHECK(parse_strategy("me_fit") == Strategy::fitness_greedy);
        CHECK(parse_fitness_kind("MDR") == FitnessKind::mdr);
        CHECK(parse_fitness_kind("stability_energy") == FitnessKind::stability_energy);
        CHECK_THROWS_AS(parse_strategy("random"), ConfigError);
        CHECK_THROWS_AS(parse_fitness_kind("epsilon"), ConfigError);
        CHECK(to_string(InsertResult::replaced) == "replaced");
    }

    TEST_CASE("genome evaluation under both fitness kinds")
    {
        const SceneConfig scene = builtin_scene("square");
        const DRConfig dr = cheap_dr();
        const Genome good = gen::pinch_genome(scene);
        const Trajectory t = decode_genome(good, scene);
        const GraspOutcome o = run_episode(t, with_nominal_friction(scene, dr), NoiseModel::disabled());
        REQUIRE(o.success);

        const Elite a = evaluate_genome(good, scene, FitnessKind::stability_energy, dr, 0.01);
        CHECK(a.success);
        CHECK(a.fitness == doctest::Approx(o.epsilon - 0.01 * o.energy).epsilon(1e-14));
        CHECK(a.epsilon == o.epsilon);
        CHECK(a.energy == o.energy);

        const Elite b = evaluate_genome(good, scene, FitnessKind::mdr, dr, 0.01);
        CHECK(b.fitness == eval_dr_fitness(t, scene, dr));
        CHECK(b.descriptor == a.descriptor);

        SceneConfig far = scene;
        far.object.pose.x += 0.5;
        const Elite c = evaluate_genome(good, far, FitnessKind::stability_energy, dr, 0.01);
        CHECK_FALSE(c.success);
        CHECK(c.fitness == doctest::Approx(-1.0 - 0.01 * c.energy).epsilon(1e-14));
        const Elite d = evaluate_genome(good, far, FitnessKind::mdr, dr, 0.01);
        CHECK_FALSE(d.success);
        CHECK(d.fitness == 0.0);
    }

    TEST_CASE("a zero budget returns an empty archive")
    {
        const Repertoire rep = run_map_elites(builtin_scene("square"), small_run(0, 1));
        CHECK(rep.empty());
        CHECK(rep.metadata.scene == "square");
        CHECK(rep.metadata.stage == "me-scs");

        Repertoire seeded;
        seeded.metadata.fitness_kind = FitnessKind::stability_energy;
        archive_insert(seeded, make_elite(2, 2, 0.1, true, 3));
        CHECK(run_map_elites(builtin_scene("square"), small_run(0, 1), &seeded) == seeded);
    }

    TEST_CASE("map-elites spends exactly its budget and logs every insertion")
    {
        const SceneConfig scene = builtin_scene("square");
        MapElitesOptions o = small_run(1000, 3);
        o.batch_size = 32;
        std::vector<InsertionEvent> events;
        std::vector<ProgressEntry> progress;
        o.on_insert = [&](const InsertionEvent& e) { events.push_back(e); };
        o.on_progress = [&](const ProgressEntry& p) { progress.push_back(p); };
        const Repertoire rep = run_map_elites(scene, o);

        REQUIRE(events.size() == 1000);
        REQUIRE(progress.size() == 32);
        CHECK(progress.back().evaluations == 1000);
        std::size_t inserted = 0;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const auto& e = events[i];
            CHECK(e.evaluation == static_cast<std::int64_t>(i + 1));
            if (e.result == InsertResult::inserted) {
                ++inserted;
                CHECK_FALSE(e.previous_fitness.has_value());
            }
            else if (e.result == InsertResult::replaced) {
                CHECK(e.candidate_fitness > *e.previous_fitness);
            }
            else {
                REQUIRE(e.previous_fitness.has_value());
                CHECK(e.candidate_fitness <= *e.previous_fitness);
            }
        }
        CHECK(rep.size() == inserted);
        for (std::size_t i = 1; i < progress.size(); ++i) {
            CHECK(progress[i].archive_size >= progress[i - 1].archive_size);
            CHECK(progress[i].best_fitness >= progress[i - 1].best_fitness);
            CHECK(progress[i].top5_mean_fitness >= progress[i - 1].top5_mean_fitness);
            CHECK(progress[i].generation == progress[i - 1].generation + 1);
        }
        for (const auto& e : rep.elites()) {
            CHECK(e.elite_id < 1000);
            CHECK(rep.cell(rep.cell_index(e.descriptor))->elite_id == e.elite_id);
            const Elite again = evaluate_genome(e.genome, scene, FitnessKind::stability_energy, o.dr, o.energy_lambda);
            CHECK(again.fitness == e.fitness);
            CHECK(again.descriptor == e.descriptor);
        }
        CHECK(rep.metadata.budget_stage1 == 1000);
        CHECK(rep.metadata.seed == 3);
    }

    TEST_CASE("map-elites is deterministic and independent of the worker count")
    {
        const SceneConfig scene = builtin_scene("bar");
        MapElitesOptions o = small_run(600, 8);
        const Repertoire a = run_map_elites(scene, o);
        CHECK(run_map_elites(scene, o) == a);
        o.workers = 4;
        CHECK(run_map_elites(scene, o) == a);
        o.workers = 1;
        o.seed = 9;
        CHECK_FALSE(run_map_elites(scene, o) == a);
    }

    TEST_CASE("mdr map-elites keeps only nominally successful elites")
    {
        const SceneConfig scene = builtin_scene("square");
        MapElitesOptions o = small_run(300, 4);
        o.strategy = Strategy::fitness_greedy;
        o.fitness_kind = FitnessKind::mdr;
        o.dr = cheap_dr();
        Repertoire seed;
        archive_insert(seed, evaluate_genome(gen::pinch_genome(scene), scene, FitnessKind::stability_energy, o.dr, 0.01));
        const Repertoire rep = run_map_elites(scene, o, &seed);
        CHECK(rep.metadata.stage == "me-fit");
        CHECK(rep.metadata.fitness_kind == FitnessKind::mdr);
        REQUIRE_FALSE(rep.empty());
        for (const auto& e : rep.elites()) {
            CHECK(e.success);
            CHECK(e.fitness >= 0.0);
            CHECK(e.fitness <= 1.0);
        }
    }

    TEST_CASE("invalid run options")
    {
        const SceneConfig scene = builtin_scene("square");
        MapElitesOptions o = small_run(-1, 0);
        CHECK_THROWS_AS(run_map_elites(scene, o), DomainError);
        o.budget = 10;
        o.batch_size = 0;
        CHECK_THROWS_AS(run_map_elites(scene, o), ConfigError);
        TrMeOptions t;
        t.budget_stage2 = -5;
        CHECK_THROWS_AS(run_tr_me(scene, t), DomainError);
    }

    TEST_CASE("two-stage run")
    {
        const SceneConfig scene = builtin_scene("square");
        TrMeOptions t;
        t.budget_stage1 = 3000;
        t.budget_stage2 = 0;
        t.seed = 1;
        t.dr = cheap_dr();
        Repertoire stage1;
        const Repertoire zero = run_tr_me(scene, t, &stage1);
        REQUIRE(stage1.success_count() > 0);
        CHECK(stage1.metadata.stage == "me-scs");

        // With no stage-2 budget the result is the re-scored successful subset.
        Repertoire successful;
        for (const auto& e : stage1.elites())
            if (e.success)
                archive_insert(successful, e);
        const Repertoire expected = rescore(successful, scene, FitnessKind::mdr, t.dr, t.energy_lambda);
        CHECK(zero.elites() == expected.elites());
        CHECK(zero.metadata.stage == "tr-me");
        CHECK(zero.metadata.fitness_kind == FitnessKind::mdr);
        CHECK_FALSE(zero.metadata.no_successes);

        t.budget_stage2 = 300;
        std::vector<ProgressEntry> progress;
        t.on_progress_stage2 = [&](const ProgressEntry& p) { progress.push_back(p); };
        const Repertoire full = robustify(stage1, scene, t);
        REQUIRE_FALSE(progress.empty());
        CHECK(progress.back().evaluations == 300);
        for (std::size_t i = 1; i < progress.size(); ++i)
            CHECK(progress[i].top5_mean_fitness >= progress[i - 1].top5_mean_fitness);
        CHECK(top_k_mean_fitness(full, 5) >= top_k_mean_fitness(expected, 5));
        CHECK(full.metadata.budget_stage1 == 3000);
        CHECK(full.metadata.budget_stage2 == 300);
        CHECK(full.size() >= expected.size());
        for (const auto& e : full.elites())
            CHECK(e.success);

        progress.clear();
        CHECK(robustify(stage1, scene, t) == full);
        t.workers = 3;
        CHECK(robustify(stage1, scene, t) == full);

        // New stage-2 elites get ids beyond the stage-1 range.
        std::uint64_t stage1_max = *stage1.max_elite_id();
        bool any_new = false;
        for (const auto& e : full.elites())
            any_new = any_new || e.elite_id > stage1_max;
        CHECK(any_new);
    }

    TEST_CASE("two-stage run flags an archive without successes")
    {
        const SceneConfig scene = builtin_scene("square");
        Repertoire stage1;
        archive_insert(stage1, make_elite(0, 0, -1.0, false, 0));
        stage1.metadata.budget_stage1 = 10;
        TrMeOptions t;
        t.budget_stage2 = 100;
        const Repertoire out = robustify(stage1, scene, t);
        CHECK(out.empty());
        CHECK(out.metadata.no_successes);
        CHECK(out.metadata.stage == "tr-me");
        CHECK(out.metadata.budget_stage1 == 10);
    }

    TEST_CASE("a 50k success-greedy run on the square fills a baseline number of successful cells")
    {
        MapElitesOptions o = small_run(50000, 1);
        const Repertoire rep = run_map_elites(builtin_scene("square"), o);
        // Baseline run: 25 successful cells; frozen with a margin.
        CHECK(rep.success_count() >= 20);
    }
}

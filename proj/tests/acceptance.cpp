// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "generators.hpp"
#include "oracles.hpp"
#include "qdgrasp/drfitness.hpp"
#include "qdgrasp/io.hpp"
#include "qdgrasp/physics.hpp"
#include "qdgrasp/qd.hpp"
#include "qdgrasp/transfer.hpp"

using namespace qdgrasp;
namespace fs = std::filesystem;

namespace {

    constexpr std::uint64_t generation_seed = 1;
    constexpr std::uint64_t study_seed = 99;
    constexpr double severity = 0.7;
    constexpr int domain_count = 10;
    constexpr int reps = 3;

    struct Verdict {
        bool pass = false;
        std::string detail;
    };

    using Clock = std::chrono::steady_clock;

    double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

    std::string fmt(const char* f, auto... args)
    {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, args...);
        return buf;
    }

    std::string slurp(const fs::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    Repertoire successful_subset(const Repertoire& rep)
    {
        Repertoire out(rep.rows(), rep.cols());
        out.metadata = rep.metadata;
        for (const auto& e : rep.elites())
            if (e.success)
                archive_insert(out, e);
        return out;
    }

    double mean_eta(const Repertoire& rep, const std::vector<Elite>& chosen, const std::vector<PseudoRealDomain>& domains)
    {
        Repertoire sub(rep.rows(), rep.cols());
        for (const auto& e : chosen)
            archive_insert(sub, e);
        const auto dep = deploy_repertoire(sub, domains, reps);
        double s = 0.0;
        for (const auto& d : dep)
            s += d.eta;
        return dep.empty() ? 0.0 : s / static_cast<double>(dep.size());
    }

    std::vector<Elite> by_fitness_desc(std::vector<Elite> el)
    {
        std::stable_sort(el.begin(), el.end(), [](const Elite& a, const Elite& b) { return a.fitness > b.fitness || (a.fitness == b.fitness && a.elite_id < b.elite_id); });
        return el;
    }

    // Stage-1 repertoires shared by criteria 5, 6 and 9.
    struct SceneRun {
        SceneConfig scene;
        Repertoire stage1;
        Repertoire successful;
        std::vector<PseudoRealDomain> domains;
    };

    std::map<std::string, SceneRun>& scene_runs()
    {
        static std::map<std::string, SceneRun> runs;
        if (runs.empty()) {
            for (const auto& name : builtin_scene_names()) {
                SceneRun r;
                r.scene = builtin_scene(name);
                MapElitesOptions o;
                o.budget = 50000;
                o.seed = generation_seed;
                r.stage1 = run_map_elites(r.scene, o);
                r.successful = successful_subset(r.stage1);
                r.domains = make_pseudo_real_set(r.scene, study_seed, domain_count, severity);
                runs.emplace(name, std::move(r));
            }
        }
        return runs;
    }

    Verdict criterion1()
    {
        const auto t0 = Clock::now();
        std::mt19937_64 rng(1001);
        int agree = 0, closed = 0;
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int count = trial % 4 == 0 ? 1 : 2;
            const Vec2 com(gen::uniform(rng, -0.2, 0.2), gen::uniform(rng, -0.2, 0.2));
            const double radius = gen::uniform(rng, 0.02, 0.05);
            const double rho = 1.1 * radius;
            const auto contacts = gen::random_contacts(rng, count, com, radius);
            const double torsional = trial % 2 == 0 ? 0.0 : gen::uniform(rng, 0.1, 0.4) * rho;
            const auto ws = build_wrench_set<double>(contacts, gen::uniform(rng, 0.1, 1.0), torsional, rho, com);

            const double eps = force_closure_margin(ws);
            // Closure by linear programming: the grasp resists every signed unit axis wrench.
            bool lp = true;
            for (int axis = 0; axis < 3; ++axis)
                for (double sign : {1.0, -1.0})
                    lp = lp && can_resist_wrench(ws, Eigen::Vector3d(sign * Eigen::Vector3d::Unit(axis)), 1e6);
            const double ref = oracle::support_sampling_margin(ws.wrenches);
            const bool oracle_closed = ref > 1e-9;
            if ((eps > 0.0) == oracle_closed && lp == oracle_closed)
                ++agree;
            if (oracle_closed && eps > 0.0) {
                ++closed;
                worst = std::max(worst, std::abs(eps - ref) / ref);
            }
        }
        const double secs = seconds_since(t0);
        return {agree == 100 && worst <= 1e-3 && secs < 10.0,
                fmt("%d/100 decisions agree, %d closed, max relative epsilon error %.2e, %.1f s", agree, closed, worst, secs)};
    }

    Verdict criterion2()
    {
        const auto t0 = Clock::now();
        std::mt19937_64 rng(2002);
        int exact = 0, checks = 0, partial = 0;
        const auto names = builtin_scene_names();
        for (int k = 0; k < 20; ++k) {
            const SceneConfig scene = builtin_scene(names[static_cast<std::size_t>(k) % names.size()]);
            Genome g = gen::pinch_genome(scene);
            for (Eigen::Index i = 0; i < g.params.size(); ++i)
                g.params[i] = std::clamp(g.params[i] + gen::uniform(rng, -0.04, 0.04), 0.0, 1.0);
            const Trajectory t = decode_genome(g, scene);
            for (const auto v : {DRVariant::osdr, DRVariant::jsdr, DRVariant::fdr, DRVariant::mdr}) {
                DRConfig cfg;
                cfg.variant = v;
                cfg.master_seed = static_cast<std::uint64_t>(k);
                const SceneConfig nominal = with_nominal_friction(scene, cfg);
                int count = 0;
                for (int i = 0; i < cfg.N; ++i)
                    count += grasp_success(t, nominal, dr_noise_model(cfg, trajectory_id(t), i));
                const double f = eval_dr_fitness(t, scene, cfg);
                ++checks;
                // Integer count and the fitness both match; f * N itself can round.
                if (dr_success_count(t, scene, cfg) == count && f == static_cast<double>(count) / cfg.N && std::llround(f * cfg.N) == count)
                    ++exact;
                if (count > 0 && count < cfg.N)
                    ++partial;
            }
        }
        const double secs = seconds_since(t0);
        return {exact == checks && secs < 120.0, fmt("%d/%d exact (%d with 0 < count < N), %.1f s", exact, checks, partial, secs)};
    }

    Verdict criterion3()
    {
        const auto t0 = Clock::now();
        const fs::path dir = fs::temp_directory_path() / ("qdgrasp_acceptance_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        int identical = 0;
        std::string problem;
        for (int seed : {1, 2, 3}) {
            std::string files[2];
            for (int w = 0; w < 2; ++w) {
                const std::string workers = w == 0 ? "1" : "8";
                const fs::path out = dir / ("s" + std::to_string(seed) + "_w" + workers + ".jsonl");
                const std::string cmd = std::string(QDGRASP_CLI) + " generate --budget 5000 --seed " + std::to_string(seed) + " --workers " + workers + " -o " + out.string()
                    + " >/dev/null 2>&1";
                const int status = std::system(cmd.c_str());
                if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
                    problem = "generate failed";
                files[w] = slurp(out);
            }
            if (!files[0].empty() && files[0] == files[1])
                ++identical;
        }
        fs::remove_all(dir);
        const double secs = seconds_since(t0);
        return {identical == 3 && problem.empty() && secs < 300.0, fmt("%d/3 seeds byte-identical at 1 and 8 workers%s, %.1f s", identical, problem.empty() ? "" : " (generate failed)", secs)};
    }

    Verdict criterion4()
    {
        const SceneConfig scene = builtin_scene("square");
        MapElitesOptions o;
        o.budget = 20000;
        o.seed = generation_seed;
        std::vector<std::optional<double>> cell_fitness(625);
        std::int64_t events = 0, decreases = 0, bad_order = 0;
        o.on_insert = [&](const InsertionEvent& e) {
            ++events;
            if (e.evaluation != events)
                ++bad_order;
            if (e.result != InsertResult::rejected) {
                if (cell_fitness[e.cell] && e.candidate_fitness < *cell_fitness[e.cell])
                    ++decreases;
                cell_fitness[e.cell] = e.candidate_fitness;
            }
        };
        std::int64_t reported = 0;
        o.on_progress = [&](const ProgressEntry& p) { reported = p.evaluations; };
        const Repertoire rep = run_map_elites(scene, o);
        std::int64_t mismatched = 0;
        for (std::size_t c = 0; c < rep.cell_count(); ++c) {
            const bool logged = cell_fitness[c].has_value();
            if (logged != rep.cell(c).has_value() || (logged && *cell_fitness[c] != rep.cell(c)->fitness))
                ++mismatched;
        }
        return {decreases == 0 && events == 20000 && reported == 20000 && bad_order == 0 && mismatched == 0,
                fmt("%lld evaluations logged, %lld fitness decreases, %lld cells disagree with the log", static_cast<long long>(events),
                    static_cast<long long>(decreases), static_cast<long long>(mismatched))};
    }

    struct PooledData {
        std::vector<double> fitness[4];
        std::vector<double> eta;
        double top = 0.0, random = 0.0, bottom = 0.0, population = 0.0;
        std::size_t min_successes = 0;
        double secs = 0.0;
    };

    PooledData& pooled()
    {
        static PooledData data;
        static bool ready = false;
        if (ready)
            return data;
        ready = true;
        const auto t0 = Clock::now();
        data.min_successes = static_cast<std::size_t>(-1);
        Rng pick(mix_seed({study_seed, 6}));
        for (auto& [name, run] : scene_runs()) {
            const auto elites = run.successful.elites();
            data.min_successes = std::min(data.min_successes, elites.size());
            const auto dep = deploy_repertoire(run.successful, run.domains, reps);
            std::vector<Elite> by_mdr = elites;
            for (std::size_t i = 0; i < elites.size(); ++i) {
                const Trajectory t = decode_genome(elites[i].genome, run.scene);
                int v = 0;
                for (const auto variant : {DRVariant::osdr, DRVariant::jsdr, DRVariant::fdr, DRVariant::mdr}) {
                    DRConfig cfg;
                    cfg.variant = variant;
                    const double f = eval_dr_fitness(t, run.scene, cfg);
                    data.fitness[v++].push_back(f);
                    if (variant == DRVariant::mdr)
                        by_mdr[i].fitness = f;
                }
                data.eta.push_back(dep[i].eta);
            }
            std::map<std::uint64_t, double> eta_of;
            for (const auto& d : dep)
                eta_of[d.elite_id] = d.eta;
            by_mdr = by_fitness_desc(by_mdr);
            const std::size_t n = by_mdr.size();
            const std::size_t k = std::min<std::size_t>(5, n);
            double top = 0, bottom = 0, random = 0, population = 0;
            for (std::size_t i = 0; i < k; ++i) {
                top += eta_of[by_mdr[i].elite_id] / static_cast<double>(k);
                bottom += eta_of[by_mdr[n - 1 - i].elite_id] / static_cast<double>(k);
            }
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i)
                idx[i] = i;
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> u(i, n - 1);
                std::swap(idx[i], idx[u(pick)]);
                random += eta_of[by_mdr[idx[i]].elite_id] / static_cast<double>(k);
            }
            for (const auto& e : by_mdr)
                population += eta_of[e.elite_id] / static_cast<double>(n);
            data.top += top / 3.0;
            data.bottom += bottom / 3.0;
            data.random += random / 3.0;
            data.population += population / 3.0;
        }
        data.secs = seconds_since(t0);
        return data;
    }

    Verdict criterion5()
    {
        const auto t0 = Clock::now();
        scene_runs();
        const PooledData& d = pooled();
        const char* names[4] = {"osdr", "jsdr", "fdr", "mdr"};
        bool ok = true;
        std::string detail = fmt("n=%zu;", d.eta.size());
        for (int v = 0; v < 4; ++v) {
            const Correlation c = pearson_r(d.fitness[v], d.eta);
            ok = ok && c.r > 0.0 && c.p_value <= 0.01;
            detail += fmt(" %s r=%.3f p=%.2g;", names[v], c.r, c.p_value);
        }
        const double secs = seconds_since(t0);
        return {ok && secs < 1800.0, detail + fmt(" %.1f s", secs)};
    }

    Verdict criterion6()
    {
        const PooledData& d = pooled();
        const bool ok = d.min_successes >= 5 && d.top >= d.random && d.random >= d.bottom && d.top > d.bottom;
        return {ok, fmt("top-5 eta %.3f, random-5 eta %.3f (population mean %.3f), bottom-5 eta %.3f", d.top, d.random, d.population, d.bottom)};
    }

    Verdict criterion7()
    {
        const auto t0 = Clock::now();
        const SceneRun& run = scene_runs().at("square");
        TrMeOptions t;
        t.budget_stage2 = 20000;
        t.seed = generation_seed;
        const Repertoire stage2 = robustify(run.stage1, run.scene, t);
        const auto after = by_fitness_desc(stage2.elites());
        const auto before = by_fitness_desc(run.successful.elites());
        const std::size_t k = 5;
        if (after.size() < k || before.size() < k)
            return {false, "fewer than 5 elites"};
        const double top_mdr = top_k_mean_fitness(stage2, k);
        const double eta_after = mean_eta(stage2, {after.begin(), after.begin() + k}, run.domains);
        const double eta_before = mean_eta(run.successful, {before.begin(), before.begin() + k}, run.domains);
        const double secs = seconds_since(t0);
        return {top_mdr >= 0.95 && eta_after > eta_before,
                fmt("top-5 MDR fitness %.3f, top-5 eta %.3f after vs %.3f before, %.1f s", top_mdr, eta_after, eta_before, secs)};
    }

    Verdict criterion8()
    {
        struct Dataset {
            std::vector<double> x, y;
            double r, p;
        };
        const std::vector<Dataset> sets{
            {{0.3332, 0.6641, 0.8169, 0.2976, 0.6128, 0.7283, 0.8039, 0.8679, 0.9416, 0.0389, 0.5520, 0.9474, 0.3160, 0.7933, 0.4643, 0.6142, 0.5569, 0.1229, 0.5209, 0.2510},
             {0.4770, 0.3971, 0.6911, -0.0306, 0.0021, 0.4281, 0.7143, 0.8566, -0.0510, 0.0325, 0.3381, 0.7598, 0.4675, 0.2368, 0.3254, 0.1664, 0.5207, -0.2274, 0.1419, 0.1075},
             0.55209190793464378486,
             0.011603670160062503606},
            {{0.6086, 0.1486, 0.9425, 0.6894, 0.2742, 0.5793, 0.0826, 0.7500, 0.8923, 0.3503, 0.3098, 0.2886},
             {-0.1904, 0.0402, -0.2255, 0.0216, 0.2573, -0.7219, -0.0765, -0.0028, 0.2287, 0.0655, -0.2679, -0.0278},
             -0.10183766803943687005,
             0.75281716703938441883},
            {{0.7443, 0.4300, 0.0208, 0.0219, 0.6783, 0.9471, 0.0027, 0.4607, 0.9302, 0.4843, 0.1340, 0.2816, 0.4379, 0.6511,
              0.0053, 0.6222, 0.8494, 0.5134, 0.0561, 0.6762, 0.0835, 0.7330, 0.0185, 0.3547, 0.6332, 0.3360, 0.3480, 0.3055,
              0.3666, 0.7051, 0.5801, 0.5556, 0.7392, 0.9444, 0.2471, 0.8854, 0.0499, 0.0130, 0.8516, 0.0467},
             {0.7300, 0.5250, 0.1665, 0.0940, 0.5204, 0.7604, 0.0861, 0.4950, 0.8929, 0.2657, 0.1834, 0.1982, 0.4347, 0.5842,
              0.2720, 0.4748, 0.8184, 0.4667, -0.0012, 0.7535, 0.0879, 0.6689, 0.2146, 0.3556, 0.5840, 0.6552, 0.5450, 0.3996,
              0.2298, 0.7181, 0.7275, 0.4804, 0.7399, 0.9789, 0.2181, 0.6974, -0.1194, 0.1439, 0.9850, 0.3634},
             0.90193863482524664238,
             1.9712978689907854376e-15}};
        double worst_r = 0.0, worst_p = 0.0;
        for (const auto& s : sets) {
            const Correlation c = pearson_r(s.x, s.y);
            worst_r = std::max(worst_r, std::abs(c.r - s.r));
            worst_p = std::max(worst_p, std::abs(c.p_value - s.p) / s.p);
        }

        // Bin sizes 29, 30, 31, 1 and 45 across five bins; only 30, 31 and 45 survive.
        std::vector<double> f, e;
        const std::vector<std::pair<int, int>> layout{{2, 29}, {7, 30}, {11, 31}, {20, 1}, {29, 45}};
        for (const auto& [bin, count] : layout)
            for (int i = 0; i < count; ++i) {
                f.push_back((bin + (i + 0.5) / count) / 30.0);
                e.push_back(0.3 + 0.01 * bin + 0.0001 * i);
            }
        const TransferReport rep = analyze_transfer(f, e);
        std::vector<int> kept;
        for (const auto& b : rep.bins)
            kept.push_back(b.index);
        const bool bins_ok = kept == std::vector<int>{7, 11, 29} && rep.n == f.size();
        return {worst_r <= 1e-9 && worst_p <= 1e-6 && bins_ok,
                fmt("max |r error| %.1e, max relative p error %.1e, retained bins %s", worst_r, worst_p, bins_ok ? "exact" : "wrong")};
    }

    Verdict criterion9()
    {
        std::size_t checked = 0, matched = 0;
        for (auto& [name, run] : scene_runs()) {
            const auto domains = make_pseudo_real_set(run.scene, study_seed, 1, 0.0);
            const auto dep = deploy_repertoire(run.stage1, domains, reps);
            const auto elites = run.stage1.elites();
            for (std::size_t i = 0; i < elites.size(); ++i) {
                const int fc = grasp_success(decode_genome(elites[i].genome, run.scene), run.scene, NoiseModel::disabled());
                ++checked;
                if (dep[i].eta == static_cast<double>(fc) && static_cast<bool>(fc) == elites[i].success)
                    ++matched;
            }
        }
        return {checked > 0 && matched == checked, fmt("%zu/%zu elites reproduce their deterministic outcome", matched, checked)};
    }

    /// Mean eta and MDR correlation of the pooled successful elites across severities.
    void severity_sweep()
    {
        const PooledData& d = pooled();
        for (const double sev : {0.3, 0.5, 0.7, 0.9, 1.0}) {
            std::vector<double> eta;
            for (auto& [name, run] : scene_runs()) {
                const auto dep = deploy_repertoire(run.successful, make_pseudo_real_set(run.scene, study_seed, domain_count, sev), reps);
                for (const auto& x : dep)
                    eta.push_back(x.eta);
            }
            double mean = 0.0;
            for (const double v : eta)
                mean += v / static_cast<double>(eta.size());
            std::string corr = "undefined";
            try {
                const Correlation c = pearson_r(d.fitness[3], eta);
                corr = fmt("r=%.3f p=%.2g", c.r, c.p_value);
            }
            catch (const std::exception&) {
            }
            std::printf("info severity %.1f: mean eta %.3f, mdr %s\n", sev, mean, corr.c_str());
        }
    }

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"force-closure oracle equivalence", criterion1}, {"DR fitness exactness", criterion2},
        {"determinism under parallelism", criterion3},    {"archive invariants", criterion4},
        {"correlation reproduction", criterion5},         {"selection ordering", criterion6},
        {"robustification", criterion7},                  {"statistics correctness", criterion8},
        {"severity-0 identity", criterion9},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        }
        catch (const std::exception& ex) {
            v = {false, std::string("exception: ") + ex.what()};
        }
        failures += v.pass ? 0 : 1;
        std::printf("criterion %zu %s: %s (%s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), v.detail.c_str());
        std::fflush(stdout);
    }
    try {
        severity_sweep();
    }
    catch (const std::exception& ex) {
        std::printf("info severity sweep skipped: %s\n", ex.what());
    }
    return failures == 0 ? 0 : 1;
}

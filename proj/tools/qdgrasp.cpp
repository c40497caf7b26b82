#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qdgrasp/drfitness.hpp"
#include "qdgrasp/errors.hpp"
#include "qdgrasp/io.hpp"
#include "qdgrasp/parallel.hpp"
#include "qdgrasp/qd.hpp"
#include "qdgrasp/transfer.hpp"

using namespace qdgrasp;

namespace {

    constexpr int exit_config = 2;
    constexpr int exit_data = 3;

    /// JSON config files. Top-level keys apply to the active subcommand;
    /// an object keyed by a subcommand name applies to that subcommand.
    class JsonConfig : public CLI::Config {
    public:
        JsonConfig(std::string active, std::set<std::string> subcommands)
            : _active(std::move(active)), _subcommands(std::move(subcommands)) {}

        std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

        std::vector<CLI::ConfigItem> from_config(std::istream& input) const override
        {
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(input);
            }
            catch (const nlohmann::json::exception& ex) {
                throw CLI::ConversionError(std::string("config file is not valid JSON: ") + ex.what());
            }
            if (!doc.is_object())
                throw CLI::ConversionError("config file must hold a JSON object");
            std::vector<CLI::ConfigItem> items;
            for (const auto& [key, value] : doc.items()) {
                if (value.is_object() && _subcommands.count(key)) {
                    if (key != _active)
                        continue;
                    for (const auto& [k, v] : value.items())
                        push(items, k, v);
                }
                else {
                    push(items, key, value);
                }
            }
            return items;
        }

    private:
        void push(std::vector<CLI::ConfigItem>& items, const std::string& key, const nlohmann::json& value) const
        {
            if (value.is_null())
                return;
            CLI::ConfigItem item;
            if (!_active.empty())
                item.parents = {_active};
            item.name = key;
            if (value.is_array())
                for (const auto& v : value)
                    item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(value));
            items.push_back(std::move(item));
        }

        static std::string scalar(const nlohmann::json& v)
        {
            if (v.is_string())
                return v.get<std::string>();
            if (v.is_boolean())
                return v.get<bool>() ? "true" : "false";
            if (v.is_number())
                return v.dump();
            throw CLI::ConversionError("config values must be scalars or arrays of scalars");
        }

        std::string _active;
        std::set<std::string> _subcommands;
    };

    struct DROptions {
        int N = 100;
        double sigma0 = 0.005;
        double joint_sigma = 0.002;
        std::uint64_t dr_seed = 0;

        DRConfig config(DRVariant variant = DRVariant::mdr) const
        {
            DRConfig cfg;
            cfg.variant = variant;
            cfg.N = N;
            cfg.sigma0 = sigma0;
            cfg.joint_sigma = joint_sigma;
            cfg.master_seed = dr_seed;
            cfg.validate();
            return cfg;
        }
    };

    void add_dr_options(CLI::App* sub, DROptions& o)
    {
        sub->add_option("--N", o.N, "DR samples per evaluation")->capture_default_str();
        sub->add_option("--sigma0", o.sigma0, "object position sigma, m")->capture_default_str();
        sub->add_option("--joint-sigma", o.joint_sigma, "joint transition sigma, rad")->capture_default_str();
        sub->add_option("--dr-seed", o.dr_seed, "master seed of the DR sample streams")->capture_default_str();
    }

    CLI::Option* add_workers(CLI::App* sub, unsigned& workers)
    {
        return sub->add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 4096u))->capture_default_str();
    }

    std::set<std::string> subcommand_names(const CLI::App& app)
    {
        std::set<std::string> names;
        for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; }))
            names.insert(s->get_name());
        return names;
    }

    std::string find_active(int argc, char** argv, const std::set<std::string>& names)
    {
        for (int i = 1; i < argc; ++i)
            if (names.count(argv[i]))
                return argv[i];
        return {};
    }

    /// Scene named in the flags, else the one recorded in the repertoire.
    SceneConfig scene_for(const std::string& flag, const Repertoire& rep)
    {
        const std::string name = flag.empty() ? rep.metadata.scene : flag;
        if (name.empty())
            throw ConfigError("no scene given and none recorded in the repertoire");
        return load_scene(name);
    }

    std::vector<Elite> chosen_elites(const Repertoire& rep, bool all)
    {
        std::vector<Elite> out;
        for (const auto& e : rep.elites())
            if (all || e.success)
                out.push_back(e);
        return out;
    }

    Repertoire subset(const Repertoire& rep, bool all)
    {
        Repertoire out(rep.rows(), rep.cols());
        out.metadata = rep.metadata;
        for (const auto& e : rep.elites())
            if (all || e.success)
                out.cell(rep.cell_index(e.descriptor)) = e;
        return out;
    }

    struct ProgressLog {
        std::string text;

        void add(const ProgressEntry& p)
        {
            text += progress_to_json(p);
            text += '\n';
        }
    };

    std::string insertion_to_json(const InsertionEvent& ev)
    {
        nlohmann::json j = {
            {"candidate_fitness", ev.candidate_fitness},
            {"cell", ev.cell},
            {"evaluation", ev.evaluation},
            {"previous_fitness", ev.previous_fitness ? nlohmann::json(*ev.previous_fitness) : nlohmann::json(nullptr)},
            {"result", std::string(to_string(ev.result))},
        };
        return j.dump();
    }

    Genome parse_genome(const std::string& text)
    {
        Genome g;
        std::vector<double> values;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(item, &used));
                if (used != item.size())
                    throw std::invalid_argument(item);
            }
            catch (const std::exception&) {
                throw ConfigError("bad gene '" + item + "'");
            }
        }
        g.params = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        return g;
    }

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quality-diversity grasp repertoires with domain-randomized transfer estimates"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "JSON file supplying any flag; flags override it");

    // generate
    auto* gen = app.add_subcommand("generate", "MAP-Elites repertoire (success-greedy by default)");
    std::string gen_scene = "square";
    std::int64_t gen_budget = 400000;
    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_progress, gen_insertions;
    std::string gen_strategy = "success_greedy";
    std::string gen_fitness = "stability_energy";
    double gen_lambda = 0.01;
    int gen_batch = 32;
    unsigned gen_workers = 1;
    DROptions gen_dr;
    gen->add_option("--scene", gen_scene, "built-in scene name or scene JSON path")->capture_default_str();
    gen->add_option("--budget", gen_budget, "evaluations")->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("-o,--output", gen_out, "repertoire JSONL")->required();
    gen->add_option("--progress", gen_progress, "progress JSONL");
    gen->add_option("--insertions", gen_insertions, "per-evaluation insertion JSONL");
    gen->add_option("--strategy", gen_strategy, "success_greedy | fitness_greedy")->capture_default_str();
    gen->add_option("--fitness", gen_fitness, "stability_energy | mdr")->capture_default_str();
    gen->add_option("--lambda", gen_lambda, "energy weight")->capture_default_str();
    gen->add_option("--batch", gen_batch, "candidates per generation")->check(CLI::PositiveNumber)->capture_default_str();
    add_workers(gen, gen_workers);
    add_dr_options(gen, gen_dr);

    // robustify
    auto* rob = app.add_subcommand("robustify", "Fitness-greedy re-optimization of the successful elites under mixed DR");
    std::string rob_in, rob_out, rob_scene, rob_progress;
    std::int64_t rob_budget = 20000;
    std::uint64_t rob_seed = 0;
    double rob_lambda = 0.01;
    unsigned rob_workers = 1;
    DROptions rob_dr;
    rob->add_option("-i,--input", rob_in, "stage-1 repertoire")->required()->check(CLI::ExistingFile);
    rob->add_option("-o,--output", rob_out, "robustified repertoire")->required();
    rob->add_option("--scene", rob_scene, "defaults to the scene recorded in the repertoire");
    rob->add_option("--budget", rob_budget, "stage-2 evaluations")->check(CLI::NonNegativeNumber)->capture_default_str();
    rob->add_option("--seed", rob_seed)->capture_default_str();
    rob->add_option("--progress", rob_progress, "progress JSONL");
    rob->add_option("--lambda", rob_lambda, "energy weight")->capture_default_str();
    add_workers(rob, rob_workers);
    add_dr_options(rob, rob_dr);

    // score
    auto* sco = app.add_subcommand("score", "Per-elite DR fitness as CSV");
    std::string sco_in, sco_out, sco_scene;
    std::string sco_variant = "mdr";
    bool sco_all = false;
    unsigned sco_workers = 1;
    DROptions sco_dr;
    sco->add_option("-i,--input", sco_in, "repertoire")->required()->check(CLI::ExistingFile);
    sco->add_option("-o,--output", sco_out, "fitness CSV")->required();
    sco->add_option("--scene", sco_scene, "defaults to the scene recorded in the repertoire");
    sco->add_option("--variant", sco_variant, "osdr | jsdr | fdr | mdr | all")->capture_default_str();
    sco->add_flag("--all-elites", sco_all, "include elites that fail in simulation");
    add_workers(sco, sco_workers);
    add_dr_options(sco, sco_dr);

    // deploy
    auto* dep = app.add_subcommand("deploy", "Transfer ratios against pseudo-real domains");
    std::string dep_in, dep_out, dep_scene;
    int dep_domains = 10;
    double dep_severity = 0.7;
    int dep_reps = 3;
    std::uint64_t dep_seed = 0;
    bool dep_all = false;
    unsigned dep_workers = 1;
    dep->add_option("-i,--input", dep_in, "repertoire")->required()->check(CLI::ExistingFile);
    dep->add_option("-o,--output", dep_out, "eta CSV")->required();
    dep->add_option("--scene", dep_scene, "defaults to the scene recorded in the repertoire");
    dep->add_option("--domains", dep_domains)->check(CLI::PositiveNumber)->capture_default_str();
    dep->add_option("--severity", dep_severity)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    dep->add_option("--reps", dep_reps, "rollouts per domain")->check(CLI::PositiveNumber)->capture_default_str();
    dep->add_option("--seed", dep_seed, "study seed")->capture_default_str();
    dep->add_flag("--all-elites", dep_all, "include elites that fail in simulation");
    add_workers(dep, dep_workers);

    // analyze
    auto* ana = app.add_subcommand("analyze", "Correlate DR fitness with transfer ratio");
    std::string ana_fit, ana_eta, ana_out, ana_bins_csv, ana_variant;
    int ana_bins = 30;
    int ana_min = 30;
    ana->add_option("--fit", ana_fit, "fitness CSV")->required()->check(CLI::ExistingFile);
    ana->add_option("--eta", ana_eta, "eta CSV")->required()->check(CLI::ExistingFile);
    ana->add_option("-o,--output", ana_out, "report JSON")->required();
    ana->add_option("--bins-csv", ana_bins_csv, "retained bins CSV");
    ana->add_option("--variant", ana_variant, "variant to use when the fitness CSV holds several");
    ana->add_option("--bins", ana_bins)->check(CLI::PositiveNumber)->capture_default_str();
    ana->add_option("--min-bin", ana_min, "bins with fewer members are discarded")->check(CLI::NonNegativeNumber)->capture_default_str();

    // plot
    auto* plo = app.add_subcommand("plot", "SVG scatter of a transfer report");
    std::string plo_in, plo_out;
    bool plo_points = false;
    plo->add_option("-i,--input", plo_in, "report JSON")->required()->check(CLI::ExistingFile);
    plo->add_option("-o,--output", plo_out, "SVG")->required();
    plo->add_flag("--points", plo_points, "draw every elite as well as the bin means");

    // trace
    auto* tra = app.add_subcommand("trace", "Per-step rollout trace as JSON lines");
    std::string tra_scene, tra_in, tra_genome, tra_variant = "none";
    std::string tra_out = "-";
    std::uint64_t tra_elite = 0;
    int tra_sample = 0;
    DROptions tra_dr;
    tra->add_option("--scene", tra_scene, "defaults to the scene recorded in the repertoire, else square");
    auto* tra_in_opt = tra->add_option("-i,--input", tra_in, "repertoire")->check(CLI::ExistingFile);
    tra->add_option("--elite", tra_elite, "elite_id to replay")->needs(tra_in_opt);
    tra->add_option("--genome", tra_genome, "comma-separated genes")->excludes(tra_in_opt);
    tra->add_option("--variant", tra_variant, "none | osdr | jsdr | fdr | mdr")->capture_default_str();
    tra->add_option("--sample", tra_sample, "DR sample index")->check(CLI::NonNegativeNumber)->capture_default_str();
    tra->add_option("-o,--output", tra_out, "trace JSONL, - for stdout")->capture_default_str();
    add_dr_options(tra, tra_dr);

    app.allow_config_extras(CLI::config_extras_mode::error);
    for (auto* sub : {gen, rob, sco, dep, ana, plo, tra})
        sub->allow_config_extras(CLI::config_extras_mode::error);
    const auto names = subcommand_names(app);
    app.config_formatter(std::make_shared<JsonConfig>(find_active(argc, argv, names), names));

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    try {
        if (gen->parsed()) {
            const SceneConfig scene = load_scene(gen_scene);
            MapElitesOptions opt;
            opt.strategy = parse_strategy(gen_strategy);
            opt.fitness_kind = parse_fitness_kind(gen_fitness);
            opt.budget = gen_budget;
            opt.seed = gen_seed;
            opt.dr = gen_dr.config();
            opt.energy_lambda = gen_lambda;
            opt.batch_size = gen_batch;
            opt.workers = gen_workers;
            ProgressLog progress;
            std::string insertions;
            if (!gen_progress.empty())
                opt.on_progress = [&](const ProgressEntry& p) { progress.add(p); };
            if (!gen_insertions.empty())
                opt.on_insert = [&](const InsertionEvent& ev) { insertions += insertion_to_json(ev) + "\n"; };
            const Repertoire rep = run_map_elites(scene, opt);
            save_repertoire(rep, gen_out);
            if (!gen_progress.empty())
                write_file(gen_progress, progress.text);
            if (!gen_insertions.empty())
                write_file(gen_insertions, insertions);
        }
        else if (rob->parsed()) {
            const Repertoire stage1 = load_repertoire(rob_in);
            const SceneConfig scene = scene_for(rob_scene, stage1);
            TrMeOptions opt;
            opt.budget_stage1 = stage1.metadata.budget_stage1;
            opt.budget_stage2 = rob_budget;
            opt.seed = rob_seed;
            opt.dr = rob_dr.config();
            opt.energy_lambda = rob_lambda;
            opt.workers = rob_workers;
            ProgressLog progress;
            if (!rob_progress.empty())
                opt.on_progress_stage2 = [&](const ProgressEntry& p) { progress.add(p); };
            const Repertoire rep = robustify(stage1, scene, opt);
            if (rep.metadata.no_successes)
                std::cerr << "warning: the input repertoire has no successful elite\n";
            save_repertoire(rep, rob_out);
            if (!rob_progress.empty())
                write_file(rob_progress, progress.text);
        }
        else if (sco->parsed()) {
            const Repertoire rep = load_repertoire(sco_in);
            const SceneConfig scene = scene_for(sco_scene, rep);
            std::vector<DRVariant> variants;
            if (sco_variant == "all")
                variants = {DRVariant::osdr, DRVariant::jsdr, DRVariant::fdr, DRVariant::mdr};
            else
                variants = {parse_dr_variant(sco_variant)};
            const auto elites = chosen_elites(rep, sco_all);
            std::vector<Trajectory> trajs;
            for (const auto& e : elites)
                trajs.push_back(decode_genome(e.genome, scene));
            std::vector<ScoreRow> rows(elites.size() * variants.size());
            parallel_for(rows.size(), sco_workers, [&](std::size_t k) {
                const std::size_t e = k / variants.size();
                const DRConfig cfg = sco_dr.config(variants[k % variants.size()]);
                rows[k] = {elites[e].elite_id, std::string(to_string(cfg.variant)), eval_dr_fitness(trajs[e], scene, cfg), cfg.N};
            });
            write_file(sco_out, scores_to_csv(rows));
        }
        else if (dep->parsed()) {
            const Repertoire rep = load_repertoire(dep_in);
            const SceneConfig scene = scene_for(dep_scene, rep);
            const auto domains = make_pseudo_real_set(scene, dep_seed, dep_domains, dep_severity);
            const auto rows = deploy_repertoire(subset(rep, dep_all), domains, dep_reps, dep_workers);
            write_file(dep_out, deployments_to_csv(rows));
        }
        else if (ana->parsed()) {
            auto scores = scores_from_csv(read_file(ana_fit));
            const auto etas = etas_from_csv(read_file(ana_eta));
            std::set<std::string> present;
            for (const auto& s : scores)
                present.insert(s.variant);
            if (ana_variant.empty() && present.size() > 1)
                throw ConfigError("fitness CSV holds several variants; choose one with --variant");
            std::map<std::uint64_t, double> eta_by_id;
            for (const auto& e : etas)
                if (!eta_by_id.emplace(e.elite_id, e.eta).second)
                    throw ParseError("duplicate elite_id " + std::to_string(e.elite_id) + " in eta CSV", 0);
            std::vector<TransferRow> rows;
            std::set<std::uint64_t> seen;
            for (const auto& s : scores) {
                if (!ana_variant.empty() && s.variant != ana_variant)
                    continue;
                if (!seen.insert(s.elite_id).second)
                    throw ParseError("duplicate elite_id " + std::to_string(s.elite_id) + " in fitness CSV", 0);
                auto it = eta_by_id.find(s.elite_id);
                if (it != eta_by_id.end())
                    rows.push_back({s.elite_id, s.variant, s.fitness, it->second});
            }
            const TransferReport report = analyze_transfer(rows, ana_bins, ana_min);
            write_file(ana_out, report_to_json(report));
            if (!ana_bins_csv.empty())
                write_file(ana_bins_csv, bins_to_csv(report));
        }
        else if (plo->parsed()) {
            SvgOptions opt;
            opt.show_points = plo_points;
            render_scatter_svg(report_from_json(read_file(plo_in)), plo_out, opt);
        }
        else if (tra->parsed()) {
            Genome genome;
            SceneConfig scene;
            if (!tra_in.empty()) {
                const Repertoire rep = load_repertoire(tra_in);
                scene = scene_for(tra_scene, rep);
                bool found = false;
                for (const auto& e : rep.elites())
                    if (e.elite_id == tra_elite) {
                        genome = e.genome;
                        found = true;
                    }
                if (!found)
                    throw ConfigError("no elite with id " + std::to_string(tra_elite));
            }
            else if (!tra_genome.empty()) {
                scene = load_scene(tra_scene.empty() ? "square" : tra_scene);
                genome = parse_genome(tra_genome);
            }
            else {
                throw ConfigError("trace needs --input with --elite, or --genome");
            }
            const Trajectory traj = decode_genome(genome, scene);
            NoiseModel noise;
            SceneConfig run_scene = scene;
            if (tra_variant != "none") {
                const DRConfig cfg = tra_dr.config(parse_dr_variant(tra_variant));
                noise = dr_noise_model(cfg, trajectory_id(traj), tra_sample);
                run_scene = with_nominal_friction(scene, cfg);
            }
            std::string text;
            const GraspOutcome outcome = run_episode(traj, run_scene, noise, [&](const StepTrace& s) { text += trace_to_json(s) + "\n"; });
            text += outcome_to_json(outcome) + "\n";
            if (tra_out == "-")
                std::cout << text;
            else
                write_file(tra_out, text);
        }
    }
    catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return exit_config;
    }
    catch (const DomainError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return exit_config;
    }
    catch (const ParseError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return exit_data;
    }
    catch (const UnsupportedVersionError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return exit_data;
    }
    catch (const DimensionError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return exit_data;
    }
    catch (const UndefinedCorrelationError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return exit_data;
    }
    catch (const PreconditionError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return exit_data;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#include "qdgrasp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qdgrasp/errors.hpp"

namespace qdgrasp {

    using nlohmann::json;

    namespace {

        std::vector<std::string> split_lines(const std::string& text)
        {
            std::vector<std::string> lines;
            std::istringstream in(text);
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                lines.push_back(line);
            }
            return lines;
        }

        std::vector<std::string> split_fields(const std::string& line)
        {
            std::vector<std::string> out;
            std::size_t start = 0;
            while (true) {
                auto comma = line.find(',', start);
                out.push_back(line.substr(start, comma - start));
                if (comma == std::string::npos)
                    break;
                start = comma + 1;
            }
            return out;
        }

        double parse_double(const std::string& s, std::size_t line)
        {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
                throw ParseError("bad number '" + s + "'", line);
            return v;
        }

        template <typename Int>
        Int parse_int(const std::string& s, std::size_t line)
        {
            Int v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw ParseError("bad integer '" + s + "'", line);
            return v;
        }

        json dr_to_json(const DRConfig& dr)
        {
            return {
                {"N", dr.N},
                {"joint_sigma", dr.joint_sigma},
                {"master_seed", dr.master_seed},
                {"sigma0", dr.sigma0},
                {"variant", std::string(to_string(dr.variant))},
                {"zeta_r_nominal", dr.zeta_r_nominal},
                {"zeta_r_range", dr.zeta_r_range},
                {"zeta_s_nominal", dr.zeta_s_nominal},
                {"zeta_s_range", dr.zeta_s_range},
            };
        }

        DRConfig dr_from_json(const json& j)
        {
            DRConfig dr;
            dr.N = j.at("N").get<int>();
            dr.joint_sigma = j.at("joint_sigma").get<double>();
            dr.master_seed = j.at("master_seed").get<std::uint64_t>();
            dr.sigma0 = j.at("sigma0").get<double>();
            dr.variant = parse_dr_variant(j.at("variant").get<std::string>());
            dr.zeta_r_nominal = j.at("zeta_r_nominal").get<double>();
            dr.zeta_r_range = j.at("zeta_r_range").get<std::array<double, 2>>();
            dr.zeta_s_nominal = j.at("zeta_s_nominal").get<double>();
            dr.zeta_s_range = j.at("zeta_s_range").get<std::array<double, 2>>();
            return dr;
        }

        json metadata_to_json(const Repertoire& rep)
        {
            const auto& m = rep.metadata;
            return {
                {"budget_stage1", m.budget_stage1},
                {"budget_stage2", m.budget_stage2},
                {"dr", dr_to_json(m.dr)},
                {"energy_lambda", m.energy_lambda},
                {"fitness_kind", std::string(to_string(m.fitness_kind))},
                {"format_version", repertoire_format_version},
                {"grid", {rep.rows(), rep.cols()}},
                {"no_successes", m.no_successes},
                {"scene", m.scene},
                {"seed", m.seed},
                {"stage", m.stage},
                {"type", "metadata"},
            };
        }

        json elite_to_json(const Elite& e)
        {
            std::vector<double> genome(e.genome.params.data(), e.genome.params.data() + e.genome.params.size());
            return {
                {"descriptor", {e.descriptor.contact_angle, e.descriptor.approach_angle}},
                {"elite_id", e.elite_id},
                {"energy", e.energy},
                {"epsilon", e.epsilon},
                {"fitness", e.fitness},
                {"genome", genome},
                {"success", e.success},
            };
        }

        Elite elite_from_json(const json& j)
        {
            Elite e;
            auto d = j.at("descriptor").get<std::vector<double>>();
            if (d.size() != 2)
                throw DimensionError("descriptor must have 2 entries");
            e.descriptor = {d[0], d[1]};
            e.elite_id = j.at("elite_id").get<std::uint64_t>();
            e.energy = j.at("energy").get<double>();
            e.epsilon = j.at("epsilon").get<double>();
            e.fitness = j.at("fitness").get<double>();
            auto g = j.at("genome").get<std::vector<double>>();
            e.genome.params = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
            for (double v : g)
                if (!(v >= 0.0 && v <= 1.0))
                    throw DomainError("gene outside [0, 1]");
            e.success = j.at("success").get<bool>();
            return e;
        }

        std::string fmt(double v)
        {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", v);
            return buf;
        }

        std::string escape_xml(const std::string& s)
        {
            std::string out;
            for (char c : s) {
                switch (c) {
                case '&': out += "&amp;"; break;
                case '<': out += "&lt;"; break;
                case '>': out += "&gt;"; break;
                case '"': out += "&quot;"; break;
                default: out += c;
                }
            }
            return out;
        }

        std::string short_number(double v)
        {
            char buf[32];
            if (v != 0.0 && std::abs(v) < 1e-3)
                std::snprintf(buf, sizeof buf, "%.2e", v);
            else
                std::snprintf(buf, sizeof buf, "%.3f", v);
            return buf;
        }

    } // namespace

    std::string format_double(double value)
    {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
        (void)ec;
        return std::string(buf, ptr);
    }

    std::string repertoire_to_jsonl(const Repertoire& rep)
    {
        std::string out = metadata_to_json(rep).dump();
        out += '\n';
        for (const auto& e : rep.elites()) {
            out += elite_to_json(e).dump();
            out += '\n';
        }
        return out;
    }

    Repertoire repertoire_from_jsonl(const std::string& text)
    {
        auto lines = split_lines(text);
        std::size_t first = 0;
        while (first < lines.size() && lines[first].empty())
            ++first;
        if (first == lines.size())
            throw ParseError("missing metadata line", 1);

        json meta;
        try {
            meta = json::parse(lines[first]);
        }
        catch (const json::exception& ex) {
            throw ParseError(ex.what(), first + 1);
        }
        if (!meta.is_object() || meta.value("type", "") != "metadata")
            throw ParseError("first line is not a metadata object", first + 1);
        if (!meta.contains("format_version") || !meta["format_version"].is_number_integer())
            throw ParseError("missing format_version", first + 1);
        if (meta["format_version"].get<int>() != repertoire_format_version)
            throw UnsupportedVersionError("unsupported repertoire format_version " + meta["format_version"].dump() + " (expected "
                                          + std::to_string(repertoire_format_version) + ")");

        std::optional<Repertoire> rep;
        try {
            auto grid = meta.at("grid").get<std::array<int, 2>>();
            if (grid[0] < 1 || grid[1] < 1)
                throw DomainError("grid dimensions must be positive");
            rep.emplace(grid[0], grid[1]);
            auto& m = rep->metadata;
            m.budget_stage1 = meta.at("budget_stage1").get<std::int64_t>();
            m.budget_stage2 = meta.at("budget_stage2").get<std::int64_t>();
            m.dr = dr_from_json(meta.at("dr"));
            m.energy_lambda = meta.at("energy_lambda").get<double>();
            m.fitness_kind = parse_fitness_kind(meta.at("fitness_kind").get<std::string>());
            m.no_successes = meta.at("no_successes").get<bool>();
            m.scene = meta.at("scene").get<std::string>();
            m.seed = meta.at("seed").get<std::uint64_t>();
            m.stage = meta.at("stage").get<std::string>();
        }
        catch (const std::exception& ex) {
            throw ParseError(std::string("metadata: ") + ex.what(), first + 1);
        }

        Eigen::Index genome_len = -1;
        for (std::size_t i = first + 1; i < lines.size(); ++i) {
            if (lines[i].empty())
                continue;
            std::size_t line_no = i + 1;
            Elite e;
            try {
                auto j = json::parse(lines[i]);
                if (!j.is_object())
                    throw DomainError("elite line is not an object");
                e = elite_from_json(j);
            }
            catch (const std::exception& ex) {
                throw ParseError(ex.what(), line_no);
            }
            if (genome_len >= 0 && e.genome.params.size() != genome_len)
                throw ParseError("genome length differs from earlier elites", line_no);
            genome_len = e.genome.params.size();
            auto idx = rep->cell_index(e.descriptor);
            if (rep->cell(idx))
                throw ParseError("two elites share cell " + std::to_string(idx), line_no);
            rep->cell(idx) = e;
        }
        return std::move(*rep);
    }

    std::string read_file(const std::string& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw ConfigError("cannot read '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void write_file(const std::string& path, const std::string& content)
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ConfigError("cannot write '" + path + "'");
        out << content;
        if (!out)
            throw ConfigError("write failed for '" + path + "'");
    }

    void save_repertoire(const Repertoire& rep, const std::string& path) { write_file(path, repertoire_to_jsonl(rep)); }

    Repertoire load_repertoire(const std::string& path) { return repertoire_from_jsonl(read_file(path)); }

    std::string scores_to_csv(const std::vector<ScoreRow>& rows)
    {
        std::string out = "elite_id,variant,fitness,N\n";
        for (const auto& r : rows)
            out += std::to_string(r.elite_id) + "," + r.variant + "," + format_double(r.fitness) + "," + std::to_string(r.N) + "\n";
        return out;
    }

    std::vector<ScoreRow> scores_from_csv(const std::string& text)
    {
        auto lines = split_lines(text);
        if (lines.empty() || lines[0] != "elite_id,variant,fitness,N")
            throw ParseError("expected header 'elite_id,variant,fitness,N'", 1);
        std::vector<ScoreRow> rows;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty())
                continue;
            auto f = split_fields(lines[i]);
            if (f.size() != 4)
                throw ParseError("expected 4 fields", i + 1);
            ScoreRow r;
            r.elite_id = parse_int<std::uint64_t>(f[0], i + 1);
            r.variant = f[1];
            r.fitness = parse_double(f[2], i + 1);
            r.N = parse_int<int>(f[3], i + 1);
            rows.push_back(r);
        }
        return rows;
    }

    std::string deployments_to_csv(const std::vector<EliteDeployment>& rows)
    {
        std::string out = "elite_id,eta,successes,attempts\n";
        for (const auto& r : rows) {
            int total = 0;
            for (int s : r.successes)
                total += s;
            out += std::to_string(r.elite_id) + "," + format_double(r.eta) + "," + std::to_string(total) + "," + std::to_string(r.attempts) + "\n";
        }
        return out;
    }

    std::vector<EtaRow> etas_from_csv(const std::string& text)
    {
        auto lines = split_lines(text);
        if (lines.empty() || lines[0].rfind("elite_id,eta", 0) != 0)
            throw ParseError("expected header starting with 'elite_id,eta'", 1);
        std::vector<EtaRow> rows;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty())
                continue;
            auto f = split_fields(lines[i]);
            if (f.size() < 2)
                throw ParseError("expected at least 2 fields", i + 1);
            rows.push_back({parse_int<std::uint64_t>(f[0], i + 1), parse_double(f[1], i + 1)});
        }
        return rows;
    }

    std::string report_to_json(const TransferReport& report)
    {
        json rows = json::array();
        for (const auto& r : report.rows)
            rows.push_back({{"dr_fitness", r.dr_fitness}, {"dr_variant", r.dr_variant}, {"elite_id", r.elite_id}, {"eta", r.eta}});
        json bins = json::array();
        for (const auto& b : report.bins)
            bins.push_back({{"count", b.count}, {"index", b.index}, {"lower", b.lower}, {"mean_eta", b.mean_eta}, {"mean_fitness", b.mean_fitness}, {"upper", b.upper}});
        json j = {
            {"bin_count", report.bin_count},
            {"bins", bins},
            {"domain_eta", report.domain_eta},
            {"intercept", report.intercept},
            {"min_bin_size", report.min_bin_size},
            {"n", report.n},
            {"p_value", report.p_value},
            {"pearson_r", report.pearson_r},
            {"rows", rows},
            {"slope", report.slope},
        };
        return j.dump(2) + "\n";
    }

    TransferReport report_from_json(const std::string& text)
    {
        TransferReport rep;
        try {
            auto j = json::parse(text);
            rep.bin_count = j.at("bin_count").get<int>();
            rep.min_bin_size = j.at("min_bin_size").get<int>();
            rep.n = j.at("n").get<std::size_t>();
            rep.pearson_r = j.at("pearson_r").get<double>();
            rep.p_value = j.at("p_value").get<double>();
            rep.slope = j.at("slope").get<double>();
            rep.intercept = j.at("intercept").get<double>();
            rep.domain_eta = j.value("domain_eta", std::vector<double>{});
            for (const auto& r : j.at("rows"))
                rep.rows.push_back({r.at("elite_id").get<std::uint64_t>(), r.at("dr_variant").get<std::string>(), r.at("dr_fitness").get<double>(),
                                    r.at("eta").get<double>()});
            for (const auto& b : j.at("bins"))
                rep.bins.push_back({b.at("index").get<int>(), b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("count").get<int>(),
                                    b.at("mean_fitness").get<double>(), b.at("mean_eta").get<double>()});
        }
        catch (const json::exception& ex) {
            throw ParseError(std::string("report: ") + ex.what(), 0);
        }
        return rep;
    }

    std::string bins_to_csv(const TransferReport& report)
    {
        std::string out = "bin,lower,upper,count,mean_fitness,mean_eta\n";
        for (const auto& b : report.bins)
            out += std::to_string(b.index) + "," + format_double(b.lower) + "," + format_double(b.upper) + "," + std::to_string(b.count) + ","
                + format_double(b.mean_fitness) + "," + format_double(b.mean_eta) + "\n";
        return out;
    }

    std::string progress_to_json(const ProgressEntry& p)
    {
        json j = {
            {"archive_size", p.archive_size},
            {"best_fitness", p.best_fitness},
            {"evaluations", p.evaluations},
            {"generation", p.generation},
            {"successes", p.successes},
            {"top5_mean_fitness", p.top5_mean_fitness},
        };
        return j.dump();
    }

    std::string trace_to_json(const StepTrace& s)
    {
        auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        const char* phase = s.phase == Phase::reach ? "reach" : s.phase == Phase::close ? "close" : "evaluate";
        json j = {
            {"aperture", s.aperture},
            {"contacts", s.contacts},
            {"gripper", {s.gripper.x, s.gripper.y, s.gripper.theta}},
            {"joint_noise", vec(s.joint_noise)},
            {"joints", vec(s.joints)},
            {"max_penetration", s.max_penetration},
            {"object", {s.object.x, s.object.y, s.object.theta}},
            {"phase", phase},
            {"step", s.step},
            {"type", "step"},
            {"zeta_r", s.zeta_r},
            {"zeta_s", s.zeta_s},
        };
        return j.dump();
    }

    std::string outcome_to_json(const GraspOutcome& o)
    {
        json contacts = json::array();
        for (const auto& c : o.contacts)
            contacts.push_back({{"normal", {c.normal.x(), c.normal.y()}}, {"point", {c.point.x(), c.point.y()}}});
        json j = {
            {"approach_angle", o.approach_angle},
            {"contacts", contacts},
            {"energy", o.energy},
            {"epsilon", o.epsilon},
            {"failure_reason", o.failure_reason ? json(std::string(to_string(*o.failure_reason))) : json(nullptr)},
            {"object_final", {o.object_final_pose.x, o.object_final_pose.y, o.object_final_pose.theta}},
            {"success", o.success},
            {"type", "outcome"},
            {"zeta_r", o.zeta_r},
            {"zeta_s", o.zeta_s},
        };
        return j.dump();
    }

    std::string render_scatter_svg(const TransferReport& report, const SvgOptions& options)
    {
        if (report.n == 0 && report.rows.empty() && report.bins.empty())
            throw PreconditionError("cannot plot an empty transfer report");

        const SvgFrame frame;
        const double W = options.width;
        const double H = options.height;
        const double pw = W - frame.left - frame.right;
        const double ph = H - frame.top - frame.bottom;
        auto px = [&](double x) { return frame.left + x * pw; };
        auto py = [&](double y) { return frame.top + (1.0 - y) * ph; };

        std::string variant;
        for (const auto& r : report.rows) {
            if (variant.empty())
                variant = r.dr_variant;
            else if (variant != r.dr_variant) {
                variant = "mixed";
                break;
            }
        }
        std::transform(variant.begin(), variant.end(), variant.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        std::string xlabel = escape_xml((variant.empty() ? std::string("DR") : variant) + " fitness");

        std::ostringstream s;
        s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << options.height << "\" viewBox=\"0 0 "
          << options.width << " " << options.height << "\">\n";
        s << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << options.width << "\" height=\"" << options.height << "\" fill=\"white\"/>\n";
        s << "<rect class=\"frame\" x=\"" << fmt(frame.left) << "\" y=\"" << fmt(frame.top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
          << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 5; ++i) {
            double t = i / 5.0;
            s << "<line class=\"tick\" x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(t)) << "\" y2=\"" << fmt(py(0) + 5)
              << "\" stroke=\"black\"/>\n";
            s << "<text class=\"tick-label\" x=\"" << fmt(px(t)) << "\" y=\"" << fmt(py(0) + 18) << "\" font-size=\"11\" text-anchor=\"middle\">"
              << fmt(t).substr(0, 3) << "</text>\n";
            s << "<line class=\"tick\" x1=\"" << fmt(px(0) - 5) << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << fmt(px(0)) << "\" y2=\"" << fmt(py(t))
              << "\" stroke=\"black\"/>\n";
            s << "<text class=\"tick-label\" x=\"" << fmt(px(0) - 8) << "\" y=\"" << fmt(py(t) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
              << fmt(t).substr(0, 3) << "</text>\n";
        }
        s << "<text class=\"axis-label\" x=\"" << fmt(px(0.5)) << "\" y=\"" << fmt(H - 12) << "\" font-size=\"13\" text-anchor=\"middle\">" << xlabel
          << "</text>\n";
        s << "<text class=\"axis-label\" x=\"16\" y=\"" << fmt(py(0.5)) << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
          << fmt(py(0.5)) << ")\">transfer ratio</text>\n";

        if (options.show_points) {
            for (const auto& r : report.rows)
                s << "<circle class=\"point\" cx=\"" << fmt(px(std::clamp(r.dr_fitness, 0.0, 1.0))) << "\" cy=\"" << fmt(py(std::clamp(r.eta, 0.0, 1.0)))
                  << "\" r=\"1.5\" fill=\"#9db4d0\" fill-opacity=\"0.6\"/>\n";
        }
        for (const auto& b : report.bins)
            s << "<circle class=\"bin\" cx=\"" << fmt(px(std::clamp(b.mean_fitness, 0.0, 1.0))) << "\" cy=\"" << fmt(py(std::clamp(b.mean_eta, 0.0, 1.0)))
              << "\" r=\"4\" fill=\"#1f4e8c\"/>\n";

        // Regression line clipped to the unit square.
        double x0 = 0.0;
        double x1 = 1.0;
        if (report.slope != 0.0) {
            double xa = (0.0 - report.intercept) / report.slope;
            double xb = (1.0 - report.intercept) / report.slope;
            x0 = std::max(x0, std::min(xa, xb));
            x1 = std::min(x1, std::max(xa, xb));
        }
        else if (report.intercept < 0.0 || report.intercept > 1.0) {
            x1 = x0 - 1.0;
        }
        if (x1 >= x0) {
            double y0 = report.intercept + report.slope * x0;
            double y1 = report.intercept + report.slope * x1;
            s << "<line class=\"regression\" x1=\"" << fmt(px(x0)) << "\" y1=\"" << fmt(py(y0)) << "\" x2=\"" << fmt(px(x1)) << "\" y2=\"" << fmt(py(y1))
              << "\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
        }

        double bx = frame.left + 10;
        double by = frame.top + 10;
        s << "<g class=\"annotation\">\n";
        s << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(by) << "\" width=\"150\" height=\"40\" fill=\"white\" stroke=\"#555555\"/>\n";
        s << "<text x=\"" << fmt(bx + 8) << "\" y=\"" << fmt(by + 16) << "\" font-size=\"12\">r = " << short_number(report.pearson_r) << "</text>\n";
        s << "<text x=\"" << fmt(bx + 8) << "\" y=\"" << fmt(by + 32) << "\" font-size=\"12\">p = " << short_number(report.p_value)
          << ", n = " << report.n << "</text>\n";
        s << "</g>\n";
        s << "</svg>\n";
        return s.str();
    }

    void render_scatter_svg(const TransferReport& report, const std::string& path, const SvgOptions& options)
    {
        write_file(path, render_scatter_svg(report, options));
    }

} // namespace qdgrasp

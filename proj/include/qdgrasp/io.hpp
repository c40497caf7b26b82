#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qd.hpp"
#include "rollout.hpp"
#include "transfer.hpp"

namespace qdgrasp {

    inline constexpr int repertoire_format_version = 1;

    /// JSON lines: a metadata object, then one elite per line in cell order.
    std::string repertoire_to_jsonl(const Repertoire& rep);

    /// Throws UnsupportedVersionError and ParseError (with the 1-based line).
    Repertoire repertoire_from_jsonl(const std::string& text);

    void save_repertoire(const Repertoire& rep, const std::string& path);
    Repertoire load_repertoire(const std::string& path);

    /// Shortest decimal text that parses back to the same double.
    std::string format_double(double value);

    struct ScoreRow {
        std::uint64_t elite_id = 0;
        std::string variant;
        double fitness = 0.0;
        int N = 0;
    };

    std::string scores_to_csv(const std::vector<ScoreRow>& rows);
    std::vector<ScoreRow> scores_from_csv(const std::string& text);

    std::string deployments_to_csv(const std::vector<EliteDeployment>& rows);

    struct EtaRow {
        std::uint64_t elite_id = 0;
        double eta = 0.0;
    };

    std::vector<EtaRow> etas_from_csv(const std::string& text);

    std::string report_to_json(const TransferReport& report);
    TransferReport report_from_json(const std::string& text);
    std::string bins_to_csv(const TransferReport& report);

    std::string progress_to_json(const ProgressEntry& entry);
    std::string trace_to_json(const StepTrace& step);
    std::string outcome_to_json(const GraspOutcome& outcome);

    struct SvgOptions {
        bool show_points = false;
        int width = 480;
        int height = 400;
    };

    /// Plot area geometry shared by the renderer and its tests.
    struct SvgFrame {
        double left = 60.0;
        double top = 20.0;
        double right = 20.0;
        double bottom = 50.0;
    };

    /// Throws PreconditionError on an empty report.
    std::string render_scatter_svg(const TransferReport& report, const SvgOptions& options = {});
    void render_scatter_svg(const TransferReport& report, const std::string& path, const SvgOptions& options = {});

    std::string read_file(const std::string& path);
    void write_file(const std::string& path, const std::string& content);

} // namespace qdgrasp

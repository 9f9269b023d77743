#pragma once

#include "trimine/dataset.hpp"
#include "trimine/eval.hpp"
#include "trimine/losses.hpp"
#include "trimine/mi.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace trimine {

struct SyntheticSpec {
    std::vector<std::size_t> counts{116, 51, 73};
    std::size_t k_in = 64;
    double coupling = 0.8;
    std::uint64_t seed = 0;
    SyntheticOptions options;
};

// Everything one (strategy, seed) run needs besides the data.
struct PipelineConfig {
    double lambda = 0.5;
    double margin = 1.0;
    // Small top share, no random share: the regime where selection favours box regression.
    double p_top = 0.1;
    double p_rand = 0.0;
    MIEstimatorConfig mi;
    std::size_t box_bins = 3;
    BoxFeature box_feature = BoxFeature::Area;
    double test_fraction = 0.2;
    HardMining hard_mining = HardMining::BatchHard;
    TrainingConfig training;
    ProbeConfig probe;
};

struct ExperimentPlan {
    std::optional<std::filesystem::path> embeddings;
    std::optional<std::filesystem::path> annotations;
    std::optional<SyntheticSpec> synthetic; // used when no files are given
    std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<double> sweep_p_top{0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> sweep_p_rand{0.0, 0.1, 0.2, 0.3, 0.4};
    PipelineConfig pipeline;
    std::filesystem::path out_dir; // empty: nothing written
    std::size_t threads = 1;
    bool render_heatmaps = false;
    bool save_checkpoints = false;

    void validate() const;
};

// Fully materialised plan, every default included.
nlohmann::json plan_to_json(const ExperimentPlan& plan);

Dataset resolve_dataset(const ExperimentPlan& plan);

struct RunOutcome {
    Strategy strategy = Strategy::WTL;
    std::uint64_t seed = 0;
    double p_top = 0.0;
    double p_rand = 0.0;
    bool ok = false;
    std::string error;
    ProbeResult probe;
    TrainingReport report;
    std::size_t selected = 0; // TG_MATL mask size on the training split
};

// Split, derive annotations on the training rows, train (unless WTL), probe.
// Library errors are caught and reported through `ok`/`error`.
RunOutcome run_single(const Dataset& dataset, const BoxFeatureMatrix& targets, Strategy strategy,
                      const PipelineConfig& config, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

struct StrategyRow {
    Strategy strategy = Strategy::WTL;
    bool ok = true;
    AggregateResult aggregate;
    std::vector<RunOutcome> runs;
};

struct ComparisonReport {
    nlohmann::json config;
    std::vector<StrategyRow> rows;
};

ComparisonReport run_comparison(const ExperimentPlan& plan);

struct SweepCell {
    double p_top = 0.0;
    double p_rand = 0.0;
    bool ok = true;
    AggregateResult aggregate;
    std::vector<RunOutcome> runs;
};

struct SweepReport {
    nlohmann::json config;
    std::vector<SweepCell> cells; // p_top-major order
};

SweepReport run_sweep(const ExperimentPlan& plan);

struct MIReport {
    nlohmann::json config;
    std::vector<std::string> class_names;
    RelevanceScores scores;
    std::vector<ClassSummary> classes;
};

MIReport build_mi_report(const Dataset& dataset, const PipelineConfig& config);

// Artifact writers. All output is a pure function of the report.
void write_comparison(const ComparisonReport& report, const std::filesystem::path& out_dir);
void write_sweep(const SweepReport& report, const std::filesystem::path& out_dir, bool render_heatmaps);
void write_mi_report(const MIReport& report, const std::filesystem::path& out_dir);

std::string heatmap_svg(const SweepReport& report, bool accuracy_metric);

// Runs task(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task);

} // namespace trimine

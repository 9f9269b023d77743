#include "trimine/experiment.hpp"

#include "trimine/csv.hpp"
#include "trimine/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace trimine {

void ExperimentPlan::validate() const {
    if (strategies.empty()) {
        throw ConfigError("experiment plan needs at least one strategy");
    }
    if (seeds.empty()) {
        throw ConfigError("experiment plan needs at least one seed");
    }
    if (embeddings.has_value() != annotations.has_value()) {
        throw ConfigError("--embeddings and --annotations must be given together");
    }
    if (!embeddings && !synthetic) {
        throw ConfigError("experiment plan needs input files or a synthetic dataset spec");
    }
    for (double p : sweep_p_top) {
        SelectionConfig{p, 0.0, 0}.validate();
    }
    for (double p : sweep_p_rand) {
        SelectionConfig{1.0, p, 0}.validate();
    }
    LossConfig{Strategy::TG_MATL, pipeline.lambda, pipeline.margin, SelectionConfig{pipeline.p_top, pipeline.p_rand, 0}}
        .validate();
    if (pipeline.box_bins < 2) {
        throw ConfigError("--box-bins must be at least 2");
    }
    if (pipeline.mi.bins < 2) {
        throw ConfigError("--bins must be at least 2");
    }
    if (!(pipeline.test_fraction > 0.0 && pipeline.test_fraction < 1.0)) {
        throw ConfigError("--test-fraction must lie in (0, 1)");
    }
}

nlohmann::json plan_to_json(const ExperimentPlan& plan) {
    nlohmann::json j;
    nlohmann::json data;
    if (plan.embeddings) {
        data["embeddings"] = plan.embeddings->string();
        data["annotations"] = plan.annotations->string();
    } else if (plan.synthetic) {
        const auto& s = *plan.synthetic;
        data["synthetic"] = {{"counts", s.counts},
                             {"k_in", s.k_in},
                             {"coupling", s.coupling},
                             {"seed", s.seed},
                             {"class_separation", s.options.class_separation},
                             {"modes_per_class", s.options.modes_per_class},
                             {"latent_scale", s.options.latent_scale},
                             {"embedding_noise", s.options.embedding_noise},
                             {"geometry_signal", s.options.geometry_signal}};
    }
    j["data"] = data;
    std::vector<std::string> strategies;
    for (Strategy s : plan.strategies) {
        strategies.emplace_back(to_string(s));
    }
    j["strategies"] = strategies;
    j["seeds"] = plan.seeds;
    j["sweep"] = {{"p_top", plan.sweep_p_top}, {"p_rand", plan.sweep_p_rand}};

    const PipelineConfig& p = plan.pipeline;
    j["pipeline"] = {
        {"lambda", p.lambda},
        {"margin", p.margin},
        {"p_top", p.p_top},
        {"p_rand", p.p_rand},
        {"mi", {{"bins", p.mi.bins}, {"scheme", p.mi.scheme}, {"log_base", p.mi.base == LogBase::Nats ? "nats" : "bits"}}},
        {"box_labels", {{"feature", std::string(to_string(p.box_feature))}, {"bins", p.box_bins}, {"scheme", "equal_frequency"}}},
        {"box_features", {"width", "height", "area", "squareness"}},
        {"test_fraction", p.test_fraction},
        {"hard_mining", p.hard_mining == HardMining::BatchHard ? "batch-hard" : "hardest-negative"},
        {"distance", "squared_euclidean"},
        {"model", {{"hidden_dim", p.training.hidden_dim}, {"output_dim", p.training.output_dim}, {"activation", "relu"}}},
        {"optimizer",
         {{"name", "adam"},
          {"learning_rate", p.training.adam.learning_rate},
          {"beta1", p.training.adam.beta1},
          {"beta2", p.training.adam.beta2},
          {"epsilon", p.training.adam.epsilon},
          {"epochs", p.training.epochs},
          {"batch_size", p.training.batch_size}}},
        {"probe",
         {{"classifier", "multinomial_logistic_lbfgs"},
          {"classifier_l2", p.probe.classifier.l2},
          {"classifier_max_iterations", p.probe.classifier.max_iterations},
          {"classifier_gradient_tolerance", p.probe.classifier.gradient_tolerance},
          {"regressor", "ridge_normal_equations"},
          {"regressor_l2", p.probe.regressor_l2},
          {"standardize", p.probe.standardize},
          {"r2_aggregate", "mean_over_features"}}},
    };
    return j;
}

Dataset resolve_dataset(const ExperimentPlan& plan) {
    if (plan.embeddings) {
        Dataset ds = load_dataset(*plan.embeddings, *plan.annotations);
        ds.validate();
        return ds;
    }
    if (!plan.synthetic) {
        throw ConfigError("no dataset source configured");
    }
    const auto& s = *plan.synthetic;
    return generate_synthetic(s.counts, s.k_in, s.coupling, s.seed, s.options);
}

RunOutcome run_single(const Dataset& dataset, const BoxFeatureMatrix& targets, Strategy strategy,
                      const PipelineConfig& config, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& checkpoint) {
    RunOutcome outcome;
    outcome.strategy = strategy;
    outcome.seed = seed;
    outcome.p_top = config.p_top;
    outcome.p_rand = config.p_rand;
    try {
        const Split split = stratified_split(dataset.labels, config.test_fraction, seed);
        const Dataset train = dataset.subset(split.train);
        const Dataset test = dataset.subset(split.test);

        DerivedAnnotations derived;
        derived.features = derive_box_features(train);
        derived.box_labels = discretize_box_labels(derived.features, config.box_feature, config.box_bins);

        LossConfig loss;
        loss.strategy = strategy;
        loss.lambda = config.lambda;
        loss.margin = config.margin;
        loss.hard_mining = config.hard_mining;
        std::optional<RelevanceScores> scores;
        if (strategy == Strategy::TG_MATL) {
            loss.selection = SelectionConfig{config.p_top, config.p_rand, seed};
            scores = relevance_scores(derived.features, train.labels, config.mi);
        }
        const Objective objective = build_objective(loss, train, derived, scores ? &*scores : nullptr);
        if (objective.mask()) {
            outcome.selected = objective.mask()->selected_count();
        }

        const TrainedProjection trained = train_projection(objective, config.training, seed);
        outcome.report = trained.report;
        if (checkpoint && trained.model) {
            save_checkpoint(*checkpoint, *trained.model,
                            {{"strategy", std::string(to_string(strategy))}, {"seed", seed}});
        }

        const BoxFeatureMatrix train_targets = targets.subset(split.train);
        const BoxFeatureMatrix test_targets = targets.subset(split.test);
        outcome.probe = run_probes(trained.project(train.embeddings), train.labels, train_targets.normalized,
                                   trained.project(test.embeddings), test.labels, test_targets.normalized,
                                   config.probe, seed);
        outcome.ok = true;
    } catch (const Error& e) {
        outcome.ok = false;
        outcome.error = std::string(e.kind()) + ": " + e.what();
    }
    return outcome;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            task(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

namespace {

std::vector<ProbeResult> successful_probes(const std::vector<RunOutcome>& runs, bool& all_ok) {
    std::vector<ProbeResult> probes;
    all_ok = true;
    for (const auto& run : runs) {
        if (run.ok) {
            probes.push_back(run.probe);
        } else {
            all_ok = false;
        }
    }
    return probes;
}

nlohmann::json summary_json(const MetricSummary& s) {
    return {{"mean", s.mean}, {"std", s.std}};
}

nlohmann::json aggregate_json(const AggregateResult& a) {
    nlohmann::json per_feature = nlohmann::json::array();
    for (const auto& s : a.r2_per_feature) {
        per_feature.push_back(summary_json(s));
    }
    return {{"runs", a.runs}, {"accuracy", summary_json(a.accuracy)}, {"r2", summary_json(a.r2)},
            {"r2_per_feature", per_feature}};
}

nlohmann::json run_json(const RunOutcome& run) {
    nlohmann::json j = {{"strategy", std::string(to_string(run.strategy))},
                        {"seed", run.seed},
                        {"status", run.ok ? "ok" : "failed"}};
    if (run.strategy == Strategy::TG_MATL) {
        j["p_top"] = run.p_top;
        j["p_rand"] = run.p_rand;
        j["selected"] = run.selected;
    }
    if (!run.ok) {
        j["error"] = run.error;
        return j;
    }
    j["accuracy"] = run.probe.accuracy;
    j["r2_mean"] = run.probe.r2_mean;
    j["r2_per_feature"] = run.probe.r2_per_feature;
    j["split_seed"] = run.probe.split_seed;
    j["classifier_converged"] = run.probe.classifier_converged;
    j["zero_variance_targets"] = run.probe.zero_variance_targets;
    j["training"] = {{"steps", run.report.steps},
                     {"empty_batches", run.report.empty_batches},
                     {"skipped_anchors", run.report.skipped_anchors},
                     {"final_epoch_loss", run.report.epoch_loss.empty() ? 0.0 : run.report.epoch_loss.back()}};
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << text;
}

std::string metric_cell(bool ok, double value) {
    return ok ? csv::format(value) : "nan";
}

} // namespace

ComparisonReport run_comparison(const ExperimentPlan& plan) {
    plan.validate();
    const Dataset dataset = resolve_dataset(plan);
    const BoxFeatureMatrix targets = derive_box_features(dataset);

    if (!plan.out_dir.empty()) {
        std::filesystem::create_directories(plan.out_dir);
    }
    const std::size_t per_strategy = plan.seeds.size();
    std::vector<RunOutcome> runs(plan.strategies.size() * per_strategy);
    parallel_for(runs.size(), plan.threads, [&](std::size_t task) {
        const Strategy strategy = plan.strategies[task / per_strategy];
        const std::uint64_t seed = plan.seeds[task % per_strategy];
        std::optional<std::filesystem::path> checkpoint;
        if (plan.save_checkpoints && !plan.out_dir.empty()) {
            checkpoint = plan.out_dir / ("model_" + std::string(to_string(strategy)) + "_seed" + std::to_string(seed) + ".ckpt");
        }
        runs[task] = run_single(dataset, targets, strategy, plan.pipeline, seed, checkpoint);
    });

    ComparisonReport report;
    report.config = plan_to_json(plan);
    for (std::size_t s = 0; s < plan.strategies.size(); ++s) {
        StrategyRow row;
        row.strategy = plan.strategies[s];
        row.runs.assign(runs.begin() + static_cast<std::ptrdiff_t>(s * per_strategy),
                        runs.begin() + static_cast<std::ptrdiff_t>((s + 1) * per_strategy));
        const auto probes = successful_probes(row.runs, row.ok);
        row.aggregate = aggregate(probes);
        report.rows.push_back(std::move(row));
    }
    if (!plan.out_dir.empty()) {
        write_comparison(report, plan.out_dir);
    }
    return report;
}

void write_comparison(const ComparisonReport& report, const std::filesystem::path& out_dir) {
    std::ostringstream table;
    table << "strategy,accuracy_mean,accuracy_std,r2_mean,r2_std\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        const auto& a = row.aggregate;
        table << to_string(row.strategy) << ',' << metric_cell(row.ok, a.accuracy.mean) << ','
              << metric_cell(row.ok, a.accuracy.std) << ',' << metric_cell(row.ok, a.r2.mean) << ','
              << metric_cell(row.ok, a.r2.std) << '\n';
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& run : row.runs) {
            runs.push_back(run_json(run));
        }
        rows.push_back({{"strategy", std::string(to_string(row.strategy))},
                        {"status", row.ok ? "ok" : "failed"},
                        {"aggregate", aggregate_json(a)},
                        {"runs", runs}});
    }
    write_text(out_dir / "comparison.csv", table.str());
    const nlohmann::json doc = {{"artifact", "comparison"}, {"config", report.config}, {"rows", rows}};
    write_text(out_dir / "comparison.json", doc.dump(2) + "\n");
}

SweepReport run_sweep(const ExperimentPlan& plan) {
    plan.validate();
    if (plan.sweep_p_top.empty() || plan.sweep_p_rand.empty()) {
        throw ConfigError("sweep grid must be non-empty");
    }
    const Dataset dataset = resolve_dataset(plan);
    const BoxFeatureMatrix targets = derive_box_features(dataset);
    if (!plan.out_dir.empty()) {
        std::filesystem::create_directories(plan.out_dir);
    }

    const std::size_t cells = plan.sweep_p_top.size() * plan.sweep_p_rand.size();
    const std::size_t per_cell = plan.seeds.size();
    std::vector<RunOutcome> runs(cells * per_cell);
    parallel_for(runs.size(), plan.threads, [&](std::size_t task) {
        const std::size_t cell = task / per_cell;
        PipelineConfig config = plan.pipeline;
        config.p_top = plan.sweep_p_top[cell / plan.sweep_p_rand.size()];
        config.p_rand = plan.sweep_p_rand[cell % plan.sweep_p_rand.size()];
        runs[task] = run_single(dataset, targets, Strategy::TG_MATL, config, plan.seeds[task % per_cell]);
    });

    SweepReport report;
    report.config = plan_to_json(plan);
    report.config["strategies"] = {"tg-matl"};
    for (std::size_t c = 0; c < cells; ++c) {
        SweepCell cell;
        cell.p_top = plan.sweep_p_top[c / plan.sweep_p_rand.size()];
        cell.p_rand = plan.sweep_p_rand[c % plan.sweep_p_rand.size()];
        cell.runs.assign(runs.begin() + static_cast<std::ptrdiff_t>(c * per_cell),
                         runs.begin() + static_cast<std::ptrdiff_t>((c + 1) * per_cell));
        const auto probes = successful_probes(cell.runs, cell.ok);
        cell.aggregate = aggregate(probes);
        report.cells.push_back(std::move(cell));
    }
    if (!plan.out_dir.empty()) {
        write_sweep(report, plan.out_dir, plan.render_heatmaps);
    }
    return report;
}

void write_sweep(const SweepReport& report, const std::filesystem::path& out_dir, bool render_heatmaps) {
    std::ostringstream acc;
    std::ostringstream r2;
    acc << "p_top,p_rand,metric_mean,metric_std,status\n";
    r2 << "p_top,p_rand,metric_mean,metric_std,status\n";
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : report.cells) {
        const char* status = cell.ok ? "ok" : "failed";
        const std::string key = csv::format(cell.p_top) + ',' + csv::format(cell.p_rand) + ',';
        acc << key << metric_cell(cell.ok, cell.aggregate.accuracy.mean) << ','
            << metric_cell(cell.ok, cell.aggregate.accuracy.std) << ',' << status << '\n';
        r2 << key << metric_cell(cell.ok, cell.aggregate.r2.mean) << ',' << metric_cell(cell.ok, cell.aggregate.r2.std)
           << ',' << status << '\n';
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& run : cell.runs) {
            runs.push_back(run_json(run));
        }
        cells.push_back({{"p_top", cell.p_top},
                         {"p_rand", cell.p_rand},
                         {"status", status},
                         {"aggregate", aggregate_json(cell.aggregate)},
                         {"runs", runs}});
    }
    write_text(out_dir / "sweep_accuracy.csv", acc.str());
    write_text(out_dir / "sweep_r2.csv", r2.str());
    const nlohmann::json doc = {{"artifact", "sweep"}, {"config", report.config}, {"cells", cells}};
    write_text(out_dir / "sweep.json", doc.dump(2) + "\n");
    if (render_heatmaps) {
        write_text(out_dir / "sweep_accuracy.svg", heatmap_svg(report, true));
        write_text(out_dir / "sweep_r2.svg", heatmap_svg(report, false));
    }
}

std::string heatmap_svg(const SweepReport& report, bool accuracy_metric) {
    std::vector<double> tops;
    std::vector<double> rands;
    for (const auto& cell : report.cells) {
        if (std::find(tops.begin(), tops.end(), cell.p_top) == tops.end()) tops.push_back(cell.p_top);
        if (std::find(rands.begin(), rands.end(), cell.p_rand) == rands.end()) rands.push_back(cell.p_rand);
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    auto value_of = [&](const SweepCell& cell) {
        return accuracy_metric ? cell.aggregate.accuracy.mean : cell.aggregate.r2.mean;
    };
    for (const auto& cell : report.cells) {
        if (cell.ok) {
            lo = std::min(lo, value_of(cell));
            hi = std::max(hi, value_of(cell));
        }
    }
    constexpr int kCell = 64;
    constexpr int kLeft = 80;
    constexpr int kTop = 40;
    const int width = kLeft + kCell * static_cast<int>(rands.size()) + 20;
    const int height = kTop + kCell * static_cast<int>(tops.size()) + 50;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"13\">TG-MATL "
        << (accuracy_metric ? "accuracy" : "box R²") << " (mean over seeds)</text>\n";
    for (const auto& cell : report.cells) {
        const auto row = std::find(tops.begin(), tops.end(), cell.p_top) - tops.begin();
        const auto col = std::find(rands.begin(), rands.end(), cell.p_rand) - rands.begin();
        const int x = kLeft + kCell * static_cast<int>(col);
        const int y = kTop + kCell * static_cast<int>(row);
        std::string fill = "#cccccc";
        std::string label = "failed";
        if (cell.ok) {
            const double t = hi > lo ? (value_of(cell) - lo) / (hi - lo) : 0.5;
            // Dark blue to yellow.
            const int r = static_cast<int>(std::lround(68 + t * (253 - 68)));
            const int g = static_cast<int>(std::lround(1 + t * (231 - 1)));
            const int b = static_cast<int>(std::lround(84 + t * (37 - 84)));
            std::ostringstream color;
            color << "rgb(" << r << ',' << g << ',' << b << ')';
            fill = color.str();
            std::ostringstream text;
            text.precision(3);
            text << std::fixed << value_of(cell);
            label = text.str();
        }
        svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\"" << kCell
            << "\" fill=\"" << fill << "\" stroke=\"white\"/>\n";
        svg << "<text x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4
            << "\" text-anchor=\"middle\" fill=\"" << (cell.ok && hi > lo && value_of(cell) > (lo + hi) / 2 ? "black" : "white")
            << "\">" << label << "</text>\n";
    }
    for (std::size_t r = 0; r < tops.size(); ++r) {
        svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << kTop + kCell * static_cast<int>(r) + kCell / 2 + 4
            << "\" text-anchor=\"end\">" << csv::format(tops[r]) << "</text>\n";
    }
    for (std::size_t c = 0; c < rands.size(); ++c) {
        svg << "<text x=\"" << kLeft + kCell * static_cast<int>(c) + kCell / 2 << "\" y=\""
            << kTop + kCell * static_cast<int>(tops.size()) + 16 << "\" text-anchor=\"middle\">" << csv::format(rands[c])
            << "</text>\n";
    }
    svg << "<text x=\"" << kLeft + kCell * static_cast<int>(rands.size()) / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\">p_rand</text>\n";
    svg << "<text x=\"12\" y=\"" << kTop + kCell * static_cast<int>(tops.size()) / 2 << "\">p_top</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

MIReport build_mi_report(const Dataset& dataset, const PipelineConfig& config) {
    MIReport report;
    report.class_names = dataset.class_names;
    const BoxFeatureMatrix features = derive_box_features(dataset);
    report.scores = relevance_scores(features, dataset.labels, config.mi);
    report.classes = per_class_mi_summary(report.scores, dataset.labels);
    report.config = {{"mi", {{"bins", config.mi.bins}, {"scheme", config.mi.scheme},
                             {"log_base", config.mi.base == LogBase::Nats ? "nats" : "bits"}}},
                     {"box_features", {"width", "height", "area", "squareness"}},
                     {"std", "population"}};
    return report;
}

void write_mi_report(const MIReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream table;
    table << "class,count,mean,std,min,max\n";
    for (const auto& s : report.classes) {
        table << csv::escape(report.class_names.at(static_cast<std::size_t>(s.class_label - 1))) << ',' << s.count << ','
              << csv::format(s.mean) << ',' << csv::format(s.std) << ',' << csv::format(s.min) << ','
              << csv::format(s.max) << '\n';
    }
    write_text(out_dir / "mi_report.csv", table.str());

    std::ostringstream features;
    features << "feature,mi\n";
    for (std::size_t f = 0; f < report.scores.mi.per_feature_mi.size(); ++f) {
        features << to_string(static_cast<BoxFeature>(f)) << ',' << csv::format(report.scores.mi.per_feature_mi[f]) << '\n';
    }
    write_text(out_dir / "mi_features.csv", features.str());
    write_text(out_dir / "mi_report.json", nlohmann::json{{"artifact", "mi-report"}, {"config", report.config}}.dump(2) + "\n");
}

} // namespace trimine

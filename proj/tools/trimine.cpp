// Command-line experiment runner.
//
//   trimine run-comparison --embeddings e.csv --annotations a.csv --out-dir out/
//   trimine run-sweep --synthetic --out-dir sweep/ --svg
//   trimine mi-report --embeddings e.csv --annotations a.csv --out-dir mi/
//   trimine generate-synthetic --counts 116,51,73 --out-dir data/

#include "trimine/csv.hpp"
#include "trimine/error.hpp"
#include "trimine/experiment.hpp"
#include "trimine/selection.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <iostream>
#include <thread>

namespace {

using namespace trimine;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& part : csv::split_line(text)) {
        const auto dash = part.find('-');
        try {
            if (dash != std::string::npos && dash > 0) {
                const auto lo = std::stoull(part.substr(0, dash));
                const auto hi = std::stoull(part.substr(dash + 1));
                if (hi < lo) {
                    throw ConfigError("seed range '" + part + "' is descending");
                }
                for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
            } else {
                seeds.push_back(std::stoull(part));
            }
        } catch (const std::logic_error&) {
            throw ConfigError("cannot parse seed list '" + text + "'");
        }
    }
    return seeds;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const auto& part : csv::split_line(text)) {
        out.push_back(csv::parse_double(part, what, 0));
    }
    return out;
}

std::size_t default_threads() {
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TRIMINE_THREADS")) {
        try {
            threads = std::max<std::size_t>(1, std::stoul(env));
        } catch (const std::logic_error&) {
            throw ConfigError(std::string("TRIMINE_THREADS is not a positive integer: '") + env + "'");
        }
    }
    return threads;
}

struct Options {
    std::string embeddings;
    std::string annotations;
    bool synthetic = false;
    std::string counts = "116,51,73";
    std::size_t k_in = 64;
    double coupling = 0.8;
    std::uint64_t data_seed = 0;

    std::vector<std::string> strategies;
    std::string seeds = "0-7";
    std::string sweep_p_top = "0.1,0.2,0.3,0.4,0.5";
    std::string sweep_p_rand = "0,0.1,0.2,0.3,0.4";
    std::string box_feature = "area";
    std::string hard_mining = "batch-hard";
    std::string out_dir;
    std::size_t threads = 0;
    bool svg = false;
    bool export_mask = false;
    std::uint64_t mask_seed = 0;

    ExperimentPlan plan;
};

void add_data_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--embeddings", o.embeddings, "CSV with header id,e_0,...,e_{k-1}");
    cmd->add_option("--annotations", o.annotations, "CSV with header id,class,x_min,y_min,x_max,y_max");
    cmd->add_flag("--synthetic", o.synthetic, "Use a generated dataset instead of files");
    cmd->add_option("--counts", o.counts, "Synthetic per-class sample counts")->capture_default_str();
    cmd->add_option("--k-in", o.k_in, "Synthetic embedding dimension")->capture_default_str();
    cmd->add_option("--coupling", o.coupling, "Synthetic geometry-class coupling in [0,1]")->capture_default_str();
    cmd->add_option("--data-seed", o.data_seed, "Synthetic generator seed")->capture_default_str();
}

void add_pipeline_flags(CLI::App* cmd, Options& o) {
    PipelineConfig& p = o.plan.pipeline;
    cmd->add_option("--lambda", p.lambda, "Box-branch weight for matl/tg-matl")->capture_default_str();
    cmd->add_option("--margin", p.margin, "Triplet margin")->capture_default_str();
    cmd->add_option("--p-top", p.p_top, "Top fraction per class")->capture_default_str();
    cmd->add_option("--p-rand", p.p_rand, "Random fraction per class")->capture_default_str();
    cmd->add_option("--bins", p.mi.bins, "Equal-frequency bins for MI estimation")->capture_default_str();
    cmd->add_option("--box-bins", p.box_bins, "Discrete box label bins")->capture_default_str();
    cmd->add_option("--box-feature", o.box_feature, "Feature binned into box labels")
        ->check(CLI::IsMember({"width", "height", "area", "squareness"}))
        ->capture_default_str();
    cmd->add_option("--seeds", o.seeds, "Run seeds, e.g. 0-7 or 0,3,5")->capture_default_str();
    cmd->add_option("--test-fraction", p.test_fraction, "Stratified test share")->capture_default_str();
    cmd->add_option("--epochs", p.training.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch-size", p.training.batch_size, "Anchors per step")->capture_default_str();
    cmd->add_option("--hidden", p.training.hidden_dim, "Hidden width (0 = linear projection)")->capture_default_str();
    cmd->add_option("--k-out", p.training.output_dim, "Projection output dimension")->capture_default_str();
    cmd->add_option("--lr", p.training.adam.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--hard-mining", o.hard_mining, "cltl-hard mining rule")
        ->check(CLI::IsMember({"batch-hard", "hardest-negative"}))
        ->capture_default_str();
    cmd->add_option("--probe-l2", p.probe.classifier.l2, "L2 penalty of the classifier probe")->capture_default_str();
    cmd->add_option("--ridge-l2", p.probe.regressor_l2, "L2 penalty of the ridge probe")->capture_default_str();
    cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
    cmd->add_option("--threads", o.threads, "Worker threads (default: TRIMINE_THREADS or all cores)");
}

void finish_plan(Options& o) {
    ExperimentPlan& plan = o.plan;
    if (!o.embeddings.empty() || !o.annotations.empty()) {
        if (o.synthetic) {
            throw ConfigError("--synthetic cannot be combined with --embeddings/--annotations");
        }
        plan.embeddings = o.embeddings;
        plan.annotations = o.annotations;
        if (o.embeddings.empty() || o.annotations.empty()) {
            throw ConfigError("--embeddings and --annotations must be given together");
        }
    } else if (o.synthetic) {
        SyntheticSpec spec;
        spec.counts.clear();
        for (double c : parse_doubles(o.counts, "count")) {
            spec.counts.push_back(static_cast<std::size_t>(c));
        }
        spec.k_in = o.k_in;
        spec.coupling = o.coupling;
        spec.seed = o.data_seed;
        plan.synthetic = spec;
    } else {
        throw ConfigError("give --embeddings and --annotations, or --synthetic");
    }
    if (!o.strategies.empty()) {
        plan.strategies.clear();
        for (const auto& s : o.strategies) {
            plan.strategies.push_back(parse_strategy(s));
        }
    }
    plan.seeds = parse_seeds(o.seeds);
    plan.sweep_p_top = parse_doubles(o.sweep_p_top, "p_top");
    plan.sweep_p_rand = parse_doubles(o.sweep_p_rand, "p_rand");
    plan.pipeline.box_feature = parse_box_feature(o.box_feature);
    plan.pipeline.hard_mining = o.hard_mining == "batch-hard" ? HardMining::BatchHard : HardMining::HardestNegative;
    plan.out_dir = o.out_dir;
    plan.threads = o.threads > 0 ? o.threads : default_threads();
    plan.render_heatmaps = o.svg;
}

void print_comparison(const ComparisonReport& report) {
    std::cout << "strategy    accuracy            r2\n";
    for (const auto& row : report.rows) {
        std::printf("%-11s %.4f +- %.4f   %.4f +- %.4f%s\n", std::string(to_string(row.strategy)).c_str(),
                    row.aggregate.accuracy.mean, row.aggregate.accuracy.std, row.aggregate.r2.mean,
                    row.aggregate.r2.std, row.ok ? "" : "   FAILED");
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Task-guided multi-annotation triplet learning over frozen embeddings"};
    app.require_subcommand(1);
    Options o;

    auto* comparison = app.add_subcommand("run-comparison", "Train and probe every strategy over all seeds");
    add_data_flags(comparison, o);
    add_pipeline_flags(comparison, o);
    comparison->add_option("--strategy", o.strategies, "Strategies (default: all five)")
        ->delimiter(',')
        ->check(CLI::IsMember({"wtl", "cltl", "cltl-hard", "matl", "tg-matl"}));
    comparison->add_flag("--save-checkpoints", o.plan.save_checkpoints, "Write trained projection checkpoints");

    auto* sweep = app.add_subcommand("run-sweep", "TG-MATL over a (p_top, p_rand) grid");
    add_data_flags(sweep, o);
    add_pipeline_flags(sweep, o);
    sweep->add_option("--sweep-p-top", o.sweep_p_top, "Grid values for p_top")->capture_default_str();
    sweep->add_option("--sweep-p-rand", o.sweep_p_rand, "Grid values for p_rand")->capture_default_str();
    sweep->add_flag("--svg", o.svg, "Also render heatmaps as SVG");

    auto* mi = app.add_subcommand("mi-report", "Per-class relevance score summary");
    add_data_flags(mi, o);
    mi->add_option("--bins", o.plan.pipeline.mi.bins, "Equal-frequency bins for MI estimation")->capture_default_str();
    mi->add_option("--out-dir", o.out_dir, "Output directory")->required();
    mi->add_flag("--export-mask", o.export_mask, "Also write the selection mask (mask.csv)");
    mi->add_option("--p-top", o.plan.pipeline.p_top, "Top fraction per class")->capture_default_str();
    mi->add_option("--p-rand", o.plan.pipeline.p_rand, "Random fraction per class")->capture_default_str();
    mi->add_option("--seed", o.mask_seed, "Mask seed")->capture_default_str();

    auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic embeddings/annotations pair");
    gen->add_option("--counts", o.counts, "Per-class sample counts")->capture_default_str();
    gen->add_option("--k-in", o.k_in, "Embedding dimension")->capture_default_str();
    gen->add_option("--coupling", o.coupling, "Geometry-class coupling in [0,1]")->capture_default_str();
    gen->add_option("--seed", o.data_seed, "Generator seed")->capture_default_str();
    gen->add_option("--out-dir", o.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    if (comparison->parsed()) {
        finish_plan(o);
        const ComparisonReport report = run_comparison(o.plan);
        print_comparison(report);
        std::cout << "wrote " << (o.plan.out_dir / "comparison.csv").string() << '\n';
        bool all_ok = true;
        for (const auto& row : report.rows) all_ok = all_ok && row.ok;
        return all_ok ? 0 : 3;
    }
    if (sweep->parsed()) {
        finish_plan(o);
        const SweepReport report = run_sweep(o.plan);
        bool all_ok = true;
        for (const auto& cell : report.cells) {
            all_ok = all_ok && cell.ok;
            std::printf("p_top=%-5g p_rand=%-5g accuracy=%.4f r2=%.4f%s\n", cell.p_top, cell.p_rand,
                        cell.aggregate.accuracy.mean, cell.aggregate.r2.mean, cell.ok ? "" : " FAILED");
        }
        std::cout << "wrote " << (o.plan.out_dir / "sweep_accuracy.csv").string() << " and sweep_r2.csv\n";
        return all_ok ? 0 : 3;
    }
    if (mi->parsed()) {
        o.out_dir = o.out_dir.empty() ? "." : o.out_dir;
        finish_plan(o);
        const Dataset dataset = resolve_dataset(o.plan);
        const MIReport report = build_mi_report(dataset, o.plan.pipeline);
        write_mi_report(report, o.plan.out_dir);
        std::cout << "class,count,mean,std,min,max\n";
        for (const auto& s : report.classes) {
            std::printf("%s,%zu,%.4f,%.4f,%.4f,%.4f\n", report.class_names[static_cast<std::size_t>(s.class_label - 1)].c_str(),
                        s.count, s.mean, s.std, s.min, s.max);
        }
        if (o.export_mask) {
            const SelectionMask mask =
                build_mask(report.scores, dataset.labels,
                           SelectionConfig{o.plan.pipeline.p_top, o.plan.pipeline.p_rand, o.mask_seed});
            write_mask_csv(o.plan.out_dir / "mask.csv", dataset.ids, report.scores, mask);
        }
        return 0;
    }
    if (gen->parsed()) {
        std::vector<std::size_t> counts;
        for (double c : parse_doubles(o.counts, "count")) {
            counts.push_back(static_cast<std::size_t>(c));
        }
        const Dataset ds = generate_synthetic(counts, o.k_in, o.coupling, o.data_seed);
        std::filesystem::create_directories(o.out_dir);
        const std::filesystem::path dir = o.out_dir;
        write_dataset(ds, dir / "embeddings.csv", dir / "annotations.csv");
        std::cout << "wrote " << ds.size() << " samples to " << dir.string() << '\n';
        return 0;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const trimine::Error& e) {
        std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }
}

#include "strokegan/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "strokegan/dataset.hpp"
#include "strokegan/gradcheck_suite.hpp"
#include "strokegan/png_io.hpp"
#include "strokegan/training.hpp"

namespace fs = std::filesystem;

namespace strokegan {

TrainConfig resolve_config(const CommandOptions& options) {
    TrainConfig config =
        options.config_path.empty() ? TrainConfig{} : load_config_file(options.config_path);
    if (options.seed) config.seed = *options.seed;
    if (!options.out_dir.empty()) config.out_dir = options.out_dir;
    if (!options.data_dir.empty()) config.data_dir = options.data_dir;
    if (options.ablation_cyclegan) config.lambda_st = 0.0;
    config.validate();
    return config;
}

namespace {

std::string checkpoint_name(int epoch) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_epoch%04d.bin", epoch);
    return buf;
}

std::string sample_name(int epoch) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "samples_epoch%04d.png", epoch);
    return buf;
}

// Runs one training job, writing the metrics log, sample grids and
// checkpoints under out_dir. Returns the final checkpoint and the evaluator
// metrics of the trained generator on the test split.
struct RunOutcome {
    Checkpoint checkpoint;
    MetricReport final_metrics;
};

RunOutcome run_training(const Corpus& corpus, const TrainConfig& config,
                        const Evaluator& evaluator, const std::string& out_dir,
                        const Checkpoint* resume, std::ostream& console) {
    fs::create_directories(out_dir);
    fs::path log_path = fs::path(out_dir) / "metrics.tsv";
    bool fresh_log = !resume || !fs::exists(log_path);
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot open metrics log: " + log_path.string());
    if (fresh_log) {
        // Header echoes the effective config (defaults included).
        std::istringstream cfg_lines(serialize_config(config));
        std::string line;
        while (std::getline(cfg_lines, line)) log << "# " << line << "\n";
        log << metrics_log_header() << "\n";
    }

    TrainHooks hooks;
    hooks.on_epoch = [&log, &console](const EpochRecord& record) {
        log << metrics_log_line(record) << "\n";
        log.flush();
        console << "  epoch " << record.epoch << "  L_adv_D " << record.l_adv_d << "  L_cyc "
                << record.l_cyc << "  stroke_err " << record.stroke_error_test << "  distinct "
                << record.diversity_test << "\n";
    };
    std::vector<Tensor> fixed_inputs;
    for (int id : corpus.test_a) fixed_inputs.push_back(corpus.images_a[id]);
    hooks.on_samples = [&fixed_inputs, &out_dir](int epoch, const std::vector<Tensor>& generated) {
        std::vector<Tensor> sheet = fixed_inputs;
        sheet.insert(sheet.end(), generated.begin(), generated.end());
        save_glyph_grid_png((fs::path(out_dir) / sample_name(epoch)).string(), sheet,
                            static_cast<int>(fixed_inputs.size()));
    };
    hooks.on_checkpoint = [&out_dir](const Checkpoint& ckpt, int epoch) {
        save_checkpoint(ckpt, (fs::path(out_dir) / checkpoint_name(epoch)).string());
    };
    hooks.on_abort = [&out_dir, &console](const Checkpoint& ckpt) {
        std::string path = (fs::path(out_dir) / "checkpoint_abort.bin").string();
        save_checkpoint(ckpt, path);
        console << "non-finite loss; state dumped to " << path << "\n";
    };

    TrainResult result = train(corpus, config, &evaluator, hooks, resume);
    save_checkpoint(result.checkpoint, (fs::path(out_dir) / "checkpoint_final.bin").string());

    // Final test-split metrics from the trained generator.
    Trainer trainer = Trainer::from_checkpoint(result.checkpoint);
    std::vector<Tensor> test_inputs;
    for (int id : corpus.test_a) test_inputs.push_back(corpus.images_a[id]);
    NoTape guard;
    Tensor generated = trainer.models().g.forward(stack_images(test_inputs), Mode::eval);
    RunOutcome outcome{std::move(result.checkpoint),
                       evaluator.evaluate(unstack_images(generated), corpus.test_a)};
    return outcome;
}

std::string mean_pm_spread(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    std::ostringstream os;
    os << std::setprecision(4) << std::fixed << mean << " +- " << sd;
    return os.str();
}

} // namespace

void cmd_synth(const CommandOptions& options, std::ostream& out) {
    TrainConfig config = resolve_config(options);
    if (config.out_dir.empty()) throw ConfigError("synth needs an output directory (--out)");
    fs::path root(config.out_dir);
    if (fs::exists(root) && !fs::is_empty(root) && !options.force) {
        throw ConfigError("output directory exists and is not empty (pass --force): " +
                          config.out_dir);
    }
    Corpus corpus = build_corpus(config.n_chars, config.strokes_min, config.strokes_max,
                                 config.seed, config.resolution);
    export_corpus(corpus, config.out_dir, true);
    out << "corpus: " << corpus.chars.size() << " characters x 2 fonts at " << config.resolution
        << "x" << config.resolution << "\n";
    out << "train/test per font: " << corpus.train_a.size() << "/" << corpus.test_a.size() << "\n";
    out << "rho: " << corpus.rho << "\n";
    out << "written to " << config.out_dir << "\n";
}

void cmd_train(const CommandOptions& options, std::ostream& out) {
    TrainConfig config = resolve_config(options);
    if (config.data_dir.empty()) throw ConfigError("train needs a corpus directory (--data)");
    if (config.out_dir.empty()) throw ConfigError("train needs an output directory (--out)");

    Corpus corpus = import_corpus(config.data_dir);
    std::optional<Checkpoint> resume;
    if (!options.resume_path.empty()) {
        resume = load_checkpoint(options.resume_path);
        out << "resuming from " << options.resume_path << " (epoch " << resume->epoch << ")\n";
    }

    out << "preparing evaluator (stroke detector + proxy classifier)...\n";
    Evaluator evaluator(corpus, config.seed ^ 0xE7A1ULL);
    out << "training " << config.epochs << " epochs, batch " << config.batch_size << ", lambda_cyc "
        << config.lambda_cyc << ", lambda_st " << config.lambda_st << "\n";
    RunOutcome outcome =
        run_training(corpus, config, evaluator, config.out_dir, resume ? &*resume : nullptr, out);
    out << "final: stroke_error " << outcome.final_metrics.stroke_error << ", content_accuracy "
        << outcome.final_metrics.content_accuracy << ", distinct "
        << outcome.final_metrics.diversity.distinct_count << "/" << outcome.final_metrics.n_samples
        << "\n";
    out << "checkpoint: " << (fs::path(config.out_dir) / "checkpoint_final.bin").string() << "\n";
}

void cmd_eval(const CommandOptions& options, std::ostream& out) {
    if (options.checkpoint_path.empty()) throw ConfigError("eval needs a checkpoint (--ckpt)");
    std::string data_dir = options.data_dir;
    Checkpoint ckpt = load_checkpoint(options.checkpoint_path);
    if (data_dir.empty()) data_dir = ckpt.config.data_dir;
    if (data_dir.empty()) throw ConfigError("eval needs a corpus directory (--data)");

    Corpus corpus = import_corpus(data_dir);
    if (corpus.resolution != ckpt.config.resolution) {
        throw ConfigError("resolution mismatch: checkpoint " +
                          std::to_string(ckpt.config.resolution) + " vs manifest " +
                          std::to_string(corpus.resolution));
    }

    Trainer trainer = Trainer::from_checkpoint(ckpt);
    Evaluator evaluator(corpus, ckpt.config.seed ^ 0xE7A1ULL);
    std::vector<Tensor> inputs;
    for (int id : corpus.test_a) inputs.push_back(corpus.images_a[id]);
    NoTape guard;
    Tensor generated = trainer.models().g.forward(stack_images(inputs), Mode::eval);
    MetricReport report = evaluator.evaluate(unstack_images(generated), corpus.test_a);

    std::string tsv = metric_report_tsv(report);
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        fs::path path = fs::path(options.out_dir) / "report.tsv";
        std::ofstream file(path, std::ios::trunc);
        if (!file) throw IoError("cannot write report: " + path.string());
        file << tsv;
        out << "report written to " << path.string() << "\n";
    }
    out << tsv;
}

ExperimentResult run_experiment(const Corpus& corpus, const TrainConfig& config,
                                const Evaluator& evaluator, const std::string& out_dir,
                                std::ostream& console) {
    if (config.seeds.size() < 3) throw ConfigError("experiment needs at least 3 seeds");
    fs::create_directories(out_dir);

    struct Arm {
        std::string name;
        double lambda_st;
    };
    std::vector<Arm> arms = {{"strokegan", config.lambda_st}, {"cyclegan", 0.0}};

    ExperimentResult result;
    std::vector<std::vector<MetricReport>> metrics(arms.size());
    std::vector<int> failed(arms.size(), 0);
    for (std::size_t a = 0; a < arms.size(); ++a) {
        for (std::uint64_t seed : config.seeds) {
            TrainConfig run_config = config;
            run_config.lambda_st = arms[a].lambda_st;
            run_config.seed = seed;
            std::string run_dir =
                (fs::path(out_dir) / (arms[a].name + "_seed" + std::to_string(seed))).string();
            console << arms[a].name << " seed " << seed << " -> " << run_dir << "\n";
            try {
                RunOutcome outcome =
                    run_training(corpus, run_config, evaluator, run_dir, nullptr, console);
                metrics[a].push_back(outcome.final_metrics);
                if (a == 0) result.strokegan_ckpts.push_back(std::move(outcome.checkpoint));
            } catch (const Error& e) {
                ++failed[a];
                result.failures.push_back(arms[a].name + " seed " + std::to_string(seed) + ": " +
                                          e.what());
                console << "  FAILED: " << e.what() << "\n";
            }
        }
    }
    result.strokegan = metrics[0];
    result.cyclegan = metrics[1];

    std::ostringstream table;
    table << "method\tstroke_error\tcontent_accuracy\tdiversity\n";
    for (std::size_t a = 0; a < arms.size(); ++a) {
        table << arms[a].name << "\t";
        if (metrics[a].empty()) {
            table << "FAILED\tFAILED\tFAILED";
        } else {
            std::vector<double> se, ca, dv;
            for (const auto& m : metrics[a]) {
                se.push_back(m.stroke_error);
                ca.push_back(m.content_accuracy);
                dv.push_back(m.diversity.distinct_count);
            }
            table << mean_pm_spread(se) << "\t" << mean_pm_spread(ca) << "\t"
                  << mean_pm_spread(dv);
            if (failed[a] > 0) table << "\t(partial: " << failed[a] << " failed)";
        }
        table << "\n";
    }
    result.table_tsv = table.str();

    fs::path table_path = fs::path(out_dir) / "comparison.tsv";
    std::ofstream file(table_path, std::ios::trunc);
    if (!file) throw IoError("cannot write comparison table: " + table_path.string());
    file << result.table_tsv;
    return result;
}

void cmd_experiment(const CommandOptions& options, std::ostream& out) {
    TrainConfig config = resolve_config(options);
    if (config.seeds.size() < 3) throw ConfigError("experiment needs at least 3 seeds");
    if (config.out_dir.empty()) throw ConfigError("experiment needs an output directory (--out)");
    fs::create_directories(config.out_dir);

    Corpus corpus = [&] {
        if (!config.data_dir.empty()) return import_corpus(config.data_dir);
        std::string corpus_dir = (fs::path(config.out_dir) / "corpus").string();
        Corpus built = build_corpus(config.n_chars, config.strokes_min, config.strokes_max,
                                    config.seed, config.resolution);
        export_corpus(built, corpus_dir, true);
        out << "synthesized corpus at " << corpus_dir << "\n";
        return built;
    }();

    out << "preparing evaluator (stroke detector + proxy classifier)...\n";
    Evaluator evaluator(corpus, config.seed ^ 0xE7A1ULL);
    ExperimentResult result = run_experiment(corpus, config, evaluator, config.out_dir, out);
    out << "\n" << result.table_tsv;
    out << "table written to " << (fs::path(config.out_dir) / "comparison.tsv").string() << "\n";
}

bool cmd_gradcheck(std::ostream& out) {
    GradCheckSummary summary = run_gradcheck_suite();
    for (const auto& result : summary.cases) {
        bool ok = result.passed;
        out << (ok ? "[PASS] " : "[FAIL] ") << result.name << "  max rel err "
            << result.max_rel_err << " over " << result.checked << " coordinates";
        if (result.expected_failure) out << " (control: must be flagged)";
        out << "\n";
    }
    out << (summary.all_passed ? "gradcheck OK" : "gradcheck FAILED") << ", worst rel err "
        << summary.worst_rel_err << "\n";
    return summary.all_passed;
}

} // namespace strokegan

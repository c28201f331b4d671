#ifndef STROKEGAN_COMMANDS_HPP
#define STROKEGAN_COMMANDS_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "strokegan/config.hpp"
#include "strokegan/evaluation.hpp"
#include "strokegan/training.hpp"

namespace strokegan {

// Options shared by the CLI verbs (populated from flags).
struct CommandOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed; // --seed override
    std::string out_dir;               // --out override
    std::string data_dir;              // --data override
    bool force = false;                // --force
    std::string resume_path;           // --resume <ckpt>
    bool ablation_cyclegan = false;    // --ablation cyclegan
    std::string checkpoint_path;       // eval input checkpoint
};

// Loads the config (defaults when no path is given) and applies the overrides.
TrainConfig resolve_config(const CommandOptions& options);

// Multi-seed comparison of the full method against its lambda_st=0 ablation.
struct ExperimentResult {
    std::vector<MetricReport> strokegan;      // per-seed final test metrics
    std::vector<MetricReport> cyclegan;
    std::vector<Checkpoint> strokegan_ckpts;  // final checkpoints, seed order
    std::vector<std::string> failures;
    std::string table_tsv;                    // 2 method rows x 3 metric columns
};

ExperimentResult run_experiment(const Corpus& corpus, const TrainConfig& config,
                                const Evaluator& evaluator, const std::string& out_dir,
                                std::ostream& console);

void cmd_synth(const CommandOptions& options, std::ostream& out);
void cmd_train(const CommandOptions& options, std::ostream& out);
void cmd_eval(const CommandOptions& options, std::ostream& out);
void cmd_experiment(const CommandOptions& options, std::ostream& out);
// Returns true when every check passed (including the expected failure of the
// corrupted-backward control).
bool cmd_gradcheck(std::ostream& out);

} // namespace strokegan

#endif

#ifndef STROKEGAN_CONFIG_HPP
#define STROKEGAN_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace strokegan {

enum class GeneratorMode { single, dual };

// Every tunable of a training run. File form is flat `key = value` text with
// `#` comments; unknown keys are rejected.
struct TrainConfig {
    double lambda_cyc = 10.0;
    double lambda_st = 0.18;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double lr = 2e-4;
    double adam_eps = 1e-8;
    int epochs = 200;
    int batch_size = 16;
    std::uint64_t seed = 1;
    GeneratorMode generator_mode = GeneratorMode::single;
    int resolution = 32;
    int scale_factor = 8;
    int res_blocks = 3;
    int disc_layers = 4;

    // Loss-shape switches (see the module notes in the README).
    bool nonsaturating_g = true;  // false: G minimizes E[log(1 - D(G(x)))] literally
    bool d_st_on_real = false;    // also supervise D_st on real characters' codes
    bool d_st_paper_sign = false; // true: D ascends the stroke loss
    bool omit_stroke_term = false; // drop the stroke term entirely (ablation study aid)

    int checkpoint_every = 50; // epochs; 0 disables periodic checkpoints
    int eval_every = 1;        // run test-split metrics every N epochs

    std::string data_dir;
    std::string out_dir;

    // Corpus synthesis settings (cmd_synth).
    int n_chars = 100;
    int strokes_min = 2;
    int strokes_max = 5;

    // Experiment orchestration (cmd_experiment).
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    void validate() const; // throws ConfigError on out-of-range values
};

// Parses config text; `source` names the input in error messages. Keys absent
// from the text keep their defaults; unknown keys raise ConfigError with the
// line number.
TrainConfig parse_config(const std::string& text, const std::string& source = "<config>");
TrainConfig load_config_file(const std::string& path);
std::string serialize_config(const TrainConfig& config);

} // namespace strokegan

#endif

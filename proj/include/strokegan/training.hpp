#ifndef STROKEGAN_TRAINING_HPP
#define STROKEGAN_TRAINING_HPP

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "strokegan/config.hpp"
#include "strokegan/evaluation.hpp"
#include "strokegan/losses.hpp"
#include "strokegan/nn.hpp"
#include "strokegan/optim.hpp"
#include "strokegan/strokes.hpp"

namespace strokegan {

struct Models {
    Generator g;                       // A -> B (applied twice in single mode)
    std::optional<Generator> g_prime;  // B -> A (dual mode)
    Discriminator d;

    static Models build(const TrainConfig& config);
};

struct StepReport {
    double l_adv_d = 0.0; // value of L_adv as seen by the D update
    double l_adv_g = 0.0; // generator adversarial term
    double l_cyc = 0.0;
    double l_st = 0.0;
};

// Serialized training state. load(save(x)) is bit exact.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    TrainConfig config;
    int epoch = 0;
    std::string rng_state;
    Parameters g_params;
    Parameters d_params;
    std::optional<Parameters> g_prime_params;
    std::vector<AdamSlot> opt_g_slots, opt_d_slots, opt_gp_slots;
    std::uint64_t opt_g_t = 0, opt_d_t = 0, opt_gp_t = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b);

// Deep-copies values (used when snapshotting into / restoring from checkpoints).
Parameters snapshot_params(const Parameters& params);
void restore_params(Parameters& dst, const Parameters& src);

// The alternating-update trainer: one discriminator step (ascend the
// adversarial loss, descend the stroke loss) then one generator step.
class Trainer {
public:
    static Trainer fresh(const TrainConfig& config);
    static Trainer from_checkpoint(const Checkpoint& ckpt);

    // batch_b supplies the discriminator's real samples; when absent in single
    // mode the source batch doubles as the real batch (the literal reading of
    // the adversarial formula). Dual mode requires batch_b and codes_b.
    StepReport train_step(const Tensor& batch_a, const Tensor* batch_b, const Tensor& codes_a,
                          const Tensor* codes_b);

    // The two halves of a step, exposed so the no-cross-update discipline can
    // be checked bitwise from outside.
    void discriminator_update(const Tensor& batch_a, const Tensor* batch_b, const Tensor& codes_a,
                              const Tensor* codes_b, StepReport& report);
    void generator_update(const Tensor& batch_a, const Tensor* batch_b, const Tensor& codes_a,
                          const Tensor* codes_b, StepReport& report);

    Checkpoint to_checkpoint() const;

    // Adopts a new run config when resuming (e.g. extended epochs); the
    // architecture and optimizer-shape fields must match the checkpoint.
    void adopt_config(const TrainConfig& config);

    Models& models() { return models_; }
    const TrainConfig& config() const { return config_; }
    std::mt19937_64& rng() { return rng_; }
    int epoch() const { return epoch_; }
    void set_epoch(int epoch) { epoch_ = epoch; }

private:
    Trainer(TrainConfig config, Models models);
    TrainConfig config_;
    Models models_;
    AdamOptimizer opt_g_, opt_d_;
    std::optional<AdamOptimizer> opt_gp_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
};

// One metrics-log record per epoch.
struct EpochRecord {
    int epoch = 0;
    double l_adv_d = 0.0, l_adv_g = 0.0, l_cyc = 0.0, l_st = 0.0;
    double stroke_error_test = 0.0;
    double content_acc_test = 0.0;
    int diversity_test = 0; // distinct_count on the generated test batch
};

std::string metrics_log_header();
std::string metrics_log_line(const EpochRecord& record);

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    // Fixed test inputs and their generated outputs, for sample grids.
    std::function<void(int epoch, const std::vector<Tensor>& generated)> on_samples;
    std::function<void(const Checkpoint&, int epoch)> on_checkpoint;
    std::function<void(const Checkpoint&)> on_abort; // non-finite loss dump
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochRecord> log;
};

// Full training run over a two-font corpus. Deterministic given the config
// seed. `evaluator` may be shared across runs on the same corpus; when null
// one is built internally. `resume_from` continues a checkpointed run.
TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  const Evaluator* evaluator = nullptr, const TrainHooks& hooks = {},
                  const Checkpoint* resume_from = nullptr);

// (n,h,w,c) batch -> n images of (h,w,c).
std::vector<Tensor> unstack_images(const Tensor& batch);

} // namespace strokegan

#endif

#include "strokegan/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace strokegan {

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void check_finite_scalar(const Tensor& loss, const char* what) {
    if (!std::isfinite(loss.item())) {
        throw NumericError(std::string("non-finite ") + what + " loss");
    }
}

Tensor mean_of(std::vector<Tensor> terms) {
    Tensor acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

} // namespace

Models Models::build(const TrainConfig& config) {
    config.validate();
    NetworkSpec gspec = generator_spec(config.resolution, config.resolution, config.scale_factor,
                                       config.res_blocks);
    NetworkSpec dspec = discriminator_spec(config.resolution, config.resolution,
                                           config.scale_factor, config.disc_layers);
    Models models{Generator(gspec, derive_seed(config.seed, 1)), std::nullopt,
                  Discriminator(dspec, derive_seed(config.seed, 2))};
    if (config.generator_mode == GeneratorMode::dual) {
        models.g_prime.emplace(gspec, derive_seed(config.seed, 3));
    }
    return models;
}

// ---- Trainer ----------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, Models models)
    : config_(std::move(config)), models_(std::move(models)) {
    AdamHyper hyper{config_.lr, config_.beta1, config_.beta2, config_.adam_eps};
    opt_g_ = AdamOptimizer(hyper, models_.g.params());
    opt_d_ = AdamOptimizer(hyper, models_.d.params());
    if (models_.g_prime) opt_gp_.emplace(hyper, models_.g_prime->params());
    rng_.seed(derive_seed(config_.seed, 4));
}

Trainer Trainer::fresh(const TrainConfig& config) {
    return Trainer(config, Models::build(config));
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
    Trainer trainer(ckpt.config, Models::build(ckpt.config));
    restore_params(trainer.models_.g.params(), ckpt.g_params);
    restore_params(trainer.models_.d.params(), ckpt.d_params);
    if (ckpt.g_prime_params) {
        if (!trainer.models_.g_prime) throw IoError("checkpoint carries G' but config is single-mode");
        restore_params(trainer.models_.g_prime->params(), *ckpt.g_prime_params);
    }
    trainer.opt_g_.slots() = ckpt.opt_g_slots;
    trainer.opt_g_.set_step_count(ckpt.opt_g_t);
    trainer.opt_d_.slots() = ckpt.opt_d_slots;
    trainer.opt_d_.set_step_count(ckpt.opt_d_t);
    if (trainer.opt_gp_) {
        trainer.opt_gp_->slots() = ckpt.opt_gp_slots;
        trainer.opt_gp_->set_step_count(ckpt.opt_gp_t);
    }
    std::istringstream in(ckpt.rng_state);
    in >> trainer.rng_;
    if (!in) throw IoError("checkpoint carries an unreadable RNG state");
    trainer.epoch_ = ckpt.epoch;
    return trainer;
}

StepReport Trainer::train_step(const Tensor& batch_a, const Tensor* batch_b,
                               const Tensor& codes_a, const Tensor* codes_b) {
    StepReport report;
    discriminator_update(batch_a, batch_b, codes_a, codes_b, report);
    generator_update(batch_a, batch_b, codes_a, codes_b, report);
    return report;
}

void Trainer::discriminator_update(const Tensor& batch_a, const Tensor* batch_b,
                                   const Tensor& codes_a, const Tensor* codes_b,
                                   StepReport& report) {
    const bool dual = config_.generator_mode == GeneratorMode::dual;
    if (dual && (!batch_b || !codes_b)) {
        throw ContractError("dual-generator mode needs batch_b and codes_b");
    }
    const double st_sign = config_.d_st_paper_sign ? -1.0 : 1.0;

    // Ascend L_adv, descend L_st. The fakes are detached so no gradient can
    // reach the generator, and the generator's batch-norm buffers stay frozen:
    // a D update must leave the generator bit-identical.
    Tensor fake_b, fake_a;
    {
        BatchStatsFreeze freeze;
        fake_b = models_.g.forward(batch_a, Mode::train).detach();
        if (dual) fake_a = models_.g_prime->forward(*batch_b, Mode::train).detach();
    }

    models_.d.params().zero_grad();
    {
        Tape tape;
        Tensor l_adv;
        std::vector<Tensor> st_terms;
        if (!dual) {
            const Tensor& reals = batch_b ? *batch_b : batch_a;
            auto real_out = models_.d.forward(reals, Mode::train);
            auto fake_out = models_.d.forward(fake_b, Mode::train);
            l_adv = adversarial_loss(d_src_probability(real_out.src_map),
                                     d_src_probability(fake_out.src_map));
            st_terms.push_back(stroke_loss(fake_out.stroke_pred, codes_a));
            if (config_.d_st_on_real && codes_b) {
                st_terms.push_back(stroke_loss(real_out.stroke_pred, *codes_b));
            }
        } else {
            auto real_b = models_.d.forward(*batch_b, Mode::train);
            auto real_a = models_.d.forward(batch_a, Mode::train);
            auto fb = models_.d.forward(fake_b, Mode::train);
            auto fa = models_.d.forward(fake_a, Mode::train);
            l_adv = scale(add(adversarial_loss(d_src_probability(real_b.src_map),
                                               d_src_probability(fb.src_map)),
                              adversarial_loss(d_src_probability(real_a.src_map),
                                               d_src_probability(fa.src_map))),
                          0.5);
            st_terms.push_back(stroke_loss(fb.stroke_pred, codes_a));
            st_terms.push_back(stroke_loss(fa.stroke_pred, *codes_b));
            if (config_.d_st_on_real) {
                st_terms.push_back(stroke_loss(real_b.stroke_pred, *codes_b));
                st_terms.push_back(stroke_loss(real_a.stroke_pred, codes_a));
            }
        }
        report.l_adv_d = l_adv.item();
        Tensor d_obj = neg(l_adv);
        if (!config_.omit_stroke_term) {
            d_obj = add(d_obj, scale(mean_of(std::move(st_terms)), st_sign * config_.lambda_st));
        }
        check_finite_scalar(d_obj, "discriminator");
        tape.backward(d_obj);
        opt_d_.step(models_.d.params());
    }
}

void Trainer::generator_update(const Tensor& batch_a, const Tensor* batch_b,
                               const Tensor& codes_a, const Tensor* codes_b, StepReport& report) {
    const bool dual = config_.generator_mode == GeneratorMode::dual;
    if (dual && (!batch_b || !codes_b)) {
        throw ContractError("dual-generator mode needs batch_b and codes_b");
    }
    // The discriminator's parameters are frozen; gradients still flow through
    // its activations into the generator.
    models_.g.params().zero_grad();
    if (models_.g_prime) models_.g_prime->params().zero_grad();
    models_.d.params().set_requires_grad(false);
    {
        Tape tape;
        Tensor g_adv, l_cyc;
        std::vector<Tensor> st_terms;
        if (!dual) {
            Tensor fake = models_.g.forward(batch_a, Mode::train);
            Discriminator::Output fake_out;
            {
                // Frozen: a G update must leave the discriminator bit-identical.
                BatchStatsFreeze freeze;
                fake_out = models_.d.forward(fake, Mode::train);
            }
            Tensor p_fake = d_src_probability(fake_out.src_map);
            g_adv = config_.nonsaturating_g ? neg(mean(log(p_fake)))
                                            : mean(log(add_scalar(neg(p_fake), 1.0)));
            Tensor rec = models_.g.forward(fake, Mode::train); // single G applied twice
            l_cyc = cycle_loss(batch_a, rec);
            st_terms.push_back(stroke_loss(fake_out.stroke_pred, codes_a));
        } else {
            Tensor fb = models_.g.forward(batch_a, Mode::train);
            Tensor fa = models_.g_prime->forward(*batch_b, Mode::train);
            Discriminator::Output fb_out, fa_out;
            {
                BatchStatsFreeze freeze;
                fb_out = models_.d.forward(fb, Mode::train);
                fa_out = models_.d.forward(fa, Mode::train);
            }
            Tensor pb = d_src_probability(fb_out.src_map);
            Tensor pa = d_src_probability(fa_out.src_map);
            if (config_.nonsaturating_g) {
                g_adv = scale(add(neg(mean(log(pb))), neg(mean(log(pa)))), 0.5);
            } else {
                g_adv = scale(add(mean(log(add_scalar(neg(pb), 1.0))),
                                  mean(log(add_scalar(neg(pa), 1.0)))),
                              0.5);
            }
            l_cyc = add(cycle_loss(batch_a, models_.g_prime->forward(fb, Mode::train)),
                        cycle_loss(*batch_b, models_.g.forward(fa, Mode::train)));
            st_terms.push_back(stroke_loss(fb_out.stroke_pred, codes_a));
            st_terms.push_back(stroke_loss(fa_out.stroke_pred, *codes_b));
        }
        report.l_adv_g = g_adv.item();
        report.l_cyc = l_cyc.item();
        Tensor g_obj = add(g_adv, scale(l_cyc, config_.lambda_cyc));
        if (!config_.omit_stroke_term) {
            Tensor l_st = mean_of(std::move(st_terms));
            report.l_st = l_st.item();
            g_obj = add(g_obj, scale(l_st, config_.lambda_st));
        }
        check_finite_scalar(g_obj, "generator");
        tape.backward(g_obj);
        opt_g_.step(models_.g.params());
        if (opt_gp_) opt_gp_->step(models_.g_prime->params());
    }
    models_.d.params().set_requires_grad(true);
}

void Trainer::adopt_config(const TrainConfig& config) {
    config.validate();
    auto mismatch = [](const char* what) {
        throw ConfigError(std::string("resume config changes the model structure: ") + what);
    };
    if (config.resolution != config_.resolution) mismatch("resolution");
    if (config.scale_factor != config_.scale_factor) mismatch("scale_factor");
    if (config.res_blocks != config_.res_blocks) mismatch("res_blocks");
    if (config.disc_layers != config_.disc_layers) mismatch("disc_layers");
    if (config.generator_mode != config_.generator_mode) mismatch("generator_mode");
    if (config.seed != config_.seed) mismatch("seed");
    config_ = config;
}

Checkpoint Trainer::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.config = config_;
    ckpt.epoch = epoch_;
    std::ostringstream os;
    os << rng_;
    ckpt.rng_state = os.str();
    ckpt.g_params = snapshot_params(models_.g.params());
    ckpt.d_params = snapshot_params(models_.d.params());
    if (models_.g_prime) ckpt.g_prime_params = snapshot_params(models_.g_prime->params());
    ckpt.opt_g_slots = opt_g_.slots();
    ckpt.opt_g_t = opt_g_.step_count();
    ckpt.opt_d_slots = opt_d_.slots();
    ckpt.opt_d_t = opt_d_.step_count();
    if (opt_gp_) {
        ckpt.opt_gp_slots = opt_gp_->slots();
        ckpt.opt_gp_t = opt_gp_->step_count();
    }
    return ckpt;
}

// ---- parameter snapshots --------------------------------------------------------------

Parameters snapshot_params(const Parameters& params) {
    Parameters out;
    for (const auto& item : params.items()) {
        out.add(item.name, item.value.clone(), item.trainable);
    }
    return out;
}

void restore_params(Parameters& dst, const Parameters& src) {
    if (dst.count() != src.count()) {
        throw IoError("parameter set size mismatch while restoring a checkpoint");
    }
    for (std::size_t i = 0; i < dst.items().size(); ++i) {
        auto& d = dst.items()[i];
        const auto& s = src.items()[i];
        if (d.name != s.name || d.value.shape() != s.value.shape()) {
            throw IoError("parameter layout mismatch while restoring: " + d.name + " vs " + s.name);
        }
        std::copy(s.value.data().begin(), s.value.data().end(), d.value.mutable_data().begin());
    }
}

// ---- checkpoint serialization ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<char*>(&v), 8); }
void write_i32(std::ostream& out, std::int32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }

void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_doubles(std::ostream& out, std::span<const double> v) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_params(std::ostream& out, const Parameters& params) {
    write_u64(out, params.count());
    for (const auto& item : params.items()) {
        write_string(out, item.name);
        out.put(item.trainable ? 1 : 0);
        write_u64(out, item.value.shape().size());
        for (int d : item.value.shape()) write_i32(out, d);
        write_doubles(out, item.value.data());
    }
}

void write_slots(std::ostream& out, const std::vector<AdamSlot>& slots, std::uint64_t t) {
    write_u64(out, t);
    write_u64(out, slots.size());
    for (const auto& slot : slots) {
        write_doubles(out, slot.m);
        write_doubles(out, slot.v);
    }
}

struct Reader {
    std::istream& in;
    std::string path;

    void fail(const std::string& what) { throw IoError("corrupt checkpoint " + path + ": " + what); }

    void read_raw(void* dst, std::size_t size, const char* what) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(size));
        if (static_cast<std::size_t>(in.gcount()) != size) fail(std::string("truncated ") + what);
    }
    std::uint32_t u32(const char* what) { std::uint32_t v; read_raw(&v, 4, what); return v; }
    std::uint64_t u64(const char* what) { std::uint64_t v; read_raw(&v, 8, what); return v; }
    std::int32_t i32(const char* what) { std::int32_t v; read_raw(&v, 4, what); return v; }
    std::string str(const char* what) {
        std::uint64_t n = u64(what);
        if (n > (1ULL << 32)) fail(std::string("oversized ") + what);
        std::string s(n, '\0');
        if (n) read_raw(s.data(), n, what);
        return s;
    }
    std::vector<double> doubles(const char* what) {
        std::uint64_t n = u64(what);
        if (n > (1ULL << 32)) fail(std::string("oversized ") + what);
        std::vector<double> v(n);
        if (n) read_raw(v.data(), n * sizeof(double), what);
        return v;
    }
    Parameters params(const char* what) {
        Parameters out;
        std::uint64_t count = u64(what);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::string name = str("parameter name");
            char trainable = 0;
            read_raw(&trainable, 1, "trainable flag");
            std::uint64_t rank = u64("shape rank");
            if (rank > 8) fail("implausible tensor rank");
            Shape shape;
            for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(i32("shape dim"));
            std::vector<double> data = doubles("tensor data");
            if (shape_numel(shape) != data.size()) fail("tensor size mismatch");
            out.add(name, Tensor::from_data(shape, std::move(data)), trainable != 0);
        }
        return out;
    }
    void slots(std::vector<AdamSlot>& out, std::uint64_t& t, const char* what) {
        t = u64(what);
        std::uint64_t count = u64(what);
        out.clear();
        for (std::uint64_t i = 0; i < count; ++i) {
            AdamSlot slot;
            slot.m = doubles("adam m");
            slot.v = doubles("adam v");
            out.push_back(std::move(slot));
        }
    }
};

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_u32(out, Checkpoint::kVersion);
    write_string(out, serialize_config(ckpt.config));
    write_i32(out, ckpt.epoch);
    write_string(out, ckpt.rng_state);
    write_params(out, ckpt.g_params);
    write_params(out, ckpt.d_params);
    out.put(ckpt.g_prime_params ? 1 : 0);
    if (ckpt.g_prime_params) write_params(out, *ckpt.g_prime_params);
    write_slots(out, ckpt.opt_g_slots, ckpt.opt_g_t);
    write_slots(out, ckpt.opt_d_slots, ckpt.opt_d_t);
    write_slots(out, ckpt.opt_gp_slots, ckpt.opt_gp_t);
    if (!out) throw IoError("write failure while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    Reader r{in, path};
    char magic[4];
    r.read_raw(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic");
    std::uint32_t version = r.u32("version");
    if (version != Checkpoint::kVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    }
    Checkpoint ckpt;
    ckpt.config = parse_config(r.str("config"), path + "#config");
    ckpt.epoch = r.i32("epoch");
    ckpt.rng_state = r.str("rng state");
    ckpt.g_params = r.params("generator parameters");
    ckpt.d_params = r.params("discriminator parameters");
    char has_gp = 0;
    r.read_raw(&has_gp, 1, "dual-mode flag");
    if (has_gp) ckpt.g_prime_params = r.params("second generator parameters");
    r.slots(ckpt.opt_g_slots, ckpt.opt_g_t, "generator optimizer");
    r.slots(ckpt.opt_d_slots, ckpt.opt_d_t, "discriminator optimizer");
    r.slots(ckpt.opt_gp_slots, ckpt.opt_gp_t, "second generator optimizer");
    return ckpt;
}

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b) {
    auto params_eq = [](const Parameters& x, const Parameters& y) { return x.bitwise_equal(y); };
    auto slots_eq = [](const std::vector<AdamSlot>& x, const std::vector<AdamSlot>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i].m != y[i].m || x[i].v != y[i].v) return false;
        }
        return true;
    };
    if (serialize_config(a.config) != serialize_config(b.config)) return false;
    if (a.epoch != b.epoch || a.rng_state != b.rng_state) return false;
    if (!params_eq(a.g_params, b.g_params) || !params_eq(a.d_params, b.d_params)) return false;
    if (a.g_prime_params.has_value() != b.g_prime_params.has_value()) return false;
    if (a.g_prime_params && !params_eq(*a.g_prime_params, *b.g_prime_params)) return false;
    return slots_eq(a.opt_g_slots, b.opt_g_slots) && slots_eq(a.opt_d_slots, b.opt_d_slots) &&
           slots_eq(a.opt_gp_slots, b.opt_gp_slots) && a.opt_g_t == b.opt_g_t &&
           a.opt_d_t == b.opt_d_t && a.opt_gp_t == b.opt_gp_t;
}

// ---- metrics log ------------------------------------------------------------------------

std::string metrics_log_header() {
    return "epoch\tL_adv_D\tL_adv_G\tL_cyc\tL_st\tstroke_error_test\tcontent_acc_test\tdiversity_test";
}

std::string metrics_log_line(const EpochRecord& r) {
    std::ostringstream os;
    os.precision(10);
    os << r.epoch << "\t" << r.l_adv_d << "\t" << r.l_adv_g << "\t" << r.l_cyc << "\t" << r.l_st
       << "\t" << r.stroke_error_test << "\t" << r.content_acc_test << "\t" << r.diversity_test;
    return os.str();
}

// ---- train ------------------------------------------------------------------------------

std::vector<Tensor> unstack_images(const Tensor& batch) {
    if (batch.ndim() < 2) throw ShapeError("unstack_images expects a batch tensor");
    const int n = batch.shape()[0];
    Shape item_shape(batch.shape().begin() + 1, batch.shape().end());
    std::size_t item_size = shape_numel(item_shape);
    std::vector<Tensor> out;
    auto data = batch.data();
    for (int i = 0; i < n; ++i) {
        std::vector<double> chunk(data.begin() + i * item_size, data.begin() + (i + 1) * item_size);
        out.push_back(Tensor::from_data(item_shape, std::move(chunk)));
    }
    return out;
}

namespace {

Tensor gather_images(const std::vector<Tensor>& images, std::span<const int> ids) {
    std::vector<Tensor> chunk;
    chunk.reserve(ids.size());
    for (int id : ids) chunk.push_back(images[id]);
    return stack_images(chunk);
}

Tensor gather_codes(const std::vector<CharacterRecord>& chars, std::span<const int> ids) {
    std::vector<double> data;
    data.reserve(ids.size() * kStrokeCodeWidth);
    for (int id : ids) {
        for (int i = 0; i < kStrokeCodeWidth; ++i) {
            data.push_back(chars[id].code.bits[i] ? 1.0 : 0.0);
        }
    }
    return Tensor::from_data({static_cast<int>(ids.size()), kStrokeCodeWidth}, std::move(data));
}

} // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& config, const Evaluator* evaluator,
                  const TrainHooks& hooks, const Checkpoint* resume_from) {
    config.validate();
    if (corpus.train_a.empty() || corpus.train_b.empty()) {
        throw ContractError("train: empty corpus");
    }
    if (corpus.resolution != config.resolution) {
        throw ContractError("train: corpus resolution " + std::to_string(corpus.resolution) +
                            " does not match config resolution " + std::to_string(config.resolution));
    }
    const int steps_per_epoch = static_cast<int>(
        std::min(corpus.train_a.size(), corpus.train_b.size()) / config.batch_size);
    if (steps_per_epoch < 1) {
        throw ContractError("train: corpus too small for batch_size " +
                            std::to_string(config.batch_size));
    }

    Trainer trainer = resume_from ? Trainer::from_checkpoint(*resume_from)
                                  : Trainer::fresh(config);
    if (resume_from) trainer.adopt_config(config);

    std::optional<Evaluator> own_evaluator;
    if (!evaluator) {
        own_evaluator.emplace(corpus, derive_seed(config.seed, 99));
        evaluator = &*own_evaluator;
    }

    TrainResult result;
    // Batch order is a pure function of (seed, epoch) so resumed runs replay
    // the uninterrupted schedule exactly.
    auto epoch_order = [&config](const std::vector<int>& ids, int epoch, std::uint64_t stream) {
        std::vector<int> out = ids;
        std::mt19937_64 rng(derive_seed(config.seed, stream * 1000003ULL + epoch));
        for (std::size_t i = out.size(); i > 1; --i) {
            std::swap(out[i - 1], out[rng() % i]);
        }
        return out;
    };

    for (int epoch = trainer.epoch() + 1; epoch <= config.epochs; ++epoch) {
        std::vector<int> order_a = epoch_order(corpus.train_a, epoch, 7);
        std::vector<int> order_b = epoch_order(corpus.train_b, epoch, 11);
        EpochRecord record;
        record.epoch = epoch;
        try {
            for (int step = 0; step < steps_per_epoch; ++step) {
                std::span<const int> ids_a(&order_a[step * config.batch_size],
                                           static_cast<std::size_t>(config.batch_size));
                std::span<const int> ids_b(&order_b[step * config.batch_size],
                                           static_cast<std::size_t>(config.batch_size));
                Tensor batch_a = gather_images(corpus.images_a, ids_a);
                Tensor batch_b = gather_images(corpus.images_b, ids_b);
                Tensor codes_a = gather_codes(corpus.chars, ids_a);
                Tensor codes_b = gather_codes(corpus.chars, ids_b);
                StepReport sr = trainer.train_step(batch_a, &batch_b, codes_a, &codes_b);
                record.l_adv_d += sr.l_adv_d / steps_per_epoch;
                record.l_adv_g += sr.l_adv_g / steps_per_epoch;
                record.l_cyc += sr.l_cyc / steps_per_epoch;
                record.l_st += sr.l_st / steps_per_epoch;
            }
        } catch (const NumericError&) {
            trainer.set_epoch(epoch);
            if (hooks.on_abort) hooks.on_abort(trainer.to_checkpoint());
            throw;
        }
        trainer.set_epoch(epoch);

        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            Tensor test_batch = gather_images(corpus.images_a, corpus.test_a);
            NoTape guard;
            Tensor generated = trainer.models().g.forward(test_batch, Mode::eval);
            std::vector<Tensor> generated_vec = unstack_images(generated);
            MetricReport metrics = evaluator->evaluate(generated_vec, corpus.test_a);
            record.stroke_error_test = metrics.stroke_error;
            record.content_acc_test = metrics.content_accuracy;
            record.diversity_test = metrics.diversity.distinct_count;
            if (hooks.on_samples) hooks.on_samples(epoch, generated_vec);
        }

        result.log.push_back(record);
        if (hooks.on_epoch) hooks.on_epoch(record);
        if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 &&
            hooks.on_checkpoint) {
            hooks.on_checkpoint(trainer.to_checkpoint(), epoch);
        }
    }

    result.checkpoint = trainer.to_checkpoint();
    return result;
}

} // namespace strokegan

#include "strokegan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace strokegan {

std::string metric_report_tsv(const MetricReport& report) {
    std::ostringstream os;
    os << "n_samples\tstroke_error\tcontent_accuracy\tdistinct_count\tmean_pairwise_distance\n";
    os.precision(10);
    os << report.n_samples << "\t" << report.stroke_error << "\t" << report.content_accuracy
       << "\t" << report.diversity.distinct_count << "\t"
       << report.diversity.mean_pairwise_distance << "\n";
    return os.str();
}

double stroke_error(const std::vector<Tensor>& generated,
                    const std::vector<StrokeCode>& true_codes, const StrokeDetector& detector) {
    if (!detector.calibrated()) {
        throw ContractError("stroke_error: detector has not passed its clean-render self-test");
    }
    if (generated.size() != true_codes.size()) {
        throw ContractError("stroke_error: batch and code list sizes disagree");
    }
    if (generated.empty()) throw ContractError("stroke_error: empty batch");

    long mismatches = 0;
    long total_true = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        std::set<int> detected = detector.detect(generated[i]);
        std::set<int> truth = true_codes[i].kinds();
        for (int k : truth) {
            if (!detected.count(k)) ++mismatches; // missing
        }
        for (int k : detected) {
            if (!truth.count(k)) ++mismatches; // redundant
        }
        total_true += static_cast<long>(truth.size());
    }
    if (total_true == 0) throw ContractError("stroke_error: true codes are all empty");
    return static_cast<double>(mismatches) / static_cast<double>(total_true);
}

DiversityReport diversity(const std::vector<Tensor>& batch, double rho) {
    if (batch.size() < 2) throw ContractError("diversity needs a batch of at least 2");
    const std::size_t n = batch.size();

    // Union-find single linkage: merge when the distance is strictly below rho.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = image_distance(batch[i], batch[j]);
            total += d;
            ++pairs;
            if (d < rho) parent[find(i)] = find(j);
        }
    }

    std::set<std::size_t> roots;
    for (std::size_t i = 0; i < n; ++i) roots.insert(find(i));

    DiversityReport report;
    report.distinct_count = static_cast<int>(roots.size());
    report.mean_pairwise_distance = total / static_cast<double>(pairs);
    return report;
}

// ---- cross entropy -----------------------------------------------------------------

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy expects (n,k) logits");
    const int n = logits.shape()[0];
    const int k = logits.shape()[1];
    if (static_cast<int>(labels.size()) != n) {
        throw ContractError("cross_entropy: label count does not match the batch");
    }
    for (int label : labels) {
        if (label < 0 || label >= k) throw ContractError("cross_entropy: label out of range");
    }

    auto z = logits.data();
    std::vector<double> softmax(static_cast<std::size_t>(n) * k);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = &z[static_cast<std::size_t>(i) * k];
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        double lse = mx + std::log(sum);
        loss += lse - row[labels[i]];
        for (int j = 0; j < k; ++j) {
            softmax[static_cast<std::size_t>(i) * k + j] = std::exp(row[j] - lse);
        }
    }
    loss /= n;

    auto saved = std::make_shared<std::vector<double>>(std::move(softmax));
    auto labels_saved = std::make_shared<std::vector<int>>(labels);
    return make_op_output({1}, {loss}, {&logits}, "cross_entropy",
        [saved, labels_saved, n, k](std::span<const double> up,
                                    const std::vector<std::span<double>>& pg) {
            if (pg[0].empty()) return;
            double scale = up[0] / n;
            const auto& sm = *saved;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < k; ++j) {
                    double g = sm[static_cast<std::size_t>(i) * k + j];
                    if (j == (*labels_saved)[i]) g -= 1.0;
                    pg[0][static_cast<std::size_t>(i) * k + j] += scale * g;
                }
            }
        });
}

// ---- content classifier ---------------------------------------------------------------

namespace {

// Integer translation with +1 (background) fill; augmentation for corpora
// loaded from disk, which carry no stroke placements to re-render.
Tensor shift_image(const Tensor& img, int dx, int dy) {
    const int h = img.shape()[0], w = img.shape()[1], c = img.shape()[2];
    std::vector<double> out(img.size(), 1.0);
    auto src = img.data();
    for (int y = 0; y < h; ++y) {
        int sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (int x = 0; x < w; ++x) {
            int sx = x - dx;
            if (sx < 0 || sx >= w) continue;
            for (int ch = 0; ch < c; ++ch) {
                out[(static_cast<std::size_t>(y) * w + x) * c + ch] =
                    src[(static_cast<std::size_t>(sy) * w + sx) * c + ch];
            }
        }
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

constexpr int kClassifierChannels[3] = {8, 16, 32};

struct ClassifierLayout {
    int feature_dim;
};

ClassifierLayout classifier_layout(int resolution) {
    return ClassifierLayout{(resolution / 8) * (resolution / 8) * kClassifierChannels[2]};
}

} // namespace

ContentClassifier::ContentClassifier(int resolution, int n_classes, std::uint64_t seed)
    : resolution_(resolution), n_classes_(n_classes) {
    if (n_classes_ < 10) throw ContractError("content classifier needs at least 10 classes");
    if (resolution_ % 8 != 0) throw ContractError("classifier resolution must be divisible by 8");
    std::mt19937_64 rng(seed);
    int in_c = 3;
    for (int layer = 0; layer < 3; ++layer) {
        int out_c = kClassifierChannels[layer];
        std::string prefix = "c" + std::to_string(layer);
        params_.add(prefix + ".weight", Tensor::randn({3, 3, in_c, out_c}, rng, 0.05));
        params_.add(prefix + ".bias", Tensor::zeros({out_c}));
        params_.add(prefix + ".gamma", Tensor::full({out_c}, 1.0));
        params_.add(prefix + ".beta", Tensor::zeros({out_c}));
        params_.add(prefix + ".running_mean", Tensor::zeros({out_c}), false);
        params_.add(prefix + ".running_var", Tensor::full({out_c}, 1.0), false);
        in_c = out_c;
    }
    ClassifierLayout layout = classifier_layout(resolution_);
    params_.add("fc.weight",
                Tensor::randn({layout.feature_dim, n_classes_}, rng, 1.0 / std::sqrt(layout.feature_dim)));
    params_.add("fc.bias", Tensor::zeros({n_classes_}));
    params_.set_requires_grad(true);
}

Tensor ContentClassifier::logits(const Tensor& batch, Mode mode) {
    Tensor t = batch;
    for (int layer = 0; layer < 3; ++layer) {
        std::string prefix = "c" + std::to_string(layer);
        t = conv2d(t, params_.at(prefix + ".weight"), 2, 1);
        t = add_channel_bias(t, params_.at(prefix + ".bias"));
        t = batch_norm(t, params_.at(prefix + ".gamma"), params_.at(prefix + ".beta"),
                       params_.at(prefix + ".running_mean"), params_.at(prefix + ".running_var"),
                       mode);
        t = relu(t);
    }
    ClassifierLayout layout = classifier_layout(resolution_);
    t = t.reshape({batch.shape()[0], layout.feature_dim});
    t = matmul(t, params_.at("fc.weight"));
    return add_rowvec(t, params_.at("fc.bias"));
}

void ContentClassifier::fit(const Corpus& corpus, LabelMode mode) {
    if (static_cast<int>(corpus.chars.size()) != n_classes_ || corpus.resolution != resolution_) {
        throw ContractError("classifier geometry does not match the corpus");
    }

    // Jitter-augmented clean renders of the target font; fresh jitter seeds
    // form the holdout so the guard measures generalization, not recall. A
    // corpus loaded from disk has no placements to re-render, so augmentation
    // falls back to one-pixel shifts of the stored images.
    const bool can_render = !corpus.chars.empty() && !corpus.chars.front().placements.empty();
    std::vector<Tensor> train_images, holdout_images;
    std::vector<int> train_labels, holdout_labels;
    for (const auto& rec : corpus.chars) {
        train_images.push_back(corpus.images_b[rec.id]);
        train_labels.push_back(rec.id);
        if (can_render) {
            for (int k = 0; k < 3; ++k) {
                FontStyle style = corpus.style_b;
                style.jitter_seed = corpus.style_b.jitter_seed + 1000 + 17 * k;
                train_images.push_back(render_glyph(rec.placements, style, resolution_).image);
                train_labels.push_back(rec.id);
            }
            for (int k = 0; k < 2; ++k) {
                FontStyle style = corpus.style_b;
                style.jitter_seed = corpus.style_b.jitter_seed + 5000 + 31 * k;
                holdout_images.push_back(render_glyph(rec.placements, style, resolution_).image);
                holdout_labels.push_back(rec.id);
            }
        } else {
            const Tensor& base = corpus.images_b[rec.id];
            for (auto [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}, std::pair{-1, 0},
                                  std::pair{0, -1}}) {
                train_images.push_back(shift_image(base, dx, dy));
                train_labels.push_back(rec.id);
            }
            for (auto [dx, dy] : {std::pair{1, 1}, std::pair{-1, -1}}) {
                holdout_images.push_back(shift_image(base, dx, dy));
                holdout_labels.push_back(rec.id);
            }
        }
    }

    std::mt19937_64 rng(corpus.seed ^ 0xC1A551F1EDULL);
    if (mode == LabelMode::shuffled) {
        // Per-image permutation: destroys image-label coherence, so training
        // cannot generalize (used by the sanity protocol).
        for (std::size_t i = train_labels.size(); i > 1; --i) {
            std::swap(train_labels[i - 1], train_labels[rng() % i]);
        }
    }

    AdamOptimizer opt(AdamHyper{1e-3, 0.9, 0.999, 1e-8}, params_);
    const int batch = 32;
    const int max_epochs = 120;
    std::vector<std::size_t> order(train_images.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng() % i]);
        }
        for (std::size_t start = 0; start + 2 <= order.size(); start += batch) {
            std::size_t count = std::min<std::size_t>(batch, order.size() - start);
            if (count < 2) break; // train-mode batch norm needs >= 2
            std::vector<Tensor> chunk;
            std::vector<int> labels;
            for (std::size_t i = 0; i < count; ++i) {
                chunk.push_back(train_images[order[start + i]]);
                labels.push_back(train_labels[order[start + i]]);
            }
            Tensor x = stack_images(chunk);
            Tape tape;
            Tensor loss = cross_entropy_with_logits(logits(x, Mode::train), labels);
            params_.zero_grad();
            tape.backward(loss);
            opt.step(params_);
        }
        holdout_accuracy_ = accuracy(holdout_images, holdout_labels);
        // The guard also covers the training renders: the proxy has to be
        // near-perfect on clean data for the metric to mean anything.
        if (holdout_accuracy_ >= 0.99 && accuracy(train_images, train_labels) >= 0.99) {
            fitted_ = true;
            return;
        }
    }
    throw NumericError("content classifier failed the >= 99% holdout guard (reached " +
                       std::to_string(holdout_accuracy_) + ")");
}

std::vector<int> ContentClassifier::predict(const std::vector<Tensor>& images) {
    if (images.empty()) throw ContractError("predict: empty batch");
    Tensor x = stack_images(images);
    NoTape guard;
    Tensor z = logits(x, Mode::eval);
    const int k = n_classes_;
    std::vector<int> out;
    auto zd = z.data();
    for (int i = 0; i < z.shape()[0]; ++i) {
        const double* row = &zd[static_cast<std::size_t>(i) * k];
        out.push_back(static_cast<int>(std::max_element(row, row + k) - row));
    }
    return out;
}

double ContentClassifier::accuracy(const std::vector<Tensor>& images,
                                   const std::vector<int>& identities) {
    if (images.size() != identities.size()) {
        throw ContractError("accuracy: image and identity counts disagree");
    }
    auto preds = predict(images);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == identities[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

ContentClassifier train_content_classifier(const Corpus& corpus, std::uint64_t seed,
                                           ContentClassifier::LabelMode mode) {
    ContentClassifier classifier(corpus.resolution, static_cast<int>(corpus.chars.size()), seed);
    classifier.fit(corpus, mode);
    return classifier;
}

double content_accuracy(const std::vector<Tensor>& generated, const std::vector<int>& identities,
                        ContentClassifier& classifier) {
    if (!classifier.fitted()) {
        throw ContractError("content_accuracy: classifier has not passed the training guard");
    }
    for (int id : identities) {
        if (id < 0 || id >= classifier.n_classes()) {
            throw ContractError("content_accuracy: identity outside the classifier's class set");
        }
    }
    return classifier.accuracy(generated, identities);
}

// ---- Evaluator -------------------------------------------------------------------------

Evaluator::Evaluator(const Corpus& corpus, std::uint64_t seed)
    : rho_(corpus.rho),
      detector_(corpus.style_b, corpus.grid, corpus.resolution),
      classifier_(corpus.resolution, static_cast<int>(corpus.chars.size()), seed) {
    for (const auto& rec : corpus.chars) codes_.push_back(rec.code);
    detector_.calibrate();
    classifier_.fit(corpus);
}

MetricReport Evaluator::evaluate(const std::vector<Tensor>& generated,
                                 const std::vector<int>& char_ids) const {
    if (generated.size() != char_ids.size()) {
        throw ContractError("evaluate: batch and id list sizes disagree");
    }
    std::vector<StrokeCode> codes;
    for (int id : char_ids) {
        if (id < 0 || id >= static_cast<int>(codes_.size())) {
            throw ContractError("evaluate: character id out of range");
        }
        codes.push_back(codes_[id]);
    }
    MetricReport report;
    report.n_samples = static_cast<int>(generated.size());
    report.stroke_error = stroke_error(generated, codes, detector_);
    report.content_accuracy = content_accuracy(generated, char_ids, classifier_);
    report.diversity = diversity(generated, rho_);
    return report;
}

} // namespace strokegan

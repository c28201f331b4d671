#ifndef STROKEGAN_EVALUATION_HPP
#define STROKEGAN_EVALUATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "strokegan/nn.hpp"
#include "strokegan/optim.hpp"
#include "strokegan/strokes.hpp"

namespace strokegan {

struct DiversityReport {
    int distinct_count = 0;
    double mean_pairwise_distance = 0.0;
};

struct MetricReport {
    double stroke_error = 0.0;
    double content_accuracy = 0.0;
    DiversityReport diversity;
    int n_samples = 0;
};

std::string metric_report_tsv(const MetricReport& report);

// (missing + redundant stroke kinds) / (total true stroke count), summed over
// the batch. The detector must have passed its clean-render self-test.
double stroke_error(const std::vector<Tensor>& generated,
                    const std::vector<StrokeCode>& true_codes, const StrokeDetector& detector);

// Single-linkage clustering at threshold rho over normalized L2 distances
// (merge when d < rho) plus the mean distance over all pairs. Batch >= 2.
DiversityReport diversity(const std::vector<Tensor>& batch, double rho);

// Small convolutional classifier over character identities, the local proxy
// for the content-accuracy metric. fit() trains on jitter-augmented clean
// renders of the target font and enforces the >= 99% holdout guard.
class ContentClassifier {
public:
    enum class LabelMode { normal, shuffled }; // shuffled = per-image label permutation (sanity)

    ContentClassifier(int resolution, int n_classes, std::uint64_t seed);

    void fit(const Corpus& corpus, LabelMode mode = LabelMode::normal);
    bool fitted() const { return fitted_; }
    double holdout_accuracy() const { return holdout_accuracy_; }

    Tensor logits(const Tensor& batch, Mode mode);
    std::vector<int> predict(const std::vector<Tensor>& images);
    double accuracy(const std::vector<Tensor>& images, const std::vector<int>& identities);
    int n_classes() const { return n_classes_; }

private:
    int resolution_;
    int n_classes_;
    Parameters params_;
    bool fitted_ = false;
    double holdout_accuracy_ = 0.0;
};

ContentClassifier train_content_classifier(const Corpus& corpus, std::uint64_t seed,
                                           ContentClassifier::LabelMode mode =
                                               ContentClassifier::LabelMode::normal);

// Fraction of generated images classified as their source character identity.
double content_accuracy(const std::vector<Tensor>& generated, const std::vector<int>& identities,
                        ContentClassifier& classifier);

// Softmax cross entropy with integer labels; mean over the batch.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels);

// Bundles the calibrated detector (target font) and the trained proxy
// classifier for repeated test-split evaluation.
class Evaluator {
public:
    Evaluator(const Corpus& corpus, std::uint64_t seed);
    MetricReport evaluate(const std::vector<Tensor>& generated,
                          const std::vector<int>& char_ids) const;
    const StrokeDetector& detector() const { return detector_; }
    double rho() const { return rho_; }

private:
    std::vector<StrokeCode> codes_;
    double rho_;
    StrokeDetector detector_;
    mutable ContentClassifier classifier_;
};

} // namespace strokegan

#endif

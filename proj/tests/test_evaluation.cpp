#include "doctest.h"

#include <cmath>
#include <random>

#include "strokegan/evaluation.hpp"

using namespace strokegan;

namespace {

const Corpus& eval_corpus() {
    static Corpus corpus = build_corpus(20, 2, 4, 303, 32);
    return corpus;
}

StrokeDetector& eval_detector() {
    static StrokeDetector detector = [] {
        StrokeDetector d(eval_corpus().style_b, eval_corpus().grid, 32);
        d.calibrate();
        return d;
    }();
    return detector;
}

} // namespace

TEST_CASE("stroke_error is zero on clean renders") {
    const Corpus& corpus = eval_corpus();
    std::vector<Tensor> images;
    std::vector<StrokeCode> codes;
    for (const auto& rec : corpus.chars) {
        images.push_back(corpus.images_b[rec.id]);
        codes.push_back(rec.code);
    }
    CHECK(stroke_error(images, codes, eval_detector()) == 0.0);
}

TEST_CASE("stroke_error counts missing and redundant strokes exactly") {
    const Corpus& corpus = eval_corpus();
    const GlyphGrid& grid = corpus.grid;

    // Two five-stroke characters; drop one stroke from the render of the first.
    std::vector<Placement> full1, full2;
    for (int i = 0; i < 5; ++i) full1.push_back(cell_placement(grid, i, 2 * i + 1));
    for (int i = 0; i < 5; ++i) full2.push_back(cell_placement(grid, i + 4, 2 * i + 2));
    std::vector<Placement> missing_one(full1.begin() + 1, full1.end());

    std::vector<Tensor> images = {
        render_glyph(missing_one, corpus.style_b, 32).image,
        render_glyph(full2, corpus.style_b, 32).image,
    };
    std::vector<StrokeCode> codes = {StrokeCode::encode(kinds_of(full1)),
                                     StrokeCode::encode(kinds_of(full2))};
    // 1 missing + 0 redundant over 10 true strokes.
    CHECK(stroke_error(images, codes, eval_detector()) == doctest::Approx(0.1).epsilon(1e-12));

    // A redundant stroke counts symmetrically.
    std::vector<Placement> extra = full2;
    extra.push_back(cell_placement(grid, 2, 31));
    std::vector<Tensor> images2 = {render_glyph(full1, corpus.style_b, 32).image,
                                   render_glyph(extra, corpus.style_b, 32).image};
    CHECK(stroke_error(images2, codes, eval_detector()) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("stroke_error scale exactness over injected corruption") {
    const Corpus& corpus = eval_corpus();
    std::vector<Tensor> images;
    std::vector<StrokeCode> codes;
    long total_strokes = 0;
    int injected = 0;
    for (const auto& rec : corpus.chars) {
        std::vector<Placement> placements = rec.placements;
        if (rec.id % 4 == 0 && placements.size() > 2) {
            placements.pop_back(); // known missing stroke
            ++injected;
        }
        images.push_back(render_glyph(placements, corpus.style_b, 32).image);
        codes.push_back(rec.code);
        total_strokes += rec.code.count();
    }
    REQUIRE(injected > 0);
    double expected = static_cast<double>(injected) / static_cast<double>(total_strokes);
    CHECK(stroke_error(images, codes, eval_detector()) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("stroke_error requires a calibrated detector") {
    const Corpus& corpus = eval_corpus();
    StrokeDetector raw(corpus.style_b, corpus.grid, 32);
    std::vector<Tensor> images = {corpus.images_b[0]};
    std::vector<StrokeCode> codes = {corpus.chars[0].code};
    CHECK_THROWS_AS(stroke_error(images, codes, raw), ContractError);
}

TEST_CASE("diversity clusters") {
    const Corpus& corpus = eval_corpus();
    std::vector<Tensor> clean;
    for (const auto& img : corpus.images_b) clean.push_back(img);

    // All-distinct clean renders separate perfectly at the corpus rho.
    auto report = diversity(clean, corpus.rho);
    CHECK(report.distinct_count == static_cast<int>(clean.size()));
    CHECK(report.mean_pairwise_distance > 0.0);

    // Total collapse.
    std::vector<Tensor> collapsed(6, corpus.images_b[0]);
    auto collapsed_report = diversity(collapsed, corpus.rho);
    CHECK(collapsed_report.distinct_count == 1);
    CHECK(collapsed_report.mean_pairwise_distance == 0.0);

    // A duplicate merges into an existing cluster.
    std::vector<Tensor> with_dup = clean;
    with_dup.push_back(corpus.images_b[3]);
    CHECK(diversity(with_dup, corpus.rho).distinct_count == static_cast<int>(clean.size()));

    // Permutation invariance.
    std::vector<Tensor> shuffled = {clean[5], clean[1], clean[4], clean[0], clean[2], clean[3]};
    std::vector<Tensor> ordered(clean.begin(), clean.begin() + 6);
    CHECK(diversity(shuffled, corpus.rho).distinct_count ==
          diversity(ordered, corpus.rho).distinct_count);

    CHECK_THROWS_AS(diversity({corpus.images_b[0]}, corpus.rho), ContractError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    std::mt19937_64 rng(41);
    Tensor logits = Tensor::randn({4, 6}, rng);
    std::vector<int> labels = {0, 3, 5, 2};
    auto f = [&labels](const Tensor& z) { return cross_entropy_with_logits(z, labels); };
    auto result = grad_check(f, logits, 1e-5);
    CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("content classifier reaches the guard and stays near chance untrained") {
    const Corpus& corpus = eval_corpus();

    // Untrained network classifies at chance level.
    ContentClassifier fresh(32, static_cast<int>(corpus.chars.size()), 99);
    std::vector<Tensor> clean;
    std::vector<int> ids;
    for (const auto& rec : corpus.chars) {
        clean.push_back(corpus.images_b[rec.id]);
        ids.push_back(rec.id);
    }
    double chance = fresh.accuracy(clean, ids);
    CHECK(chance < 0.5); // 1/20 expected; allow generous slack

    // Trained classifier passes the >= 99% holdout guard and recognizes the
    // clean renders it saw during training.
    ContentClassifier trained = train_content_classifier(corpus, 7);
    CHECK(trained.fitted());
    CHECK(trained.holdout_accuracy() >= 0.99);
    CHECK(trained.accuracy(clean, ids) >= 0.99);
    CHECK(content_accuracy(clean, ids, trained) >= 0.99);

    // Blank images cannot be recognized.
    std::vector<Tensor> blanks(clean.size(), Tensor::full({32, 32, 3}, 1.0));
    CHECK(content_accuracy(blanks, ids, trained) <= 0.5);

    // Permutation invariance of the metric.
    std::vector<Tensor> perm_imgs = {clean[3], clean[0], clean[1], clean[2]};
    std::vector<int> perm_ids = {ids[3], ids[0], ids[1], ids[2]};
    std::vector<Tensor> base_imgs(clean.begin(), clean.begin() + 4);
    std::vector<int> base_ids(ids.begin(), ids.begin() + 4);
    CHECK(content_accuracy(perm_imgs, perm_ids, trained) ==
          content_accuracy(base_imgs, base_ids, trained));
}

TEST_CASE("permuted-label training fails the guard") {
    CHECK_THROWS_AS(
        train_content_classifier(eval_corpus(), 7, ContentClassifier::LabelMode::shuffled),
        NumericError);
}

TEST_CASE("content_accuracy validates the class set") {
    ContentClassifier trained = train_content_classifier(eval_corpus(), 11);
    std::vector<Tensor> imgs = {eval_corpus().images_b[0]};
    std::vector<int> bad_ids = {999};
    CHECK_THROWS_AS(content_accuracy(imgs, bad_ids, trained), ContractError);
}

TEST_CASE("evaluator produces a complete, deterministic report") {
    const Corpus& corpus = eval_corpus();
    Evaluator evaluator(corpus, 55);
    std::vector<Tensor> generated;
    std::vector<int> ids;
    for (int id : corpus.test_a) {
        generated.push_back(corpus.images_b[id]); // clean target-font stand-ins
        ids.push_back(id);
    }
    MetricReport r1 = evaluator.evaluate(generated, ids);
    MetricReport r2 = evaluator.evaluate(generated, ids);
    CHECK(r1.n_samples == static_cast<int>(ids.size()));
    CHECK(r1.stroke_error == 0.0);
    CHECK(r1.content_accuracy >= 0.99);
    CHECK(r1.diversity.distinct_count == r2.diversity.distinct_count);
    CHECK(r1.stroke_error == r2.stroke_error);
    CHECK(r1.content_accuracy == r2.content_accuracy);

    std::string tsv = metric_report_tsv(r1);
    CHECK(tsv.find("stroke_error") != std::string::npos);
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 2);
}

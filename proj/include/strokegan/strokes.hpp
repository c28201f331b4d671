#ifndef STROKEGAN_STROKES_HPP
#define STROKEGAN_STROKES_HPP

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "strokegan/tensor.hpp"

namespace strokegan {

// One-bit indicator of which of the 32 stroke kinds appear in a character.
// Kind indices are 1-based (1..32) to match the usual stroke numbering; bit i
// of the bitstring corresponds to kind i+1.
struct StrokeCode {
    std::array<std::uint8_t, 32> bits{};

    static StrokeCode encode(const std::set<int>& kinds);
    static StrokeCode from_bitstring(const std::string& s);
    std::string bitstring() const;
    std::set<int> kinds() const;
    int count() const;
    Tensor to_tensor() const; // shape (32,)
    bool operator==(const StrokeCode&) const = default;
};

// Is code_a componentwise <= code_b (the monotonicity order of encode).
bool code_leq(const StrokeCode& a, const StrokeCode& b);

// ---- alphabet -----------------------------------------------------------------

// A stroke template: an open polyline in the unit box (x right, y down) plus a
// relative thickness. The geometries are synthetic; only the count (32) and
// the indicator semantics matter.
struct StrokeTemplate {
    int kind = 0;
    std::string name;
    std::vector<std::array<double, 2>> points;
    double thickness_scale = 1.0;
};

class StrokeAlphabet {
public:
    static const StrokeAlphabet& instance();
    const StrokeTemplate& at(int kind) const; // kind 1..32
    int size() const { return 32; }

private:
    StrokeAlphabet();
    std::vector<StrokeTemplate> templates_;
};

// ---- rendering ------------------------------------------------------------------

struct FontStyle {
    std::string name;
    double thickness = 0.05;  // stroke width as a fraction of the canvas
    double slant = 0.0;       // x shear per unit y, applied about the canvas center
    double rounding = 0.0;    // 0..1 corner rounding
    std::uint64_t jitter_seed = 0;
    double jitter_amount = 0.0; // per-stroke offset, canvas fraction
};

FontStyle font_style_a(); // thin, upright
FontStyle font_style_b(); // thick, slanted, rounded corners

// Axis-aligned map of the unit stroke box into the canvas ([0,1] coordinates).
struct Placement {
    int kind = 0;
    double x0 = 0, y0 = 0, sx = 1, sy = 1;
};

struct GlyphGrid {
    int rows = 3, cols = 3;
    double margin = 0.07; // canvas border kept clear
    double inset = 0.14;  // fraction of the cell left clear on each side
    int cell_count() const { return rows * cols; }
};

Placement cell_placement(const GlyphGrid& grid, int cell_index, int kind);

struct SyntheticGlyph {
    std::vector<Placement> placements;
    Tensor image; // (res, res, 3), grayscale replicated, values quantized to 8-bit levels
};

// Rasterizes the strokes: background +1, ink -1, anti-aliased edges. Output is
// deterministic given the style's jitter seed and quantized so a PNG round
// trip is bit exact. Valid resolutions: 32, 64, 128.
SyntheticGlyph render_glyph(const std::vector<Placement>& placements, const FontStyle& style,
                            int resolution);

std::set<int> kinds_of(const std::vector<Placement>& placements);

// Stacks (h,w,c) images into an (n,h,w,c) batch.
Tensor stack_images(const std::vector<Tensor>& images);

// ---- corpus --------------------------------------------------------------------

struct CharacterRecord {
    int id = 0;
    std::vector<Placement> placements;
    StrokeCode code;
};

// The two-font unpaired corpus. The inventory is sampled once and rendered in
// both styles; the train splits are shuffled independently per font so no
// index correspondence is exposed.
struct Corpus {
    int resolution = 32;
    std::uint64_t seed = 0;
    GlyphGrid grid;
    FontStyle style_a, style_b;
    std::vector<CharacterRecord> chars;
    std::vector<Tensor> images_a, images_b; // indexed by character id
    std::vector<int> train_a, test_a;       // character ids
    std::vector<int> train_b, test_b;
    double rho = 0.0; // diversity clustering threshold calibrated on clean renders
    // Ids of the constructed pair of distinct characters sharing a stroke code.
    std::array<int, 2> same_code_pair{-1, -1};
};

Corpus build_corpus(int n_chars, int strokes_min, int strokes_max, std::uint64_t seed,
                    int resolution);

// Normalized L2 distance between two images: ||a-b||_2 / sqrt(numel).
double image_distance(const Tensor& a, const Tensor& b);

// ---- detector -----------------------------------------------------------------

// Template-matching stroke oracle. For every grid cell the detector sweeps all
// 32 stroke templates (rendered in the same font style, jitter-free) and
// reports the best-scoring kind when its normalized cross-correlation clears
// theta. calibrate() runs the clean-render self-test: every single-stroke
// render in every cell must be recovered exactly.
class StrokeDetector {
public:
    StrokeDetector(FontStyle style, GlyphGrid grid, int resolution, double theta = 0.7);

    // Per-cell best and runner-up template scores (diagnostics and margin tests).
    struct CellScore {
        int cell = -1;
        int best_kind = 0;
        double best_score = 0.0;
        int second_kind = 0;
        double second_score = 0.0;
        double ink_norm = 0.0;
    };
    std::vector<CellScore> cell_scores(const Tensor& image) const;

    std::set<int> detect(const Tensor& image) const;
    void calibrate();
    bool calibrated() const { return calibrated_; }
    const FontStyle& style() const { return style_; }
    int resolution() const { return resolution_; }
    double theta() const { return theta_; }

private:
    struct KindTemplate {
        int kind;
        std::vector<double> ink; // over the cell window
        double norm;
    };
    struct Cell {
        int x0, y0, x1, y1;        // window rect (inclusive-exclusive pixel bounds)
        std::vector<double> mask;  // dilated union support, 0/1 over the window
        std::vector<KindTemplate> kinds;
    };
    FontStyle style_;
    GlyphGrid grid_;
    int resolution_;
    double theta_;
    bool calibrated_ = false;
    std::vector<Cell> cells_;
};

} // namespace strokegan

#endif

#include "strokegan/strokes.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace strokegan {

// ---- StrokeCode -----------------------------------------------------------------

StrokeCode StrokeCode::encode(const std::set<int>& kinds) {
    if (kinds.empty()) throw ContractError("encode: empty stroke-kind set");
    StrokeCode code;
    for (int k : kinds) {
        if (k < 1 || k > 32) {
            throw ContractError("encode: stroke kind " + std::to_string(k) + " outside 1..32");
        }
        code.bits[k - 1] = 1;
    }
    return code;
}

StrokeCode StrokeCode::from_bitstring(const std::string& s) {
    if (s.size() != 32) throw ContractError("stroke code bitstring must have 32 characters");
    StrokeCode code;
    for (std::size_t i = 0; i < 32; ++i) {
        if (s[i] == '1') code.bits[i] = 1;
        else if (s[i] != '0') throw ContractError("stroke code bitstring must be binary");
    }
    return code;
}

std::string StrokeCode::bitstring() const {
    std::string s(32, '0');
    for (std::size_t i = 0; i < 32; ++i) {
        if (bits[i]) s[i] = '1';
    }
    return s;
}

std::set<int> StrokeCode::kinds() const {
    std::set<int> out;
    for (int i = 0; i < 32; ++i) {
        if (bits[i]) out.insert(i + 1);
    }
    return out;
}

int StrokeCode::count() const {
    int n = 0;
    for (auto b : bits) n += b;
    return n;
}

Tensor StrokeCode::to_tensor() const {
    std::vector<double> data(32);
    for (int i = 0; i < 32; ++i) data[i] = bits[i] ? 1.0 : 0.0;
    return Tensor::from_data({32}, std::move(data));
}

bool code_leq(const StrokeCode& a, const StrokeCode& b) {
    for (int i = 0; i < 32; ++i) {
        if (a.bits[i] > b.bits[i]) return false;
    }
    return true;
}

// ---- alphabet -------------------------------------------------------------------

StrokeAlphabet::StrokeAlphabet() {
    auto put = [this](const char* name, std::vector<std::array<double, 2>> pts, double tscale = 1.0) {
        StrokeTemplate t;
        t.kind = static_cast<int>(templates_.size()) + 1;
        t.name = name;
        t.points = std::move(pts);
        t.thickness_scale = tscale;
        templates_.push_back(std::move(t));
    };
    // Synthetic stroke shapes in the unit box, x right / y down. Chosen so no
    // template is a near subset of another under the detector.
    put("horizontal", {{0.05, 0.50}, {0.95, 0.50}});
    put("vertical", {{0.50, 0.05}, {0.50, 0.95}});
    put("falling-left", {{0.85, 0.05}, {0.15, 0.95}});
    put("falling-right", {{0.15, 0.05}, {0.85, 0.95}});
    put("dot", {{0.42, 0.40}, {0.58, 0.60}}, 1.8);
    put("rising", {{0.08, 0.85}, {0.92, 0.30}});
    put("horizontal-turn", {{0.05, 0.20}, {0.80, 0.20}, {0.80, 0.95}});
    put("horizontal-hook", {{0.05, 0.35}, {0.92, 0.35}, {0.65, 0.72}});
    put("vertical-turn", {{0.20, 0.05}, {0.20, 0.80}, {0.95, 0.80}});
    put("vertical-hook", {{0.62, 0.05}, {0.62, 0.85}, {0.18, 0.60}});
    put("curved-hook", {{0.30, 0.05}, {0.66, 0.30}, {0.72, 0.62}, {0.50, 0.90}, {0.16, 0.70}});
    put("slant-hook", {{0.12, 0.08}, {0.45, 0.45}, {0.68, 0.82}, {0.92, 0.55}});
    put("turn-hook", {{0.05, 0.18}, {0.72, 0.18}, {0.72, 0.85}, {0.45, 0.68}});
    put("vertical-bend", {{0.22, 0.05}, {0.22, 0.50}, {0.50, 0.85}, {0.90, 0.85}, {0.90, 0.42}});
    put("horizontal-falling", {{0.10, 0.20}, {0.72, 0.20}, {0.15, 0.92}});
    put("horizontal-press", {{0.05, 0.25}, {0.50, 0.25}, {0.92, 0.90}});
    put("vertical-rise", {{0.30, 0.05}, {0.30, 0.78}, {0.92, 0.50}});
    put("fall-bounce", {{0.80, 0.05}, {0.12, 0.50}, {0.84, 0.95}});
    put("fall-turn", {{0.78, 0.05}, {0.28, 0.55}, {0.92, 0.55}});
    put("lying-hook", {{0.05, 0.30}, {0.42, 0.58}, {0.80, 0.68}, {0.95, 0.40}});
    put("turn-rise", {{0.05, 0.20}, {0.60, 0.20}, {0.60, 0.78}, {0.95, 0.50}});
    put("zigzag", {{0.08, 0.15}, {0.88, 0.15}, {0.12, 0.85}, {0.92, 0.85}});
    put("double-turn-hook", {{0.15, 0.05}, {0.15, 0.45}, {0.72, 0.45}, {0.72, 0.92}, {0.50, 0.78}});
    put("slant-press-hook", {{0.05, 0.12}, {0.52, 0.12}, {0.82, 0.78}, {0.55, 0.90}});
    put("stair-fall", {{0.05, 0.12}, {0.55, 0.12}, {0.55, 0.45}, {0.90, 0.45}, {0.42, 0.92}});
    put("turn-fall", {{0.35, 0.05}, {0.35, 0.50}, {0.90, 0.50}, {0.38, 0.92}});
    put("arc-left", {{0.70, 0.08}, {0.46, 0.24}, {0.40, 0.50}, {0.46, 0.76}, {0.70, 0.92}});
    put("arc-right", {{0.28, 0.08}, {0.58, 0.22}, {0.70, 0.50}, {0.58, 0.78}, {0.28, 0.92}});
    put("s-curve", {{0.70, 0.06}, {0.32, 0.30}, {0.68, 0.68}, {0.30, 0.94}});
    put("double-stair", {{0.05, 0.10}, {0.60, 0.10}, {0.60, 0.42}, {0.22, 0.42}, {0.22, 0.85}, {0.85, 0.85}});
    put("peak", {{0.06, 0.62}, {0.46, 0.20}, {0.94, 0.78}});
    put("turn-lift", {{0.15, 0.08}, {0.15, 0.62}, {0.75, 0.62}, {0.94, 0.30}});
}

const StrokeAlphabet& StrokeAlphabet::instance() {
    static StrokeAlphabet alphabet;
    return alphabet;
}

const StrokeTemplate& StrokeAlphabet::at(int kind) const {
    if (kind < 1 || kind > 32) {
        throw ContractError("stroke kind " + std::to_string(kind) + " outside 1..32");
    }
    return templates_[kind - 1];
}

// ---- styles -----------------------------------------------------------------------

FontStyle font_style_a() {
    FontStyle s;
    s.name = "fontA";
    s.thickness = 0.22; // relative to the placement box
    s.slant = 0.0;
    s.rounding = 0.0;
    s.jitter_seed = 1001;
    s.jitter_amount = 0.008;
    return s;
}

FontStyle font_style_b() {
    FontStyle s;
    s.name = "fontB";
    s.thickness = 0.30;
    s.slant = 0.12;
    s.rounding = 0.35;
    s.jitter_seed = 2002;
    s.jitter_amount = 0.008;
    return s;
}

// ---- rendering -----------------------------------------------------------------------

Placement cell_placement(const GlyphGrid& grid, int cell_index, int kind) {
    if (cell_index < 0 || cell_index >= grid.cell_count()) {
        throw ContractError("cell index " + std::to_string(cell_index) + " outside the grid");
    }
    int row = cell_index / grid.cols;
    int col = cell_index % grid.cols;
    double usable = 1.0 - 2.0 * grid.margin;
    double cw = usable / grid.cols;
    double ch = usable / grid.rows;
    Placement p;
    p.kind = kind;
    p.x0 = grid.margin + col * cw + grid.inset * cw;
    p.y0 = grid.margin + row * ch + grid.inset * ch;
    p.sx = (1.0 - 2.0 * grid.inset) * cw;
    p.sy = (1.0 - 2.0 * grid.inset) * ch;
    return p;
}

namespace {

using Point = std::array<double, 2>;

double point_segment_distance(double px, double py, const Point& a, const Point& b) {
    double vx = b[0] - a[0], vy = b[1] - a[1];
    double wx = px - a[0], wy = py - a[1];
    double vv = vx * vx + vy * vy;
    double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// One corner-cutting pass on interior vertices, blended by the rounding factor.
std::vector<Point> round_corners(const std::vector<Point>& pts, double rounding) {
    if (rounding <= 0.0 || pts.size() < 3) return pts;
    std::vector<Point> out;
    out.push_back(pts.front());
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const Point& prev = pts[i - 1];
        const Point& cur = pts[i];
        const Point& next = pts[i + 1];
        double f = 0.33 * rounding;
        out.push_back({cur[0] + f * (prev[0] - cur[0]), cur[1] + f * (prev[1] - cur[1])});
        out.push_back({cur[0] + f * (next[0] - cur[0]), cur[1] + f * (next[1] - cur[1])});
    }
    out.push_back(pts.back());
    return out;
}

std::array<double, 2> jitter_offset(const FontStyle& style, std::size_t placement_index) {
    if (style.jitter_amount <= 0.0) return {0.0, 0.0};
    std::mt19937_64 rng(style.jitter_seed ^ ((placement_index + 1) * 0x9E3779B97F4A7C15ULL));
    auto next = [&rng] { return (static_cast<double>(rng() >> 11)) * (1.0 / 9007199254740992.0); };
    double dx = (2.0 * next() - 1.0) * style.jitter_amount;
    double dy = (2.0 * next() - 1.0) * style.jitter_amount;
    return {dx, dy};
}

// Placement polyline in canvas coordinates after style transforms.
std::vector<Point> stroke_path(const Placement& p, const FontStyle& style,
                               std::size_t placement_index) {
    const StrokeTemplate& tmpl = StrokeAlphabet::instance().at(p.kind);
    std::vector<Point> placed;
    placed.reserve(tmpl.points.size());
    for (const auto& q : tmpl.points) {
        placed.push_back({p.x0 + q[0] * p.sx, p.y0 + q[1] * p.sy});
    }
    placed = round_corners(placed, style.rounding);
    auto [dx, dy] = jitter_offset(style, placement_index);
    for (auto& q : placed) {
        q[0] += style.slant * (0.5 - q[1]); // shear about the canvas center
        q[0] += dx;
        q[1] += dy;
    }
    return placed;
}

} // namespace

SyntheticGlyph render_glyph(const std::vector<Placement>& placements, const FontStyle& style,
                            int resolution) {
    if (resolution != 32 && resolution != 64 && resolution != 128) {
        throw ContractError("resolution must be one of 32, 64, 128");
    }
    if (placements.empty() || placements.size() > 12) {
        throw ContractError("glyph needs between 1 and 12 stroke placements, got " +
                            std::to_string(placements.size()));
    }

    const int res = resolution;
    std::vector<double> coverage(static_cast<std::size_t>(res) * res, 0.0);

    for (std::size_t pi = 0; pi < placements.size(); ++pi) {
        const Placement& p = placements[pi];
        // Thickness scales with the placement box so strokes keep their
        // proportions across grid densities.
        double half_width = 0.5 * style.thickness * std::min(p.sx, p.sy) *
                            StrokeAlphabet::instance().at(p.kind).thickness_scale;
        std::vector<Point> path = stroke_path(p, style, pi);

        double min_x = 1e9, min_y = 1e9, max_x = -1e9, max_y = -1e9;
        for (const auto& q : path) {
            min_x = std::min(min_x, q[0]);
            max_x = std::max(max_x, q[0]);
            min_y = std::min(min_y, q[1]);
            max_y = std::max(max_y, q[1]);
        }
        if (min_x - half_width < -1e-9 || min_y - half_width < -1e-9 ||
            max_x + half_width > 1.0 + 1e-9 || max_y + half_width > 1.0 + 1e-9) {
            throw ContractError("stroke kind " + std::to_string(p.kind) +
                                " escapes the canvas after placement");
        }

        double aa = 1.0 / res; // one-pixel anti-aliasing ramp
        int j0 = std::max(0, static_cast<int>((min_x - half_width - aa) * res));
        int j1 = std::min(res - 1, static_cast<int>((max_x + half_width + aa) * res) + 1);
        int i0 = std::max(0, static_cast<int>((min_y - half_width - aa) * res));
        int i1 = std::min(res - 1, static_cast<int>((max_y + half_width + aa) * res) + 1);
        for (int i = i0; i <= i1; ++i) {
            double py = (i + 0.5) / res;
            for (int j = j0; j <= j1; ++j) {
                double px = (j + 0.5) / res;
                double d = 1e9;
                for (std::size_t s = 0; s + 1 < path.size(); ++s) {
                    d = std::min(d, point_segment_distance(px, py, path[s], path[s + 1]));
                }
                double edge = (d - half_width) * res; // signed distance in pixels
                double cov = std::clamp(0.5 - edge, 0.0, 1.0);
                double& slot = coverage[static_cast<std::size_t>(i) * res + j];
                slot = std::max(slot, cov);
            }
        }
    }

    // Quantize to 8-bit gray so the PNG round trip is bit exact.
    std::vector<double> data(static_cast<std::size_t>(res) * res * 3);
    for (std::size_t i = 0; i < coverage.size(); ++i) {
        int g = static_cast<int>(std::lround(255.0 * (1.0 - coverage[i])));
        double v = g / 127.5 - 1.0;
        data[i * 3 + 0] = v;
        data[i * 3 + 1] = v;
        data[i * 3 + 2] = v;
    }

    SyntheticGlyph glyph;
    glyph.placements = placements;
    glyph.image = Tensor::from_data({res, res, 3}, std::move(data));
    return glyph;
}

std::set<int> kinds_of(const std::vector<Placement>& placements) {
    std::set<int> kinds;
    for (const auto& p : placements) kinds.insert(p.kind);
    return kinds;
}

Tensor stack_images(const std::vector<Tensor>& images) {
    if (images.empty()) throw ContractError("stack_images: empty batch");
    const Shape& s = images.front().shape();
    std::vector<double> data;
    data.reserve(images.size() * images.front().size());
    for (const auto& img : images) {
        if (img.shape() != s) throw ShapeError("stack_images: inconsistent image shapes");
        data.insert(data.end(), img.data().begin(), img.data().end());
    }
    Shape out{static_cast<int>(images.size())};
    out.insert(out.end(), s.begin(), s.end());
    return Tensor::from_data(std::move(out), std::move(data));
}

double image_distance(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("image_distance: shape mismatch");
    double acc = 0.0;
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        double d = da[i] - db[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(da.size()));
}

// ---- corpus ------------------------------------------------------------------------

namespace {

std::string placement_key(const std::vector<Placement>& placements) {
    std::vector<std::pair<double, int>> items;
    items.reserve(placements.size());
    for (const auto& p : placements) items.emplace_back(p.x0 * 1000 + p.y0, p.kind);
    std::sort(items.begin(), items.end());
    std::ostringstream os;
    for (const auto& [pos, kind] : items) os << pos << ":" << kind << ";";
    return os.str();
}

} // namespace

Corpus build_corpus(int n_chars, int strokes_min, int strokes_max, std::uint64_t seed,
                    int resolution) {
    if (n_chars < 10) throw ContractError("corpus needs at least 10 characters");
    Corpus corpus;
    corpus.resolution = resolution;
    corpus.seed = seed;
    corpus.style_a = font_style_a();
    corpus.style_b = font_style_b();
    const GlyphGrid& grid = corpus.grid;
    if (strokes_min < 1 || strokes_max < strokes_min || strokes_max > grid.cell_count()) {
        throw ContractError("strokes per character must satisfy 1 <= min <= max <= " +
                            std::to_string(grid.cell_count()));
    }

    std::mt19937_64 rng(seed);
    auto rand_int = [&rng](int lo, int hi) { // inclusive
        return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };

    std::set<std::string> seen;
    auto sample_char = [&]() {
        int k = rand_int(strokes_min, strokes_max);
        std::vector<int> cells(grid.cell_count());
        for (int i = 0; i < grid.cell_count(); ++i) cells[i] = i;
        for (int i = grid.cell_count() - 1; i > 0; --i) {
            std::swap(cells[i], cells[rand_int(0, i)]);
        }
        std::vector<Placement> placements;
        for (int i = 0; i < k; ++i) {
            placements.push_back(cell_placement(grid, cells[i], rand_int(1, 32)));
        }
        return placements;
    };

    // Inventory: n_chars - 1 sampled characters plus one constructed character
    // that shares a stroke code with an earlier one (distinct placements).
    long attempts = 0;
    while (static_cast<int>(corpus.chars.size()) < n_chars - 1) {
        if (++attempts > 1000L * n_chars) {
            throw ContractError("character inventory space exhausted");
        }
        auto placements = sample_char();
        std::string key = placement_key(placements);
        if (seen.count(key)) continue;
        seen.insert(key);
        CharacterRecord rec;
        rec.id = static_cast<int>(corpus.chars.size());
        rec.placements = std::move(placements);
        rec.code = StrokeCode::encode(kinds_of(rec.placements));
        corpus.chars.push_back(std::move(rec));
    }

    {
        // Same kinds as character 0, shifted cells: same code, different image.
        const CharacterRecord& donor = corpus.chars.front();
        bool placed = false;
        for (int shift = 1; shift < grid.cell_count() && !placed; ++shift) {
            std::vector<Placement> placements;
            for (const auto& p : donor.placements) {
                // Recover the donor cell index from its placement origin.
                int cell = -1;
                for (int c = 0; c < grid.cell_count(); ++c) {
                    Placement probe = cell_placement(grid, c, p.kind);
                    if (std::fabs(probe.x0 - p.x0) < 1e-12 && std::fabs(probe.y0 - p.y0) < 1e-12) {
                        cell = c;
                        break;
                    }
                }
                placements.push_back(
                    cell_placement(grid, (cell + shift) % grid.cell_count(), p.kind));
            }
            std::string key = placement_key(placements);
            if (seen.count(key)) continue;
            seen.insert(key);
            CharacterRecord rec;
            rec.id = static_cast<int>(corpus.chars.size());
            rec.placements = std::move(placements);
            rec.code = StrokeCode::encode(kinds_of(rec.placements));
            corpus.same_code_pair = {donor.id, rec.id};
            corpus.chars.push_back(std::move(rec));
            placed = true;
        }
        if (!placed) throw ContractError("could not construct the same-code character pair");
    }

    for (const auto& rec : corpus.chars) {
        corpus.images_a.push_back(render_glyph(rec.placements, corpus.style_a, resolution).image);
        corpus.images_b.push_back(render_glyph(rec.placements, corpus.style_b, resolution).image);
    }

    // Independent per-font shuffles; no index correspondence is exposed.
    auto split = [&](std::vector<int>& train, std::vector<int>& test) {
        std::vector<int> ids(corpus.chars.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
        for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i) {
            std::swap(ids[i], ids[rand_int(0, i)]);
        }
        int n_test = std::max(1, n_chars / 10);
        train.assign(ids.begin(), ids.end() - n_test);
        test.assign(ids.end() - n_test, ids.end());
    };
    split(corpus.train_a, corpus.test_a);
    split(corpus.train_b, corpus.test_b);

    // Diversity threshold: largest rho that keeps every pair of distinct clean
    // renders in separate clusters (merge rule is strict d < rho).
    double min_dist = 1e9;
    for (const auto* images : {&corpus.images_a, &corpus.images_b}) {
        for (std::size_t i = 0; i < images->size(); ++i) {
            for (std::size_t j = i + 1; j < images->size(); ++j) {
                min_dist = std::min(min_dist, image_distance((*images)[i], (*images)[j]));
            }
        }
    }
    corpus.rho = min_dist;

    return corpus;
}

// ---- detector -----------------------------------------------------------------------

StrokeDetector::StrokeDetector(FontStyle style, GlyphGrid grid, int resolution, double theta)
    : style_(std::move(style)), grid_(grid), resolution_(resolution), theta_(theta) {
    FontStyle canonical = style_;
    canonical.jitter_amount = 0.0; // templates are jitter-free

    const int res = resolution_;
    const int dilate_px = std::max(1, res / 64); // covers jitter and mild blur

    // Templates are softened with a 3x3 box blur so a one-pixel jitter or a
    // mildly blurred stroke still correlates strongly.
    auto box_blur = [res](const std::vector<double>& src) {
        std::vector<double> out(src.size(), 0.0);
        for (int i = 0; i < res; ++i) {
            for (int j = 0; j < res; ++j) {
                double acc = 0.0;
                int cnt = 0;
                for (int di = -1; di <= 1; ++di) {
                    for (int dj = -1; dj <= 1; ++dj) {
                        int ii = i + di, jj = j + dj;
                        if (ii < 0 || ii >= res || jj < 0 || jj >= res) continue;
                        acc += src[static_cast<std::size_t>(ii) * res + jj];
                        ++cnt;
                    }
                }
                out[static_cast<std::size_t>(i) * res + j] = acc / cnt;
            }
        }
        return out;
    };

    for (int cell = 0; cell < grid_.cell_count(); ++cell) {
        // Render the 32 templates for this cell and take their union support.
        std::vector<std::vector<double>> ink(32,
            std::vector<double>(static_cast<std::size_t>(res) * res, 0.0));
        std::vector<std::uint8_t> support(static_cast<std::size_t>(res) * res, 0);
        for (int kind = 1; kind <= 32; ++kind) {
            auto glyph = render_glyph({cell_placement(grid_, cell, kind)}, canonical, res);
            auto img = glyph.image.data();
            std::vector<double> raw(static_cast<std::size_t>(res) * res);
            for (std::size_t px = 0; px < raw.size(); ++px) raw[px] = (1.0 - img[px * 3]) / 2.0;
            ink[kind - 1] = box_blur(raw);
            for (std::size_t px = 0; px < raw.size(); ++px) {
                if (ink[kind - 1][px] > 1e-6) support[px] = 1;
            }
        }

        // Dilated union mask: scoring normalizes the image patch over this
        // mask only, so ink in neighboring cells cannot depress the score.
        std::vector<std::uint8_t> mask(support.size(), 0);
        int x0 = res, y0 = res, x1 = 0, y1 = 0;
        for (int i = 0; i < res; ++i) {
            for (int j = 0; j < res; ++j) {
                bool on = false;
                for (int di = -dilate_px; di <= dilate_px && !on; ++di) {
                    for (int dj = -dilate_px; dj <= dilate_px && !on; ++dj) {
                        int ii = i + di, jj = j + dj;
                        if (ii < 0 || ii >= res || jj < 0 || jj >= res) continue;
                        if (support[static_cast<std::size_t>(ii) * res + jj]) on = true;
                    }
                }
                if (on) {
                    mask[static_cast<std::size_t>(i) * res + j] = 1;
                    x0 = std::min(x0, j);
                    y0 = std::min(y0, i);
                    x1 = std::max(x1, j + 1);
                    y1 = std::max(y1, i + 1);
                }
            }
        }
        if (x0 >= x1) throw NumericError("stroke templates rendered empty for a cell");

        Cell c;
        c.x0 = x0;
        c.y0 = y0;
        c.x1 = x1;
        c.y1 = y1;
        for (int i = y0; i < y1; ++i) {
            for (int j = x0; j < x1; ++j) {
                c.mask.push_back(mask[static_cast<std::size_t>(i) * res + j] ? 1.0 : 0.0);
            }
        }
        for (int kind = 1; kind <= 32; ++kind) {
            KindTemplate kt;
            kt.kind = kind;
            double norm_sq = 0.0;
            for (int i = y0; i < y1; ++i) {
                for (int j = x0; j < x1; ++j) {
                    double v = ink[kind - 1][static_cast<std::size_t>(i) * res + j];
                    kt.ink.push_back(v);
                    norm_sq += v * v;
                }
            }
            kt.norm = std::sqrt(norm_sq);
            c.kinds.push_back(std::move(kt));
        }
        cells_.push_back(std::move(c));
    }
}

std::vector<StrokeDetector::CellScore> StrokeDetector::cell_scores(const Tensor& image) const {
    const int res = resolution_;
    if (image.ndim() != 3 || image.shape()[0] != res || image.shape()[1] != res ||
        image.shape()[2] != 3) {
        throw ShapeError("detector expects a (" + std::to_string(res) + "," + std::to_string(res) +
                         ",3) image, got " + shape_to_string(image.shape()));
    }
    auto img = image.data();
    for (double v : img) {
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9) {
            throw DomainError("detector input outside [-1, 1]");
        }
    }

    std::vector<CellScore> scores;
    for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
        const auto& cell = cells_[ci];
        CellScore cs;
        cs.cell = static_cast<int>(ci);

        // Image ink restricted to the cell's support mask.
        std::vector<double> patch;
        patch.reserve(cell.mask.size());
        double patch_norm_sq = 0.0;
        std::size_t k = 0;
        for (int i = cell.y0; i < cell.y1; ++i) {
            for (int j = cell.x0; j < cell.x1; ++j, ++k) {
                double ink =
                    cell.mask[k] * (1.0 - img[(static_cast<std::size_t>(i) * res + j) * 3]) / 2.0;
                patch.push_back(ink);
                patch_norm_sq += ink * ink;
            }
        }
        cs.ink_norm = std::sqrt(patch_norm_sq);
        if (cs.ink_norm >= 1e-9) {
            for (const auto& kt : cell.kinds) {
                if (kt.norm < 1e-12) continue;
                double dot = 0.0;
                for (std::size_t t = 0; t < kt.ink.size(); ++t) dot += kt.ink[t] * patch[t];
                double score = dot / (kt.norm * cs.ink_norm);
                if (score > cs.best_score) {
                    cs.second_score = cs.best_score;
                    cs.second_kind = cs.best_kind;
                    cs.best_score = score;
                    cs.best_kind = kt.kind;
                } else if (score > cs.second_score) {
                    cs.second_score = score;
                    cs.second_kind = kt.kind;
                }
            }
        }
        scores.push_back(cs);
    }
    return scores;
}

std::set<int> StrokeDetector::detect(const Tensor& image) const {
    std::set<int> detected;
    for (const auto& cs : cell_scores(image)) {
        if (cs.best_kind != 0 && cs.best_score >= theta_) detected.insert(cs.best_kind);
    }
    return detected;
}

void StrokeDetector::calibrate() {
    for (int cell = 0; cell < grid_.cell_count(); ++cell) {
        for (int kind = 1; kind <= 32; ++kind) {
            auto glyph = render_glyph({cell_placement(grid_, cell, kind)}, style_, resolution_);
            std::set<int> got = detect(glyph.image);
            if (got != std::set<int>{kind}) {
                std::ostringstream os;
                os << "detector self-test failed: kind " << kind << " in cell " << cell
                   << " detected as {";
                for (int k : got) os << k << " ";
                os << "}";
                throw NumericError(os.str());
            }
        }
    }
    calibrated_ = true;
}

} // namespace strokegan

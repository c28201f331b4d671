#ifndef STROKEGAN_DATASET_HPP
#define STROKEGAN_DATASET_HPP

#include <string>
#include <vector>

#include "strokegan/strokes.hpp"

namespace strokegan {

// One sidecar-record per (font, character).
struct ManifestRecord {
    std::string font;
    int id = 0;
    std::string file; // path relative to the corpus root
    std::vector<int> kinds;
    std::string code; // 32-character bitstring
    std::string split; // "train" | "test"
};

struct DatasetManifest {
    std::string root;
    int resolution = 0;
    std::uint64_t seed = 0;
    GlyphGrid grid;
    std::string style_a_name, style_b_name;
    double rho = 0.0;
    std::array<int, 2> same_code_pair{-1, -1};
    std::vector<ManifestRecord> records;
};

// Writes `<root>/<font>/<id>.png` for both fonts plus `<root>/manifest.tsv`.
// Refuses an existing non-empty root unless force is set. Byte-deterministic
// for a fixed corpus.
void export_corpus(const Corpus& corpus, const std::string& root, bool force = false);

DatasetManifest read_manifest(const std::string& root);

// Rebuilds a corpus from a manifest: images are decoded from the PNGs
// (bit-exact round trip), codes and splits come from the records. Stroke
// placements are not part of the on-disk format, so loaded characters carry
// none; consumers that normally re-render fall back to image-space transforms.
Corpus import_corpus(const std::string& root);

} // namespace strokegan

#endif

#include "strokegan/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strokegan/png_io.hpp"

namespace fs = std::filesystem;

namespace strokegan {

namespace {

std::string glyph_filename(const std::string& font, int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d.png", id);
    return font + "/" + buf;
}

std::string format_full(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string kinds_to_string(const std::set<int>& kinds) {
    std::string out;
    for (int k : kinds) {
        if (!out.empty()) out += ",";
        out += std::to_string(k);
    }
    return out;
}

std::vector<int> parse_kinds(const std::string& s, const std::string& where) {
    std::vector<int> kinds;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            kinds.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw IoError(where + ": bad stroke kind '" + item + "'");
        }
    }
    if (kinds.empty()) throw IoError(where + ": empty stroke kind list");
    return kinds;
}

} // namespace

void export_corpus(const Corpus& corpus, const std::string& root, bool force) {
    fs::path base(root);
    if (fs::exists(base) && !fs::is_empty(base) && !force) {
        throw IoError("output directory exists and is not empty (use force): " + root);
    }
    fs::create_directories(base / corpus.style_a.name);
    fs::create_directories(base / corpus.style_b.name);

    std::ostringstream manifest;
    manifest << "# strokegan corpus manifest v1\n";
    manifest << "# resolution = " << corpus.resolution << "\n";
    manifest << "# seed = " << corpus.seed << "\n";
    manifest << "# grid_rows = " << corpus.grid.rows << "\n";
    manifest << "# grid_cols = " << corpus.grid.cols << "\n";
    manifest << "# style_a = " << corpus.style_a.name << "\n";
    manifest << "# style_b = " << corpus.style_b.name << "\n";
    manifest << "# rho = " << format_full(corpus.rho) << "\n";
    manifest << "# same_code_pair = " << corpus.same_code_pair[0] << ","
             << corpus.same_code_pair[1] << "\n";
    manifest << "font\tid\tfile\tkinds\tcode\tsplit\n";

    auto split_tag = [](const std::vector<int>& test_ids, int id) {
        return std::find(test_ids.begin(), test_ids.end(), id) != test_ids.end() ? "test" : "train";
    };

    for (const auto& [font, images, test_ids] :
         {std::make_tuple(corpus.style_a.name, &corpus.images_a, &corpus.test_a),
          std::make_tuple(corpus.style_b.name, &corpus.images_b, &corpus.test_b)}) {
        for (const auto& rec : corpus.chars) {
            std::string file = glyph_filename(font, rec.id);
            save_glyph_png((base / file).string(), (*images)[rec.id]);
            manifest << font << "\t" << rec.id << "\t" << file << "\t"
                     << kinds_to_string(rec.code.kinds()) << "\t" << rec.code.bitstring() << "\t"
                     << split_tag(*test_ids, rec.id) << "\n";
        }
    }

    std::ofstream out(base / "manifest.tsv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest under " + root);
    out << manifest.str();
}

DatasetManifest read_manifest(const std::string& root) {
    fs::path path = fs::path(root) / "manifest.tsv";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());

    DatasetManifest manifest;
    manifest.root = root;
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string where = path.string() + ":" + std::to_string(line_no);
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue; // title line
            std::string key = line.substr(1, eq - 1);
            std::string value = line.substr(eq + 1);
            auto trim = [](std::string s) {
                std::size_t b = s.find_first_not_of(" \t\r");
                std::size_t e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            key = trim(key);
            value = trim(value);
            try {
                if (key == "resolution") manifest.resolution = std::stoi(value);
                else if (key == "seed") manifest.seed = std::stoull(value);
                else if (key == "grid_rows") manifest.grid.rows = std::stoi(value);
                else if (key == "grid_cols") manifest.grid.cols = std::stoi(value);
                else if (key == "style_a") manifest.style_a_name = value;
                else if (key == "style_b") manifest.style_b_name = value;
                else if (key == "rho") manifest.rho = std::stod(value);
                else if (key == "same_code_pair") {
                    std::size_t comma = value.find(',');
                    manifest.same_code_pair[0] = std::stoi(value.substr(0, comma));
                    manifest.same_code_pair[1] = std::stoi(value.substr(comma + 1));
                }
            } catch (const std::exception&) {
                throw IoError(where + ": bad metadata value for " + key);
            }
            continue;
        }
        if (!saw_header) {
            if (line.rfind("font\t", 0) != 0) throw IoError(where + ": expected column header");
            saw_header = true;
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() != 6) throw IoError(where + ": expected 6 tab-separated columns");
        ManifestRecord rec;
        rec.font = cols[0];
        try {
            rec.id = std::stoi(cols[1]);
        } catch (const std::exception&) {
            throw IoError(where + ": bad id '" + cols[1] + "'");
        }
        rec.file = cols[2];
        rec.kinds = parse_kinds(cols[3], where);
        rec.code = cols[4];
        rec.split = cols[5];
        if (rec.split != "train" && rec.split != "test") {
            throw IoError(where + ": split must be train or test");
        }
        // Cross-check: code bitstring matches the kind list.
        std::set<int> kind_set(rec.kinds.begin(), rec.kinds.end());
        if (StrokeCode::from_bitstring(rec.code) != StrokeCode::encode(kind_set)) {
            throw IoError(where + ": code bitstring disagrees with the stroke kinds");
        }
        manifest.records.push_back(std::move(rec));
    }
    if (manifest.records.empty()) throw IoError(path.string() + ": no records");
    if (manifest.resolution == 0) throw IoError(path.string() + ": missing resolution metadata");
    return manifest;
}

Corpus import_corpus(const std::string& root) {
    DatasetManifest manifest = read_manifest(root);

    Corpus corpus;
    corpus.resolution = manifest.resolution;
    corpus.seed = manifest.seed;
    corpus.grid = manifest.grid;
    corpus.rho = manifest.rho;
    corpus.same_code_pair = manifest.same_code_pair;
    // Styles are the fixed presets, identified by name.
    for (const FontStyle& style : {font_style_a(), font_style_b()}) {
        if (style.name == manifest.style_a_name) corpus.style_a = style;
        if (style.name == manifest.style_b_name) corpus.style_b = style;
    }
    if (corpus.style_a.name != manifest.style_a_name ||
        corpus.style_b.name != manifest.style_b_name) {
        throw IoError("manifest names an unknown font style");
    }

    int max_id = -1;
    for (const auto& rec : manifest.records) max_id = std::max(max_id, rec.id);
    if (max_id < 0) throw IoError("manifest holds no characters");
    corpus.chars.resize(max_id + 1);
    corpus.images_a.resize(max_id + 1);
    corpus.images_b.resize(max_id + 1);

    std::vector<bool> seen_a(max_id + 1, false), seen_b(max_id + 1, false);
    for (const auto& rec : manifest.records) {
        Tensor image = load_glyph_png((fs::path(root) / rec.file).string());
        if (image.shape()[0] != corpus.resolution || image.shape()[1] != corpus.resolution) {
            throw IoError(rec.file + ": decoded size " + std::to_string(image.shape()[0]) +
                          " does not match the configured resolution " +
                          std::to_string(corpus.resolution));
        }
        CharacterRecord& ch = corpus.chars[rec.id];
        ch.id = rec.id;
        StrokeCode code = StrokeCode::from_bitstring(rec.code);
        if (ch.code.count() > 0 && !(ch.code == code)) {
            throw IoError(rec.file + ": fonts disagree on the character's stroke code");
        }
        ch.code = code;
        if (rec.font == manifest.style_a_name) {
            corpus.images_a[rec.id] = std::move(image);
            seen_a[rec.id] = true;
            (rec.split == "test" ? corpus.test_a : corpus.train_a).push_back(rec.id);
        } else if (rec.font == manifest.style_b_name) {
            corpus.images_b[rec.id] = std::move(image);
            seen_b[rec.id] = true;
            (rec.split == "test" ? corpus.test_b : corpus.train_b).push_back(rec.id);
        } else {
            throw IoError(rec.file + ": record font does not match the manifest styles");
        }
    }
    for (int id = 0; id <= max_id; ++id) {
        if (!seen_a[id] || !seen_b[id]) {
            throw IoError("character " + std::to_string(id) + " is missing from one font");
        }
    }
    return corpus;
}

} // namespace strokegan

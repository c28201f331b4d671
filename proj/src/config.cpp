#include "strokegan/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "strokegan/errors.hpp"

namespace strokegan {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (lambda_cyc < 0 || lambda_st < 0) fail("lambda_cyc and lambda_st must be >= 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) fail("adam betas must lie in (0, 1)");
    if (lr <= 0) fail("lr must be positive");
    if (adam_eps <= 0) fail("adam_eps must be positive");
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 2) fail("batch_size must be >= 2 (train-mode batch norm)");
    if (resolution != 32 && resolution != 64 && resolution != 128) {
        fail("resolution must be one of 32, 64, 128");
    }
    if (scale_factor < 1 || 64 % scale_factor != 0) fail("scale_factor must divide 64");
    if (res_blocks < 1) fail("res_blocks must be >= 1");
    if (disc_layers < 1) fail("disc_layers must be >= 1");
    if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    if (eval_every < 1) fail("eval_every must be >= 1");
    if (n_chars < 10) fail("n_chars must be >= 10");
    if (strokes_min < 1 || strokes_max < strokes_min) fail("bad strokes_min/strokes_max");
    if (seeds.empty()) fail("seeds must not be empty");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
T parse_number(const std::string& value, const std::string& where) {
    T out{};
    std::string v = trim(value);
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(where + ": cannot parse number '" + value + "'");
    }
    return out;
}

template <>
double parse_number<double>(const std::string& value, const std::string& where) {
    std::string v = trim(value);
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse number '" + value + "'");
    }
}

bool parse_bool(const std::string& value, const std::string& where) {
    std::string v = trim(value);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(where + ": expected true/false, got '" + value + "'");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        auto num_d = [&f](const std::string& key, double TrainConfig::* member) {
            f[key] = Field{
                [member](TrainConfig& c, const std::string& v, const std::string& w) {
                    c.*member = parse_number<double>(v, w);
                },
                [member](const TrainConfig& c) { return format_double(c.*member); }};
        };
        auto num_i = [&f](const std::string& key, int TrainConfig::* member) {
            f[key] = Field{
                [member](TrainConfig& c, const std::string& v, const std::string& w) {
                    c.*member = parse_number<int>(v, w);
                },
                [member](const TrainConfig& c) { return std::to_string(c.*member); }};
        };
        auto flag = [&f](const std::string& key, bool TrainConfig::* member) {
            f[key] = Field{
                [member](TrainConfig& c, const std::string& v, const std::string& w) {
                    c.*member = parse_bool(v, w);
                },
                [member](const TrainConfig& c) { return (c.*member) ? "true" : "false"; }};
        };
        auto str = [&f](const std::string& key, std::string TrainConfig::* member) {
            f[key] = Field{
                [member](TrainConfig& c, const std::string& v, const std::string&) {
                    c.*member = trim(v);
                },
                [member](const TrainConfig& c) { return c.*member; }};
        };

        num_d("lambda_cyc", &TrainConfig::lambda_cyc);
        num_d("lambda_st", &TrainConfig::lambda_st);
        num_d("beta1", &TrainConfig::beta1);
        num_d("beta2", &TrainConfig::beta2);
        num_d("lr", &TrainConfig::lr);
        num_d("adam_eps", &TrainConfig::adam_eps);
        num_i("epochs", &TrainConfig::epochs);
        num_i("batch_size", &TrainConfig::batch_size);
        num_i("resolution", &TrainConfig::resolution);
        num_i("scale_factor", &TrainConfig::scale_factor);
        num_i("res_blocks", &TrainConfig::res_blocks);
        num_i("disc_layers", &TrainConfig::disc_layers);
        num_i("checkpoint_every", &TrainConfig::checkpoint_every);
        num_i("eval_every", &TrainConfig::eval_every);
        num_i("n_chars", &TrainConfig::n_chars);
        num_i("strokes_min", &TrainConfig::strokes_min);
        num_i("strokes_max", &TrainConfig::strokes_max);
        flag("nonsaturating_g", &TrainConfig::nonsaturating_g);
        flag("d_st_on_real", &TrainConfig::d_st_on_real);
        flag("d_st_paper_sign", &TrainConfig::d_st_paper_sign);
        flag("omit_stroke_term", &TrainConfig::omit_stroke_term);
        str("data_dir", &TrainConfig::data_dir);
        str("out_dir", &TrainConfig::out_dir);

        f["seed"] = Field{
            [](TrainConfig& c, const std::string& v, const std::string& w) {
                c.seed = parse_number<std::uint64_t>(v, w);
            },
            [](const TrainConfig& c) { return std::to_string(c.seed); }};
        f["generator_mode"] = Field{
            [](TrainConfig& c, const std::string& v, const std::string& w) {
                std::string m = trim(v);
                if (m == "single") c.generator_mode = GeneratorMode::single;
                else if (m == "dual") c.generator_mode = GeneratorMode::dual;
                else throw ConfigError(w + ": generator_mode must be single or dual");
            },
            [](const TrainConfig& c) {
                return c.generator_mode == GeneratorMode::single ? "single" : "dual";
            }};
        f["seeds"] = Field{
            [](TrainConfig& c, const std::string& v, const std::string& w) {
                c.seeds.clear();
                std::stringstream ss(v);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    item = trim(item);
                    if (item.empty()) continue;
                    c.seeds.push_back(parse_number<std::uint64_t>(item, w));
                }
                if (c.seeds.empty()) throw ConfigError(w + ": seeds list is empty");
            },
            [](const TrainConfig& c) {
                std::string out;
                for (std::size_t i = 0; i < c.seeds.size(); ++i) {
                    if (i) out += ",";
                    out += std::to_string(c.seeds[i]);
                }
                return out;
            }};
        return f;
    }();
    return table;
}

} // namespace

TrainConfig parse_config(const std::string& text, const std::string& source) {
    TrainConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string where = source + ":" + std::to_string(line_no);
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = line.substr(eq + 1);
        auto it = fields().find(key);
        if (it == fields().end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
        it->second.set(config, value, where);
    }
    config.validate();
    return config;
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

std::string serialize_config(const TrainConfig& config) {
    std::ostringstream os;
    for (const auto& [key, field] : fields()) {
        os << key << " = " << field.get(config) << "\n";
    }
    return os.str();
}

} // namespace strokegan

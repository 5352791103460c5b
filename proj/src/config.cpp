#include "orthoseg/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace orthoseg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw Error("config line " + std::to_string(line) + ": " + what);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
            return false;
    return true;
}

// Strips a trailing comment that starts outside any quoted string.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

// One scalar token: quoted strings lose their quotes, bare tokens pass
// through verbatim.
std::string parse_scalar(const std::string& tok, int line) {
    if (tok.empty()) fail(line, "empty value");
    if (tok.front() == '"') {
        if (tok.size() < 2 || tok.back() != '"')
            fail(line, "unterminated string " + tok);
        std::string out;
        for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
            if (tok[i] == '\\' && i + 2 < tok.size() &&
                (tok[i + 1] == '"' || tok[i + 1] == '\\'))
                out += tok[++i];
            else if (tok[i] == '"')
                fail(line, "stray quote inside string");
            else
                out += tok[i];
        }
        return out;
    }
    if (tok.find('"') != std::string::npos) fail(line, "misquoted value " + tok);
    return tok;
}

std::vector<std::string> split_array(const std::string& body, int line) {
    std::vector<std::string> items;
    std::string cur;
    bool quoted = false;
    for (char c : body) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            items.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) fail(line, "unterminated string in array");
    if (!trim(cur).empty() || !items.empty()) items.push_back(cur);
    for (auto& it : items) {
        it = trim(it);
        if (it.empty()) fail(line, "empty array element");
        it = parse_scalar(it, line);
    }
    return items;
}

}  // namespace

TomlFile TomlFile::parse(const std::string& text) {
    TomlFile f;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        const std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "malformed section header " + s);
            section = trim(s.substr(1, s.size() - 2));
            if (!valid_key(section)) fail(line, "bad section name '" + section + "'");
            if (f.sections_.count(section)) fail(line, "duplicate section [" + section + "]");
            f.sections_[section];  // empty sections are allowed
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value, got '" + s + "'");
        const std::string key = trim(s.substr(0, eq));
        if (!valid_key(key)) fail(line, "bad key '" + key + "'");
        if (section.empty()) fail(line, "key '" + key + "' appears before any [section]");
        if (f.sections_[section].count(key))
            fail(line, "duplicate key '" + key + "' in [" + section + "]");

        const std::string val = trim(s.substr(eq + 1));
        if (val.empty()) fail(line, "missing value for '" + key + "'");
        Value v;
        if (val.front() == '[') {
            if (val.back() != ']') fail(line, "unterminated array for '" + key + "'");
            v.is_array = true;
            v.items = split_array(val.substr(1, val.size() - 2), line);
        } else {
            v.scalar = parse_scalar(val, line);
        }
        f.sections_[section].emplace(key, std::move(v));
    }
    return f;
}

TomlFile TomlFile::parse_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse(buf.str());
}

bool TomlFile::has_section(const std::string& section) const {
    return sections_.count(section) != 0;
}

bool TomlFile::has(const std::string& section, const std::string& key) const {
    return try_fetch(section, key) != nullptr;
}

std::vector<std::string> TomlFile::section_names() const {
    std::vector<std::string> out;
    for (const auto& [name, kv] : sections_) out.push_back(name);
    return out;
}

std::vector<std::string> TomlFile::keys(const std::string& section) const {
    std::vector<std::string> out;
    const auto it = sections_.find(section);
    if (it == sections_.end()) return out;
    for (const auto& [k, v] : it->second) out.push_back(k);
    return out;
}

const TomlFile::Value* TomlFile::try_fetch(const std::string& section,
                                           const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return nullptr;
    const auto kt = it->second.find(key);
    return kt == it->second.end() ? nullptr : &kt->second;
}

const TomlFile::Value& TomlFile::fetch(const std::string& section,
                                       const std::string& key) const {
    const Value* v = try_fetch(section, key);
    if (!v) throw Error("config is missing [" + section + "] " + key);
    return *v;
}

namespace {

double to_number(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw Error(where + " is not a number: '" + s + "'");
    return v;
}

std::int64_t to_int(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty())
        throw Error(where + " is not an integer: '" + s + "'");
    return v;
}

bool to_bool(const std::string& s, const std::string& where) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw Error(where + " is not a boolean: '" + s + "'");
}

std::string spot(const std::string& section, const std::string& key) {
    return "[" + section + "] " + key;
}

}  // namespace

std::string TomlFile::get_string(const std::string& section, const std::string& key) const {
    const Value& v = fetch(section, key);
    if (v.is_array) throw Error(spot(section, key) + " is an array, expected a scalar");
    return v.scalar;
}

std::string TomlFile::get_string(const std::string& section, const std::string& key,
                                 const std::string& fallback) const {
    return has(section, key) ? get_string(section, key) : fallback;
}

double TomlFile::get_number(const std::string& section, const std::string& key) const {
    return to_number(get_string(section, key), spot(section, key));
}

double TomlFile::get_number(const std::string& section, const std::string& key,
                            double fallback) const {
    return has(section, key) ? get_number(section, key) : fallback;
}

std::int64_t TomlFile::get_int(const std::string& section, const std::string& key) const {
    return to_int(get_string(section, key), spot(section, key));
}

std::int64_t TomlFile::get_int(const std::string& section, const std::string& key,
                               std::int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

bool TomlFile::get_bool(const std::string& section, const std::string& key) const {
    return to_bool(get_string(section, key), spot(section, key));
}

bool TomlFile::get_bool(const std::string& section, const std::string& key,
                        bool fallback) const {
    return has(section, key) ? get_bool(section, key) : fallback;
}

std::vector<std::string> TomlFile::get_string_array(const std::string& section,
                                                    const std::string& key) const {
    const Value& v = fetch(section, key);
    if (!v.is_array) throw Error(spot(section, key) + " is a scalar, expected an array");
    return v.items;
}

std::vector<double> TomlFile::get_number_array(const std::string& section,
                                               const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_string_array(section, key))
        out.push_back(to_number(s, spot(section, key)));
    return out;
}

namespace {

// Typo guard: every present key must be one we understand.
void check_known(const TomlFile& f, const std::string& section,
                 const std::set<std::string>& known) {
    for (const auto& k : f.keys(section))
        if (!known.count(k))
            throw Error("unknown key '" + k + "' in [" + section + "]");
}

void check_sections(const TomlFile& f, const std::set<std::string>& known) {
    for (const auto& s : f.section_names())
        if (!known.count(s)) throw Error("unknown section [" + s + "]");
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
    const TomlFile f = TomlFile::parse_file(path);
    check_sections(f, {"dataset", "bands", "network", "train", "augment"});
    check_known(f, "dataset", {"manifest"});
    check_known(f, "bands", {"use"});
    check_known(f, "network",
                {"arch", "depth", "base_width", "dropout", "init", "bn_eps", "bn_momentum"});
    check_known(f, "train",
                {"learning_rate", "weight_decay", "pos_weight", "epochs", "batch_size",
                 "seed", "val_fraction", "patience", "keep_best"});
    check_known(f, "augment",
                {"rotation_max_deg", "flip_horizontal", "brightness", "contrast",
                 "saturation", "hue"});

    RunConfig rc;
    const fs::path manifest(f.get_string("dataset", "manifest"));
    rc.manifest_path = manifest.is_absolute() ? manifest : path.parent_path() / manifest;

    std::vector<BandId> ids;
    for (const auto& s : f.get_string_array("bands", "use"))
        ids.push_back(band_from_string(s));
    rc.bands = BandSelection(std::move(ids));

    NetworkConfig& n = rc.network;
    n.arch = arch_from_string(f.get_string("network", "arch", "unet"));
    n.in_channels = rc.bands.channels();
    n.depth = static_cast<int>(f.get_int("network", "depth", n.depth));
    n.base_width = static_cast<int>(f.get_int("network", "base_width", n.base_width));
    n.dropout_p = f.get_number("network", "dropout", n.dropout_p);
    n.init = weight_init_from_string(f.get_string("network", "init", "mean_one"));
    n.bn_eps = f.get_number("network", "bn_eps", n.bn_eps);
    n.bn_momentum = f.get_number("network", "bn_momentum", n.bn_momentum);

    TrainConfig& t = rc.train;
    t.learning_rate = f.get_number("train", "learning_rate", t.learning_rate);
    t.weight_decay = f.get_number("train", "weight_decay", t.weight_decay);
    t.pos_weight = f.get_number("train", "pos_weight", t.pos_weight);
    t.epochs = static_cast<int>(f.get_int("train", "epochs", t.epochs));
    t.batch_size = static_cast<int>(f.get_int("train", "batch_size", t.batch_size));
    t.seed = static_cast<std::uint64_t>(f.get_int("train", "seed", 0));
    t.val_fraction = f.get_number("train", "val_fraction", t.val_fraction);
    t.early_stop.patience =
        static_cast<int>(f.get_int("train", "patience", t.early_stop.patience));
    t.early_stop.keep_best = f.get_bool("train", "keep_best", t.early_stop.keep_best);

    AugmentationConfig& a = t.augment;
    a.rotation_max_deg = f.get_number("augment", "rotation_max_deg", a.rotation_max_deg);
    a.flip_horizontal = f.get_bool("augment", "flip_horizontal", a.flip_horizontal);
    a.brightness = f.get_number("augment", "brightness", a.brightness);
    a.contrast = f.get_number("augment", "contrast", a.contrast);
    a.saturation = f.get_number("augment", "saturation", a.saturation);
    a.hue = f.get_number("augment", "hue", a.hue);

    t.validate();
    return rc;
}

SyntheticFieldSpec load_field_spec(const fs::path& path) {
    const TomlFile f = TomlFile::parse_file(path);
    check_sections(f, {"field", "bands"});
    check_known(f, "field",
                {"width", "height", "row_azimuth_deg", "row_spacing", "plant_spacing",
                 "canopy_width", "weed_density", "seed"});
    check_known(f, "bands", {"ids", "vine_mean", "soil_mean", "noise_std"});

    SyntheticFieldSpec s;
    s.width = static_cast<int>(f.get_int("field", "width", s.width));
    s.height = static_cast<int>(f.get_int("field", "height", s.height));
    s.row_azimuth_deg = f.get_number("field", "row_azimuth_deg", s.row_azimuth_deg);
    s.row_spacing = f.get_number("field", "row_spacing", s.row_spacing);
    s.plant_spacing = f.get_number("field", "plant_spacing", s.plant_spacing);
    s.canopy_width = f.get_number("field", "canopy_width", s.canopy_width);
    s.weed_density = f.get_number("field", "weed_density", s.weed_density);
    s.seed = static_cast<std::uint64_t>(f.get_int("field", "seed", 0));

    const auto ids = f.get_string_array("bands", "ids");
    const auto vine = f.get_number_array("bands", "vine_mean");
    const auto soil = f.get_number_array("bands", "soil_mean");
    const auto noise = f.get_number_array("bands", "noise_std");
    if (vine.size() != ids.size() || soil.size() != ids.size() || noise.size() != ids.size())
        throw Error("[bands] arrays must all have one entry per band id");
    s.bands.clear();
    for (std::size_t i = 0; i < ids.size(); ++i)
        s.bands.push_back({band_from_string(ids[i]), vine[i], soil[i], noise[i]});

    s.validate();
    return s;
}

}  // namespace orthoseg

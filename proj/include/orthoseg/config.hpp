#pragma once

#include "orthoseg/synth.hpp"
#include "orthoseg/trainer.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace orthoseg {

/// Minimal TOML subset: comments, [section] headers, and flat key = value
/// pairs where value is a quoted string, number, boolean, or a single-line
/// array of those. No nesting, no dotted keys, no multi-line values.
class TomlFile {
public:
    static TomlFile parse(const std::string& text);
    static TomlFile parse_file(const std::filesystem::path& path);

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;
    std::vector<std::string> section_names() const;
    std::vector<std::string> keys(const std::string& section) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_number(const std::string& section, const std::string& key) const;
    double get_number(const std::string& section, const std::string& key,
                      double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key,
                  bool fallback) const;
    std::vector<std::string> get_string_array(const std::string& section,
                                              const std::string& key) const;
    std::vector<double> get_number_array(const std::string& section,
                                         const std::string& key) const;

private:
    struct Value {
        bool is_array = false;
        std::string scalar;
        std::vector<std::string> items;
    };
    const Value& fetch(const std::string& section, const std::string& key) const;
    const Value* try_fetch(const std::string& section, const std::string& key) const;

    std::map<std::string, std::map<std::string, Value>> sections_;
};

/// One run of the pipeline as declared in a TOML file with [dataset],
/// [bands], [network], [train] and [augment] sections.
struct RunConfig {
    std::filesystem::path manifest_path;  // resolved against the config file
    BandSelection bands;
    NetworkConfig network;
    TrainConfig train;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Synthetic-field description: a [field] geometry section plus parallel
/// per-band arrays under [bands].
SyntheticFieldSpec load_field_spec(const std::filesystem::path& path);

}  // namespace orthoseg

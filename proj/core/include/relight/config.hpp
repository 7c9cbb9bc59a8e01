#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "relight/trainer.hpp"

namespace relight {

enum class ValueKind { integer, real, boolean, text, int3 };

struct SchemaEntry {
    std::string key;
    ValueKind kind;
    std::string default_value;
    std::string help;
};

// Every run-configurable knob, with the desk-scale defaults.
const std::vector<SchemaEntry>& config_schema();

// Flat key=value configuration: schema-checked keys, typed access, '#'
// comments. File values override defaults; explicit overrides win over both.
class KeyValueConfig {
public:
    static KeyValueConfig defaults();
    static KeyValueConfig load(const std::string& path);
    static KeyValueConfig parse(const std::string& text, const std::string& origin);

    // "key=value"; unknown keys raise ConfigError listing the valid ones.
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    int get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::string& get_string(const std::string& key) const;
    std::array<int, 3> get_int3(const std::string& key) const;

    // Canonical "key=value" listing in schema order (manifests, replay).
    std::string render() const;

private:
    std::map<std::string, std::string> values_;
};

TrainConfig make_train_config(const KeyValueConfig& c, TrainStage stage);

// Resolved config plus run context (command, artifact paths, version).
void write_manifest(const std::string& path, const KeyValueConfig& c,
                    const std::map<std::string, std::string>& extra);

}  // namespace relight

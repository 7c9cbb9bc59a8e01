#include "relight/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "relight/errors.hpp"

namespace relight {

const std::vector<SchemaEntry>& config_schema() {
    static const std::vector<SchemaEntry> schema = {
        {"strategy", ValueKind::text, "full",
         "decomposition strategy: full, v0_pixel_mult, v1_latent_mult, v2_latent_add_nolog, "
         "v3_rgb_add_log"},
        {"iterations", ValueKind::integer, "2000", "optimizer steps (full-scale recipe: 150000)"},
        {"batch_size", ValueKind::integer, "1", "patches per step (full-scale recipe: 4)"},
        {"patch_size", ValueKind::integer, "32",
         "square crop side, divisible by 4 (full-scale recipe: 256)"},
        {"lr_initial", ValueKind::real, "2e-4", "initial learning rate"},
        {"lr_final", ValueKind::real, "1e-6", "cosine-annealed floor"},
        {"beta1", ValueKind::real, "0.9", "first-moment decay"},
        {"beta2", ValueKind::real, "0.999", "second-moment decay"},
        {"lambda1", ValueKind::real, "0.1", "smoothness weight in the decomposition loss"},
        {"lambda2", ValueKind::real, "1.0", "reflectance-consistency weight"},
        {"lambda_p", ValueKind::real, "0.01", "perceptual weight in the enhancement loss"},
        {"alpha_smooth", ValueKind::real, "-10", "edge-awareness exponent of the smoothness term"},
        {"channels", ValueKind::integer, "8", "latent width C (full-scale recipe: 40)"},
        {"heads", ValueKind::integer, "2", "attention heads; must divide channels"},
        {"block_depth", ValueKind::integer, "1", "transformer blocks per decomposer branch"},
        {"ffn_expansion", ValueKind::integer, "2", "gated feed-forward expansion factor"},
        {"blocks_per_scale", ValueKind::int3, "1,2,2", "refiner blocks at the three U scales"},
        {"fusion", ValueKind::text, "cross",
         "guidance fusion in refiner blocks: cross, self_only, mul_v, mul_fin"},
        {"seed", ValueKind::integer, "1", "root seed for all randomness"},
        {"deterministic", ValueKind::boolean, "true",
         "fixed seeding for bit-reproducible runs; false draws a fresh seed"},
        {"grad_clip", ValueKind::real, "1.0",
         "global-norm clip for multiplicative strategies; 0 disables"},
        {"epoch_steps", ValueKind::integer, "50", "steps per epoch in stability statistics"},
        {"log_every", ValueKind::integer, "1", "record every N-th step in the training log"},
        {"use_perceptual", ValueKind::boolean, "true", "include the perceptual enhancement term"},
        {"max_pairs", ValueKind::integer, "0", "ingestion cap on dataset pairs; 0 = no cap"},
    };
    return schema;
}

namespace {

const SchemaEntry* find_entry(const std::string& key) {
    for (const auto& e : config_schema())
        if (e.key == key) return &e;
    return nullptr;
}

std::string valid_keys() {
    std::string out;
    for (const auto& e : config_schema()) {
        if (!out.empty()) out += ", ";
        out += e.key;
    }
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::defaults() {
    KeyValueConfig c;
    for (const auto& e : config_schema()) c.values_[e.key] = e.default_value;
    return c;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig c = defaults();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (find_entry(key) == nullptr)
        throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
    values_[key] = value;
}

int KeyValueConfig::get_int(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(n);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double KeyValueConfig::get_real(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a real number, got '" + v + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key) const {
    std::string v = get_string(key);
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "' expects a boolean, got '" + get_string(key) + "'");
}

const std::string& KeyValueConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
    return it->second;
}

std::array<int, 3> KeyValueConfig::get_int3(const std::string& key) const {
    const std::string& v = get_string(key);
    std::array<int, 3> out{};
    char extra = 0;
    if (std::sscanf(v.c_str(), "%d,%d,%d%c", &out[0], &out[1], &out[2], &extra) != 3)
        throw ConfigError("key '" + key + "' expects three comma-separated integers, got '" + v +
                          "'");
    return out;
}

std::string KeyValueConfig::render() const {
    std::string out;
    for (const auto& e : config_schema()) out += e.key + "=" + values_.at(e.key) + "\n";
    return out;
}

TrainConfig make_train_config(const KeyValueConfig& c, TrainStage stage) {
    TrainConfig t;
    t.stage = stage;
    t.strategy = strategy_from_string(c.get_string("strategy"));
    t.iterations = c.get_int("iterations");
    t.batch_size = c.get_int("batch_size");
    t.patch_size = c.get_int("patch_size");
    t.lr_initial = c.get_real("lr_initial");
    t.lr_final = c.get_real("lr_final");
    t.beta1 = c.get_real("beta1");
    t.beta2 = c.get_real("beta2");
    t.lambda1 = c.get_real("lambda1");
    t.lambda2 = c.get_real("lambda2");
    t.lambda_p = c.get_real("lambda_p");
    t.alpha_smooth = c.get_real("alpha_smooth");
    t.channels = c.get_int("channels");
    t.heads = c.get_int("heads");
    t.block_depth = c.get_int("block_depth");
    t.ffn_expansion = c.get_int("ffn_expansion");
    t.blocks_per_scale = c.get_int3("blocks_per_scale");
    t.fusion = nn::fusion_from_string(c.get_string("fusion"));
    t.seed = static_cast<std::uint64_t>(c.get_int("seed"));
    t.deterministic = c.get_bool("deterministic");
    t.grad_clip = c.get_real("grad_clip");
    t.epoch_steps = c.get_int("epoch_steps");
    t.log_every = c.get_int("log_every");
    t.use_perceptual = c.get_bool("use_perceptual");
    return t;
}

void write_manifest(const std::string& path, const KeyValueConfig& c,
                    const std::map<std::string, std::string>& extra) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest '" + path + "'");
    for (const auto& [k, v] : extra) f << k << "=" << v << "\n";
    f << c.render();
    if (!f) throw IoError("short write on manifest '" + path + "'");
}

}  // namespace relight

#include "relight/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "relight/errors.hpp"

namespace relight {

namespace {

constexpr char kMagic[4] = {'R', 'L', 'C', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("truncated checkpoint stream");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                      buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

// Common meta keys shared by every module checkpoint.
void check_format(const Checkpoint& c, const std::string& kind) {
    if (c.require_meta("kind") != kind)
        throw DataError("checkpoint holds a '" + c.require_meta("kind") + "' module, expected '" +
                        kind + "'");
}

int meta_int(const Checkpoint& c, const std::string& key) {
    return std::stoi(c.require_meta(key));
}

void fill_params(const Checkpoint& c, nn::ParamRegistry& reg) {
    if (c.tensors.size() != reg.entries().size())
        throw DataError("checkpoint has " + std::to_string(c.tensors.size()) +
                        " tensors, module has " + std::to_string(reg.entries().size()) +
                        " parameters");
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
        const auto& [name, value] = c.tensors[i];
        const auto& [pname, param] = reg.entries()[i];
        if (name != pname)
            throw DataError("checkpoint tensor '" + name + "' does not match parameter '" + pname +
                            "'");
        if (value.shape() != param->value.shape())
            throw DataError("checkpoint tensor '" + name + "' has shape " + value.shape_str() +
                            ", module expects " + param->value.shape_str());
        param->value = value;
        param->grad = Tensor::zeros(value.shape());
    }
}

void collect_params(Checkpoint& c, const nn::ParamRegistry& reg) {
    for (const auto& [name, param] : reg.entries()) c.tensors.emplace_back(name, param->value);
}

}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        put_string(out, k);
        put_string(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_string(out, name);
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
        for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
    }
    return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IoError("not a weight checkpoint (bad magic)");
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw IoError("unsupported checkpoint format version " + std::to_string(version));

    Checkpoint c;
    const std::uint32_t nmeta = r.u32();
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        std::string k = r.str();
        c.meta[k] = r.str();
    }
    const std::uint32_t ntensors = r.u32();
    for (std::uint32_t i = 0; i < ntensors; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank < 1 || rank > 4) throw IoError("checkpoint tensor '" + name + "' has bad rank");
        std::vector<int> shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = static_cast<int>(r.u32());
            n *= static_cast<std::size_t>(d);
        }
        std::vector<double> data(n);
        for (auto& v : data) v = r.f64();
        c.tensors.emplace_back(name, Tensor::from_data(shape, std::move(data)));
    }
    return c;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write on checkpoint '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError("checkpoint is missing meta key '" + key + "'");
    return it->second;
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t param_checksum(const nn::ParamRegistry& reg) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::uint8_t* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [name, param] : reg.entries()) {
        mix(reinterpret_cast<const std::uint8_t*>(name.data()), name.size());
        for (std::size_t i = 0; i < param->value.size(); ++i) {
            const std::uint64_t bits = std::bit_cast<std::uint64_t>(param->value[i]);
            std::uint8_t raw[8];
            std::memcpy(raw, &bits, 8);
            mix(raw, 8);
        }
    }
    return h;
}

Checkpoint to_checkpoint(Decomposer& w) {
    Checkpoint c;
    c.meta["kind"] = "decomposer";
    c.meta["strategy"] = to_string(w.cfg.strategy);
    c.meta["channels"] = std::to_string(w.cfg.channels);
    c.meta["heads"] = std::to_string(w.cfg.heads);
    c.meta["block_depth"] = std::to_string(w.cfg.block_depth);
    c.meta["ffn_expansion"] = std::to_string(w.cfg.ffn_expansion);
    nn::ParamRegistry reg;
    w.register_params(reg);
    collect_params(c, reg);
    return c;
}

Decomposer decomposer_from_checkpoint(const Checkpoint& c) {
    check_format(c, "decomposer");
    DecomposerConfig cfg;
    cfg.strategy = strategy_from_string(c.require_meta("strategy"));
    cfg.channels = meta_int(c, "channels");
    cfg.heads = meta_int(c, "heads");
    cfg.block_depth = meta_int(c, "block_depth");
    cfg.ffn_expansion = meta_int(c, "ffn_expansion");
    Decomposer d = Decomposer::make(cfg);
    nn::ParamRegistry reg;
    d.register_params(reg);
    fill_params(c, reg);
    return d;
}

Checkpoint to_checkpoint(RefinerBranch& b, const std::string& branch_tag) {
    Checkpoint c;
    c.meta["kind"] = "refiner_branch";
    c.meta["branch"] = branch_tag;
    c.meta["channels"] = std::to_string(b.cfg.channels);
    c.meta["heads"] = std::to_string(b.cfg.heads);
    c.meta["ffn_expansion"] = std::to_string(b.cfg.ffn_expansion);
    c.meta["blocks_per_scale"] = std::to_string(b.cfg.blocks_per_scale[0]) + "," +
                                 std::to_string(b.cfg.blocks_per_scale[1]) + "," +
                                 std::to_string(b.cfg.blocks_per_scale[2]);
    c.meta["fusion"] = nn::to_string(b.cfg.fusion);
    c.meta["guidance"] = to_string(b.expected_guidance);
    c.meta["max_pool_guidance"] = b.max_pool_guidance ? "1" : "0";
    nn::ParamRegistry reg;
    b.register_params(reg);
    collect_params(c, reg);
    return c;
}

RefinerBranch refiner_branch_from_checkpoint(const Checkpoint& c) {
    check_format(c, "refiner_branch");
    RefinerConfig cfg;
    cfg.channels = meta_int(c, "channels");
    cfg.heads = meta_int(c, "heads");
    cfg.ffn_expansion = meta_int(c, "ffn_expansion");
    const std::string bps = c.require_meta("blocks_per_scale");
    if (std::sscanf(bps.c_str(), "%d,%d,%d", &cfg.blocks_per_scale[0], &cfg.blocks_per_scale[1],
                    &cfg.blocks_per_scale[2]) != 3)
        throw DataError("bad blocks_per_scale in checkpoint: '" + bps + "'");
    cfg.fusion = nn::fusion_from_string(c.require_meta("fusion"));

    const std::string g = c.require_meta("guidance");
    GuidanceKind kind = g == "mean" ? GuidanceKind::mean
                        : g == "max" ? GuidanceKind::max
                                     : GuidanceKind::prior_p;
    RefinerBranch b =
        RefinerBranch::make(cfg, kind, c.require_meta("max_pool_guidance") == "1");
    nn::ParamRegistry reg;
    b.register_params(reg);
    fill_params(c, reg);
    return b;
}

std::string branch_tag_of(const Checkpoint& c) { return c.require_meta("branch"); }

void save_refiner(Refiner& r, const std::string& path_r, const std::string& path_l) {
    to_checkpoint(r.r_branch, "R").save(path_r);
    to_checkpoint(r.l_branch, "L").save(path_l);
}

Refiner load_refiner(const std::string& path_r, const std::string& path_l) {
    Checkpoint cr = Checkpoint::load(path_r);
    Checkpoint cl = Checkpoint::load(path_l);
    if (branch_tag_of(cr) != "R")
        throw DataError("'" + path_r + "' holds branch " + branch_tag_of(cr) + ", expected R");
    if (branch_tag_of(cl) != "L")
        throw DataError("'" + path_l + "' holds branch " + branch_tag_of(cl) + ", expected L");
    Refiner r;
    r.r_branch = refiner_branch_from_checkpoint(cr);
    r.l_branch = refiner_branch_from_checkpoint(cl);
    return r;
}

}  // namespace relight

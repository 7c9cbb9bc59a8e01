#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "relight/decomposer.hpp"
#include "relight/refiner.hpp"

namespace relight {

// Versioned weight container: a string-map header describing the module
// followed by named tensors, all little-endian with explicit widths so the
// byte stream round-trips bit-exactly.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;  // registration order

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    const std::string& require_meta(const std::string& key) const;
};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

// Order- and value-sensitive digest of a module's parameters; training code
// uses it to prove the frozen decomposer never changed.
std::uint64_t param_checksum(const nn::ParamRegistry& reg);

Checkpoint to_checkpoint(Decomposer& w);
Decomposer decomposer_from_checkpoint(const Checkpoint& c);

// Refiner branches are stored one per file, tagged R or L.
Checkpoint to_checkpoint(RefinerBranch& b, const std::string& branch_tag);
RefinerBranch refiner_branch_from_checkpoint(const Checkpoint& c);
std::string branch_tag_of(const Checkpoint& c);

void save_refiner(Refiner& r, const std::string& path_r, const std::string& path_l);
Refiner load_refiner(const std::string& path_r, const std::string& path_l);

}  // namespace relight

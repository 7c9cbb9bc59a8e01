#pragma once

#include <cstdint>
#include <string>

#include "relight/dataset.hpp"

namespace relight {

// Toy data: shared random texture lit by two smooth illumination fields at
// different levels, so each pair has a genuine common reflectance.
struct SyntheticConfig {
    int count = 20;
    int size = 32;
    std::uint64_t seed = 7;
    double low_illum_min = 0.05, low_illum_max = 0.35;
    double normal_illum_min = 0.60, normal_illum_max = 1.00;
};

PairSet make_synthetic_pairs(const SyntheticConfig& cfg);

// Materializes a pair set as <root>/low/*.png and <root>/high/*.png,
// creating the directories.
void write_pair_pngs(const PairSet& pairs, const std::string& root);

}  // namespace relight

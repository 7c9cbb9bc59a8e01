#pragma once

#include <string>
#include <vector>

#include "relight/imaging.hpp"
#include "relight/rng.hpp"

namespace relight {

struct PairEntry {
    std::string scene_id;  // filename stem shared by both exposures
    std::string low_path;
    std::string normal_path;
};

// Result of scanning a dataset root laid out as <root>/low/* and
// <root>/high/*. Files pair up by identical filename; unmatched files are
// kept as warnings, not errors.
struct PairIndex {
    std::vector<PairEntry> entries;  // sorted by scene_id
    std::vector<std::string> warnings;
};

PairIndex scan_pairs(const std::string& root, std::size_t max_pairs = 0);

// A decoded low/normal exposure pair. Both images share H and W.
struct ImagePair {
    PixelImage low;
    PixelImage normal;
    std::string scene_id;
};
using PairSet = std::vector<ImagePair>;

ImagePair load_pair(const PairEntry& entry);
PairSet load_pairs(const PairIndex& index);

// One of the eight rot90/hflip symmetries. Applied as rot90^k after an
// optional horizontal flip; invert() undoes it.
struct AugmentOp {
    int rot_quarters = 0;  // counterclockwise quarter turns, 0..3
    bool hflip = false;

    Tensor apply(const Tensor& img) const;
    Tensor invert(const Tensor& img) const;
};

Tensor rot90_ccw(const Tensor& img);
Tensor hflip(const Tensor& img);

// Aligned crop from an image pair, with provenance for reproducibility.
struct PatchPair {
    Tensor low;     // (P,P,3) in [0,1]
    Tensor normal;  // (P,P,3)
    std::string scene_id;
    int row = 0;
    int col = 0;
    AugmentOp transform;  // identity until augment() runs
};

// Draws the row offset first, then the column offset, from rng. Requires
// patch_size <= min(H, W).
PatchPair sample_patch(const ImagePair& pair, int patch_size, Rng& rng);

// Applies one of the 8 symmetries, uniformly drawn, to both crops and
// records it in patch.transform.
void augment(PatchPair& patch, Rng& rng);

}  // namespace relight

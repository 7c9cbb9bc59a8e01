#include "relight/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

#include "relight/errors.hpp"
#include "relight/image_io.hpp"

namespace fs = std::filesystem;

namespace relight {

namespace {

std::map<std::string, std::string> list_images(const fs::path& dir) {
    std::map<std::string, std::string> out;  // stem -> full path
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (!looks_like_image_file(name)) continue;
        out[e.path().stem().string()] = e.path().string();
    }
    return out;
}

}  // namespace

PairIndex scan_pairs(const std::string& root, std::size_t max_pairs) {
    fs::path low_dir = fs::path(root) / "low";
    fs::path high_dir = fs::path(root) / "high";
    if (!fs::is_directory(low_dir) || !fs::is_directory(high_dir)) {
        throw DataError("dataset root '" + root + "' must contain low/ and high/ directories");
    }
    auto lows = list_images(low_dir);
    auto highs = list_images(high_dir);

    PairIndex index;
    for (const auto& [stem, path] : lows) {
        auto it = highs.find(stem);
        if (it == highs.end()) {
            index.warnings.push_back("low/" + fs::path(path).filename().string() +
                                     " has no counterpart in high/");
            continue;
        }
        index.entries.push_back(PairEntry{stem, path, it->second});
    }
    for (const auto& [stem, path] : highs) {
        if (lows.find(stem) == lows.end()) {
            index.warnings.push_back("high/" + fs::path(path).filename().string() +
                                     " has no counterpart in low/");
        }
    }
    // std::map iteration already sorts by stem.
    if (index.entries.empty()) {
        throw DataError("no low/high pairs found under '" + root + "'");
    }
    if (max_pairs > 0 && index.entries.size() > max_pairs) index.entries.resize(max_pairs);
    return index;
}

ImagePair load_pair(const PairEntry& entry) {
    ImagePair p;
    p.low = read_image(entry.low_path);
    p.normal = read_image(entry.normal_path);
    p.scene_id = entry.scene_id;
    if (p.low.height() != p.normal.height() || p.low.width() != p.normal.width()) {
        throw DataError("pair '" + entry.scene_id + "' has mismatched sizes: low " +
                        p.low.data.shape_str() + " vs high " + p.normal.data.shape_str());
    }
    return p;
}

PairSet load_pairs(const PairIndex& index) {
    PairSet out;
    out.reserve(index.entries.size());
    for (const auto& e : index.entries) out.push_back(load_pair(e));
    return out;
}

Tensor rot90_ccw(const Tensor& img) {
    int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor out = Tensor::zeros({w, h, c});
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < h; ++j)
            for (int k = 0; k < c; ++k) out.at(i, j, k) = img.at(j, w - 1 - i, k);
    return out;
}

Tensor hflip(const Tensor& img) {
    int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor out = Tensor::zeros({h, w, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) out.at(i, j, k) = img.at(i, w - 1 - j, k);
    return out;
}

Tensor AugmentOp::apply(const Tensor& img) const {
    Tensor out = hflip ? relight::hflip(img) : img;
    for (int r = 0; r < rot_quarters; ++r) out = rot90_ccw(out);
    return out;
}

Tensor AugmentOp::invert(const Tensor& img) const {
    Tensor out = img;
    for (int r = 0; r < (4 - rot_quarters) % 4; ++r) out = rot90_ccw(out);
    if (hflip) out = relight::hflip(out);
    return out;
}

PatchPair sample_patch(const ImagePair& pair, int patch_size, Rng& rng) {
    int h = pair.low.height(), w = pair.low.width();
    if (patch_size <= 0 || patch_size > h || patch_size > w) {
        throw DataError("patch size " + std::to_string(patch_size) + " does not fit scene '" +
                        pair.scene_id + "' of " + std::to_string(h) + "x" + std::to_string(w));
    }
    int row = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - patch_size + 1)));
    int col = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - patch_size + 1)));

    PatchPair p;
    p.scene_id = pair.scene_id;
    p.row = row;
    p.col = col;
    p.low = Tensor::zeros({patch_size, patch_size, 3});
    p.normal = Tensor::zeros({patch_size, patch_size, 3});
    for (int i = 0; i < patch_size; ++i)
        for (int j = 0; j < patch_size; ++j)
            for (int c = 0; c < 3; ++c) {
                p.low.at(i, j, c) = pair.low.data.at(row + i, col + j, c);
                p.normal.at(i, j, c) = pair.normal.data.at(row + i, col + j, c);
            }
    return p;
}

void augment(PatchPair& patch, Rng& rng) {
    std::uint64_t k = rng.uniform_int(8);
    patch.transform.rot_quarters = static_cast<int>(k & 3);
    patch.transform.hflip = (k >> 2) != 0;
    patch.low = patch.transform.apply(patch.low);
    patch.normal = patch.transform.apply(patch.normal);
}

}  // namespace relight

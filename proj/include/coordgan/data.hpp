#pragma once

// Dataset provisioning. The synthetic family is a face-like arrangement of
// five parts (background, face ellipse, two eyes, mouth) whose geometry is a
// pure function of structure_seed and whose palette is a pure function of
// texture_seed — label propagation over it has nontrivial bilateral
// semantics, and the two factors are exactly disentangled by construction.

#include <optional>
#include <string>
#include <vector>

#include "coordgan/coordspace.hpp"
#include "coordgan/tensor.hpp"

namespace coordgan::data {

constexpr int32_t kNumClasses = 5;  // 0 background, 1 face, 2 eye-L, 3 eye-R, 4 mouth

struct SynthSpec {
    int64_t resolution = 32;
    uint64_t structure_seed = 0;
    uint64_t texture_seed = 0;
};

struct Sample {
    TensorT<float> image;  // [H,W,3] in [-1,1]
    coords::SegMask mask;  // 5 classes
    SynthSpec spec;
};

// Anti-aliased rasterization (4x4 supersampling); mask labels from the
// pixel-center part. Deterministic in (seeds, resolution).
Sample synth_sample(const SynthSpec& spec);

// Deterministic dataset: sample i's seeds derive from (base_seed, i).
std::vector<Sample> synth_dataset(int64_t count, int64_t resolution, uint64_t base_seed);

struct PaletteEntry {
    int32_t index = 0;
    std::string name;
    uint8_t rgb[3] = {0, 0, 0};
};

std::vector<PaletteEntry> synth_palette();
void write_palette(const std::string& path, const std::vector<PaletteEntry>& palette);
std::vector<PaletteEntry> read_palette(const std::string& path);

// Writes images/, masks/, palette.json and manifest.json under `dir`.
void write_synth_dataset(const std::string& dir, const std::vector<Sample>& samples);

struct ManifestEntry {
    std::string image;
    std::optional<std::string> mask;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Center-crop to square, bilinear-resize to `resolution`, map to [-1,1].
TensorT<float> load_image_file(const std::string& path, int64_t resolution);

// Folder ingestion: every PNG/JPEG under `path` in sorted order. Unreadable
// files are skipped with a warning on stderr; an empty result is an error.
std::vector<TensorT<float>> load_folder(const std::string& path, int64_t resolution);

// Indexed-PNG mask + palette sidecar.
coords::SegMask load_mask(const std::string& path, const std::vector<PaletteEntry>& palette);
void write_mask(const std::string& path, const coords::SegMask& mask);

// Deterministic epoch ordering: a pure function of (seed, epoch, count).
std::vector<int64_t> epoch_order(uint64_t seed, int64_t epoch, int64_t count);

}  // namespace coordgan::data

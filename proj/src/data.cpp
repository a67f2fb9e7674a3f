#include "coordgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "coordgan/image_io.hpp"
#include "coordgan/kernels.hpp"
#include "coordgan/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coordgan::data {

namespace {

struct Ellipse {
    double cx, cy, rx, ry;
    bool contains(double x, double y) const {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

struct Layout {
    Ellipse face, eye_l, eye_r, mouth;
};

// Geometry depends only on structure_seed. Coordinates are normalized [-1,1].
Layout make_layout(uint64_t structure_seed) {
    Rng rng(structure_seed);
    const double cx = rng.uniform(-0.15, 0.15);
    const double cy = rng.uniform(-0.15, 0.15);
    const double s = rng.uniform(0.7, 1.3);
    Layout l;
    l.face = {cx, cy, 0.52 * s, 0.65 * s};
    const double eye_dx = (0.24 + rng.uniform(-0.04, 0.04)) * s;
    const double eye_dy = (-0.20 + rng.uniform(-0.05, 0.05)) * s;
    const double eye_r = (0.085 + rng.uniform(-0.015, 0.015)) * s;
    l.eye_l = {cx - eye_dx, cy + eye_dy, eye_r, eye_r};
    l.eye_r = {cx + eye_dx, cy + eye_dy, eye_r, eye_r};
    const double mouth_dy = (0.33 + rng.uniform(-0.05, 0.05)) * s;
    l.mouth = {cx + rng.uniform(-0.03, 0.03) * s, cy + mouth_dy, (0.20 + rng.uniform(-0.04, 0.04)) * s,
               (0.09 + rng.uniform(-0.02, 0.02)) * s};
    return l;
}

// Palette depends only on texture_seed: one flat color per part, drawn in a
// fixed order inside fixed per-part color boxes.
struct Palette5 {
    float color[5][3];
};

Palette5 make_palette(uint64_t texture_seed) {
    Rng rng(texture_seed);
    Palette5 p;
    auto draw = [&](int part, float rlo, float rhi, float glo, float ghi, float blo, float bhi) {
        p.color[part][0] = float(rng.uniform(rlo, rhi));
        p.color[part][1] = float(rng.uniform(glo, ghi));
        p.color[part][2] = float(rng.uniform(blo, bhi));
    };
    draw(0, -0.95f, -0.35f, -0.95f, -0.35f, -0.85f, -0.15f);  // background: dark, bluish range
    draw(1, 0.05f, 0.85f, -0.25f, 0.45f, -0.55f, 0.15f);      // face: warm range
    draw(2, -0.95f, -0.45f, -0.95f, -0.45f, -0.95f, -0.45f);  // eyes: dark
    draw(3, -0.95f, -0.45f, -0.95f, -0.45f, -0.95f, -0.45f);
    draw(4, 0.35f, 0.95f, -0.85f, -0.25f, -0.75f, -0.15f);    // mouth: reddish
    // Both eyes render in the eye-L color so left/right is a geometric
    // distinction, not an appearance cue.
    for (int c = 0; c < 3; ++c) p.color[3][c] = p.color[2][c];
    return p;
}

// Topmost part at a point; draw order mouth > eyes > face > background.
int part_at(const Layout& l, double x, double y) {
    if (l.mouth.contains(x, y)) return 4;
    if (l.eye_r.contains(x, y)) return 3;
    if (l.eye_l.contains(x, y)) return 2;
    if (l.face.contains(x, y)) return 1;
    return 0;
}

}  // namespace

Sample synth_sample(const SynthSpec& spec) {
    if (spec.resolution < 16) throw std::invalid_argument("synth_sample: resolution must be >= 16");
    const int64_t R = spec.resolution;
    const Layout layout = make_layout(spec.structure_seed);
    const Palette5 pal = make_palette(spec.texture_seed);
    Sample s;
    s.spec = spec;
    s.image = TensorT<float>({R, R, 3});
    s.mask.height = R;
    s.mask.width = R;
    s.mask.num_classes = kNumClasses;
    s.mask.labels = TensorT<int32_t>({R, R});
    constexpr int SS = 4;  // supersampling grid per axis
    float* img = s.image.data();
    int32_t* lab = s.mask.labels.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < R; ++i) {
        for (int64_t j = 0; j < R; ++j) {
            float acc[3] = {0, 0, 0};
            for (int si = 0; si < SS; ++si)
                for (int sj = 0; sj < SS; ++sj) {
                    const double y = 2.0 * (double(i) + (si + 0.5) / SS) / double(R) - 1.0;
                    const double x = 2.0 * (double(j) + (sj + 0.5) / SS) / double(R) - 1.0;
                    const int part = part_at(layout, x, y);
                    acc[0] += pal.color[part][0];
                    acc[1] += pal.color[part][1];
                    acc[2] += pal.color[part][2];
                }
            for (int c = 0; c < 3; ++c) img[(i * R + j) * 3 + c] = acc[c] / (SS * SS);
            const double yc = 2.0 * (double(i) + 0.5) / double(R) - 1.0;
            const double xc = 2.0 * (double(j) + 0.5) / double(R) - 1.0;
            lab[i * R + j] = int32_t(part_at(layout, xc, yc));
        }
    }
    return s;
}

std::vector<Sample> synth_dataset(int64_t count, int64_t resolution, uint64_t base_seed) {
    std::vector<Sample> out;
    out.reserve(size_t(count));
    Rng seeder(base_seed);
    for (int64_t i = 0; i < count; ++i) {
        SynthSpec spec;
        spec.resolution = resolution;
        spec.structure_seed = seeder.next_u64();
        spec.texture_seed = seeder.next_u64();
        out.push_back(synth_sample(spec));
    }
    return out;
}

std::vector<PaletteEntry> synth_palette() {
    return {{0, "background", {40, 40, 60}},
            {1, "face", {220, 170, 130}},
            {2, "eye-L", {30, 30, 30}},
            {3, "eye-R", {60, 60, 60}},
            {4, "mouth", {200, 60, 70}}};
}

void write_palette(const std::string& path, const std::vector<PaletteEntry>& palette) {
    json j = json::array();
    for (const auto& e : palette)
        j.push_back({{"index", e.index}, {"name", e.name}, {"rgb", {e.rgb[0], e.rgb[1], e.rgb[2]}}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("palette: cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<PaletteEntry> read_palette(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("palette: cannot open " + path);
    json j;
    in >> j;
    std::vector<PaletteEntry> out;
    for (const auto& e : j) {
        PaletteEntry p;
        p.index = e.at("index").get<int32_t>();
        p.name = e.at("name").get<std::string>();
        for (int c = 0; c < 3; ++c) p.rgb[c] = e.at("rgb")[size_t(c)].get<uint8_t>();
        out.push_back(p);
    }
    return out;
}

void write_synth_dataset(const std::string& dir, const std::vector<Sample>& samples) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::vector<ManifestEntry> entries;
    char name[64];
    for (size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "%05zu.png", i);
        const std::string img_rel = std::string("images/") + name;
        const std::string mask_rel = std::string("masks/") + name;
        img::write_png_rgb((fs::path(dir) / img_rel).string(), img::from_float_hwc(samples[i].image));
        write_mask((fs::path(dir) / mask_rel).string(), samples[i].mask);
        entries.push_back({img_rel, mask_rel});
    }
    write_palette((fs::path(dir) / "palette.json").string(), synth_palette());
    write_manifest((fs::path(dir) / "manifest.json").string(), entries);
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    json j = json::array();
    for (const auto& e : entries) {
        json rec = {{"image", e.image}};
        if (e.mask) rec["mask"] = *e.mask;
        j.push_back(rec);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    json j;
    in >> j;
    std::vector<ManifestEntry> out;
    for (const auto& e : j) {
        ManifestEntry m;
        m.image = e.at("image").get<std::string>();
        if (e.contains("mask")) m.mask = e.at("mask").get<std::string>();
        out.push_back(m);
    }
    return out;
}

TensorT<float> load_image_file(const std::string& path, int64_t resolution) {
    img::ImageU8 raw = img::read_image(path);
    TensorT<float> hwc = img::to_float_hwc(raw);
    if (raw.channels == 1) {
        // replicate gray to RGB
        TensorT<float> rgb({raw.height, raw.width, 3});
        for (int64_t i = 0; i < raw.height * raw.width; ++i)
            for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = hwc[i];
        hwc = rgb;
    }
    // center square crop
    const int64_t side = std::min(raw.height, raw.width);
    const int64_t y0 = (raw.height - side) / 2, x0 = (raw.width - side) / 2;
    TensorT<float> chw = kern::permute(hwc, {2, 0, 1}).reshaped({1, 3, raw.height, raw.width});
    TensorT<float> crop = kern::slice_axis(kern::slice_axis(chw, 2, y0, side), 3, x0, side);
    TensorT<float> resized = kern::resize_bilinear(crop, resolution, resolution);
    return kern::permute(resized.reshaped({3, resolution, resolution}), {1, 2, 0});
}

std::vector<TensorT<float>> load_folder(const std::string& path, int64_t resolution) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".PNG" || ext == ".jpg" || ext == ".jpeg" || ext == ".JPG")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<TensorT<float>> out;
    for (const auto& f : files) {
        try {
            out.push_back(load_image_file(f, resolution));
        } catch (const std::exception& e) {
            std::fprintf(stderr, "warning: skipping unreadable image %s (%s)\n", f.c_str(), e.what());
        }
    }
    if (out.empty()) throw std::runtime_error("load_folder: no readable images in " + path);
    return out;
}

coords::SegMask load_mask(const std::string& path, const std::vector<PaletteEntry>& palette) {
    img::ImageU8 raw = img::read_image(path);
    if (raw.channels != 1) throw std::runtime_error("mask: expected single-channel PNG: " + path);
    coords::SegMask m;
    m.height = raw.height;
    m.width = raw.width;
    m.num_classes = int32_t(palette.size());
    m.labels = TensorT<int32_t>({raw.height, raw.width});
    for (int64_t i = 0; i < m.labels.numel(); ++i) m.labels[i] = raw.pixels[size_t(i)];
    m.validate();
    return m;
}

void write_mask(const std::string& path, const coords::SegMask& mask) {
    img::ImageU8 im;
    im.height = mask.height;
    im.width = mask.width;
    im.channels = 1;
    im.pixels.resize(size_t(mask.labels.numel()));
    for (int64_t i = 0; i < mask.labels.numel(); ++i) im.pixels[size_t(i)] = uint8_t(mask.labels[i]);
    img::write_png_gray(path, im);
}

std::vector<int64_t> epoch_order(uint64_t seed, int64_t epoch, int64_t count) {
    std::vector<int64_t> idx(static_cast<size_t>(count), 0);
    for (int64_t i = 0; i < count; ++i) idx[size_t(i)] = i;
    Rng rng(seed);
    Rng sh = rng.fork(uint64_t(epoch) + 1);
    for (int64_t i = count - 1; i > 0; --i)
        std::swap(idx[size_t(i)], idx[size_t(sh.below(uint64_t(i + 1)))]);
    return idx;
}

}  // namespace coordgan::data

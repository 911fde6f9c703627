#include "liclab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "liclab/image_io.hpp"
#include "liclab/rng.hpp"

namespace liclab {

DomainKind domain_kind_from_name(const std::string& name) {
    if (name == "smooth" || name == "smooth-natural") return DomainKind::SmoothNatural;
    if (name == "pixelart" || name == "pixel") return DomainKind::PixelArt;
    if (name == "screentext" || name == "screen") return DomainKind::ScreenText;
    throw ConfigError("unknown domain: " + name + " (expected smooth|pixelart|screentext)");
}

const char* domain_kind_name(DomainKind k) {
    switch (k) {
        case DomainKind::SmoothNatural: return "smooth";
        case DomainKind::PixelArt: return "pixelart";
        case DomainKind::ScreenText: return "screentext";
    }
    return "?";
}

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// Base 0.5, a soft gradient and a handful of on-grid cosines below an eighth
// of Nyquist; amplitudes bounded so no pixel ever clips.
Tensor smooth_natural(int h, int w, Rng rng) {
    Tensor img({3, h, w});
    const float theta = rng.uniform(0.0f, 6.2831853f);
    const float grad_amp = rng.uniform(0.04f, 0.12f);
    const float gx = std::cos(theta), gy = std::sin(theta);

    const int ncos = 6;
    const int fmax = std::max(1, std::min(h, w) / 16);
    struct Wave {
        int fx, fy;
        float amp, phase;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < ncos; ++k) {
        Wave v;
        v.fx = rng.uniform_int(-fmax, fmax);
        v.fy = rng.uniform_int(-fmax, fmax);
        if (v.fx == 0 && v.fy == 0) v.fx = 1;
        v.amp = rng.uniform(0.02f, 0.055f);
        v.phase = rng.uniform(0.0f, 6.2831853f);
        waves.push_back(v);
    }
    float tint[3];
    for (auto& t : tint) t = rng.uniform(0.85f, 1.0f);

    Rng noise = rng.fork("noise");
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            float v = 0.5f + grad_amp * (gx * (static_cast<float>(j) / w - 0.5f) +
                                         gy * (static_cast<float>(i) / h - 0.5f));
            for (const auto& wv : waves)
                v += wv.amp * std::cos(static_cast<float>(kTwoPi) *
                                           (static_cast<float>(wv.fx) * j / w +
                                            static_cast<float>(wv.fy) * i / h) +
                                       wv.phase);
            for (int c = 0; c < 3; ++c) {
                const float n = (noise.uniform() - 0.5f) * 0.006f;
                img.data[(static_cast<std::size_t>(c) * h + i) * w + j] = v * tint[c] + n;
            }
        }
    return img;
}

// Blocky sprites on a cell grid; every cell is exactly constant.
Tensor pixel_art(int h, int w, int cell, Rng rng) {
    const int ch = h / cell, cw = w / cell;
    std::vector<float> cells(static_cast<std::size_t>(3) * ch * cw);
    auto palette = [&rng]() { return static_cast<float>(rng.uniform_int(0, 7)) / 7.0f; };

    // Background + random rectangles + speckle cells.
    float bg[3] = {palette(), palette(), palette()};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < ch * cw; ++i) cells[static_cast<std::size_t>(c) * ch * cw + i] = bg[c];
    const int nrect = rng.uniform_int(4, 10);
    for (int r = 0; r < nrect; ++r) {
        const int y0 = rng.uniform_int(0, ch - 1), x0 = rng.uniform_int(0, cw - 1);
        const int rh = rng.uniform_int(1, std::max(1, ch / 2)), rw = rng.uniform_int(1, std::max(1, cw / 2));
        float col[3] = {palette(), palette(), palette()};
        for (int i = y0; i < std::min(ch, y0 + rh); ++i)
            for (int j = x0; j < std::min(cw, x0 + rw); ++j)
                for (int c = 0; c < 3; ++c)
                    cells[(static_cast<std::size_t>(c) * ch + i) * cw + j] = col[c];
    }
    const int nspeckle = rng.uniform_int(ch * cw / 8, ch * cw / 3);
    for (int s = 0; s < nspeckle; ++s) {
        const int i = rng.uniform_int(0, ch - 1), j = rng.uniform_int(0, cw - 1);
        for (int c = 0; c < 3; ++c) cells[(static_cast<std::size_t>(c) * ch + i) * cw + j] = palette();
    }

    Tensor img({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                img.data[(static_cast<std::size_t>(c) * h + i) * w + j] =
                    cells[(static_cast<std::size_t>(c) * ch + i / cell) * cw + j / cell];
    return img;
}

// Light flat background with dark glyph-like rectangles on text baselines and
// a few thin rules.
Tensor screen_text(int h, int w, Rng rng) {
    Tensor img({3, h, w});
    float bg[3];
    for (auto& c : bg) c = rng.uniform(0.85f, 0.98f);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h * w; ++i) img.data[static_cast<std::size_t>(c) * h * w + i] = bg[c];

    auto fill = [&](int y0, int y1, int x0, int x1, const float col[3]) {
        for (int i = std::max(0, y0); i < std::min(h, y1); ++i)
            for (int j = std::max(0, x0); j < std::min(w, x1); ++j)
                for (int c = 0; c < 3; ++c)
                    img.data[(static_cast<std::size_t>(c) * h + i) * w + j] = col[c];
    };

    const float ink_v = rng.uniform(0.02f, 0.2f);
    const float ink[3] = {ink_v, ink_v, ink_v};
    const int line_h = rng.uniform_int(6, 10);
    for (int y = rng.uniform_int(2, 6); y + line_h < h; y += line_h + rng.uniform_int(3, 7)) {
        int x = rng.uniform_int(2, 8);
        while (x < w - 4) {
            const int glyph_w = rng.uniform_int(2, 6);
            if (rng.uniform() < 0.8f) fill(y, y + line_h - rng.uniform_int(1, 3), x, x + glyph_w, ink);
            x += glyph_w + rng.uniform_int(1, 3);
        }
    }
    const int nrules = rng.uniform_int(1, 3);
    for (int r = 0; r < nrules; ++r) {
        const float rule_v = rng.uniform(0.3f, 0.6f);
        const float rule[3] = {rule_v, rule_v, rule_v};
        if (rng.uniform() < 0.5f) {
            const int y = rng.uniform_int(0, h - 2);
            fill(y, y + 1, 0, w, rule);
        } else {
            const int x = rng.uniform_int(0, w - 2);
            fill(0, h, x, x + 1, rule);
        }
    }
    return img;
}

}  // namespace

std::vector<Tensor> generate(const DomainSpec& spec, int count) {
    if (count < 1) throw ConfigError("generate needs count >= 1");
    if (spec.kind == DomainKind::PixelArt &&
        (spec.height % spec.cell != 0 || spec.width % spec.cell != 0))
        throw ConfigError("pixel-art extents must be multiples of the cell size");
    Rng root(spec.seed, static_cast<std::uint64_t>(spec.kind) + 0xD0A11);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng img_rng = root.fork(static_cast<std::uint64_t>(i));
        switch (spec.kind) {
            case DomainKind::SmoothNatural: out.push_back(smooth_natural(spec.height, spec.width, img_rng)); break;
            case DomainKind::PixelArt: out.push_back(pixel_art(spec.height, spec.width, spec.cell, img_rng)); break;
            case DomainKind::ScreenText: out.push_back(screen_text(spec.height, spec.width, img_rng)); break;
        }
    }
    return out;
}

std::vector<Tensor> load_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .ppm images under " + dir);
    std::vector<Tensor> out;
    for (const auto& f : files) out.push_back(read_ppm(f));
    return out;
}

}  // namespace liclab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "liclab/tensor.hpp"

namespace liclab {

enum class DomainKind : std::uint8_t {
    SmoothNatural = 0,  // band-limited cosines + gradients, stand-in for natural photos
    PixelArt = 1,       // blocky sprites, k x k constant cells, hard edges
    ScreenText = 2,     // glyph-like marks and thin lines on a flat background
};

DomainKind domain_kind_from_name(const std::string& name);
const char* domain_kind_name(DomainKind k);

struct DomainSpec {
    DomainKind kind = DomainKind::SmoothNatural;
    std::uint64_t seed = 1;
    int width = 96;
    int height = 96;
    int cell = 8;  // PixelArt cell size
};

// Deterministic per (spec, count); images are [3, H, W] on [0, 1].
std::vector<Tensor> generate(const DomainSpec& spec, int count);

// Folder ingestion: every *.ppm under `dir`, sorted by filename.
std::vector<Tensor> load_image_dir(const std::string& dir);

}  // namespace liclab

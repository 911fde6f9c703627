#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "liclab/analysis.hpp"
#include "liclab/datagen.hpp"
#include "liclab/image_io.hpp"

using namespace liclab;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims && std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0;
}

}  // namespace

TEST_CASE("generators are deterministic per spec") {
    for (auto kind : {DomainKind::SmoothNatural, DomainKind::PixelArt, DomainKind::ScreenText}) {
        DomainSpec spec;
        spec.kind = kind;
        spec.seed = 5;
        spec.width = 64;
        spec.height = 48;
        if (kind == DomainKind::PixelArt) spec.cell = 8;
        auto a = generate(spec, 3);
        auto b = generate(spec, 3);
        REQUIRE(a.size() == 3);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i], b[i]));
        for (const auto& img : a)
            for (float v : img.data) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
    }
}

TEST_CASE("pixel art is exactly piecewise constant on the cell grid") {
    DomainSpec spec;
    spec.kind = DomainKind::PixelArt;
    spec.seed = 6;
    spec.width = 64;
    spec.height = 64;
    spec.cell = 8;
    auto imgs = generate(spec, 4);
    for (const auto& img : imgs)
        for (int c = 0; c < 3; ++c)
            for (int by = 0; by < 64; by += 8)
                for (int bx = 0; bx < 64; bx += 8) {
                    const float v0 = img.data[(std::size_t)(c * 64 + by) * 64 + bx];
                    for (int i = 0; i < 8; ++i)
                        for (int j = 0; j < 8; ++j)
                            CHECK(img.data[(std::size_t)(c * 64 + by + i) * 64 + bx + j] == v0);
                }
}

TEST_CASE("smooth natural keeps >= 90% of spectral energy below quarter Nyquist") {
    DomainSpec spec;
    spec.kind = DomainKind::SmoothNatural;
    spec.seed = 7;
    spec.width = 64;
    spec.height = 64;
    auto imgs = generate(spec, 8);
    for (const auto& img : imgs) {
        const double share = low_frequency_energy_share(luma601(img), 0.25);
        CHECK(share >= 0.9);
    }
}

TEST_CASE("domain separation: pixel art has at least 2x the high-frequency energy") {
    DomainSpec smooth;
    smooth.kind = DomainKind::SmoothNatural;
    smooth.seed = 8;
    smooth.width = 64;
    smooth.height = 64;
    DomainSpec pixel = smooth;
    pixel.kind = DomainKind::PixelArt;
    pixel.cell = 8;

    double hf_smooth = 0.0, hf_pixel = 0.0;
    const int n = 32;
    auto s_imgs = generate(smooth, n);
    auto p_imgs = generate(pixel, n);
    for (int i = 0; i < n; ++i) {
        hf_smooth += 1.0 - low_frequency_energy_share(luma601(s_imgs[(std::size_t)i]), 0.25);
        hf_pixel += 1.0 - low_frequency_energy_share(luma601(p_imgs[(std::size_t)i]), 0.25);
    }
    MESSAGE("mean HF share: smooth=" << hf_smooth / n << " pixel=" << hf_pixel / n);
    CHECK(hf_pixel >= 2.0 * hf_smooth);
}

TEST_CASE("ppm io") {
    Rng rng(9);
    Tensor img({3, 11, 13});
    for (auto& v : img.data) v = (float)rng.uniform_int(0, 255) / 255.0f;

    SUBCASE("byte round trip is exact") {
        auto bytes = encode_ppm(img);
        Tensor back = decode_ppm(bytes);
        CHECK(bit_equal(back, img));
        CHECK(encode_ppm(back) == bytes);
    }

    SUBCASE("file round trip and folder ingestion") {
        namespace fs = std::filesystem;
        const auto dir = fs::temp_directory_path() / "liclab_datagen_test";
        fs::create_directories(dir);
        write_ppm((dir / "b.ppm").string(), img);
        write_ppm((dir / "a.ppm").string(), img);
        auto loaded = load_image_dir(dir.string());
        CHECK(loaded.size() == 2);
        CHECK(bit_equal(loaded[0], img));
        fs::remove_all(dir);
    }

    SUBCASE("malformed headers are rejected") {
        CHECK_THROWS_AS(decode_ppm({'P', '5', '\n'}), FormatError);
        auto bytes = encode_ppm(img);
        bytes.resize(bytes.size() - 10);
        CHECK_THROWS_AS(decode_ppm(bytes), FormatError);
    }
}

TEST_CASE("pgm export") {
    Tensor g({4, 6});
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = (float)i / 23.0f;
    auto bytes = encode_pgm(g);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == '5');
    CHECK(bytes.size() >= 24);
}

TEST_CASE("padding to the model grid") {
    Rng rng(10);
    Tensor img({3, 20, 33});
    for (auto& v : img.data) v = rng.uniform();
    Tensor padded = pad_to_grid(img);
    CHECK(padded.dims == std::vector<int>{1, 3, 32, 48});
    // interior preserved, borders replicated
    CHECK(padded.at(0, 1, 5, 7) == img.data[(std::size_t)(1 * 20 + 5) * 33 + 7]);
    CHECK(padded.at(0, 2, 31, 40) == img.data[(std::size_t)(2 * 20 + 19) * 33 + 32]);
    Tensor back = crop_image(padded, 20, 33);
    CHECK(bit_equal(back, img));
}

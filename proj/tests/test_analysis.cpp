#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "liclab/analysis.hpp"
#include "liclab/bitstream.hpp"
#include "liclab/datagen.hpp"
#include "liclab/image_io.hpp"

using namespace liclab;

namespace {

std::vector<Tensor> small_images(DomainKind kind, int count, std::uint64_t seed) {
    DomainSpec spec;
    spec.kind = kind;
    spec.seed = seed;
    spec.width = 32;
    spec.height = 32;
    return generate(spec, count);
}

}  // namespace

TEST_CASE("descending order rule") {
    CHECK(descending_order({4.0, 1.0, 9.0}) == std::vector<int>{2, 0, 1});
    // argsort invariance under uniform positive scaling
    CHECK(descending_order({0.4, 0.1, 0.9}) == std::vector<int>{2, 0, 1});
    CHECK(descending_order({4000.0, 1000.0, 9000.0}) == std::vector<int>{2, 0, 1});
    // stable on ties
    CHECK(descending_order({1.0, 1.0, 0.5}) == std::vector<int>{0, 1, 2});
}

TEST_CASE("channel stats") {
    CodecModel model = CodecModel::init(201);
    model.refresh_id();
    auto images = small_images(DomainKind::SmoothNatural, 2, 202);

    auto s1 = channel_stats(model, nullptr, images);
    auto s2 = channel_stats(model, nullptr, images);
    CHECK(s1.log_energy == s2.log_energy);
    CHECK(s1.order == s2.order);
    CHECK(s1.order.size() == CodecModel::kLatentChannels);

    // energies match a direct mean-square oracle over the raw latents
    std::vector<double> sums(CodecModel::kLatentChannels, 0.0);
    std::vector<double> counts(CodecModel::kLatentChannels, 0.0);
    for (const auto& img : images) {
        auto fwd = codec_forward(model, nullptr, pad_to_grid(img), QuantMode::Round, nullptr);
        const auto& yh = fwd.y_hat->value;
        const int spatial = yh.dims[2] * yh.dims[3];
        for (int c = 0; c < CodecModel::kLatentChannels; ++c)
            for (int i = 0; i < spatial; ++i) {
                const double v = yh.data[(std::size_t)c * spatial + i];
                sums[(std::size_t)c] += v * v;
                counts[(std::size_t)c] += 1.0;
            }
    }
    for (int c = 0; c < CodecModel::kLatentChannels; ++c) {
        const double oracle = std::log10(sums[(std::size_t)c] / counts[(std::size_t)c] + 1e-12);
        CHECK(s1.log_energy[(std::size_t)c] == doctest::Approx(oracle).epsilon(1e-6));
    }

    const std::string csv = channel_stats_to_csv(s1);
    CHECK(csv.rfind("channel,log_energy,bits\n", 0) == 0);
}

TEST_CASE("reconstruct_from_channels") {
    CodecModel model = CodecModel::init(211);
    model.refresh_id();
    auto img = small_images(DomainKind::PixelArt, 1, 212)[0];

    SUBCASE("empty keep set is exactly zero") {
        Tensor r = reconstruct_from_channels(model, nullptr, img, {});
        for (float v : r.data) CHECK(v == 0.0f);
    }

    SUBCASE("keeping all channels equals g_s(y_hat) - g_s(0)") {
        std::vector<int> all(CodecModel::kLatentChannels);
        for (int c = 0; c < CodecModel::kLatentChannels; ++c) all[(std::size_t)c] = c;
        Tensor r = reconstruct_from_channels(model, nullptr, img, all);

        auto fwd = codec_forward(model, nullptr, pad_to_grid(img), QuantMode::Round, nullptr);
        auto full = run_synthesis(model, nullptr, fwd.y_hat);
        auto zero = run_synthesis(model, nullptr, make_const(Tensor::zeros_like(fwd.y_hat->value)));
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < img.dims[1]; ++i)
                for (int j = 0; j < img.dims[2]; ++j)
                    CHECK(r.data[(std::size_t)(c * img.dims[1] + i) * img.dims[2] + j] ==
                          full->value.at(0, c, i, j) - zero->value.at(0, c, i, j));
    }

    SUBCASE("out-of-range channel raises an index error") {
        CHECK_THROWS_AS(reconstruct_from_channels(model, nullptr, img, {64}), DimensionError);
        CHECK_THROWS_AS(reconstruct_from_channels(model, nullptr, img, {-1}), DimensionError);
    }
}

TEST_CASE("fft spectrum properties") {
    SUBCASE("constant image has all energy at the DC bin") {
        Tensor img({16, 16}, 0.7f);
        Tensor mag = fft_magnitude(img);
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) {
                const float v = mag.data[(std::size_t)i * 16 + j];
                if (i == 8 && j == 8)
                    CHECK(v == doctest::Approx(0.7 * 256.0).epsilon(1e-6));
                else
                    CHECK(std::abs(v) <= 1e-3f);
            }
    }

    SUBCASE("horizontal cosine gives two symmetric peaks at +-4") {
        const int n = 32;
        Tensor img({n, n});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                img.data[(std::size_t)i * n + j] = std::cos(2.0 * 3.14159265358979 * 4.0 * j / n);
        Tensor mag = fft_magnitude(img);
        double peak = 0.0;
        int px = -1, py = -1;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (mag.data[(std::size_t)i * n + j] > peak) {
                    peak = mag.data[(std::size_t)i * n + j];
                    py = i;
                    px = j;
                }
        CHECK(py == n / 2);
        CHECK((px == n / 2 - 4 || px == n / 2 + 4));
        CHECK(mag.data[(std::size_t)(n / 2) * n + (n / 2 - 4)] ==
              doctest::Approx(mag.data[(std::size_t)(n / 2) * n + (n / 2 + 4)]).epsilon(1e-9));
    }

    SUBCASE("Parseval holds to 1e-6 relative") {
        Rng rng(221);
        Tensor img({24, 20});
        for (auto& v : img.data) v = rng.uniform();
        Tensor mag = fft_magnitude(img);
        double spatial = 0.0, spectral = 0.0;
        for (float v : img.data) spatial += (double)v * v;
        for (float v : mag.data) spectral += (double)v * v;
        spectral /= 24.0 * 20.0;
        CHECK(spectral == doctest::Approx(spatial).epsilon(1e-6));
    }
}

TEST_CASE("bd rate") {
    RdCurve anchor;
    anchor.label = "anchor";
    for (int i = 0; i < 6; ++i) anchor.points.push_back({0.0, 0.15 * (i + 1), 29.0 + 1.7 * i});

    SUBCASE("identical curves read exactly zero") { CHECK(bd_rate(anchor, anchor) == 0.0); }

    SUBCASE("uniform 0.9x rate reads -10% within 1e-9") {
        RdCurve test = anchor;
        for (auto& p : test.points) p.bpp *= 0.9;
        CHECK(std::abs(bd_rate(anchor, test) + 10.0) <= 1e-9);
        CHECK(bd_rate(test, anchor) > 0.0);  // sign antisymmetry
    }

    SUBCASE("uniform scaling by s reads 100*(s-1) exactly") {
        for (double s : {0.5, 0.8, 1.25}) {
            RdCurve test = anchor;
            for (auto& p : test.points) p.bpp *= s;
            CHECK(bd_rate(anchor, test) == doctest::Approx(100.0 * (s - 1.0)).epsilon(1e-9));
        }
    }

    SUBCASE("quartic-in-log-rate fixture matches an independent quadrature oracle") {
        // both curves sampled from quartics in PSNR -> ln bpp
        auto quartic = [](double q, double a) {
            const double t = (q - 30.0) / 10.0;
            return -2.0 + a * t + 0.8 * t * t - 0.3 * t * t * t + 0.1 * t * t * t * t;
        };
        RdCurve a, t;
        a.label = "a";
        t.label = "t";
        for (int i = 0; i < 6; ++i) {
            const double q = 28.0 + 2.1 * i;
            a.points.push_back({0.0, std::exp(quartic(q, 1.1)), q});
            const double q2 = 28.5 + 2.0 * i;
            t.points.push_back({0.0, std::exp(quartic(q2, 1.0) - 0.08), q2});
        }
        const double got = bd_rate(a, t);

        // independent oracle: re-derive pchip slopes and integrate both
        // interpolants with a dense trapezoid rule
        auto slopes_oracle = [](const std::vector<double>& x, const std::vector<double>& y) {
            const std::size_t n = x.size();
            std::vector<double> h(n - 1), d(n - 1), m(n);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                h[i] = x[i + 1] - x[i];
                d[i] = (y[i + 1] - y[i]) / h[i];
            }
            for (std::size_t k = 1; k + 1 < n; ++k) {
                if (d[k - 1] * d[k] <= 0)
                    m[k] = 0;
                else {
                    const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
                    m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
                }
            }
            auto edge = [](double h0, double h1, double d0, double d1) {
                double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
                if (s * d0 <= 0) return 0.0;
                if (d0 * d1 < 0 && std::abs(s) > 3 * std::abs(d0)) return 3 * d0;
                return s;
            };
            m[0] = edge(h[0], h[1], d[0], d[1]);
            m[n - 1] = edge(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
            return m;
        };
        auto eval = [](const std::vector<double>& x, const std::vector<double>& y,
                       const std::vector<double>& m, double at) {
            std::size_t k = 0;
            while (k + 2 < x.size() && at > x[k + 1]) ++k;
            const double h = x[k + 1] - x[k], tt = (at - x[k]) / h;
            return (1 + 2 * tt) * (1 - tt) * (1 - tt) * y[k] + tt * (1 - tt) * (1 - tt) * h * m[k] +
                   tt * tt * (3 - 2 * tt) * y[k + 1] + tt * tt * (tt - 1) * h * m[k + 1];
        };
        std::vector<double> xa, ya, xt, yt;
        for (auto& p : a.points) {
            xa.push_back(p.psnr);
            ya.push_back(std::log(p.bpp));
        }
        for (auto& p : t.points) {
            xt.push_back(p.psnr);
            yt.push_back(std::log(p.bpp));
        }
        const auto ma = slopes_oracle(xa, ya);
        const auto mt = slopes_oracle(xt, yt);
        const double lo = std::max(xa.front(), xt.front());
        const double hi = std::min(xa.back(), xt.back());
        const int grid = 200001;
        double acc = 0.0;
        for (int i = 0; i < grid; ++i) {
            const double q = lo + (hi - lo) * i / (grid - 1);
            const double diff = eval(xt, yt, mt, q) - eval(xa, ya, ma, q);
            acc += (i == 0 || i == grid - 1) ? 0.5 * diff : diff;
        }
        const double mean = acc * ((hi - lo) / (grid - 1)) / (hi - lo);
        const double oracle = 100.0 * (std::exp(mean) - 1.0);
        CHECK(std::abs(got - oracle) <= 0.01);
    }

    SUBCASE("no PSNR overlap is an analysis error") {
        RdCurve far;
        far.label = "far";
        for (int i = 0; i < 4; ++i) far.points.push_back({0.0, 0.1 * (i + 1), 80.0 + i});
        CHECK_THROWS_AS(bd_rate(anchor, far), AnalysisError);
    }

    SUBCASE("fewer than 4 points is an analysis error") {
        RdCurve three;
        three.label = "three";
        for (int i = 0; i < 3; ++i) three.points.push_back({0.0, 0.1 * (i + 1), 30.0 + i});
        CHECK_THROWS_AS(bd_rate(anchor, three), AnalysisError);
    }
}

TEST_CASE("rd curve csv round trip") {
    RdCurve c;
    c.label = "x";
    for (int i = 0; i < 4; ++i) c.points.push_back({0.001 * (i + 1), 0.2 * (i + 1), 30.0 + i});
    RdCurve back = rd_curve_from_csv(rd_curve_to_csv(c), "x");
    REQUIRE(back.points.size() == c.points.size());
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        CHECK(back.points[i].bpp == doctest::Approx(c.points[i].bpp).epsilon(1e-6));
        CHECK(back.points[i].psnr == doctest::Approx(c.points[i].psnr).epsilon(1e-6));
    }
}

TEST_CASE("rd curve over real encodes") {
    CodecModel model = CodecModel::init(231);
    model.refresh_id();
    Tensor gray({3, 32, 32}, 0.5f);

    std::vector<RdCurveModel> entries{{&model, nullptr}};
    RdCurve c = rd_curve(entries, {gray}, "gray");
    REQUIRE(c.points.size() == 1);
    CHECK(c.points[0].bpp > 0.0);
    CHECK(std::isfinite(c.points[0].psnr));

    // averaged bpp equals the mean of per-image bpps
    auto imgs = small_images(DomainKind::SmoothNatural, 3, 232);
    RdCurve c3 = rd_curve(entries, imgs, "smooth");
    double mean = 0.0;
    for (const auto& img : imgs) mean += encode_image(model, nullptr, img).bpp;
    mean /= 3.0;
    CHECK(c3.points[0].bpp == doctest::Approx(mean).epsilon(1e-9));
}

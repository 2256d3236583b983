#include <doctest.h>

#include "sgs/data_io.hpp"
#include "sgs/guidance.hpp"
#include "sgs/losses.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

using namespace sgs;

namespace {

Image noise_image(int size, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0, 1);
    Image img(size, size, 3);
    for (double& v : img.data) v = uni(rng);
    return img;
}

Camera basic_camera() {
    Camera c;
    c.fx = c.fy = 40;
    c.cx = c.cy = 16;
    c.width = c.height = 32;
    return c;
}

std::vector<Camera> ring(size_t n) {
    std::vector<Camera> cams;
    for (size_t i = 0; i < n; ++i) {
        Camera c = basic_camera();
        c.rotation = quat_normalize(Vec4(1.0, 0.1 * i, 0, 0));
        c.translation = Vec3(0.2 * i, 0, 2);
        cams.push_back(c);
    }
    return cams;
}

} // namespace

TEST_CASE("cross-fade interpolation blends endpoint images") {
    const Image a = noise_image(16, 1), b = noise_image(16, 2);
    const CrossFadeInterpolator interp;
    const Image mid = interp.interpolate(a, b, 0.25);
    for (size_t i = 0; i < mid.data.size(); ++i)
        CHECK(mid.data[i] == doctest::Approx(0.75 * a.data[i] + 0.25 * b.data[i]));
    CHECK((interp.interpolate(a, b, 0.0).data == a.data));
    CHECK((interp.interpolate(a, b, 1.0).data == b.data));
}

TEST_CASE("pseudo-label generation covers every interpolated camera") {
    const auto cams = ring(3);
    const PoseTrack track = build_track(cams, 4);
    std::vector<Image> images = {noise_image(32, 1), noise_image(32, 2),
                                 noise_image(32, 3)};
    int depth_calls = 0;
    const DepthProxyFn proxy = [&](const InterpolatedCamera&) -> std::optional<Image> {
        ++depth_calls;
        Image d(32, 32, 1);
        for (double& v : d.data) v = 2.0;
        return d;
    };
    const auto labels =
        generate_pseudo_labels(images, track, CrossFadeInterpolator{}, proxy);
    CHECK(labels.size() == track.interpolated.size());
    CHECK(depth_calls == static_cast<int>(labels.size()));
    for (const auto& l : labels) {
        CHECK(l.camera.learnable);
        CHECK(l.image.width == 32);
        CHECK(l.depth_proxy.width == 32);
        CHECK(l.pair_index < cams.size() - 1);
        CHECK(l.alpha > 0.0);
        CHECK(l.alpha < 1.0);
    }
}

TEST_CASE("file-backed interpolation loads frames by pair and step") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sgs_interp_test";
    fs::create_directories(dir);
    const auto cams = ring(2);
    const PoseTrack track = build_track(cams, 4);
    std::vector<Image> frames;
    for (int k = 1; k <= 3; ++k) {
        Image f(32, 32, 3);
        for (double& v : f.data) v = k / 4.0;
        frames.push_back(f);
        save_png(f, (dir / ("pair0_alpha" + std::to_string(k) + "of4.png")).string());
    }

    FileInterpolator interp(dir.string(), 4);
    std::vector<Image> images = {noise_image(32, 10), noise_image(32, 11)};
    const auto labels = generate_pseudo_labels(images, track, interp);
    REQUIRE(labels.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        // 8-bit PNG round trip: within one quantization step.
        double max_err = 0;
        for (size_t j = 0; j < labels[i].image.data.size(); ++j)
            max_err = std::max(max_err,
                               std::abs(labels[i].image.data[j] - frames[i].data[j]));
        CHECK(max_err < 1.0 / 254.0);
    }
    fs::remove_all(dir);
}

TEST_CASE("file-backed interpolation rejects mis-sized frames") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sgs_interp_bad";
    fs::create_directories(dir);
    save_png(noise_image(16, 1), (dir / "pair0_alpha1of4.png").string());
    FileInterpolator interp(dir.string(), 4);
    const Image a = noise_image(32, 2);
    CHECK_THROWS_AS(interp.interpolate(a, a, 0.25), InterpolatorContractViolation);
    fs::remove_all(dir);
}

TEST_CASE("label score matches the loss components") {
    PseudoLabel label;
    label.image = noise_image(32, 5);
    RenderOutput out;
    out.rgb = noise_image(32, 6);

    const double l1 = l1_loss(label.image, out.rgb);
    const double ds = dssim_loss(label.image, out.rgb);
    const double cor = image_correlation(out.rgb, label.image);
    CHECK(score_pseudo_label(label, out, 0.8, 0.2) ==
          doctest::Approx(0.8 * l1 + 0.2 * ds * cor).epsilon(1e-12));
    CHECK(score_pseudo_label(label, out, 0.8, 0.2, /*additive=*/true) ==
          doctest::Approx(0.8 * l1 + 0.2 * (ds + cor)).epsilon(1e-12));
}

TEST_CASE("selection keeps the floor(N/2) best labels") {
    auto make = [](double score, size_t pair, double alpha) {
        PseudoLabel l;
        l.score = score;
        l.pair_index = pair;
        l.alpha = alpha;
        return l;
    };
    std::vector<PseudoLabel> labels = {make(0.5, 0, 0.25), make(0.1, 0, 0.5),
                                       make(0.3, 1, 0.25), make(0.3, 0, 0.75),
                                       make(0.9, 1, 0.5)};
    select_top_half(labels);
    size_t selected = 0;
    for (const auto& l : labels) selected += l.selected;
    CHECK(selected == 2);
    CHECK(labels[1].selected);  // score 0.1
    CHECK(labels[3].selected);  // score 0.3 tie broken by lower pair index
    CHECK_FALSE(labels[2].selected);

    std::vector<PseudoLabel> one = {make(0.1, 0, 0.5)};
    CHECK_THROWS_AS(select_top_half(one), NothingToSelect);
}

TEST_CASE("guidance window schedule") {
    CHECK_FALSE(guidance_active(0));
    CHECK_FALSE(guidance_active(1999));
    CHECK(guidance_active(2000));
    CHECK(guidance_active(2099));
    CHECK_FALSE(guidance_active(2100));
    CHECK_FALSE(guidance_active(2199));
    CHECK(guidance_active(2200));
    CHECK(guidance_active(18050));
    CHECK_FALSE(guidance_active(19999));
    // Exhaustive consistency with the closed form.
    for (long long it = 0; it < 4000; ++it) {
        const bool want = it >= 2000 && ((it - 2000) % 200) < 100;
        CHECK(guidance_active(it) == want);
    }
}

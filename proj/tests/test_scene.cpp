#include <doctest.h>

#include "sgs/scene.hpp"

#include <random>

using namespace sgs;

namespace {

GaussianField random_field(size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    GaussianField f;
    f.resize(n);
    for (size_t i = 0; i < n; ++i) {
        f.positions[i] = Vec3(uni(rng), uni(rng), uni(rng));
        f.log_scales[i] = Vec3(uni(rng), uni(rng), uni(rng)) * 0.5;
        f.rotations[i] = quat_normalize(Vec4(uni(rng), uni(rng), uni(rng), uni(rng)));
        f.opacity_logits[i] = uni(rng) * 2;
        f.colors[i] = Vec3(uni(rng), uni(rng), uni(rng));
    }
    return f;
}

} // namespace

TEST_CASE("activate basics") {
    GaussianField f;
    f.resize(2);
    f.opacity_logits[0] = 0.0;
    f.opacity_logits[1] = 4.0;
    f.log_scales[0] = Vec3::Zero();
    auto v = activate(f);
    CHECK(v.opacities[0] == doctest::Approx(0.5).epsilon(1e-15));
    // Frozen from an independent scalar evaluation of 1/(1+e^-4).
    CHECK(v.opacities[1] == doctest::Approx(0.98201379003790845).epsilon(1e-12));
    CHECK(v.scales[0] == Vec3(1, 1, 1));
}

TEST_CASE("activate is monotone in the logit") {
    GaussianField f;
    f.resize(8);
    for (int i = 0; i < 8; ++i) f.opacity_logits[i] = -6.0 + 1.7 * i;
    auto v = activate(f);
    for (int i = 1; i < 8; ++i) CHECK(v.opacities[i] > v.opacities[i - 1]);
}

TEST_CASE("quaternion renormalization is idempotent") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        Vec4 q(uni(rng), uni(rng), uni(rng), uni(rng));
        Vec4 once = quat_normalize(q);
        Vec4 twice = quat_normalize(once);
        CHECK((once - twice).norm() < 1e-12);
    }
}

TEST_CASE("build_index rejects empty field") {
    GaussianField f;
    CHECK_THROWS_AS(build_index(f), EmptyField);
}

TEST_CASE("single point query") {
    GaussianField f;
    f.resize(1);
    f.positions[0] = Vec3(0.5, -0.25, 2);
    auto idx = build_index(f);
    auto r = idx.k_nearest(f.positions[0], 1);
    CHECK(r[0].first == 0);
    CHECK(r[0].second == 0.0);
}

TEST_CASE("two points at distance 3") {
    GaussianField f;
    f.resize(2);
    f.positions[0] = Vec3(0, 0, 0);
    f.positions[1] = Vec3(3, 0, 0);
    auto idx = build_index(f);
    auto r = idx.k_nearest(Vec3(0, 0, 0), 2);
    CHECK(r[0].first == 0);
    CHECK(r[1].first == 1);
    CHECK(r[1].second == doctest::Approx(3.0));
}

TEST_CASE("collinear points, k=2") {
    GaussianField f;
    f.resize(3);
    f.positions[0] = Vec3(1, 0, 0);
    f.positions[1] = Vec3(2, 0, 0);
    f.positions[2] = Vec3(3, 0, 0);
    auto idx = build_index(f);
    auto r = idx.k_nearest(Vec3(0, 0, 0), 2);
    REQUIRE(r.size() == 2);
    CHECK(r[0].first == 0);
    CHECK(r[1].first == 1);
}

TEST_CASE("k equal to count returns everything") {
    auto f = random_field(37, 3);
    auto idx = build_index(f);
    auto r = idx.k_nearest(Vec3(0.1, 0.2, 0.3), 37);
    CHECK(r.size() == 37);
    for (size_t i = 1; i < r.size(); ++i) CHECK(r[i].second >= r[i - 1].second);
}

TEST_CASE("k greater than count throws") {
    auto f = random_field(5, 11);
    auto idx = build_index(f);
    CHECK_THROWS_AS(idx.k_nearest(Vec3::Zero(), 6), InsufficientNeighbors);
}

TEST_CASE("kd-tree matches exhaustive search") {
    // Property: identical (index, distance) results including the tie rule.
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    for (int trial = 0; trial < 8; ++trial) {
        const size_t n = 10 + static_cast<size_t>(rng() % 990);
        auto f = random_field(n, 100 + trial);
        // Inject duplicate positions to exercise ties.
        if (n > 10)
            for (size_t i = 0; i < 5; ++i) f.positions[n - 1 - i] = f.positions[i];
        auto idx = build_index(f);
        for (int q = 0; q < 30; ++q) {
            const Vec3 query(uni(rng), uni(rng), uni(rng));
            const size_t k = 1 + rng() % std::min<size_t>(n, 8);
            auto got = idx.k_nearest(query, k);
            auto want = brute_force_k_nearest(f.positions, query, k);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < k; ++i) {
                CHECK(got[i].first == want[i].first);
                CHECK(got[i].second == want[i].second);
            }
        }
        // Queries at existing points find themselves.
        for (size_t i = 0; i < n; i += n / 7 + 1) {
            auto r = idx.k_nearest(f.positions[i], 3);
            auto w = brute_force_k_nearest(f.positions, f.positions[i], 3);
            for (size_t j = 0; j < 3; ++j) CHECK(r[j].first == w[j].first);
        }
    }
}

TEST_CASE("compose_delta identity and offsets") {
    Camera cam;
    cam.rotation = Vec4(1, 0, 0, 0);
    cam.translation = Vec3(1, 0, 0);
    auto p = compose_delta(cam);
    CHECK(p.rotation.isApprox(Mat3::Identity()));
    CHECK(p.translation == Vec3(1, 0, 0));

    cam.delta.tail<3>() = Vec3(0.1, 0, 0);
    p = compose_delta(cam);
    CHECK(p.translation.isApprox(Vec3(1.1, 0, 0)));
}

/*
 * Copyright 2026 The palsylm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "palsylm/errors.hpp"
#include "palsylm/geometry.hpp"
#include "palsylm/random.hpp"
#include "palsylm/synth.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace palsylm;

namespace {

double angle_diff(double a, double b)
{
    return std::remainder(a - b, 2.0 * std::numbers::pi);
}

} // namespace

TEST_CASE("procrustes: identity, translation and scaled rotation")
{
    const std::vector<Point2> tri{{0, 0}, {1, 0}, {0, 1}};

    const auto id = procrustes_align(tri, tri);
    CHECK(id.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(id.rotation) < 1e-12);
    CHECK(std::abs(id.translation.x) < 1e-12);
    CHECK(std::abs(id.translation.y) < 1e-12);

    std::vector<Point2> shifted;
    for (auto p : tri)
    {
        shifted.push_back(p + Point2{5, -3});
    }
    const auto tr = procrustes_align(tri, shifted);
    CHECK(tr.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(tr.rotation) < 1e-12);
    CHECK(tr.translation.x == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(tr.translation.y == doctest::Approx(-3.0).epsilon(1e-12));

    std::vector<Point2> rotated;
    for (auto p : tri)
    {
        rotated.push_back({-2.0 * p.y, 2.0 * p.x});
    }
    const auto rs = procrustes_align(tri, rotated);
    CHECK(std::abs(rs.scale - 2.0) < 1e-9);
    CHECK(std::abs(angle_diff(rs.rotation, std::numbers::pi / 2)) < 1e-9);
}

TEST_CASE("procrustes: random recovery over 1000 cases")
{
    Rng rng(20260101);
    for (int trial = 0; trial < 1000; ++trial)
    {
        const Shape68 s = testing::random_shape(rng);
        SimilarityTransform t;
        t.scale = std::exp(rng.uniform(std::log(0.25), std::log(4.0)));
        t.rotation = rng.uniform(-std::numbers::pi, std::numbers::pi);
        t.translation = {rng.uniform(-500, 500), rng.uniform(-500, 500)};
        Shape68 moved;
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
        {
            moved[i] = apply_transform(t, s[i]);
        }
        const auto r = procrustes_align(s.points(), moved.points());
        REQUIRE(std::abs(r.scale - t.scale) < 1e-9);
        REQUIRE(std::abs(angle_diff(r.rotation, t.rotation)) < 1e-9);
        REQUIRE(distance(r.translation, t.translation) < 1e-6);
    }
}

TEST_CASE("procrustes: least squares beats perturbed transforms")
{
    Rng rng(5);
    const Shape68 a = testing::random_shape(rng);
    const Shape68 b = testing::random_shape(rng);
    const auto best = procrustes_align(a.points(), b.points());
    auto cost = [&](const SimilarityTransform& t) {
        double c = 0;
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
        {
            c += squared_norm(apply_transform(t, a[i]) - b[i]);
        }
        return c;
    };
    const double c0 = cost(best);
    for (int k = 0; k < 200; ++k)
    {
        SimilarityTransform t = best;
        t.scale *= 1.0 + rng.uniform(-0.05, 0.05);
        t.rotation += rng.uniform(-0.05, 0.05);
        t.translation = t.translation + Point2{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        CHECK(cost(t) >= c0 - 1e-9 * c0);
    }
}

TEST_CASE("procrustes: degenerate and malformed input")
{
    const std::vector<Point2> same{{3, 3}, {3, 3}, {3, 3}};
    const std::vector<Point2> other{{0, 0}, {1, 0}, {0, 1}};
    CHECK_THROWS_AS(procrustes_align(same, other), DegenerateShape);
    CHECK_THROWS_AS(procrustes_align(other, std::vector<Point2>{{0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(procrustes_align(std::vector<Point2>{{0, 0}}, std::vector<Point2>{{0, 0}}),
                    std::invalid_argument);
}

TEST_CASE("apply_transform arithmetic")
{
    const Point2 p = apply_transform(SimilarityTransform::identity(), {7, 9});
    CHECK(p.x == 7.0);
    CHECK(p.y == 9.0);

    SimilarityTransform t;
    t.scale = 2;
    t.translation = {1, 1};
    const Point2 q = apply_transform(t, {3, 4});
    CHECK(q.x == doctest::Approx(7.0).epsilon(1e-15));
    CHECK(q.y == doctest::Approx(9.0).epsilon(1e-15));

    SimilarityTransform half_turn;
    half_turn.rotation = std::numbers::pi;
    const Point2 r = apply_transform(half_turn, {1, 0});
    CHECK(std::abs(r.x + 1.0) < 1e-12);
    CHECK(std::abs(r.y) < 1e-12);
}

TEST_CASE("apply_transform preserves distance ratios; compose and inverse close")
{
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial)
    {
        SimilarityTransform t{rng.uniform(0.25, 4), rng.uniform(-3, 3), {rng.uniform(-9, 9), rng.uniform(-9, 9)}};
        SimilarityTransform u{rng.uniform(0.25, 4), rng.uniform(-3, 3), {rng.uniform(-9, 9), rng.uniform(-9, 9)}};
        const Point2 a{rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const Point2 b{rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const double ratio = distance(apply_transform(t, a), apply_transform(t, b)) / distance(a, b);
        CHECK(std::abs(ratio - t.scale) <= 1e-9 * t.scale);

        const Point2 back = apply_transform(t.inverse(), apply_transform(t, a));
        CHECK(distance(back, a) < 1e-9);

        const Point2 seq = apply_transform(u, apply_transform(t, a));
        const Point2 com = apply_transform(compose(u, t), a);
        CHECK(distance(seq, com) < 1e-9);
    }
}

TEST_CASE("interocular distance")
{
    Shape68 s;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        s[i] = {static_cast<double>(i) * 3.0, 17.0 - static_cast<double>(i)};
    }
    s[36] = {100, 200};
    s[45] = {160, 280};
    CHECK(interocular_distance(s) == doctest::Approx(100.0).epsilon(1e-15));
    CHECK(interocular_distance(mirror_shape(s, 123.0)) == doctest::Approx(100.0).epsilon(1e-12));

    Rng rng(3);
    for (int k = 0; k < 100; ++k)
    {
        SimilarityTransform rigid{1.0, rng.uniform(-3, 3), {rng.uniform(-100, 100), rng.uniform(-100, 100)}};
        Shape68 moved;
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
        {
            moved[i] = apply_transform(rigid, s[i]);
        }
        CHECK(std::abs(interocular_distance(moved) - 100.0) < 1e-9);
    }

    s[45] = s[36];
    CHECK_THROWS_AS(interocular_distance(s), DegenerateShape);
}

TEST_CASE("mirror: involution and symmetric fixed point")
{
    Rng rng(11);
    const Shape68 s = testing::random_shape(rng);
    CHECK(mirror_shape(mirror_shape(s, 0.0), 0.0) == s);
    // Dyadic coordinates keep the reflection arithmetic exact.
    Shape68 q = s;
    for (auto& p : q)
    {
        p = {std::round(p.x * 1024.0) / 1024.0, std::round(p.y * 1024.0) / 1024.0};
    }
    CHECK(mirror_shape(mirror_shape(q, 32.0), 32.0) == q);
    const Shape68 twice = mirror_shape(mirror_shape(s, 32.0), 32.0);
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        CHECK(distance(twice[i], s[i]) < 1e-12);
    }

    const Shape68 sym = testing::symmetric_template(256.0);
    const Shape68 m = mirror_shape(sym, 256.0);
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        CHECK(std::abs(m[i].x - sym[i].x) < 1e-12);
        CHECK(std::abs(m[i].y - sym[i].y) < 1e-12);
    }
}

TEST_CASE("mirror: index table matches nearest-point oracle on a labeled template")
{
    // Reflect the canonical template geometrically, without relabeling, and
    // find for every reflected landmark the nearest original landmark.
    const Shape68 base = testing::template_in_box({0, 0, 400, 400});
    double axis = 0;
    for (int i : {27, 28, 29, 30, 33})
    {
        axis += base[i].x / 5.0;
    }
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        const Point2 reflected{2 * axis - base[i].x, base[i].y};
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t j = 0; j < kNumLandmarks; ++j)
        {
            const double d = distance(reflected, base[j]);
            if (d < best_d)
            {
                best_d = d;
                best = j;
            }
        }
        CHECK_MESSAGE(mirror_index(static_cast<int>(i)) == static_cast<int>(best), "landmark " << i);
    }
    // Self-mapped landmarks named by the scheme.
    for (int i : {27, 28, 29, 30, 33, 51, 57, 62, 66})
    {
        CHECK(mirror_index(i) == i);
    }
    for (int i = 0; i < 68; ++i)
    {
        CHECK(mirror_index(mirror_index(i)) == i);
    }
}

TEST_CASE("Shape68 validation")
{
    std::vector<Point2> pts(67);
    CHECK_THROWS_AS(Shape68::from_points(pts), ValidationError);
    pts.resize(68);
    pts[12].x = std::nan("");
    try
    {
        Shape68::from_points(pts);
        FAIL("expected ValidationError");
    }
    catch (const ValidationError& e)
    {
        CHECK(e.indices() == std::vector<int>{12});
    }
}

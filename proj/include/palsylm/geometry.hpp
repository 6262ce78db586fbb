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
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace palsylm {

inline constexpr std::size_t kNumLandmarks = 68;

/// Image-plane point in pixels; x grows rightward, y downward.
struct Point2
{
    double x = 0.0;
    double y = 0.0;

    friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
    friend constexpr bool operator==(Point2, Point2) = default;
};

inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double squared_norm(Point2 p) { return p.x * p.x + p.y * p.y; }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

/// 68 landmarks in the Multi-PIE ordering:
///   0-16 jaw, 17-21 right brow, 22-26 left brow, 27-30 nasal bridge,
///   31-35 nasal base, 36-41 right eye (36 outer, 39 inner),
///   42-47 left eye (42 inner, 45 outer), 48-59 outer lip, 60-67 inner lip.
/// "Left"/"right" are the subject's sides.
class Shape68
{
public:
    Shape68() = default;
    explicit Shape68(const std::array<Point2, kNumLandmarks>& points);

    /// Throws ValidationError unless `points` has exactly 68 finite entries.
    static Shape68 from_points(std::span<const Point2> points);

    Point2& operator[](std::size_t i) { return points_[i]; }
    const Point2& operator[](std::size_t i) const { return points_[i]; }
    static constexpr std::size_t size() { return kNumLandmarks; }

    auto begin() { return points_.begin(); }
    auto end() { return points_.end(); }
    auto begin() const { return points_.begin(); }
    auto end() const { return points_.end(); }

    std::span<const Point2> points() const { return points_; }

    friend bool operator==(const Shape68&, const Shape68&) = default;

private:
    std::array<Point2, kNumLandmarks> points_{};
};

struct BoundingBox
{
    double left = 0.0;
    double top = 0.0;
    double width = 1.0;
    double height = 1.0;

    bool valid() const { return width > 0.0 && height > 0.0 && std::isfinite(left) && std::isfinite(top); }
    Point2 center() const { return {left + 0.5 * width, top + 0.5 * height}; }

    /// Maps a point from the unit square [0,1]^2 of this box into the image.
    Point2 from_unit(Point2 u) const { return {left + u.x * width, top + u.y * height}; }
    Point2 to_unit(Point2 p) const { return {(p.x - left) / width, (p.y - top) / height}; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Maps p -> scale * R(rotation) * p + translation.
struct SimilarityTransform
{
    double scale = 1.0;
    double rotation = 0.0; // radians
    Point2 translation{};

    static SimilarityTransform identity() { return {}; }

    /// Linear part as (a, b) with matrix [[a, -b], [b, a]].
    double a() const { return scale * std::cos(rotation); }
    double b() const { return scale * std::sin(rotation); }

    SimilarityTransform inverse() const;
};

/// this ∘ other: apply `second` after `first`.
SimilarityTransform compose(const SimilarityTransform& second, const SimilarityTransform& first);

Point2 apply_transform(const SimilarityTransform& t, Point2 p);

/// Rotation/scale part only, applied to a displacement.
struct LinearSimilarity
{
    double a = 1.0;
    double b = 0.0;

    Point2 operator()(Point2 v) const { return {a * v.x - b * v.y, b * v.x + a * v.y}; }
    LinearSimilarity inverse() const
    {
        const double d = a * a + b * b;
        return {a / d, -b / d};
    }
};

/// Least-squares similarity (no reflection) mapping `source` onto `target`.
/// Throws DegenerateShape if all source points coincide, std::invalid_argument
/// on length mismatch or fewer than two points.
SimilarityTransform procrustes_align(std::span<const Point2> source, std::span<const Point2> target);

/// Same fit, returning only the linear part; hot path of the regressor.
LinearSimilarity procrustes_linear(std::span<const Point2> source, std::span<const Point2> target);

/// Distance between the outer eye corners (36, 45). Throws DegenerateShape
/// when they coincide.
double interocular_distance(const Shape68& s);

/// Reflects about x = axis_x and relabels so the result is again a valid
/// left/right-consistent Shape68.
Shape68 mirror_shape(const Shape68& s, double axis_x);

/// Index of the landmark that takes the place of `i` after mirroring.
int mirror_index(int i);

Point2 centroid(std::span<const Point2> pts);

} // namespace palsylm

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
#include "palsylm/geometry.hpp"

#include "palsylm/errors.hpp"

#include <stdexcept>
#include <string>

namespace palsylm {

Shape68::Shape68(const std::array<Point2, kNumLandmarks>& points) : points_(points)
{
}

Shape68 Shape68::from_points(std::span<const Point2> points)
{
    if (points.size() != kNumLandmarks)
    {
        throw ValidationError("expected 68 landmarks, got " + std::to_string(points.size()));
    }
    std::vector<int> bad;
    Shape68 s;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        if (!is_finite(points[i]))
        {
            bad.push_back(static_cast<int>(i));
        }
        s.points_[i] = points[i];
    }
    if (!bad.empty())
    {
        throw ValidationError("non-finite landmark coordinates", std::move(bad));
    }
    return s;
}

SimilarityTransform SimilarityTransform::inverse() const
{
    SimilarityTransform inv;
    inv.scale = 1.0 / scale;
    inv.rotation = -rotation;
    const Point2 t = apply_transform({inv.scale, inv.rotation, {}}, translation);
    inv.translation = {-t.x, -t.y};
    return inv;
}

SimilarityTransform compose(const SimilarityTransform& second, const SimilarityTransform& first)
{
    SimilarityTransform out;
    out.scale = second.scale * first.scale;
    out.rotation = std::remainder(second.rotation + first.rotation, 2.0 * M_PI);
    out.translation = apply_transform(second, first.translation);
    return out;
}

Point2 apply_transform(const SimilarityTransform& t, Point2 p)
{
    const double a = t.a();
    const double b = t.b();
    return {a * p.x - b * p.y + t.translation.x, b * p.x + a * p.y + t.translation.y};
}

Point2 centroid(std::span<const Point2> pts)
{
    Point2 c;
    for (const auto& p : pts)
    {
        c.x += p.x;
        c.y += p.y;
    }
    const double n = static_cast<double>(pts.size());
    return {c.x / n, c.y / n};
}

namespace {

struct Fit
{
    double a;
    double b;
    Point2 source_mean;
    Point2 target_mean;
};

Fit fit_similarity(std::span<const Point2> source, std::span<const Point2> target)
{
    if (source.size() != target.size())
    {
        throw std::invalid_argument("procrustes_align: point lists differ in length");
    }
    if (source.size() < 2)
    {
        throw std::invalid_argument("procrustes_align: need at least two points");
    }
    const Point2 ms = centroid(source);
    const Point2 mt = centroid(target);
    double sxx = 0.0;
    double dot = 0.0;
    double cross = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i)
    {
        const Point2 p = source[i] - ms;
        const Point2 q = target[i] - mt;
        sxx += squared_norm(p);
        dot += p.x * q.x + p.y * q.y;
        cross += p.x * q.y - p.y * q.x;
    }
    if (!(sxx > 0.0))
    {
        throw DegenerateShape("procrustes_align: source points are coincident");
    }
    return {dot / sxx, cross / sxx, ms, mt};
}

} // namespace

SimilarityTransform procrustes_align(std::span<const Point2> source, std::span<const Point2> target)
{
    const Fit f = fit_similarity(source, target);
    SimilarityTransform t;
    t.scale = std::hypot(f.a, f.b);
    t.rotation = std::atan2(f.b, f.a);
    const LinearSimilarity lin{f.a, f.b};
    t.translation = f.target_mean - lin(f.source_mean);
    return t;
}

LinearSimilarity procrustes_linear(std::span<const Point2> source, std::span<const Point2> target)
{
    const Fit f = fit_similarity(source, target);
    return {f.a, f.b};
}

double interocular_distance(const Shape68& s)
{
    const double d = distance(s[36], s[45]);
    if (!(d > 0.0))
    {
        throw DegenerateShape("inter-ocular distance is zero (landmarks 36 and 45 coincide)");
    }
    return d;
}

int mirror_index(int i)
{
    static const std::array<int, kNumLandmarks> table = [] {
        std::array<int, kNumLandmarks> m{};
        for (int k = 0; k < static_cast<int>(kNumLandmarks); ++k)
        {
            m[k] = k;
        }
        for (int k = 0; k <= 16; ++k) m[k] = 16 - k;
        for (int k = 17; k <= 26; ++k) m[k] = 43 - k;
        for (int k = 31; k <= 35; ++k) m[k] = 66 - k;
        const int eyes[][2] = {{36, 45}, {37, 44}, {38, 43}, {39, 42}, {40, 47}, {41, 46}};
        const int lips[][2] = {{48, 54}, {49, 53}, {50, 52}, {59, 55}, {58, 56},
                               {60, 64}, {61, 63}, {67, 65}};
        for (const auto& p : eyes)
        {
            m[p[0]] = p[1];
            m[p[1]] = p[0];
        }
        for (const auto& p : lips)
        {
            m[p[0]] = p[1];
            m[p[1]] = p[0];
        }
        return m;
    }();
    return table.at(static_cast<std::size_t>(i));
}

Shape68 mirror_shape(const Shape68& s, double axis_x)
{
    Shape68 out;
    for (int i = 0; i < static_cast<int>(kNumLandmarks); ++i)
    {
        const Point2 p = s[i];
        out[mirror_index(i)] = {2.0 * axis_x - p.x, p.y};
    }
    return out;
}

} // namespace palsylm

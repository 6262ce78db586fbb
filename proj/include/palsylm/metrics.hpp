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

#include "palsylm/geometry.hpp"

#include <span>
#include <string>
#include <vector>

namespace palsylm {

enum class Side
{
    right, // subject's right: landmarks 17-21, 36-41, 48
    left,  // subject's left:  landmarks 22-26, 42-47, 54
};

/// Facial midline as an infinite line through `origin` along unit `direction`.
struct MidlineModel
{
    Point2 origin;
    Point2 direction;

    Point2 project(Point2 p) const;
};

/// Total-least-squares line through the nasal bridge (27-30) and
/// subnasale (33). Throws DegenerateShape if those points coincide.
MidlineModel estimate_midline(const Shape68& s);

/// Centroid of the six eye landmarks of `side`; stands in for the pupil.
Point2 pupil_proxy(const Shape68& s, Side side);

/// Brow y at `x` by piecewise-linear interpolation along the brow, clamped
/// to its x-range.
double brow_y_at(const Shape68& s, Side side, double x);

struct SideMetrics
{
    double brow_height = 0.0;              // pupil to upper brow border, along y
    double palpebral_fissure_height = 0.0; // mid upper lid to mid lower lid
    double commissure_excursion = 0.0;     // mouth corner to midline at lower lip
};

struct FacialMetrics
{
    SideMetrics left;
    SideMetrics right;
    SideMetrics delta; // left - right
    SideMetrics left_pct; // percent of inter-ocular distance
    SideMetrics right_pct;
    SideMetrics delta_pct;
    double interocular = 0.0;
};

/// Throws DegenerateShape when the inter-ocular distance is zero.
FacialMetrics compute_metrics(const Shape68& s);

struct MetricsRow
{
    std::string image_id;
    std::string subject;
    std::string expression;
    FacialMetrics metrics;
};

/// One CSV row per image; `flag` lists metrics whose |delta| exceeds
/// `threshold_pct` percent of the inter-ocular distance.
std::string metrics_csv(std::span<const MetricsRow> rows, double threshold_pct = 10.0);

} // namespace palsylm

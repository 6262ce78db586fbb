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
#include "palsylm/metrics.hpp"

#include "palsylm/errors.hpp"

#include "csv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace palsylm {

Point2 MidlineModel::project(Point2 p) const
{
    const Point2 d = p - origin;
    const double t = d.x * direction.x + d.y * direction.y;
    return origin + t * direction;
}

MidlineModel estimate_midline(const Shape68& s)
{
    const std::array<Point2, 5> pts = {s[27], s[28], s[29], s[30], s[33]};
    const Point2 c = centroid(pts);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& p : pts)
    {
        const Point2 d = p - c;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    if (sxx == 0.0 && syy == 0.0)
    {
        throw DegenerateShape("midline landmarks coincide");
    }
    // Principal axis of the 2x2 scatter matrix.
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    Point2 dir{std::cos(theta), std::sin(theta)};
    // Point the line downward (chin-ward) for a stable orientation.
    if (dir.y < 0.0 || (dir.y == 0.0 && dir.x < 0.0))
    {
        dir = {-dir.x, -dir.y};
    }
    return {c, dir};
}

Point2 pupil_proxy(const Shape68& s, Side side)
{
    const std::size_t first = side == Side::right ? 36 : 42;
    return centroid(s.points().subspan(first, 6));
}

double brow_y_at(const Shape68& s, Side side, double x)
{
    const std::size_t first = side == Side::right ? 17 : 22;
    std::array<Point2, 5> brow{};
    for (std::size_t k = 0; k < 5; ++k)
    {
        brow[k] = s[first + k];
    }
    std::stable_sort(brow.begin(), brow.end(), [](Point2 a, Point2 b) { return a.x < b.x; });
    if (x <= brow.front().x)
    {
        return brow.front().y;
    }
    if (x >= brow.back().x)
    {
        return brow.back().y;
    }
    for (std::size_t k = 0; k + 1 < brow.size(); ++k)
    {
        const Point2 a = brow[k];
        const Point2 b = brow[k + 1];
        if (x <= b.x)
        {
            if (b.x == a.x)
            {
                return 0.5 * (a.y + b.y);
            }
            const double t = (x - a.x) / (b.x - a.x);
            return a.y + t * (b.y - a.y);
        }
    }
    return brow.back().y;
}

namespace {

SideMetrics side_metrics(const Shape68& s, Side side, Point2 lip_reference)
{
    SideMetrics m;
    const Point2 pupil = pupil_proxy(s, side);
    m.brow_height = std::abs(pupil.y - brow_y_at(s, side, pupil.x));

    const bool right = side == Side::right;
    const Point2 upper = 0.5 * (s[right ? 37 : 43] + s[right ? 38 : 44]);
    const Point2 lower = 0.5 * (s[right ? 40 : 46] + s[right ? 41 : 47]);
    m.palpebral_fissure_height = distance(upper, lower);

    m.commissure_excursion = distance(s[right ? 48 : 54], lip_reference);
    return m;
}

SideMetrics scaled(const SideMetrics& m, double k)
{
    return {m.brow_height * k, m.palpebral_fissure_height * k, m.commissure_excursion * k};
}

SideMetrics minus(const SideMetrics& a, const SideMetrics& b)
{
    return {a.brow_height - b.brow_height, a.palpebral_fissure_height - b.palpebral_fissure_height,
            a.commissure_excursion - b.commissure_excursion};
}

} // namespace

FacialMetrics compute_metrics(const Shape68& s)
{
    FacialMetrics out;
    out.interocular = interocular_distance(s);
    const MidlineModel midline = estimate_midline(s);
    const Point2 lip_reference = midline.project(s[57]);
    out.left = side_metrics(s, Side::left, lip_reference);
    out.right = side_metrics(s, Side::right, lip_reference);
    out.delta = minus(out.left, out.right);
    const double k = 100.0 / out.interocular;
    out.left_pct = scaled(out.left, k);
    out.right_pct = scaled(out.right, k);
    out.delta_pct = minus(out.left_pct, out.right_pct);
    return out;
}

std::string metrics_csv(std::span<const MetricsRow> rows, double threshold_pct)
{
    std::ostringstream out;
    out << "image_id,subject,expression,interocular_px";
    for (const char* unit : {"px", "pct"})
    {
        for (const char* side : {"left", "right", "delta"})
        {
            for (const char* metric : {"brow_height", "palpebral_fissure_height", "commissure_excursion"})
            {
                out << ',' << side << '_' << metric << '_' << unit;
            }
        }
    }
    out << ",flag\n";
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : rows)
    {
        const FacialMetrics& m = r.metrics;
        out << detail::csv_field(r.image_id) << ',' << detail::csv_field(r.subject) << ','
            << detail::csv_field(r.expression) << ',' << num(m.interocular);
        for (const SideMetrics* v : {&m.left, &m.right, &m.delta, &m.left_pct, &m.right_pct, &m.delta_pct})
        {
            out << ',' << num(v->brow_height) << ',' << num(v->palpebral_fissure_height) << ','
                << num(v->commissure_excursion);
        }
        std::string flag;
        const auto mark = [&](double d, const char* name) {
            if (std::abs(d) > threshold_pct)
            {
                flag += flag.empty() ? name : std::string(";") + name;
            }
        };
        mark(m.delta_pct.brow_height, "brow_height");
        mark(m.delta_pct.palpebral_fissure_height, "palpebral_fissure_height");
        mark(m.delta_pct.commissure_excursion, "commissure_excursion");
        out << ',' << flag << '\n';
    }
    return out.str();
}

} // namespace palsylm

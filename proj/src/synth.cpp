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
#include "palsylm/synth.hpp"

#include "palsylm/errors.hpp"
#include "palsylm/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace palsylm {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Canonical frontal face, units of inter-ocular distance: outer eye corners
// at (-0.5, 0) and (0.5, 0), x toward the subject's left.
Shape68 canonical_template()
{
    Shape68 t;
    for (int k = 0; k <= 16; ++k)
    {
        const double phi = kPi - kPi * k / 16.0;
        t[k] = {0.72 * std::cos(phi), 0.1 + 1.15 * std::sin(phi)};
    }
    const double brow_x[] = {-0.58, -0.47, -0.35, -0.23, -0.12};
    const double brow_y[] = {-0.20, -0.27, -0.29, -0.27, -0.23};
    for (int k = 0; k < 5; ++k)
    {
        t[17 + k] = {brow_x[k], brow_y[k]};
        t[26 - k] = {-brow_x[k], brow_y[k]};
    }
    t[27] = {0.0, -0.05};
    t[28] = {0.0, 0.12};
    t[29] = {0.0, 0.28};
    t[30] = {0.0, 0.44};
    t[31] = {-0.16, 0.52};
    t[32] = {-0.08, 0.54};
    t[33] = {0.0, 0.55};
    t[34] = {0.08, 0.54};
    t[35] = {0.16, 0.52};
    const Point2 eye[] = {{-0.50, 0.0}, {-0.38, -0.07}, {-0.26, -0.07}, {-0.14, 0.0}, {-0.26, 0.06}, {-0.38, 0.06}};
    for (int k = 0; k < 6; ++k)
    {
        t[36 + k] = eye[k];
    }
    for (int k = 36; k <= 41; ++k)
    {
        t[mirror_index(k)] = {-t[k].x, t[k].y};
    }
    const Point2 outer[] = {{-0.35, 0.80}, {-0.22, 0.72}, {-0.09, 0.68}, {0.0, 0.70},  {0.09, 0.68}, {0.22, 0.72},
                            {0.35, 0.80},  {0.22, 0.90},  {0.10, 0.94},  {0.0, 0.95}, {-0.10, 0.94}, {-0.22, 0.90}};
    for (int k = 0; k < 12; ++k)
    {
        t[48 + k] = outer[k];
    }
    const Point2 inner[] = {{-0.30, 0.80}, {-0.10, 0.77}, {0.0, 0.775}, {0.10, 0.77},
                            {0.30, 0.80},  {0.10, 0.84},  {0.0, 0.845}, {-0.10, 0.84}};
    for (int k = 0; k < 8; ++k)
    {
        t[60 + k] = inner[k];
    }
    return t;
}

enum class Region
{
    jaw,
    brow,
    nose,
    eye,
    mouth
};

Region region_of(int i)
{
    if (i <= 16) return Region::jaw;
    if (i <= 26) return Region::brow;
    if (i <= 35) return Region::nose;
    if (i <= 47) return Region::eye;
    return Region::mouth;
}

bool is_upper_lid(int i) { return i == 37 || i == 38 || i == 43 || i == 44; }
bool is_lower_lid(int i) { return i == 40 || i == 41 || i == 46 || i == 47; }
bool is_commissure(int i) { return i == 48 || i == 54 || i == 60 || i == 64; }
bool is_near_commissure(int i) { return i == 49 || i == 59 || i == 53 || i == 55; }
bool is_lower_lip(int i) { return (i >= 55 && i <= 59) || (i >= 65 && i <= 67); }

// Displacement for landmark i of an expression, before the per-side
// mobility factor. `out` is +1 on the subject-left half, -1 on the right.
Point2 expression_offset(const std::string& expr, int i, double out)
{
    const Region r = region_of(i);
    if (expr == "eyebrow_raise")
    {
        if (r == Region::brow) return {0.0, -0.08};
        if (is_upper_lid(i)) return {0.0, -0.01};
    }
    else if (expr == "gentle_eye_closure")
    {
        if (is_upper_lid(i)) return {0.0, 0.04};
        if (is_lower_lid(i)) return {0.0, -0.01};
    }
    else if (expr == "full_eye_closure")
    {
        if (is_upper_lid(i)) return {0.0, 0.065};
        if (is_lower_lid(i)) return {0.0, -0.015};
        if (r == Region::brow) return {0.0, 0.02};
    }
    else if (expr == "nose_wrinkle")
    {
        if (i >= 31 && i <= 35) return {0.0, -0.03};
        if (i == 20 || i == 21 || i == 22 || i == 23) return {0.0, 0.025};
    }
    else if (expr == "lip_pucker")
    {
        if (is_commissure(i)) return {-0.08 * out, 0.0};
        if (is_near_commissure(i)) return {-0.04 * out, 0.0};
    }
    else if (expr == "smile_closed" || expr == "smile_open")
    {
        Point2 d;
        if (is_commissure(i)) d = {0.06 * out, -0.06};
        else if (is_near_commissure(i)) d = {0.03 * out, -0.03};
        if (expr == "smile_open" && is_lower_lip(i)) d = d + Point2{0.0, i >= 65 ? 0.06 : 0.05};
        return d;
    }
    return {};
}

} // namespace

Shape68 canonical_unit_shape()
{
    const Shape68 t = canonical_template();
    const BoundingBox box = synthesize_box(t, 0.0, 0);
    Shape68 out;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        out[i] = box.to_unit(t[i]);
    }
    return out;
}

const std::vector<std::string>& synthetic_expressions()
{
    static const std::vector<std::string> labels = {"rest",         "eyebrow_raise", "gentle_eye_closure",
                                                    "full_eye_closure", "nose_wrinkle", "lip_pucker",
                                                    "smile_closed", "smile_open"};
    return labels;
}

std::vector<SyntheticFace> synthesize_faces(const SynthConfig& config)
{
    if (config.n_subjects < 1 || config.images_per_subject < 1)
    {
        throw InvalidParams("synthetic corpus needs at least one subject and one image per subject");
    }
    if (!(config.asymmetry >= 0.0 && config.asymmetry <= 1.0))
    {
        throw InvalidParams("asymmetry must be in [0, 1]");
    }
    const Shape68 base = canonical_template();
    const auto& expressions = synthetic_expressions();
    std::vector<SyntheticFace> faces;
    faces.reserve(static_cast<std::size_t>(config.n_subjects) * config.images_per_subject);

    for (int s = 0; s < config.n_subjects; ++s)
    {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(s)));
        // Symmetric identity variation.
        const double eye_sep = 1.0 + 0.04 * rng.normal();
        const double eye_open = 1.0 + 0.12 * rng.normal();
        const double brow_dy = 0.03 * rng.normal();
        const double nose_len = 1.0 + 0.06 * rng.normal();
        const double mouth_w = 1.0 + 0.06 * rng.normal();
        const double mouth_dy = 0.04 * rng.normal();
        const double jaw_w = 1.0 + 0.05 * rng.normal();
        const double jaw_h = 1.0 + 0.04 * rng.normal();
        Shape68 identity = base;
        for (int i = 0; i < static_cast<int>(kNumLandmarks); ++i)
        {
            Point2& p = identity[i];
            switch (region_of(i))
            {
            case Region::jaw: p = {p.x * jaw_w, 0.1 + (p.y - 0.1) * jaw_h}; break;
            case Region::brow: p = {p.x * eye_sep, p.y + brow_dy}; break;
            case Region::eye: p = {p.x * eye_sep, p.y * eye_open}; break;
            case Region::nose: p = {p.x, p.y * nose_len}; break;
            case Region::mouth: p = {p.x * mouth_w, p.y + mouth_dy}; break;
            }
        }
        // Eye corners sit at y = 0, so eye_open leaves the normalizer intact.
        const int side = config.asymmetry > 0.0 ? (rng.uniform() < 0.5 ? -1 : 1) : 0;
        const double severity = config.asymmetry > 0.0 ? config.asymmetry * (0.75 + 0.25 * rng.uniform()) : 0.0;

        for (int k = 0; k < config.images_per_subject; ++k)
        {
            const std::string& expr = expressions[static_cast<std::size_t>(k) % expressions.size()];
            Shape68 face = identity;
            // Smooth per-region deformation, mirrored so both halves move alike.
            double region_dy[5];
            double region_sx[5];
            for (int r = 0; r < 5; ++r)
            {
                region_dy[r] = 0.012 * rng.normal();
                region_sx[r] = 1.0 + 0.01 * rng.normal();
            }
            for (int i = 0; i < static_cast<int>(kNumLandmarks); ++i)
            {
                const Point2 t = base[i];
                const double out = t.x > 1e-9 ? 1.0 : (t.x < -1e-9 ? -1.0 : 0.0);
                const bool affected = side != 0 && out == side;
                const double mobility = affected ? 1.0 - severity : (out == 0.0 ? 1.0 - 0.5 * severity : 1.0);
                const int r = static_cast<int>(region_of(i));
                Point2 p = face[i];
                p = {p.x * region_sx[r], p.y + region_dy[r]};
                p = p + mobility * expression_offset(expr, i, out);
                if (affected)
                {
                    // Flaccid droop of the affected half.
                    if (region_of(i) == Region::brow) p.y += 0.12 * severity;
                    if (is_lower_lid(i)) p.y += 0.05 * severity;
                    if (i == 48 || i == 54) p = p + Point2{-0.05 * out * severity, 0.15 * severity};
                    if (i == 60 || i == 64) p = p + Point2{-0.04 * out * severity, 0.13 * severity};
                    if (is_near_commissure(i) || i == 61 || i == 63 || i == 65 || i == 67) p.y += 0.07 * severity;
                    if (i == 50 || i == 52 || i == 56 || i == 58) p.y += 0.03 * severity;
                }
                p = p + Point2{0.0015 * rng.normal(), 0.0015 * rng.normal()};
                face[i] = p;
            }

            // Global pose.
            const double size = static_cast<double>(config.image_size);
            const double rot = std::clamp(rng.normal() * 1.5, -4.0, 4.0) * kPi / 180.0;
            const double iod_px = size * rng.uniform(0.27, 0.31);
            const Point2 center{0.5 * size + 0.03 * size * rng.normal(), 0.5 * size + 0.03 * size * rng.normal()};
            const SimilarityTransform pose{iod_px, rot, {}};
            const Point2 anchor = apply_transform(pose, {0.0, 0.45});
            const SimilarityTransform placed{iod_px, rot, center - anchor};
            for (auto& p : face)
            {
                p = apply_transform(placed, p);
            }
            faces.push_back({face, expr, side, severity});
        }
    }
    return faces;
}

// --- rendering -------------------------------------------------------------

namespace {

class Canvas
{
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h, 0.0) {}

    int width() const { return w_; }
    int height() const { return h_; }
    double& at(int x, int y) { return px_[static_cast<std::size_t>(y) * w_ + x]; }
    double at(int x, int y) const { return px_[static_cast<std::size_t>(y) * w_ + x]; }

    // Even-odd scanline fill. `poly` is in output-pixel coordinates; this
    // canvas is `ss`-times supersampled.
    template <typename Fn>
    void fill(const std::vector<Point2>& poly, int ss, Fn&& shade)
    {
        if (poly.size() < 3)
        {
            return;
        }
        double ymin = poly[0].y, ymax = poly[0].y;
        for (const auto& p : poly)
        {
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        const auto to_hi = [ss](double v) { return (v + 0.5) * ss - 0.5; };
        const auto to_lo = [ss](double v) { return (v + 0.5) / ss - 0.5; };
        const int y0 = std::max(0, static_cast<int>(std::floor(to_hi(ymin))));
        const int y1 = std::min(h_ - 1, static_cast<int>(std::ceil(to_hi(ymax))));
        std::vector<double> xs;
        for (int yy = y0; yy <= y1; ++yy)
        {
            const double y = to_lo(yy);
            xs.clear();
            for (std::size_t k = 0; k < poly.size(); ++k)
            {
                const Point2 a = poly[k];
                const Point2 b = poly[(k + 1) % poly.size()];
                if ((a.y <= y && y < b.y) || (b.y <= y && y < a.y))
                {
                    xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            std::sort(xs.begin(), xs.end());
            for (std::size_t k = 0; k + 1 < xs.size(); k += 2)
            {
                const int xa = std::max(0, static_cast<int>(std::ceil(to_hi(xs[k]))));
                const int xb = std::min(w_ - 1, static_cast<int>(std::ceil(to_hi(xs[k + 1]))) - 1);
                for (int xx = xa; xx <= xb; ++xx)
                {
                    shade(at(xx, yy), to_lo(xx), y);
                }
            }
        }
    }

private:
    int w_;
    int h_;
    std::vector<double> px_;
};

std::vector<Point2> pick(const Shape68& s, std::initializer_list<int> idx)
{
    std::vector<Point2> out;
    for (int i : idx)
    {
        out.push_back(s[i]);
    }
    return out;
}

std::vector<Point2> range(const Shape68& s, int first, int last)
{
    std::vector<Point2> out;
    for (int i = first; i <= last; ++i)
    {
        out.push_back(s[i]);
    }
    return out;
}

std::vector<Point2> circle(Point2 c, double r, int n = 24)
{
    std::vector<Point2> out;
    for (int k = 0; k < n; ++k)
    {
        const double t = 2.0 * kPi * k / n;
        out.push_back({c.x + r * std::cos(t), c.y + r * std::sin(t)});
    }
    return out;
}

// Quad strip of the given width along an open polyline.
std::vector<std::vector<Point2>> stroke(const std::vector<Point2>& line, double width, bool closed)
{
    std::vector<std::vector<Point2>> quads;
    const std::size_t n = line.size();
    const std::size_t segs = closed ? n : n - 1;
    for (std::size_t k = 0; k < segs; ++k)
    {
        const Point2 a = line[k];
        const Point2 b = line[(k + 1) % n];
        const Point2 d = b - a;
        const double len = norm(d);
        if (len <= 0.0)
        {
            continue;
        }
        const Point2 nrm{-d.y / len * 0.5 * width, d.x / len * 0.5 * width};
        quads.push_back({a + nrm, b + nrm, b - nrm, a - nrm});
    }
    return quads;
}

bool inside(const std::vector<Point2>& poly, Point2 p)
{
    bool in = false;
    for (std::size_t k = 0, j = poly.size() - 1; k < poly.size(); j = k++)
    {
        const Point2 a = poly[k];
        const Point2 b = poly[j];
        if (((a.y > p.y) != (b.y > p.y)) && (p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x))
        {
            in = !in;
        }
    }
    return in;
}

} // namespace

GrayImage render_face(const Shape68& s, int size, double noise_sigma, std::uint64_t seed)
{
    constexpr int ss = 2;
    Canvas canvas(size * ss, size * ss);
    const double iod = distance(s[36], s[45]);
    const Point2 u = (1.0 / iod) * (s[45] - s[36]);
    const Point2 up{u.y, -u.x};

    // Background gradient.
    for (int y = 0; y < canvas.height(); ++y)
    {
        for (int x = 0; x < canvas.width(); ++x)
        {
            canvas.at(x, y) = 70.0 + 50.0 * x / canvas.width() + 20.0 * y / canvas.height();
        }
    }

    // Face: jaw plus a forehead arc.
    std::vector<Point2> face = range(s, 0, 16);
    const Point2 c = 0.5 * (s[0] + s[16]);
    const double half = 0.5 * distance(s[0], s[16]);
    for (int k = 1; k < 16; ++k)
    {
        const double t = kPi * k / 16.0;
        face.push_back(c + (half * std::cos(t)) * u + (0.85 * iod * std::sin(t)) * up);
    }
    const Point2 face_center = 0.5 * (s[8] + s[27]);
    canvas.fill(face, ss, [&](double& v, double x, double y) {
        const double r = distance({x, y}, face_center) / (1.1 * iod);
        v = 175.0 - 35.0 * r * r;
    });

    const auto paint = [&](const std::vector<Point2>& poly, double value) {
        canvas.fill(poly, ss, [value](double& v, double, double) { v = value; });
    };
    const auto paint_stroke = [&](const std::vector<Point2>& line, double width, bool closed, double value) {
        for (const auto& q : stroke(line, width, closed))
        {
            paint(q, value);
        }
    };

    paint_stroke(range(s, 0, 16), 0.025 * iod, false, 115.0);

    // Nose.
    {
        const Point2 n = (0.05 * iod) * u;
        paint({s[27] - n, s[27] + n, s[30] + n, s[30] - n}, 150.0);
        paint(pick(s, {30, 35, 34, 33, 32, 31}), 128.0);
        paint(circle(s[32] + (-0.02 * iod) * up, 0.028 * iod), 60.0);
        paint(circle(s[34] + (-0.02 * iod) * up, 0.028 * iod), 60.0);
    }

    // Brows: landmark line is the upper border.
    for (int first : {17, 22})
    {
        std::vector<Point2> band = range(s, first, first + 4);
        for (int i = first + 4; i >= first; --i)
        {
            band.push_back(s[i] - (0.07 * iod) * up);
        }
        paint(band, 55.0);
    }

    // Eyes: sclera, iris clipped to the lid opening, lid outline.
    for (int first : {36, 42})
    {
        const auto lids = range(s, first, first + 5);
        paint(lids, 235.0);
        const Point2 center = centroid(lids);
        canvas.fill(circle(center, 0.065 * iod), ss, [&](double& v, double x, double y) {
            if (inside(lids, {x, y}))
            {
                v = 45.0;
            }
        });
        paint_stroke(lids, 0.02 * iod, true, 80.0);
    }

    // Lips and mouth opening.
    paint(range(s, 48, 59), 105.0);
    paint(range(s, 60, 67), 45.0);

    GrayImage out(size, size);
    Rng rng(seed);
    for (int y = 0; y < size; ++y)
    {
        for (int x = 0; x < size; ++x)
        {
            double acc = 0.0;
            for (int dy = 0; dy < ss; ++dy)
            {
                for (int dx = 0; dx < ss; ++dx)
                {
                    acc += canvas.at(x * ss + dx, y * ss + dy);
                }
            }
            double v = acc / (ss * ss);
            if (noise_sigma > 0.0)
            {
                v += noise_sigma * rng.normal();
            }
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
    }
    return out;
}

DatasetIndex generate_synthetic_corpus(const SynthConfig& config, const std::filesystem::path& out_dir)
{
    const auto faces = synthesize_faces(config);
    std::filesystem::create_directories(out_dir / "images");
    DatasetIndex index;
    index.root = out_dir;
    for (std::size_t k = 0; k < faces.size(); ++k)
    {
        const int subject = static_cast<int>(k) / config.images_per_subject;
        const int shot = static_cast<int>(k) % config.images_per_subject;
        char name[128];
        std::snprintf(name, sizeof name, "%s%04d_%02d.png", config.id_prefix.c_str(), subject, shot);
        char subject_id[96];
        std::snprintf(subject_id, sizeof subject_id, "%s%04d", config.id_prefix.c_str(), subject);

        const std::uint64_t image_seed = derive_seed(config.seed ^ 0x5EED0F1A6E5ULL, k);
        const GrayImage img = render_face(faces[k].landmarks, config.image_size, config.noise_sigma, image_seed);
        write_png_gray(out_dir / "images" / name, img);

        AnnotatedImage a;
        a.image_path = std::filesystem::path("images") / name;
        a.width = img.width();
        a.height = img.height();
        a.ground_truth = faces[k].landmarks;
        a.box = synthesize_box(faces[k].landmarks, config.box_jitter, derive_seed(image_seed, 1));
        a.meta.subject_id = subject_id;
        a.meta.cohort = config.asymmetry > 0.0 ? Cohort::patient : Cohort::control;
        a.meta.expression = faces[k].expression;
        index.images.push_back(std::move(a));
    }
    index.rebuild_grouping();
    save_dataset(index, out_dir / "dataset.xml");
    return index;
}

} // namespace palsylm

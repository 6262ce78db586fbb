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
#include "palsylm/dataset.hpp"

#include "palsylm/errors.hpp"
#include "palsylm/image.hpp"
#include "palsylm/random.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace palsylm {

std::string_view to_string(Cohort c)
{
    return c == Cohort::patient ? "patient" : "control";
}

Cohort parse_cohort(std::string_view s)
{
    if (s == "patient")
    {
        return Cohort::patient;
    }
    if (s == "control")
    {
        return Cohort::control;
    }
    throw ParseError("unknown cohort '" + std::string(s) + "'", 0);
}

void DatasetIndex::rebuild_grouping()
{
    grouping.clear();
    for (std::size_t i = 0; i < images.size(); ++i)
    {
        grouping[images[i].meta.subject_id].push_back(i);
    }
}

std::filesystem::path DatasetIndex::resolve(const AnnotatedImage& img) const
{
    if (img.image_path.is_absolute())
    {
        return img.image_path;
    }
    return root / img.image_path;
}

std::vector<std::string> DatasetIndex::subjects() const
{
    std::vector<std::string> out;
    out.reserve(grouping.size());
    for (const auto& [subject, _] : grouping)
    {
        out.push_back(subject);
    }
    return out;
}

DatasetIndex DatasetIndex::subset(const std::set<std::string>& keep) const
{
    DatasetIndex out;
    out.root = root;
    for (const auto& img : images)
    {
        if (keep.count(img.meta.subject_id))
        {
            out.images.push_back(img);
        }
    }
    out.rebuild_grouping();
    return out;
}

void DatasetIndex::append(const DatasetIndex& other)
{
    for (auto img : other.images)
    {
        if (!img.image_path.is_absolute())
        {
            const auto abs = std::filesystem::absolute(other.root / img.image_path).lexically_normal();
            img.image_path = root.empty() ? abs : abs.lexically_relative(std::filesystem::absolute(root));
        }
        images.push_back(std::move(img));
    }
    rebuild_grouping();
}

// --- pts ------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s)
{
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front()))
    {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back()))
    {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size())
    {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t'))
        {
            ++i;
        }
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t')
        {
            ++i;
        }
        if (i > start)
        {
            out.push_back(s.substr(start, i - start));
        }
    }
    return out;
}

bool parse_double(std::string_view tok, double& out)
{
    if (!tok.empty() && tok.front() == '+')
    {
        tok.remove_prefix(1);
    }
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

std::string format_coord(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    // Avoid "-0.000000" so that writers stay byte-stable.
    if (std::string_view(buf) == "-0.000000")
    {
        return "0.000000";
    }
    return buf;
}

} // namespace

std::vector<Point2> parse_pts(std::string_view text)
{
    // Collect non-blank lines with their 1-based numbers.
    std::vector<std::pair<std::size_t, std::string_view>> lines;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size())
    {
        const std::size_t nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        ++line_no;
        const auto line = trim(text.substr(pos, end - pos));
        if (!line.empty())
        {
            lines.emplace_back(line_no, line);
        }
        if (nl == std::string_view::npos)
        {
            break;
        }
        pos = nl + 1;
    }

    std::size_t k = 0;
    const auto header_value = [&](std::string_view key) -> std::pair<std::size_t, std::string_view> {
        if (k >= lines.size())
        {
            throw ParseError("missing '" + std::string(key) + "' header", line_no);
        }
        const auto [ln, line] = lines[k++];
        const auto colon = line.find(':');
        if (colon == std::string_view::npos || trim(line.substr(0, colon)) != key)
        {
            throw ParseError("expected '" + std::string(key) + ":' header", ln);
        }
        return {ln, trim(line.substr(colon + 1))};
    };

    const auto [version_line, version] = header_value("version");
    (void)version_line;
    (void)version;
    const auto [count_line, count_text] = header_value("n_points");
    std::size_t n_points = 0;
    {
        const auto res = std::from_chars(count_text.data(), count_text.data() + count_text.size(), n_points);
        if (res.ec != std::errc() || res.ptr != count_text.data() + count_text.size())
        {
            throw ParseError("n_points is not a non-negative integer", count_line);
        }
    }
    if (k >= lines.size() || lines[k].second != "{")
    {
        throw ParseError("expected '{'", k < lines.size() ? lines[k].first : line_no);
    }
    ++k;

    std::vector<Point2> points;
    points.reserve(n_points);
    for (;; ++k)
    {
        if (k >= lines.size())
        {
            throw ParseError("missing closing '}'", line_no);
        }
        const auto [ln, line] = lines[k];
        if (line == "}")
        {
            break;
        }
        const auto tokens = split_ws(line);
        if (tokens.size() != 2)
        {
            throw ParseError("expected two coordinates", ln);
        }
        Point2 p;
        if (!parse_double(tokens[0], p.x) || !parse_double(tokens[1], p.y))
        {
            throw ParseError("non-numeric coordinate", ln);
        }
        if (points.size() == n_points)
        {
            throw ParseError("more points than n_points = " + std::to_string(n_points), ln);
        }
        points.push_back(p);
    }
    if (points.size() != n_points)
    {
        throw ParseError("n_points = " + std::to_string(n_points) + " but " + std::to_string(points.size()) +
                             " points found",
                         lines[k].first);
    }
    if (k + 1 != lines.size())
    {
        throw ParseError("trailing content after '}'", lines[k + 1].first);
    }
    return points;
}

std::string write_pts(std::span<const Point2> points)
{
    std::string out = "version: 1\nn_points: " + std::to_string(points.size()) + "\n{\n";
    for (const auto& p : points)
    {
        out += format_coord(p.x);
        out += ' ';
        out += format_coord(p.y);
        out += '\n';
    }
    out += "}\n";
    return out;
}

Shape68 read_pts_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw IoError("cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    const auto pts = parse_pts(ss.str());
    if (pts.size() != kNumLandmarks)
    {
        throw ParseError(path.string() + ": expected 68 points, got " + std::to_string(pts.size()), 0);
    }
    return Shape68::from_points(pts);
}

// --- XML ------------------------------------------------------------------

namespace {

namespace pt = boost::property_tree;

double attr_double(const pt::ptree& node, const char* name, const std::string& where)
{
    const auto v = node.get_optional<std::string>(std::string("<xmlattr>.") + name);
    if (!v)
    {
        throw ParseError(where + ": missing attribute '" + name + "'", 0);
    }
    double out = 0.0;
    if (!parse_double(trim(*v), out))
    {
        throw ParseError(where + ": attribute '" + name + "' is not a number", 0);
    }
    return out;
}

std::string xml_escape(std::string_view s)
{
    std::string out;
    for (char c : s)
    {
        switch (c)
        {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '\'': out += "&apos;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

DatasetIndex parse_annotation_xml(std::string_view text)
{
    pt::ptree tree;
    try
    {
        std::istringstream in{std::string(text)};
        pt::read_xml(in, tree);
    }
    catch (const pt::xml_parser_error& e)
    {
        throw ParseError("malformed XML: " + e.message(), e.line());
    }

    const auto dataset = tree.get_child_optional("dataset");
    if (!dataset)
    {
        throw ParseError("missing <dataset> root element", 0);
    }
    DatasetIndex index;
    const auto images = dataset->get_child_optional("images");
    if (!images)
    {
        return index;
    }
    for (const auto& [tag, node] : *images)
    {
        if (tag != "image")
        {
            continue;
        }
        AnnotatedImage img;
        const auto file = node.get_optional<std::string>("<xmlattr>.file");
        if (!file || file->empty())
        {
            throw ParseError("<image> without 'file' attribute", 0);
        }
        img.image_path = *file;
        const std::string where = "image '" + *file + "'";
        img.meta.subject_id = node.get<std::string>("<xmlattr>.subject", "");
        if (img.meta.subject_id.empty())
        {
            // Each image is its own subject when the corpus has no grouping.
            img.meta.subject_id = *file;
        }
        img.meta.cohort = parse_cohort(node.get<std::string>("<xmlattr>.cohort", "control"));
        img.meta.expression = node.get<std::string>("<xmlattr>.expression", "");
        if (const auto age = node.get_optional<std::string>("<xmlattr>.age"))
        {
            double a = 0.0;
            if (!parse_double(*age, a))
            {
                throw ParseError(where + ": attribute 'age' is not a number", 0);
            }
            img.meta.age = a;
        }
        img.meta.sex = node.get<std::string>("<xmlattr>.sex", "");
        img.meta.race = node.get<std::string>("<xmlattr>.race", "");
        img.meta.etiology = node.get<std::string>("<xmlattr>.etiology", "");
        if (const auto w = node.get_optional<int>("<xmlattr>.width"))
        {
            img.width = *w;
        }
        if (const auto h = node.get_optional<int>("<xmlattr>.height"))
        {
            img.height = *h;
        }

        int boxes = 0;
        for (const auto& [btag, box] : node)
        {
            if (btag != "box")
            {
                continue;
            }
            if (++boxes > 1)
            {
                throw ParseError(where + ": more than one <box>", 0);
            }
            img.box.top = attr_double(box, "top", where);
            img.box.left = attr_double(box, "left", where);
            img.box.width = attr_double(box, "width", where);
            img.box.height = attr_double(box, "height", where);
            if (!img.box.valid())
            {
                throw ParseError(where + ": box width/height must be positive", 0);
            }

            std::array<Point2, kNumLandmarks> pts{};
            std::array<bool, kNumLandmarks> seen{};
            std::size_t count = 0;
            for (const auto& [ptag, part] : box)
            {
                if (ptag != "part")
                {
                    continue;
                }
                const auto name = part.get<std::string>("<xmlattr>.name", "");
                int idx = -1;
                const auto res = std::from_chars(name.data(), name.data() + name.size(), idx);
                if (name.empty() || res.ec != std::errc() || res.ptr != name.data() + name.size() || idx < 0 ||
                    idx >= static_cast<int>(kNumLandmarks))
                {
                    throw ParseError(where + ": part name '" + name + "' is not an index in 00-67", 0);
                }
                if (seen[idx])
                {
                    throw ParseError(where + ": duplicate part '" + name + "'", 0);
                }
                seen[idx] = true;
                pts[idx] = {attr_double(part, "x", where), attr_double(part, "y", where)};
                ++count;
            }
            if (count != 0 && count != kNumLandmarks)
            {
                throw ParseError(where + ": incomplete shape (" + std::to_string(count) + " of 68 parts)", 0);
            }
            if (count == kNumLandmarks)
            {
                img.ground_truth = Shape68(pts);
            }
        }
        if (boxes == 0)
        {
            throw ParseError(where + ": missing <box>", 0);
        }
        index.images.push_back(std::move(img));
    }
    index.rebuild_grouping();
    return index;
}

std::string write_annotation_xml(const DatasetIndex& index)
{
    std::string out = "<?xml version='1.0' encoding='UTF-8'?>\n<dataset>\n<images>\n";
    for (const auto& img : index.images)
    {
        out += "  <image file='" + xml_escape(img.image_path.generic_string()) + "' subject='" +
               xml_escape(img.meta.subject_id) + "' cohort='" + std::string(to_string(img.meta.cohort)) +
               "' expression='" + xml_escape(img.meta.expression) + "'";
        if (img.width > 0 && img.height > 0)
        {
            out += " width='" + std::to_string(img.width) + "' height='" + std::to_string(img.height) + "'";
        }
        if (img.meta.age)
        {
            out += " age='" + format_coord(*img.meta.age) + "'";
        }
        const std::pair<const char*, const std::string*> extras[] = {
            {"sex", &img.meta.sex}, {"race", &img.meta.race}, {"etiology", &img.meta.etiology}};
        for (const auto& [key, value] : extras)
        {
            if (!value->empty())
            {
                out += std::string(" ") + key + "='" + xml_escape(*value) + "'";
            }
        }
        out += ">\n    <box top='" + format_coord(img.box.top) + "' left='" + format_coord(img.box.left) +
               "' width='" + format_coord(img.box.width) + "' height='" + format_coord(img.box.height) + "'>\n";
        if (img.ground_truth)
        {
            for (std::size_t i = 0; i < kNumLandmarks; ++i)
            {
                char name[8];
                std::snprintf(name, sizeof name, "%02zu", i);
                out += std::string("      <part name='") + name + "' x='" + format_coord((*img.ground_truth)[i].x) +
                       "' y='" + format_coord((*img.ground_truth)[i].y) + "'/>\n";
            }
        }
        out += "    </box>\n  </image>\n";
    }
    out += "</images>\n</dataset>\n";
    return out;
}

DatasetIndex load_dataset(const std::filesystem::path& xml_path, bool probe_sizes)
{
    std::ifstream in(xml_path, std::ios::binary);
    if (!in)
    {
        throw IoError("cannot open dataset " + xml_path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    DatasetIndex index = parse_annotation_xml(ss.str());
    index.root = xml_path.parent_path();
    if (probe_sizes)
    {
        for (auto& img : index.images)
        {
            if (img.width > 0 && img.height > 0)
            {
                continue;
            }
            const auto path = index.resolve(img);
            if (std::filesystem::exists(path))
            {
                std::tie(img.width, img.height) = probe_image_size(path);
            }
        }
    }
    return index;
}

void save_dataset(const DatasetIndex& index, const std::filesystem::path& xml_path)
{
    DatasetIndex rebased;
    rebased.root = std::filesystem::absolute(xml_path).parent_path();
    rebased.append(index);
    const auto tmp = xml_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
        {
            throw IoError("cannot write " + tmp);
        }
        out << write_annotation_xml(rebased);
        if (!out)
        {
            throw IoError("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, xml_path);
}

// --- splitting, boxes, averaging ------------------------------------------

SplitAssignment split_by_subject(const DatasetIndex& index, const std::array<double, 3>& fractions,
                                 std::uint64_t seed)
{
    double sum = 0.0;
    for (double f : fractions)
    {
        if (!(f >= 0.0) || !std::isfinite(f))
        {
            throw InvalidParams("split fractions must be non-negative");
        }
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9 || !(fractions[0] > 0.0))
    {
        throw InvalidParams("split fractions must sum to 1 with a positive train fraction");
    }

    std::vector<std::string> subjects;
    for (const auto& [subject, _] : index.grouping)
    {
        subjects.push_back(subject);
    }
    const std::size_t n = subjects.size();
    const std::size_t requested =
        static_cast<std::size_t>(std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0.0; }));
    if (n < requested)
    {
        throw InsufficientSubjects("need at least " + std::to_string(requested) + " subjects, have " +
                                   std::to_string(n));
    }

    Rng rng(seed);
    rng.shuffle(subjects);

    const auto count_for = [&](double f) -> std::size_t {
        if (f <= 0.0)
        {
            return 0;
        }
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
    };
    const std::size_t n_val = count_for(fractions[1]);
    const std::size_t n_test = count_for(fractions[2]);
    if (n_val + n_test >= n)
    {
        throw InsufficientSubjects("no subjects left for training after validation/test allocation");
    }

    SplitAssignment out;
    std::size_t i = 0;
    for (; i < n - n_val - n_test; ++i)
    {
        out.train.insert(subjects[i]);
    }
    for (std::size_t k = 0; k < n_val; ++k, ++i)
    {
        out.validation.insert(subjects[i]);
    }
    for (std::size_t k = 0; k < n_test; ++k, ++i)
    {
        out.test.insert(subjects[i]);
    }
    return out;
}

BoundingBox synthesize_box(const Shape68& gt, double jitter, std::uint64_t seed)
{
    if (!(jitter >= 0.0 && jitter < 0.5))
    {
        throw InvalidParams("box jitter must be in [0, 0.5)");
    }
    double min_x = gt[0].x, max_x = gt[0].x, min_y = gt[0].y, max_y = gt[0].y;
    for (const auto& p : gt)
    {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double w = max_x - min_x;
    const double h = max_y - min_y;
    if (!(w > 0.0 && h > 0.0))
    {
        throw DegenerateShape("landmark extent has zero area");
    }
    BoundingBox box{min_x - 0.1 * w, min_y - 0.1 * h, 1.2 * w, 1.2 * h};
    if (jitter == 0.0)
    {
        return box;
    }
    Rng rng(seed);
    // Per-axis shift bounded by jitter*size/sqrt(2) keeps the center move
    // within jitter * max(width, height).
    const double dx = rng.uniform(-1.0, 1.0) * jitter * box.width / std::sqrt(2.0);
    const double dy = rng.uniform(-1.0, 1.0) * jitter * box.height / std::sqrt(2.0);
    const double s = 1.0 + rng.uniform(-1.0, 1.0) * jitter;
    const Point2 c = box.center();
    box.width *= s;
    box.height *= s;
    box.left = c.x + dx - 0.5 * box.width;
    box.top = c.y + dy - 0.5 * box.height;
    return box;
}

Shape68 average_shapes(std::span<const Shape68> shapes)
{
    if (shapes.empty())
    {
        throw EmptyDataset("cannot average zero shapes");
    }
    Shape68 out;
    for (const auto& s : shapes)
    {
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
        {
            out[i] = out[i] + s[i];
        }
    }
    const double n = static_cast<double>(shapes.size());
    for (auto& p : out)
    {
        p = {p.x / n, p.y / n};
    }
    return out;
}

Shape68 average_annotations(const std::map<std::string, Shape68>& annotations)
{
    std::vector<Shape68> shapes;
    shapes.reserve(annotations.size());
    for (const auto& [_, s] : annotations)
    {
        shapes.push_back(s);
    }
    return average_shapes(shapes);
}

} // namespace palsylm

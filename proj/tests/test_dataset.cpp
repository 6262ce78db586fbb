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
#include "test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace palsylm;

namespace {

const std::filesystem::path kData = PALSYLM_TEST_DATA;

std::string read_text(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Shape68 numbered_shape(double base)
{
    Shape68 s;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        s[i] = {base + static_cast<double>(i) * 1.5, base * 2 + static_cast<double>(i % 9) * 3.25};
    }
    return s;
}

std::string parts_xml(int count)
{
    std::string out;
    for (int i = 0; i < count; ++i)
    {
        char buf[96];
        std::snprintf(buf, sizeof buf, "<part name='%02d' x='%d' y='%d'/>", i, 10 + i, 20 + 2 * i);
        out += buf;
    }
    return out;
}

std::string one_image_xml(const std::string& parts, const std::string& box = "<box top='1' left='2' width='30' height='40'>")
{
    return "<dataset><images><image file='a.png' subject='p1' cohort='patient' expression='rest'>" + box + parts +
           "</box></image></images></dataset>";
}

DatasetIndex make_index(int subjects, int per_subject)
{
    DatasetIndex index;
    for (int s = 0; s < subjects; ++s)
    {
        for (int k = 0; k < per_subject; ++k)
        {
            AnnotatedImage img;
            char name[64];
            std::snprintf(name, sizeof name, "img/s%03d_%d.png", s, k);
            img.image_path = name;
            img.meta.subject_id = "s" + std::to_string(s);
            img.meta.expression = "e" + std::to_string(k);
            img.ground_truth = numbered_shape(s + k);
            img.box = {1, 2, 3, 4};
            index.images.push_back(img);
        }
    }
    index.rebuild_grouping();
    return index;
}

} // namespace

TEST_CASE("pts: direct read")
{
    const auto pts = parse_pts("version: 1\nn_points: 3\n{\n1.5 2.0\n3 4\n5 6\n}");
    REQUIRE(pts.size() == 3);
    CHECK(pts[0].x == 1.5);
    CHECK(pts[0].y == 2.0);
    CHECK(pts[1].x == 3.0);
    CHECK(pts[2].y == 6.0);
}

TEST_CASE("pts: count mismatch and malformed documents carry line numbers")
{
    std::string body = "version: 1\nn_points: 68\n{\n";
    for (int i = 0; i < 67; ++i)
    {
        body += "1 2\n";
    }
    body += "}\n";
    CHECK_THROWS_AS(parse_pts(body), ParseError);

    CHECK_THROWS_AS(parse_pts("n_points: 1\n{\n1 2\n}\n"), ParseError);
    CHECK_THROWS_AS(parse_pts("version: 1\n{\n1 2\n}\n"), ParseError);
    try
    {
        parse_pts("version: 1\nn_points: 2\n{\n1 2\n3 x\n}\n");
        FAIL("expected ParseError");
    }
    catch (const ParseError& e)
    {
        CHECK(e.line() == 5);
    }
    CHECK_THROWS_AS(parse_pts("version: 1\nn_points: 1\n{\n1 2\n"), ParseError);
    CHECK_THROWS_AS(parse_pts("version: 1\nn_points: 1\n{\n1 2\n}\ntrailing\n"), ParseError);
}

TEST_CASE("pts: CRLF fixture parses identically to LF fixture")
{
    const std::string lf = read_text(kData / "face_lf.pts");
    const std::string crlf = read_text(kData / "face_crlf.pts");
    REQUIRE(lf != crlf);
    REQUIRE(crlf.find("\r\n") != std::string::npos);
    const auto a = parse_pts(lf);
    const auto b = parse_pts(crlf);
    REQUIRE(a.size() == 68);
    CHECK(a == b);
    CHECK(read_pts_file(kData / "face_crlf.pts") == Shape68::from_points(a));
}

TEST_CASE("pts: write then parse round-trips at 6 decimals")
{
    Rng rng(9);
    const Shape68 s = testing::random_shape(rng, 500);
    const auto back = parse_pts(write_pts(s.points()));
    REQUIRE(back.size() == 68);
    for (std::size_t i = 0; i < 68; ++i)
    {
        CHECK(std::abs(back[i].x - s[i].x) <= 5e-7);
        CHECK(std::abs(back[i].y - s[i].y) <= 5e-7);
    }
    CHECK(write_pts(back) == write_pts(s.points()));
}

TEST_CASE("xml: minimal document with one image")
{
    const DatasetIndex idx = parse_annotation_xml(one_image_xml(parts_xml(68)));
    REQUIRE(idx.images.size() == 1);
    const auto& img = idx.images[0];
    CHECK(img.image_path == "a.png");
    CHECK(img.meta.subject_id == "p1");
    CHECK(img.meta.cohort == Cohort::patient);
    CHECK(img.meta.expression == "rest");
    CHECK(img.box == BoundingBox{2, 1, 30, 40});
    REQUIRE(img.ground_truth.has_value());
    CHECK((*img.ground_truth)[67] == Point2{77, 154});
    CHECK(idx.grouping.at("p1") == std::vector<std::size_t>{0});
}

TEST_CASE("xml: malformed documents")
{
    CHECK_THROWS_AS(parse_annotation_xml(one_image_xml(parts_xml(67))), ParseError);
    CHECK_THROWS_AS(parse_annotation_xml(one_image_xml(parts_xml(68) + "<part name='05' x='1' y='1'/>")),
                    ParseError);
    CHECK_THROWS_AS(parse_annotation_xml(one_image_xml(parts_xml(67) + "<part name='68' x='1' y='1'/>")),
                    ParseError);
    CHECK_THROWS_AS(parse_annotation_xml(one_image_xml(parts_xml(68), "<box top='1' left='2' width='30'>")),
                    ParseError);
    CHECK_THROWS_AS(parse_annotation_xml("<dataset><images><image"), ParseError);

    const DatasetIndex unlabeled = parse_annotation_xml(one_image_xml(""));
    REQUIRE(unlabeled.images.size() == 1);
    CHECK_FALSE(unlabeled.images[0].ground_truth.has_value());
}

TEST_CASE("xml: round-trip of a generated index is structurally equal")
{
    DatasetIndex idx = make_index(4, 3);
    idx.images[1].meta.cohort = Cohort::patient;
    idx.images[1].meta.age = 42.5;
    idx.images[1].meta.sex = "F";
    idx.images[1].meta.race = "White";
    idx.images[1].meta.etiology = "Bell's palsy & <other>";
    idx.images[2].width = 640;
    idx.images[2].height = 480;
    idx.images[3].ground_truth.reset();
    const DatasetIndex back = parse_annotation_xml(write_annotation_xml(idx));
    CHECK(back.images == idx.images);
    CHECK(back.grouping == idx.grouping);
}

TEST_CASE("xml: save and load keep image paths resolvable")
{
    testing::TempDir dir("dataset_xml");
    DatasetIndex idx = make_index(2, 1);
    idx.root = dir.path();
    std::filesystem::create_directories(dir / "nested");
    save_dataset(idx, dir / "nested" / "copy.xml");
    const DatasetIndex back = load_dataset(dir / "nested" / "copy.xml", false);
    REQUIRE(back.images.size() == 2);
    CHECK(back.images[0].image_path == "../img/s000_0.png");
    CHECK(std::filesystem::weakly_canonical(back.resolve(back.images[0])) ==
          std::filesystem::weakly_canonical(dir / "img" / "s000_0.png"));
}

TEST_CASE("split: 90/5/5 proportions on 200 subjects x 8 images")
{
    const DatasetIndex idx = make_index(200, 8);
    const SplitAssignment s = split_by_subject(idx, {0.90, 0.05, 0.05}, 17);
    CHECK(s.train.size() == 180);
    CHECK(s.validation.size() == 10);
    CHECK(s.test.size() == 10);
    CHECK(idx.subset(s.train).images.size() == 1440);
    CHECK(idx.subset(s.validation).images.size() == 80);
    CHECK(idx.subset(s.test).images.size() == 80);
    for (const auto& sub : s.validation)
    {
        CHECK(s.train.count(sub) == 0);
        CHECK(s.test.count(sub) == 0);
    }
    for (const auto& sub : s.test)
    {
        CHECK(s.train.count(sub) == 0);
    }
}

TEST_CASE("split: degenerate fractions and determinism")
{
    const DatasetIndex idx = make_index(20, 2);
    const SplitAssignment all = split_by_subject(idx, {1.0, 0.0, 0.0}, 1);
    CHECK(all.train.size() == 20);
    CHECK(all.validation.empty());
    CHECK(all.test.empty());

    const auto a = split_by_subject(idx, {0.6, 0.2, 0.2}, 5);
    const auto b = split_by_subject(idx, {0.6, 0.2, 0.2}, 5);
    const auto c = split_by_subject(idx, {0.6, 0.2, 0.2}, 6);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);
    CHECK((a.train != c.train || a.validation != c.validation));
    CHECK(c.train.size() + c.validation.size() + c.test.size() == 20);

    CHECK_THROWS_AS(split_by_subject(make_index(2, 1), {0.5, 0.25, 0.25}, 1), InsufficientSubjects);
    CHECK_THROWS_AS(split_by_subject(idx, {0.5, 0.2, 0.2}, 1), InvalidParams);
}

TEST_CASE("synthesize_box: margin arithmetic, determinism, jitter bounds")
{
    Shape68 s;
    for (std::size_t i = 0; i < 68; ++i)
    {
        s[i] = {10.0 + 100.0 * static_cast<double>(i % 2), 20.0 + 200.0 * static_cast<double>((i / 2) % 2)};
    }
    const BoundingBox b = synthesize_box(s, 0.0, 3);
    CHECK(b.left == doctest::Approx(0.0));
    CHECK(b.top == doctest::Approx(0.0));
    CHECK(b.width == doctest::Approx(120.0));
    CHECK(b.height == doctest::Approx(240.0));
    CHECK(synthesize_box(s, 0.0, 3) == b);
    CHECK(synthesize_box(s, 0.0, 99) == b);

    for (std::uint64_t seed = 0; seed < 200; ++seed)
    {
        const BoundingBox j = synthesize_box(s, 0.1, seed);
        CHECK(j == synthesize_box(s, 0.1, seed));
        CHECK(std::abs(j.width / 120.0 - 1.0) <= 0.1 + 1e-12);
        CHECK(std::abs(j.center().x - 60.0) <= 0.1 * 120.0 + 1e-9);
        CHECK(std::abs(j.center().y - 120.0) <= 0.1 * 240.0 + 1e-9);
    }

    Shape68 flat;
    for (auto& p : flat)
    {
        p = {5, 5};
    }
    CHECK_THROWS_AS(synthesize_box(flat, 0.0, 1), DegenerateShape);
    CHECK_THROWS_AS(synthesize_box(s, 0.5, 1), InvalidParams);
}

TEST_CASE("averaging annotators")
{
    const Shape68 a = numbered_shape(1), b = numbered_shape(4), c = numbered_shape(10);
    const Shape68 avg = average_annotations({{"x", a}, {"y", b}, {"z", c}});
    for (std::size_t i = 0; i < 68; ++i)
    {
        CHECK(avg[i].x == (a[i].x + b[i].x + c[i].x) / 3.0);
        CHECK(avg[i].y == (a[i].y + b[i].y + c[i].y) / 3.0);
    }
    CHECK(average_annotations({{"solo", b}}) == b);
}

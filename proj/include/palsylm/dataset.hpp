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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace palsylm {

enum class Cohort
{
    patient,
    control
};

std::string_view to_string(Cohort c);
/// Throws ParseError on anything other than "patient" / "control".
Cohort parse_cohort(std::string_view s);

struct SubjectMeta
{
    std::string subject_id;
    Cohort cohort = Cohort::control;
    std::string expression;
    // Optional demographics; empty / nullopt when unknown.
    std::optional<double> age;
    std::string sex;
    std::string race;
    std::string etiology;

    friend bool operator==(const SubjectMeta&, const SubjectMeta&) = default;
};

struct AnnotatedImage
{
    std::filesystem::path image_path; // relative to DatasetIndex::root unless absolute
    int width = 0;                    // 0 when not probed
    int height = 0;
    BoundingBox box;
    std::map<std::string, Shape68> annotations; // annotator id -> marking
    std::optional<Shape68> ground_truth;
    SubjectMeta meta;

    /// Stable identifier: the image path as written in the dataset file.
    std::string id() const { return image_path.generic_string(); }

    friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

struct DatasetIndex
{
    std::filesystem::path root; // directory image paths are relative to
    std::vector<AnnotatedImage> images;
    std::map<std::string, std::vector<std::size_t>> grouping; // subject -> image indices

    void rebuild_grouping();
    std::filesystem::path resolve(const AnnotatedImage& img) const;
    std::vector<std::string> subjects() const;
    /// Copy holding only the images whose subject is in `subjects`, in order.
    DatasetIndex subset(const std::set<std::string>& subjects) const;
    /// Appends another index; its image paths are re-expressed against this root.
    void append(const DatasetIndex& other);
};

struct SplitAssignment
{
    std::set<std::string> train;
    std::set<std::string> validation;
    std::set<std::string> test;
};

// --- pts ------------------------------------------------------------------

/// Parses the ibug "pts" layout. Throws ParseError (with line) on a missing
/// header, count mismatch, or non-numeric token.
std::vector<Point2> parse_pts(std::string_view text);
std::string write_pts(std::span<const Point2> points);
Shape68 read_pts_file(const std::filesystem::path& path);

// --- dataset XML ----------------------------------------------------------

/// Parses a dataset XML document. Image sizes are not probed.
DatasetIndex parse_annotation_xml(std::string_view text);
/// Serializes images, boxes, ground truths (6 decimals) and metadata.
std::string write_annotation_xml(const DatasetIndex& index);

/// Reads an XML file, sets root to its directory and probes image sizes
/// when `probe_sizes` is set and the files exist.
DatasetIndex load_dataset(const std::filesystem::path& xml_path, bool probe_sizes = true);
/// Writes `index` as XML at `xml_path`, re-expressing image paths relative
/// to the new file's directory.
void save_dataset(const DatasetIndex& index, const std::filesystem::path& xml_path);

// --- splitting, boxes, averaging ------------------------------------------

/// Deterministic subject-disjoint split. Counts per split are
/// round(fraction * n_subjects); any remainder goes to train.
SplitAssignment split_by_subject(const DatasetIndex& index, const std::array<double, 3>& fractions,
                                 std::uint64_t seed);

/// Landmark bounding box with a 10% margin per side, optionally jittered.
BoundingBox synthesize_box(const Shape68& gt, double jitter, std::uint64_t seed);

/// Coordinate-wise mean, accumulated in the given order.
Shape68 average_shapes(std::span<const Shape68> shapes);
Shape68 average_annotations(const std::map<std::string, Shape68>& annotations);

} // namespace palsylm

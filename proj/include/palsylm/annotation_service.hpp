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

#include "palsylm/dataset.hpp"
#include "palsylm/regressor.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace palsylm {

struct AnnotationRecord
{
    std::string image_id;
    std::string annotator_id;
    Shape68 shape;
    std::string saved_at; // ISO-8601 UTC
};

enum class Provenance
{
    saved,
    predicted,
    default_shape,
};

std::string_view to_string(Provenance p);

struct InitialLandmarks
{
    Shape68 shape;
    Provenance provenance = Provenance::default_shape;
};

struct ImageStatus
{
    std::string id;
    const AnnotatedImage* image = nullptr;
    std::vector<std::string> annotators; // who has a saved record
    bool has_ground_truth = false;
};

/// Per-(image, annotator) landmark records persisted under a storage
/// directory as one pts file each plus a JSON manifest; every write goes
/// through a temporary file and an atomic rename before it is acknowledged.
/// Ground truth per image is the coordinate-wise mean of its current records.
class AnnotationStore
{
public:
    /// Loads any records already present in `storage_dir`.
    AnnotationStore(DatasetIndex dataset, std::filesystem::path storage_dir,
                    std::optional<ShapePredictorModel> model = std::nullopt);

    std::vector<ImageStatus> list() const;
    const AnnotatedImage& image(const std::string& image_id) const; // NotFound
    std::filesystem::path image_file(const std::string& image_id) const;

    /// Saved record of this annotator, else model prediction, else the
    /// default mean shape fitted to the image's box.
    InitialLandmarks get_initial_landmarks(const std::string& image_id, const std::string& annotator_id) const;

    /// Validates (68 finite points inside the image plus a 10% margin),
    /// rounds to the stored 6-decimal precision, persists, then updates the
    /// image's ground truth. Throws ValidationError / NotFound.
    AnnotationRecord save_annotation(const std::string& image_id, const std::string& annotator_id,
                                     std::span<const Point2> points);

    std::optional<Shape68> ground_truth(const std::string& image_id) const;
    std::map<std::string, AnnotationRecord> records(const std::string& image_id) const;

    /// Writes a dataset XML with every image that has ground truth.
    /// Throws EmptyDataset when there is none.
    DatasetIndex export_ground_truth(const std::filesystem::path& xml_path) const;

    const std::filesystem::path& storage_dir() const { return storage_dir_; }

private:
    std::size_t index_of(const std::string& image_id) const;
    void write_manifest_locked() const;
    void load_from_disk();
    std::filesystem::path record_path(std::size_t image_index, const std::string& annotator) const;

    DatasetIndex dataset_;
    std::filesystem::path storage_dir_;
    std::optional<ShapePredictorModel> model_;
    Shape68 default_unit_shape_;
    std::map<std::string, std::size_t> by_id_;

    mutable std::shared_mutex mutex_;
    std::vector<std::map<std::string, AnnotationRecord>> records_; // per image
    std::vector<std::optional<Shape68>> ground_truth_;             // per image
};

/// HTTP front end over an AnnotationStore (JSON bodies, UTF-8).
class AnnotationServer
{
public:
    explicit AnnotationServer(AnnotationStore& store, std::optional<std::filesystem::path> static_dir = std::nullopt,
                              std::filesystem::path export_path = {});
    ~AnnotationServer();

    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    void install_routes();

    AnnotationStore& store_;
    std::optional<std::filesystem::path> static_dir_;
    std::filesystem::path export_path_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace palsylm

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
#include "palsylm/annotation_service.hpp"

#include "palsylm/errors.hpp"
#include "palsylm/image.hpp"
#include "palsylm/synth.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fcntl.h>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <unistd.h>

namespace palsylm {

using json = nlohmann::json;

std::string_view to_string(Provenance p)
{
    switch (p)
    {
    case Provenance::saved: return "saved";
    case Provenance::predicted: return "predicted";
    case Provenance::default_shape: return "default";
    }
    return "default";
}

namespace {

std::string utc_now()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

// Writes via a synced temporary file and an atomic rename.
void durable_write(const std::filesystem::path& path, const std::string& content)
{
    const std::string tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
    {
        throw IoError("cannot write " + tmp);
    }
    std::size_t done = 0;
    while (done < content.size())
    {
        const ssize_t n = ::write(fd, content.data() + done, content.size() - done);
        if (n <= 0)
        {
            ::close(fd);
            throw IoError("write failed: " + tmp);
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0)
    {
        ::close(fd);
        throw IoError("fsync failed: " + tmp);
    }
    ::close(fd);
    std::filesystem::rename(tmp, path);
    const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY);
    if (dfd >= 0)
    {
        ::fsync(dfd);
        ::close(dfd);
    }
}

bool valid_annotator(const std::string& id)
{
    if (id.empty() || id.size() > 64)
    {
        return false;
    }
    for (char c : id)
    {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok)
        {
            return false;
        }
    }
    return id != "." && id != "..";
}

Shape68 fit_unit_shape(const Shape68& unit, const BoundingBox& box)
{
    Shape68 out;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        out[i] = box.from_unit(unit[i]);
    }
    return out;
}

} // namespace

AnnotationStore::AnnotationStore(DatasetIndex dataset, std::filesystem::path storage_dir,
                                 std::optional<ShapePredictorModel> model)
    : dataset_(std::move(dataset)), storage_dir_(std::move(storage_dir)), model_(std::move(model)),
      default_unit_shape_(canonical_unit_shape())
{
    for (std::size_t i = 0; i < dataset_.images.size(); ++i)
    {
        auto& img = dataset_.images[i];
        if (!by_id_.emplace(img.id(), i).second)
        {
            throw ValidationError("duplicate image id in dataset: " + img.id());
        }
        if (img.width <= 0 || img.height <= 0)
        {
            const auto path = dataset_.resolve(img);
            if (std::filesystem::exists(path))
            {
                std::tie(img.width, img.height) = probe_image_size(path);
            }
        }
    }
    records_.resize(dataset_.images.size());
    ground_truth_.resize(dataset_.images.size());
    std::filesystem::create_directories(storage_dir_ / "records");
    load_from_disk();
}

std::size_t AnnotationStore::index_of(const std::string& image_id) const
{
    const auto it = by_id_.find(image_id);
    if (it == by_id_.end())
    {
        throw NotFound("unknown image id: " + image_id);
    }
    return it->second;
}

const AnnotatedImage& AnnotationStore::image(const std::string& image_id) const
{
    return dataset_.images[index_of(image_id)];
}

std::filesystem::path AnnotationStore::image_file(const std::string& image_id) const
{
    return dataset_.resolve(image(image_id));
}

std::filesystem::path AnnotationStore::record_path(std::size_t image_index, const std::string& annotator) const
{
    char dir[32];
    std::snprintf(dir, sizeof dir, "img%06zu", image_index);
    return storage_dir_ / "records" / dir / (annotator + ".pts");
}

std::vector<ImageStatus> AnnotationStore::list() const
{
    std::shared_lock lock(mutex_);
    std::vector<ImageStatus> out;
    for (std::size_t i = 0; i < dataset_.images.size(); ++i)
    {
        ImageStatus st;
        st.id = dataset_.images[i].id();
        st.image = &dataset_.images[i];
        for (const auto& [annotator, _] : records_[i])
        {
            st.annotators.push_back(annotator);
        }
        st.has_ground_truth = ground_truth_[i].has_value();
        out.push_back(std::move(st));
    }
    return out;
}

InitialLandmarks AnnotationStore::get_initial_landmarks(const std::string& image_id,
                                                        const std::string& annotator_id) const
{
    const std::size_t i = index_of(image_id);
    {
        std::shared_lock lock(mutex_);
        const auto it = records_[i].find(annotator_id);
        if (it != records_[i].end())
        {
            return {it->second.shape, Provenance::saved};
        }
    }
    const AnnotatedImage& img = dataset_.images[i];
    if (model_)
    {
        const GrayImage pixels = load_image_grayscale(dataset_.resolve(img));
        return {predict(*model_, pixels, img.box), Provenance::predicted};
    }
    return {fit_unit_shape(default_unit_shape_, img.box), Provenance::default_shape};
}

AnnotationRecord AnnotationStore::save_annotation(const std::string& image_id, const std::string& annotator_id,
                                                  std::span<const Point2> points)
{
    const std::size_t i = index_of(image_id);
    if (!valid_annotator(annotator_id))
    {
        throw ValidationError("annotator id must be 1-64 characters of [A-Za-z0-9_.-]");
    }
    Shape68 shape = Shape68::from_points(points);
    const AnnotatedImage& img = dataset_.images[i];
    if (img.width > 0 && img.height > 0)
    {
        const double mx = 0.1 * img.width;
        const double my = 0.1 * img.height;
        std::vector<int> bad;
        for (int k = 0; k < static_cast<int>(kNumLandmarks); ++k)
        {
            const Point2 p = shape[k];
            if (p.x < -mx || p.x > img.width + mx || p.y < -my || p.y > img.height + my)
            {
                bad.push_back(k);
            }
        }
        if (!bad.empty())
        {
            throw ValidationError("landmarks outside the image plus 10% margin", std::move(bad));
        }
    }
    // Keep exactly what is persisted, so a restart reproduces the same state.
    const std::string pts = write_pts(shape.points());
    shape = Shape68::from_points(parse_pts(pts));

    AnnotationRecord rec{image_id, annotator_id, shape, utc_now()};
    std::unique_lock lock(mutex_);
    const auto path = record_path(i, annotator_id);
    std::filesystem::create_directories(path.parent_path());
    durable_write(path, pts);
    auto previous = records_[i];
    records_[i][annotator_id] = rec;
    try
    {
        write_manifest_locked();
    }
    catch (...)
    {
        records_[i] = std::move(previous);
        throw;
    }
    std::map<std::string, Shape68> shapes;
    for (const auto& [a, r] : records_[i])
    {
        shapes.emplace(a, r.shape);
    }
    ground_truth_[i] = average_annotations(shapes);
    return rec;
}

std::optional<Shape68> AnnotationStore::ground_truth(const std::string& image_id) const
{
    const std::size_t i = index_of(image_id);
    std::shared_lock lock(mutex_);
    return ground_truth_[i];
}

std::map<std::string, AnnotationRecord> AnnotationStore::records(const std::string& image_id) const
{
    const std::size_t i = index_of(image_id);
    std::shared_lock lock(mutex_);
    return records_[i];
}

void AnnotationStore::write_manifest_locked() const
{
    json manifest;
    manifest["format"] = "palsylm-annotations";
    manifest["version"] = 1;
    json list = json::array();
    for (std::size_t i = 0; i < records_.size(); ++i)
    {
        for (const auto& [annotator, rec] : records_[i])
        {
            list.push_back({{"image", rec.image_id},
                            {"annotator", annotator},
                            {"file", record_path(i, annotator).lexically_relative(storage_dir_).generic_string()},
                            {"saved_at", rec.saved_at}});
        }
    }
    manifest["records"] = std::move(list);
    durable_write(storage_dir_ / "manifest.json", manifest.dump(2) + "\n");
}

void AnnotationStore::load_from_disk()
{
    const auto manifest_path = storage_dir_ / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
    {
        return;
    }
    std::ifstream in(manifest_path);
    json manifest;
    try
    {
        manifest = json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw ParseError("corrupt annotation manifest: " + std::string(e.what()), 0);
    }
    for (const auto& entry : manifest.at("records"))
    {
        const std::string image_id = entry.at("image").get<std::string>();
        const std::string annotator = entry.at("annotator").get<std::string>();
        const std::size_t i = index_of(image_id);
        const Shape68 shape = read_pts_file(storage_dir_ / entry.at("file").get<std::string>());
        records_[i][annotator] = {image_id, annotator, shape, entry.value("saved_at", "")};
    }
    for (std::size_t i = 0; i < records_.size(); ++i)
    {
        if (!records_[i].empty())
        {
            std::map<std::string, Shape68> shapes;
            for (const auto& [a, r] : records_[i])
            {
                shapes.emplace(a, r.shape);
            }
            ground_truth_[i] = average_annotations(shapes);
        }
    }
}

DatasetIndex AnnotationStore::export_ground_truth(const std::filesystem::path& xml_path) const
{
    DatasetIndex out;
    out.root = dataset_.root;
    {
        std::shared_lock lock(mutex_);
        for (std::size_t i = 0; i < dataset_.images.size(); ++i)
        {
            if (!ground_truth_[i])
            {
                continue;
            }
            AnnotatedImage img = dataset_.images[i];
            img.ground_truth = ground_truth_[i];
            img.annotations.clear();
            for (const auto& [a, r] : records_[i])
            {
                img.annotations.emplace(a, r.shape);
            }
            if (!img.box.valid())
            {
                img.box = synthesize_box(*img.ground_truth, 0.0, 0);
            }
            out.images.push_back(std::move(img));
        }
    }
    if (out.images.empty())
    {
        throw EmptyDataset("no image has ground truth yet");
    }
    out.rebuild_grouping();
    save_dataset(out, xml_path);
    return out;
}

// --- HTTP ------------------------------------------------------------------

namespace {

json shape_json(const Shape68& s)
{
    json arr = json::array();
    for (const auto& p : s)
    {
        arr.push_back({{"x", p.x}, {"y", p.y}});
    }
    return arr;
}

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::vector<int>& indices = {})
{
    json body{{"error", message}};
    if (!indices.empty())
    {
        body["indices"] = indices;
    }
    send_json(res, status, body);
}

std::vector<Point2> parse_landmarks_body(const std::string& body)
{
    json doc;
    try
    {
        doc = json::parse(body);
    }
    catch (const json::exception&)
    {
        throw ValidationError("request body is not valid JSON");
    }
    const json* arr = &doc;
    if (doc.is_object())
    {
        if (!doc.contains("landmarks"))
        {
            throw ValidationError("missing 'landmarks' array");
        }
        arr = &doc["landmarks"];
    }
    if (!arr->is_array())
    {
        throw ValidationError("'landmarks' must be an array of {x, y}");
    }
    std::vector<Point2> pts;
    std::vector<int> bad;
    for (std::size_t k = 0; k < arr->size(); ++k)
    {
        const json& p = (*arr)[k];
        if (!p.is_object() || !p.contains("x") || !p.contains("y") || !p["x"].is_number() || !p["y"].is_number())
        {
            bad.push_back(static_cast<int>(k));
            pts.push_back({});
            continue;
        }
        pts.push_back({p["x"].get<double>(), p["y"].get<double>()});
    }
    if (!bad.empty())
    {
        throw ValidationError("malformed landmark entries", std::move(bad));
    }
    return pts;
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn)
{
    try
    {
        fn();
    }
    catch (const NotFound& e)
    {
        send_error(res, 404, e.what());
    }
    catch (const ValidationError& e)
    {
        send_error(res, 400, e.what(), e.indices());
    }
    catch (const EmptyDataset& e)
    {
        send_error(res, 400, e.what());
    }
    catch (const std::exception& e)
    {
        send_error(res, 500, e.what());
    }
}

std::string content_type_for(const std::filesystem::path& p)
{
    auto ext = p.extension().string();
    for (auto& c : ext)
    {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return ext == ".png" ? "image/png" : "image/jpeg";
}

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset='utf-8'><title>palsylm annotation</title></head>"
    "<body><h1>palsylm annotation service</h1><p>The landmark editor is not installed. "
    "Start the server with <code>--static DIR</code> to serve it. API: <code>/api/images</code>.</p></body></html>";

} // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, std::optional<std::filesystem::path> static_dir,
                                   std::filesystem::path export_path)
    : store_(store), static_dir_(std::move(static_dir)), export_path_(std::move(export_path)),
      server_(std::make_unique<httplib::Server>())
{
    if (export_path_.empty())
    {
        export_path_ = store_.storage_dir() / "ground_truth.xml";
    }
    install_routes();
}

AnnotationServer::~AnnotationServer()
{
    stop();
}

void AnnotationServer::install_routes()
{
    auto& srv = *server_;

    srv.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json list = json::array();
            for (const auto& st : store_.list())
            {
                json status = json::object();
                for (const auto& a : st.annotators)
                {
                    status[a] = "saved";
                }
                list.push_back({{"id", st.id},
                                {"subject", st.image->meta.subject_id},
                                {"cohort", std::string(to_string(st.image->meta.cohort))},
                                {"expression", st.image->meta.expression},
                                {"width", st.image->width},
                                {"height", st.image->height},
                                {"annotators", status},
                                {"has_ground_truth", st.has_ground_truth}});
            }
            send_json(res, 200, {{"images", list}});
        });
    });

    srv.Get(R"(/api/images/(.+)/file)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto path = store_.image_file(req.matches[1]);
            std::ifstream in(path, std::ios::binary);
            if (!in)
            {
                throw NotFound("image file missing on disk: " + path.string());
            }
            std::stringstream ss;
            ss << in.rdbuf();
            res.status = 200;
            res.set_content(ss.str(), content_type_for(path));
        });
    });

    srv.Get(R"(/api/images/(.+)/landmarks)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const std::string annotator = req.get_param_value("annotator");
            const InitialLandmarks init = store_.get_initial_landmarks(id, annotator);
            send_json(res, 200,
                      {{"image", id},
                       {"annotator", annotator},
                       {"provenance", std::string(to_string(init.provenance))},
                       {"landmarks", shape_json(init.shape)}});
        });
    });

    srv.Put(R"(/api/images/(.+)/landmarks)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            store_.image(id);
            const std::string annotator = req.get_param_value("annotator");
            const auto pts = parse_landmarks_body(req.body);
            const AnnotationRecord rec = store_.save_annotation(id, annotator, pts);
            const auto gt = store_.ground_truth(id);
            send_json(res, 200,
                      {{"image", id},
                       {"annotator", annotator},
                       {"saved_at", rec.saved_at},
                       {"landmarks", shape_json(rec.shape)},
                       {"ground_truth", shape_json(*gt)}});
        });
    });

    srv.Get(R"(/api/ground-truth/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const auto gt = store_.ground_truth(id);
            if (!gt)
            {
                throw NotFound("image " + id + " has no annotations yet");
            }
            json annotators = json::array();
            for (const auto& [a, _] : store_.records(id))
            {
                annotators.push_back(a);
            }
            send_json(res, 200, {{"image", id}, {"annotators", annotators}, {"landmarks", shape_json(*gt)}});
        });
    });

    srv.Post("/api/export", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            const DatasetIndex exported = store_.export_ground_truth(export_path_);
            send_json(res, 200, {{"path", export_path_.string()}, {"images", exported.images.size()}});
        });
    });

    if (static_dir_)
    {
        srv.set_mount_point("/", static_dir_->string());
    }
    else
    {
        srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
        });
    }
}

int AnnotationServer::bind(const std::string& host, int port)
{
    if (port == 0)
    {
        return server_->bind_to_any_port(host);
    }
    return server_->bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::listen_after_bind()
{
    return server_->listen_after_bind();
}

void AnnotationServer::stop()
{
    if (server_)
    {
        server_->stop();
    }
}

void AnnotationServer::wait_until_ready() const
{
    server_->wait_until_ready();
}

} // namespace palsylm

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
#include "palsylm/cli.hpp"

#include "palsylm/annotation_service.hpp"
#include "palsylm/dataset.hpp"
#include "palsylm/errors.hpp"
#include "palsylm/evaluation.hpp"
#include "palsylm/metrics.hpp"
#include "palsylm/regressor.hpp"
#include "palsylm/synth.hpp"
#include "palsylm/tuning.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#ifndef PALSYLM_VERSION
#define PALSYLM_VERSION "0.0.0"
#endif

namespace palsylm::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

void require_writable(const fs::path& path, bool force)
{
    if (!path.empty() && fs::exists(path) && !force)
    {
        throw UsageError("refusing to overwrite " + path.string() + " (pass --force)");
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
    {
        fs::create_directories(path.parent_path());
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
        {
            throw IoError("cannot write " + tmp);
        }
        out << text;
        if (!out)
        {
            throw IoError("write failed: " + tmp);
        }
    }
    fs::rename(tmp, path);
}

std::vector<double> parse_number_list(const std::string& text, std::size_t expected, const char* flag)
{
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        try
        {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size())
            {
                throw std::invalid_argument(item);
            }
        }
        catch (const std::logic_error&)
        {
            throw UsageError(std::string(flag) + ": not a number: '" + item + "'");
        }
    }
    if (values.size() != expected)
    {
        throw UsageError(std::string(flag) + " expects " + std::to_string(expected) + " comma-separated numbers");
    }
    return values;
}

Normalizer parse_normalizer(const std::string& s)
{
    if (s == "outer")
    {
        return Normalizer::outer_eye_corners;
    }
    if (s == "inner")
    {
        return Normalizer::inner_eye_corners;
    }
    if (s == "pupil")
    {
        return Normalizer::pupil_centroids;
    }
    throw UsageError("--normalizer must be outer, inner or pupil");
}

std::vector<Cohort> cohorts_of(const DatasetIndex& index)
{
    std::vector<Cohort> out;
    out.reserve(index.images.size());
    for (const auto& img : index.images)
    {
        out.push_back(img.meta.cohort);
    }
    return out;
}

std::string model_id_for(const std::string& explicit_id, const fs::path& model_path)
{
    return explicit_id.empty() ? model_path.stem().string() : explicit_id;
}

void add_train_flags(CLI::App* cmd, TrainParams& p)
{
    cmd->add_option("--cascades", p.cascade_depth, "Cascade stages (T)")->capture_default_str();
    cmd->add_option("--trees", p.trees_per_cascade, "Trees per cascade (K)")->capture_default_str();
    cmd->add_option("--depth", p.tree_depth, "Tree depth (D)")->capture_default_str();
    cmd->add_option("--min-leaf", p.min_samples_per_leaf, "Minimum samples per leaf (m)")->capture_default_str();
    cmd->add_option("--pool", p.feature_pool_size, "Feature pool size (P)")->capture_default_str();
    cmd->add_option("--oversampling", p.oversampling, "Initial shapes per image (R)")->capture_default_str();
    cmd->add_option("--nu", p.shrinkage, "Shrinkage")->capture_default_str();
    cmd->add_option("--lambda", p.lambda, "Feature-pair distance prior")->capture_default_str();
    cmd->add_option("--splits", p.num_test_splits, "Candidate splits per node (S)")->capture_default_str();
    cmd->add_option("--padding", p.padding, "Feature pool margin")->capture_default_str();
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int)
{
    g_interrupted.store(true);
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Facial landmark localization for facial palsy photographs", "palsylm"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    unsigned threads = 0;
    bool force = false;
    std::uint64_t seed = 0;
    bool show_version = false;
    app.add_flag("--version", show_version, "Print tool and model-format versions");
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");
    app.add_flag("--force", force, "Overwrite existing outputs");

    // synth
    SynthConfig synth_cfg;
    fs::path synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--subjects", synth_cfg.n_subjects, "Number of subjects")->capture_default_str();
    synth->add_option("--images-per-subject", synth_cfg.images_per_subject, "Images per subject")
        ->capture_default_str();
    synth->add_option("--asymmetry", synth_cfg.asymmetry, "Unilateral droop magnitude in [0, 1]")
        ->capture_default_str();
    synth->add_option("--size", synth_cfg.image_size, "Image side length in pixels")->capture_default_str();
    synth->add_option("--box-jitter", synth_cfg.box_jitter, "Face box jitter fraction")->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise_sigma, "Pixel noise sigma")->capture_default_str();
    synth->add_option("--prefix", synth_cfg.id_prefix, "Subject id prefix")->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "Random seed")->capture_default_str();

    // split
    fs::path split_xml, split_out;
    std::string split_fractions = "0.9,0.05,0.05";
    auto* split = app.add_subcommand("split", "Subject-disjoint train/validation/test split");
    split->add_option("--xml", split_xml, "Dataset XML")->required();
    split->add_option("--fractions", split_fractions, "train,validation,test")->capture_default_str();
    split->add_option("--seed", seed, "Random seed")->capture_default_str();
    split->add_option("--out-dir", split_out, "Directory for train.xml, validation.xml, test.xml, split.txt");

    // train
    TrainParams train_params;
    fs::path train_xml, train_model;
    auto* train_cmd = app.add_subcommand("train", "Train a cascade of regression-tree ensembles");
    train_cmd->add_option("--xml", train_xml, "Training dataset XML")->required();
    train_cmd->add_option("--model", train_model, "Output model file")->required();
    train_cmd->add_option("--seed", train_params.seed, "Random seed")->capture_default_str();
    add_train_flags(train_cmd, train_params);

    // tune
    fs::path tune_train, tune_val, tune_grid, tune_report, tune_model;
    std::uint64_t tune_seed = 0;
    bool tune_crn = false;
    auto* tune = app.add_subcommand("tune", "Grid search over K, D, m and P on a validation split");
    tune->add_option("--train", tune_train, "Training dataset XML")->required();
    tune->add_option("--val", tune_val, "Validation dataset XML")->required();
    tune->add_option("--grid", tune_grid, "Grid file (key=v1,v2,... lines); default is the 400-point grid");
    tune->add_option("--seed", tune_seed, "Grid seed")->capture_default_str();
    tune->add_flag("--common-seed", tune_crn, "Train every permutation with the same seed");
    tune->add_option("--report", tune_report, "Report CSV")->required();
    tune->add_option("--model", tune_model, "Also train and save the winning configuration");

    // eval
    fs::path eval_model, eval_xml, eval_csv;
    std::string eval_id, eval_norm = "outer";
    auto* eval = app.add_subcommand("eval", "Per-image NRMSE of one model on a test set");
    eval->add_option("--model", eval_model, "Model file")->required();
    eval->add_option("--xml", eval_xml, "Test dataset XML")->required();
    eval->add_option("--model-id", eval_id, "Label for the model column");
    eval->add_option("--csv", eval_csv, "Write per-image errors here instead of stdout");
    eval->add_option("--normalizer", eval_norm, "outer, inner or pupil")->capture_default_str();

    // compare
    fs::path cmp_a, cmp_b, cmp_xml, cmp_csv, cmp_report;
    std::string cmp_id_a, cmp_id_b, cmp_norm = "outer", cmp_format = "md";
    double cmp_alpha = 0.01;
    auto* compare = app.add_subcommand("compare", "Bias report for two models on a patient/control test set");
    compare->add_option("--model-a", cmp_a, "First model")->required();
    compare->add_option("--model-b", cmp_b, "Second model")->required();
    compare->add_option("--xml", cmp_xml, "Test dataset XML")->required();
    compare->add_option("--id-a", cmp_id_a, "Label of the first model");
    compare->add_option("--id-b", cmp_id_b, "Label of the second model");
    compare->add_option("--alpha", cmp_alpha, "Significance level")->capture_default_str();
    compare->add_option("--normalizer", cmp_norm, "outer, inner or pupil")->capture_default_str();
    compare->add_option("--csv", cmp_csv, "Per-image errors CSV");
    compare->add_option("--report", cmp_report, "Summary report file");
    compare->add_option("--format", cmp_format, "Summary on stdout: md, csv or none")->capture_default_str();

    // metrics
    fs::path met_xml, met_pts, met_model, met_csv;
    double met_threshold = 10.0;
    auto* metrics = app.add_subcommand("metrics", "Brow, eyelid and commissure asymmetry measures");
    auto* met_xml_opt = metrics->add_option("--xml", met_xml, "Dataset XML (ground truth, or predictions with --model)");
    auto* met_pts_opt = metrics->add_option("--pts", met_pts, "Single pts file");
    met_xml_opt->excludes(met_pts_opt);
    metrics->add_option("--model", met_model, "Predict landmarks with this model instead of using ground truth");
    metrics->add_option("--threshold", met_threshold, "Flag |delta| above this percent of IOD")
        ->capture_default_str();
    metrics->add_option("--csv", met_csv, "Write CSV here instead of stdout");

    // predict
    fs::path pred_model, pred_image;
    std::string pred_box;
    auto* predict_cmd = app.add_subcommand("predict", "Localize 68 landmarks in one image (pts on stdout)");
    predict_cmd->add_option("--model", pred_model, "Model file")->required();
    predict_cmd->add_option("--image", pred_image, "PNG or JPEG image")->required();
    predict_cmd->add_option("--box", pred_box, "left,top,width,height (default: whole image)");

    // serve
    fs::path srv_xml, srv_storage, srv_model, srv_static, srv_export;
    std::string srv_host = "127.0.0.1";
    int srv_port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
    serve->add_option("--xml", srv_xml, "Dataset XML to annotate")->required();
    serve->add_option("--storage", srv_storage, "Directory for annotation records")->required();
    serve->add_option("--model", srv_model, "Model used for initial landmark estimates");
    serve->add_option("--static", srv_static, "Directory with the annotation UI");
    serve->add_option("--export", srv_export, "Ground-truth XML written by POST /api/export");
    serve->add_option("--host", srv_host, "Listen address")->capture_default_str();
    serve->add_option("--port", srv_port, "Listen port (0 = any)")->capture_default_str();

    try
    {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    if (show_version)
    {
        out << "palsylm " << PALSYLM_VERSION << " (model format " << ShapePredictorModel::kFormatVersion << ")\n";
        return kOk;
    }
    if (app.get_subcommands().empty())
    {
        err << app.help();
        return kUsage;
    }

    try
    {
        if (synth->parsed())
        {
            const auto xml = synth_out / "dataset.xml";
            require_writable(xml, force);
            const DatasetIndex index = generate_synthetic_corpus(synth_cfg, synth_out);
            err << "wrote " << index.images.size() << " images for " << index.grouping.size() << " subjects to "
                << xml.string() << "\n";
        }
        else if (split->parsed())
        {
            const auto f = parse_number_list(split_fractions, 3, "--fractions");
            const fs::path dir = split_out.empty() ? split_xml.parent_path() : split_out;
            const fs::path outputs[] = {dir / "train.xml", dir / "validation.xml", dir / "test.xml",
                                        dir / "split.txt"};
            for (const auto& p : outputs)
            {
                require_writable(p, force);
            }
            const DatasetIndex index = load_dataset(split_xml, false);
            const SplitAssignment s = split_by_subject(index, {f[0], f[1], f[2]}, seed);
            if (!dir.empty())
            {
                fs::create_directories(dir);
            }
            save_dataset(index.subset(s.train), outputs[0]);
            save_dataset(index.subset(s.validation), outputs[1]);
            save_dataset(index.subset(s.test), outputs[2]);
            std::string listing;
            const std::pair<const char*, const std::set<std::string>*> parts[] = {
                {"train", &s.train}, {"validation", &s.validation}, {"test", &s.test}};
            for (const auto& [name, subjects] : parts)
            {
                for (const auto& subject : *subjects)
                {
                    listing += std::string(name) + "\t" + subject + "\n";
                }
            }
            write_text(outputs[3], listing);
            err << "subjects: " << s.train.size() << " train, " << s.validation.size() << " validation, "
                << s.test.size() << " test\n";
        }
        else if (train_cmd->parsed())
        {
            const fs::path meta = train_model.string() + ".meta.txt";
            require_writable(train_model, force);
            require_writable(meta, force);
            train_params.validate();
            const DatasetIndex index = load_dataset(train_xml);
            const auto images = load_labeled_images(index, threads);
            TrainOptions opts;
            opts.threads = threads;
            opts.progress = [&err](const TrainProgress& p) {
                err << "stage " << p.stage << "/" << p.total_stages << " train NRMSE " << p.train_nrmse << "%\n";
            };
            const ShapePredictorModel model = train(images, train_params, opts);
            save_model(model, train_model);
            write_text(meta, model_metadata(model, train_xml.filename().string() + " (" +
                                                       std::to_string(images.size()) + " images)"));
        }
        else if (tune->parsed())
        {
            require_writable(tune_report, force);
            const fs::path timing = tune_report.string() + ".timing.csv";
            require_writable(timing, force);
            require_writable(tune_model, force);
            GridSpec grid = default_grid();
            if (!tune_grid.empty())
            {
                std::ifstream in(tune_grid);
                if (!in)
                {
                    throw IoError("cannot open grid file " + tune_grid.string());
                }
                std::stringstream ss;
                ss << in.rdbuf();
                grid = parse_grid(ss.str());
            }
            if (tune->count("--seed"))
            {
                grid.seed = tune_seed;
            }
            grid.common_random_numbers = grid.common_random_numbers || tune_crn;
            grid.validate();
            const auto train_images = load_labeled_images(load_dataset(tune_train), threads);
            const auto val_images = load_labeled_images(load_dataset(tune_val), threads);
            TuneOptions opts;
            opts.threads = threads;
            opts.progress = [&err](const TuneRecord& r, std::size_t total) {
                err << "permutation " << r.index + 1 << "/" << total << " K=" << r.params.trees_per_cascade
                    << " D=" << r.params.tree_depth << " m=" << r.params.min_samples_per_leaf
                    << " P=" << r.params.feature_pool_size << " NRMSE " << r.nrmse << "%\n";
            };
            const TuneResult result = grid_search(train_images, val_images, grid, opts);
            write_text(tune_report, tune_report_csv(result));
            write_text(timing, tune_timing_csv(result));
            const TuneRecord& best = result.best();
            out << "winner K=" << best.params.trees_per_cascade << " D=" << best.params.tree_depth
                << " m=" << best.params.min_samples_per_leaf << " P=" << best.params.feature_pool_size
                << " nrmse=" << best.nrmse << "\n";
            if (!tune_model.empty())
            {
                TrainOptions topts;
                topts.threads = threads;
                save_model(train(train_images, best.params, topts), tune_model);
            }
        }
        else if (eval->parsed())
        {
            require_writable(eval_csv, force);
            const Normalizer norm = parse_normalizer(eval_norm);
            const ShapePredictorModel model = load_model(eval_model);
            const DatasetIndex index = load_dataset(eval_xml);
            const auto images = load_labeled_images(index, threads);
            const auto cohorts = cohorts_of(index);
            const auto errors =
                evaluate_model(model, images, model_id_for(eval_id, eval_model), cohorts, threads, norm);
            const std::string csv = errors_csv(errors);
            std::vector<double> values;
            for (const auto& e : errors)
            {
                values.push_back(e.nrmse);
            }
            if (eval_csv.empty())
            {
                out << csv;
            }
            else
            {
                write_text(eval_csv, csv);
            }
            err << "mean NRMSE " << format_mean_std(summarize(values)) << "% over " << values.size()
                << " images\n";
        }
        else if (compare->parsed())
        {
            require_writable(cmp_csv, force);
            require_writable(cmp_report, force);
            if (cmp_format != "md" && cmp_format != "csv" && cmp_format != "none")
            {
                throw UsageError("--format must be md, csv or none");
            }
            const Normalizer norm = parse_normalizer(cmp_norm);
            const ShapePredictorModel a = load_model(cmp_a);
            const ShapePredictorModel b = load_model(cmp_b);
            const DatasetIndex index = load_dataset(cmp_xml);
            const auto images = load_labeled_images(index, threads);
            const auto cohorts = cohorts_of(index);
            std::string id_a = model_id_for(cmp_id_a, cmp_a);
            std::string id_b = model_id_for(cmp_id_b, cmp_b);
            if (id_a == id_b)
            {
                id_a += "_a";
                id_b += "_b";
            }
            const auto ea = evaluate_model(a, images, id_a, cohorts, threads, norm);
            const auto eb = evaluate_model(b, images, id_b, cohorts, threads, norm);
            const EvaluationReport report = bias_report(ea, eb, cmp_alpha);
            const std::string md = report_markdown(report);
            const std::string csv = errors_csv(report.errors);
            if (!cmp_csv.empty())
            {
                write_text(cmp_csv, csv);
            }
            if (!cmp_report.empty())
            {
                write_text(cmp_report, md);
            }
            if (cmp_format == "md")
            {
                out << md;
            }
            else if (cmp_format == "csv")
            {
                out << csv;
            }
        }
        else if (metrics->parsed())
        {
            require_writable(met_csv, force);
            std::vector<MetricsRow> rows;
            if (!met_pts.empty())
            {
                rows.push_back({met_pts.filename().string(), "", "", compute_metrics(read_pts_file(met_pts))});
            }
            else if (!met_xml.empty())
            {
                const DatasetIndex index = load_dataset(met_xml, false);
                std::optional<ShapePredictorModel> model;
                if (!met_model.empty())
                {
                    model = load_model(met_model);
                }
                for (const auto& img : index.images)
                {
                    Shape68 shape;
                    if (model)
                    {
                        shape = predict(*model, load_image_grayscale(index.resolve(img)), img.box);
                    }
                    else if (img.ground_truth)
                    {
                        shape = *img.ground_truth;
                    }
                    else
                    {
                        throw MissingGroundTruth("image " + img.id() + " has no landmarks (pass --model)");
                    }
                    rows.push_back({img.id(), img.meta.subject_id, img.meta.expression, compute_metrics(shape)});
                }
            }
            else
            {
                throw UsageError("metrics needs --xml or --pts");
            }
            const std::string csv = metrics_csv(rows, met_threshold);
            if (met_csv.empty())
            {
                out << csv;
            }
            else
            {
                write_text(met_csv, csv);
            }
        }
        else if (predict_cmd->parsed())
        {
            const ShapePredictorModel model = load_model(pred_model);
            const GrayImage image = load_image_grayscale(pred_image);
            BoundingBox box{0.0, 0.0, static_cast<double>(image.width()), static_cast<double>(image.height())};
            if (!pred_box.empty())
            {
                const auto v = parse_number_list(pred_box, 4, "--box");
                box = {v[0], v[1], v[2], v[3]};
            }
            if (!box.valid())
            {
                throw InvalidBox("box must have positive finite width and height");
            }
            const Shape68 shape = predict(model, image, box);
            out << write_pts(shape.points());
        }
        else if (serve->parsed())
        {
            std::optional<ShapePredictorModel> model;
            if (!srv_model.empty())
            {
                model = load_model(srv_model);
            }
            AnnotationStore store(load_dataset(srv_xml), srv_storage, std::move(model));
            std::optional<fs::path> static_dir;
            if (!srv_static.empty())
            {
                static_dir = srv_static;
            }
            AnnotationServer server(store, static_dir, srv_export);
            const int port = server.bind(srv_host, srv_port);
            if (port < 0)
            {
                throw IoError("cannot bind " + srv_host + ":" + std::to_string(srv_port));
            }
            err << "listening on http://" << srv_host << ":" << port << "/\n";
            g_interrupted.store(false);
            auto previous_int = std::signal(SIGINT, on_signal);
            auto previous_term = std::signal(SIGTERM, on_signal);
            std::thread watcher([&server] {
                while (!g_interrupted.load())
                {
                    std::this_thread::sleep_for(std::chrono::milliseconds(100));
                }
                server.stop();
            });
            server.listen_after_bind();
            g_interrupted.store(true);
            watcher.join();
            std::signal(SIGINT, previous_int);
            std::signal(SIGTERM, previous_term);
        }
    }
    catch (const UsageError& e)
    {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    }
    catch (const InvalidParams& e)
    {
        err << "invalid parameters: " << e.what() << "\n";
        return kUsage;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kOk;
}

} // namespace palsylm::cli

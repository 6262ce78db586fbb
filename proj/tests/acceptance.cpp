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
#include "palsylm/dataset.hpp"
#include "palsylm/errors.hpp"
#include "palsylm/evaluation.hpp"
#include "palsylm/geometry.hpp"
#include "palsylm/metrics.hpp"
#include "palsylm/random.hpp"
#include "palsylm/regressor.hpp"
#include "palsylm/synth.hpp"
#include "palsylm/tuning.hpp"
#include "stat_oracles.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace palsylm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome
{
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok)
        {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double angle_diff(double a, double b)
{
    return std::remainder(a - b, 2.0 * std::numbers::pi);
}

Shape68 transformed(const SimilarityTransform& t, const Shape68& s)
{
    Shape68 out;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        out[i] = apply_transform(t, s[i]);
    }
    return out;
}

double mean_of(const std::vector<ImageError>& errors)
{
    double sum = 0;
    for (const auto& e : errors)
    {
        sum += e.nrmse;
    }
    return sum / static_cast<double>(errors.size());
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

void geometry_suite(Outcome& o)
{
    const auto start = Clock::now();
    Rng rng(20260101);
    double worst_scale = 0, worst_rot = 0, worst_trans = 0;
    for (int trial = 0; trial < 1000; ++trial)
    {
        const Shape68 s = testing::random_shape(rng);
        SimilarityTransform t;
        t.scale = std::exp(rng.uniform(std::log(0.25), std::log(4.0)));
        t.rotation = rng.uniform(-std::numbers::pi, std::numbers::pi);
        t.translation = {rng.uniform(-500, 500), rng.uniform(-500, 500)};
        const auto r = procrustes_align(s.points(), transformed(t, s).points());
        worst_scale = std::max(worst_scale, std::abs(r.scale - t.scale));
        worst_rot = std::max(worst_rot, std::abs(angle_diff(r.rotation, t.rotation)));
        worst_trans = std::max(worst_trans, distance(r.translation, t.translation));
    }
    o.require(worst_scale < 1e-9, "procrustes scale");
    o.require(worst_rot < 1e-9, "procrustes rotation");
    o.require(worst_trans < 1e-6, "procrustes translation");

    // Transform arithmetic: 90 degrees, scale 2, shift (1, 1) maps (3, 4) to (-7, 7).
    const SimilarityTransform q{2.0, std::numbers::pi / 2, {1, 1}};
    const Point2 mapped = apply_transform(q, {3, 4});
    o.require(distance(mapped, {-7, 7}) < 1e-12, "apply_transform");
    o.require(distance(apply_transform(q.inverse(), mapped), {3, 4}) < 1e-12, "inverse");
    const SimilarityTransform w{0.5, -0.3, {4, -2}};
    const Point2 p{2.5, -1.25};
    o.require(distance(apply_transform(compose(q, w), p), apply_transform(q, apply_transform(w, p))) < 1e-12,
              "compose");

    // IOD: outer corners 36 and 45.
    Shape68 s;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        s[i] = {static_cast<double>(i), 1.0};
    }
    s[36] = {10, 20};
    s[45] = {13, 24};
    o.require(interocular_distance(s) == 5.0, "iod fixture");
    s[45] = s[36];
    bool degenerate_rejected = false;
    try
    {
        interocular_distance(s);
    }
    catch (const DegenerateShape&)
    {
        degenerate_rejected = true;
    }
    o.require(degenerate_rejected, "zero iod rejected");

    const double elapsed = seconds_since(start);
    o.require(elapsed < 5.0, "runtime < 5 s");
    o.detail << std::scientific << std::setprecision(2) << "1000 cases; max |ds|=" << worst_scale
             << " |dtheta|=" << worst_rot << " |dt|=" << worst_trans << std::fixed << "; " << elapsed << " s";
}

Shape68 nrmse_base_shape()
{
    Shape68 s;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        s[i] = {static_cast<double>(i) * 2.0, static_cast<double>(i % 7) * 5.0};
    }
    s[36] = {0, 0};
    s[45] = {100, 0};
    return s;
}

void nrmse_suite(Outcome& o)
{
    // Hand-derived: identity 0; uniform (3, 4) shift on IOD 100 is 5 %;
    // 10 px on every other landmark is sqrt(34 * 100 / 68) = sqrt(50) %.
    const Shape68 gt = nrmse_base_shape();
    o.require(nrmse(gt, gt) == 0.0, "identity");
    Shape68 shifted = gt;
    for (auto& p : shifted)
    {
        p = p + Point2{3, 4};
    }
    o.require(std::abs(nrmse(shifted, gt) - 5.0) < 1e-9, "uniform shift");
    Shape68 half = gt;
    for (std::size_t i = 0; i < kNumLandmarks; i += 2)
    {
        half[i] = half[i] + Point2{0, 10};
    }
    o.require(std::abs(nrmse(half, gt) - std::sqrt(50.0)) < 1e-9, "half displaced");

    Rng rng(42);
    double worst = 0;
    for (int trial = 0; trial < 500; ++trial)
    {
        const Shape68 g = testing::random_shape(rng);
        Shape68 pred = g;
        for (auto& p : pred)
        {
            p = p + Point2{rng.normal() * 3, rng.normal() * 3};
        }
        const double e = nrmse(pred, g);
        const SimilarityTransform rigid{1.0, rng.uniform(-3, 3), {rng.uniform(-100, 100), rng.uniform(-100, 100)}};
        const SimilarityTransform scaled{rng.uniform(0.1, 10), 0.0, {0, 0}};
        worst = std::max(worst, std::abs(nrmse(transformed(rigid, pred), transformed(rigid, g)) - e));
        worst = std::max(worst, std::abs(nrmse(transformed(scaled, pred), transformed(scaled, g)) - e) / e);
    }
    o.require(worst < 1e-9, "invariance");
    o.detail << "3 fixtures exact; 500 invariance trials, worst deviation " << std::scientific << std::setprecision(2)
             << worst;
}

void statistics_suite(Outcome& o)
{
    Rng rng(1234);
    int wilcoxon_equal = 0;
    for (int trial = 0; trial < 200; ++trial)
    {
        const std::size_t n = 1 + rng.below(10);
        std::vector<double> d(n);
        for (auto& v : d)
        {
            do
            {
                v = trial % 3 == 0 ? std::round(rng.uniform(-4, 4)) : rng.normal();
            } while (v == 0.0);
        }
        wilcoxon_equal += wilcoxon_exact_p(d) == testing::oracle_wilcoxon_p(d);
    }
    o.require(wilcoxon_equal == 200, "wilcoxon exact p");

    Rng krng(8);
    int kw_checked = 0, kw_ok = 0, monotone_ok = 0;
    while (kw_checked < 200)
    {
        std::vector<std::vector<double>> groups(2 + krng.below(3));
        std::size_t total = 0;
        for (auto& g : groups)
        {
            g.resize(1 + krng.below(8));
            for (auto& v : g)
            {
                v = kw_checked % 2 ? std::round(krng.uniform(0, 6)) : krng.normal();
            }
            total += g.size();
        }
        if (total < 3)
        {
            continue;
        }
        try
        {
            const auto got = kruskal_wallis(groups);
            ++kw_checked;
            kw_ok += std::abs(got.statistic - testing::oracle_kw(groups)) < 1e-9;
            auto mapped = groups;
            for (auto& g : mapped)
            {
                for (auto& v : g)
                {
                    v = std::exp(v) * 3.0 + 1.0;
                }
            }
            monotone_ok += kruskal_wallis(mapped).statistic == got.statistic;
        }
        catch (const DegenerateData&)
        {
        }
    }
    o.require(kw_ok == kw_checked, "kruskal-wallis oracle");
    o.require(monotone_ok == kw_checked, "monotone invariance");
    o.detail << "wilcoxon " << wilcoxon_equal << "/200 exact; kruskal-wallis " << kw_ok << "/" << kw_checked
             << " within 1e-9; monotone " << monotone_ok << "/" << kw_checked;
}

void training_efficacy(Outcome& o)
{
    testing::TempDir dir("acc_efficacy");
    SynthConfig cfg;
    cfg.n_subjects = 200;
    cfg.images_per_subject = 1;
    cfg.seed = 5;
    const DatasetIndex corpus = generate_synthetic_corpus(cfg, dir / "corpus");
    const SplitAssignment split = split_by_subject(corpus, {0.75, 0.125, 0.125}, 1);
    o.require(split.train.size() == 150 && split.validation.size() == 25 && split.test.size() == 25,
              "150/25/25 split");
    const auto train_set = load_labeled_images(corpus.subset(split.train));
    const auto test_set = load_labeled_images(corpus.subset(split.test));

    TrainParams p;
    p.cascade_depth = 10;
    p.trees_per_cascade = 50;
    p.tree_depth = 3;
    p.feature_pool_size = 200;
    p.oversampling = 10;
    p.seed = 11;
    const auto start = Clock::now();
    const ShapePredictorModel model = train(train_set, p);
    const double train_seconds = seconds_since(start);

    const double trained = mean_of(evaluate_model(model, test_set, "trained"));
    const ShapePredictorModel init = ShapePredictorModel::initial(model.mean_shape);
    const double initial = mean_of(evaluate_model(init, test_set, "initial"));
    o.require(trained <= 0.6 * initial, "held-out NRMSE <= 0.6 x initialization");
    o.require(train_seconds <= 600.0, "training <= 10 min");
    o.detail << std::fixed << std::setprecision(3) << "held-out NRMSE " << trained << "% vs initialization "
             << initial << "% (ratio " << trained / initial << "); training " << std::setprecision(1)
             << train_seconds << " s";
}

std::vector<LabeledImage> corpus(int subjects, double asymmetry, std::uint64_t seed, const std::string& prefix)
{
    SynthConfig cfg;
    cfg.n_subjects = subjects;
    cfg.images_per_subject = 1;
    cfg.asymmetry = asymmetry;
    cfg.seed = seed;
    cfg.id_prefix = prefix;
    return testing::synthetic_examples(cfg);
}

void domain_shift(Outcome& o)
{
    const auto start = Clock::now();
    const auto controls = corpus(150, 0.0, 101, "c");
    const auto patients = corpus(75, 0.8, 202, "p");
    std::vector<LabeledImage> mixed(controls.begin(), controls.begin() + 75);
    mixed.insert(mixed.end(), patients.begin(), patients.end());

    TrainParams p;
    p.cascade_depth = 10;
    p.trees_per_cascade = 50;
    p.tree_depth = 3;
    p.feature_pool_size = 200;
    p.oversampling = 10;
    p.seed = 17;
    const ShapePredictorModel generic = train(controls, p);
    const ShapePredictorModel retrained = train(mixed, p);

    std::vector<std::vector<double>> generic_by_cohort;
    const auto compare = [&](const std::vector<LabeledImage>& test, double& mean_g, double& mean_m) {
        const auto eg = evaluate_model(generic, test, "G");
        generic_by_cohort.emplace_back();
        for (const auto& e : eg)
        {
            generic_by_cohort.back().push_back(e.nrmse);
        }
        const auto em = evaluate_model(retrained, test, "M");
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < eg.size(); ++i)
        {
            pairs.emplace_back(eg[i].nrmse, em[i].nrmse);
        }
        mean_g = mean_of(eg);
        mean_m = mean_of(em);
        return wilcoxon_signed_rank(pairs).p_value;
    };
    double pg = 0, pm = 0, cg = 0, cm = 0;
    const double p_patient = compare(corpus(50, 0.8, 303, "tp"), pg, pm);
    const double p_control = compare(corpus(50, 0.0, 404, "tc"), cg, cm);
    const double p_cohorts = kruskal_wallis(generic_by_cohort).p_value;
    const double elapsed = seconds_since(start);

    o.require(p_cohorts < 0.01, "generic model differs between cohorts");
    o.require(pm < pg, "M better than G on asymmetric cohort");
    o.require(p_patient < 0.01, "asymmetric cohort p < 0.01");
    o.require(p_control >= 0.01, "symmetric cohort not significant");
    o.require(elapsed <= 1800.0, "runtime <= 30 min");
    o.detail << std::fixed << std::setprecision(3) << "asymmetric n=50: G " << pg << "% vs M " << pm
             << "%, p=" << std::scientific << std::setprecision(2) << p_patient << std::fixed
             << std::setprecision(3) << "; symmetric n=50: G " << cg << "% vs M " << cm
             << "%, p=" << p_control << "; G patients vs controls Kruskal-Wallis p=" << std::scientific
             << std::setprecision(2) << p_cohorts << "; " << std::fixed << std::setprecision(1) << elapsed << " s";
}

void latency(Outcome& o)
{
    SynthConfig cfg;
    cfg.n_subjects = 30;
    cfg.images_per_subject = 1;
    cfg.seed = 61;
    const auto data = testing::synthetic_examples(cfg);
    TrainParams p; // default size: T=10, K=500, D=4, P=400
    p.oversampling = 2;
    p.num_test_splits = 5;
    p.seed = 3;
    const ShapePredictorModel model = train(data, p);
    o.require(model.cascades.size() == 10 && model.cascades[0].trees.size() == 500 &&
                  model.cascades[0].trees[0].depth == 4 && model.cascades[0].pool.size() == 400,
              "default-size model");

    std::vector<double> ms;
    Shape68 sink;
    for (int call = 0; call < 100; ++call)
    {
        const auto& ex = data[static_cast<std::size_t>(call) % data.size()];
        const auto start = Clock::now();
        sink = predict(model, ex.image, ex.box);
        ms.push_back(1000.0 * seconds_since(start));
    }
    std::nth_element(ms.begin(), ms.begin() + 50, ms.end());
    const double median = ms[50];
    o.require(median <= 10.0, "median <= 10 ms");
    o.require(is_finite(sink[0]), "finite prediction");
    o.detail << std::fixed << std::setprecision(3) << "median " << median << " ms over 100 calls (T=10 K=500 D=4 P=400)";
}

int run_cli(std::vector<std::string> args)
{
    std::ostringstream out, err;
    return cli::run(args, out, err);
}

void determinism(Outcome& o)
{
    testing::TempDir dir("acc_determinism");
    const std::string grid = (dir / "grid.txt").string();
    {
        std::ofstream g(grid);
        g << "cascade_depth=2\ntrees_per_cascade=5,10\ntree_depth=2,3\nmin_samples_per_leaf=1\n"
          << "feature_pool_size=40\noversampling=3\nnum_test_splits=8\nseed=21\n";
    }
    std::vector<std::string> compared;
    int mismatches = 0, failures = 0;
    const auto same = [&](const fs::path& a, const fs::path& b) {
        compared.push_back(a.filename().string());
        if (!fs::exists(a) || slurp(a) != slurp(b))
        {
            ++mismatches;
        }
    };
    for (const char* threads : {"1", "4"})
    {
        const fs::path run = dir / (std::string("t") + threads);
        const auto c = [&](std::vector<std::string> args) {
            args.insert(args.begin(), {"--threads", threads});
            failures += run_cli(args) != 0;
        };
        c({"synth", "--out", (run / "corpus").string(), "--subjects", "12", "--images-per-subject", "2",
           "--asymmetry", "0.5", "--seed", "8"});
        c({"split", "--xml", (run / "corpus" / "dataset.xml").string(), "--fractions", "0.5,0.25,0.25", "--seed",
           "4", "--out-dir", (run / "split").string()});
        c({"train", "--xml", (run / "split" / "train.xml").string(), "--model", (run / "model.dat").string(),
           "--cascades", "3", "--trees", "20", "--depth", "3", "--pool", "60", "--oversampling", "4", "--seed",
           "9"});
        c({"tune", "--train", (run / "split" / "train.xml").string(), "--val",
           (run / "split" / "validation.xml").string(), "--grid", grid, "--report", (run / "report.csv").string()});
    }
    const fs::path a = dir / "t1", b = dir / "t4";
    const DatasetIndex idx = load_dataset(a / "corpus" / "dataset.xml");
    same(a / "corpus" / "dataset.xml", b / "corpus" / "dataset.xml");
    for (const auto& img : idx.images)
    {
        same(a / "corpus" / img.image_path, b / "corpus" / img.image_path);
    }
    for (const char* f : {"train.xml", "validation.xml", "test.xml", "split.txt"})
    {
        same(a / "split" / f, b / "split" / f);
    }
    same(a / "model.dat", b / "model.dat");
    same(a / "model.dat.meta.txt", b / "model.dat.meta.txt");
    same(a / "report.csv", b / "report.csv");

    o.require(failures == 0, "commands succeed");
    o.require(mismatches == 0, "byte-identical outputs");
    o.detail << compared.size() << " output files compared between --threads 1 and --threads 4, " << mismatches
             << " differ";
}

void serialization(Outcome& o)
{
    SynthConfig cfg;
    cfg.n_subjects = 12;
    cfg.images_per_subject = 1;
    cfg.seed = 33;
    const auto data = testing::synthetic_examples(cfg);
    TrainParams p;
    p.cascade_depth = 3;
    p.trees_per_cascade = 10;
    p.tree_depth = 3;
    p.feature_pool_size = 50;
    p.oversampling = 3;
    const ShapePredictorModel model = train(data, p);
    const auto bytes = serialize(model);
    const ShapePredictorModel back = deserialize(bytes);
    o.require(serialize(back) == bytes, "byte round trip");
    o.require(back.mean_shape == model.mean_shape && back.cascades == model.cascades, "structural equality");

    testing::TempDir dir("acc_serial");
    save_model(model, dir / "m.dat");
    o.require(serialize(load_model(dir / "m.dat")) == bytes, "file round trip");

    int identical = 0;
    for (const auto& ex : data)
    {
        identical += predict(back, ex.image, ex.box) == predict(model, ex.image, ex.box);
    }
    o.require(identical == static_cast<int>(data.size()), "bit-identical predictions");

    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> corrupt;
    auto mutate = [&](const std::string& name, auto fn) {
        auto b = bytes;
        fn(b);
        corrupt.emplace_back(name, std::move(b));
    };
    mutate("magic", [](auto& b) { b[0] = 'X'; });
    mutate("version", [](auto& b) { b[4] = static_cast<std::uint8_t>(ShapePredictorModel::kFormatVersion + 1); });
    mutate("trailing", [](auto& b) { b.push_back(0); });
    mutate("anchor", [](auto& b) { b[1104] = 200; });
    mutate("count", [](auto& b) {
        b[1096] = 0xFF;
        b[1097] = 0xFF;
        b[1098] = 0xFF;
        b[1099] = 0x7F;
    });
    mutate("nan", [](auto& b) { std::fill(b.begin() + 8, b.begin() + 16, std::uint8_t{0xFF}); });
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{7}, std::size_t{100}, std::size_t{1099},
                            bytes.size() / 2, bytes.size() - 1})
    {
        corrupt.emplace_back("truncated", std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + cut));
    }
    int rejected = 0;
    for (const auto& [name, b] : corrupt)
    {
        try
        {
            deserialize(b);
            o.detail << "[accepted " << name << "] ";
        }
        catch (const ModelFormatError&)
        {
            ++rejected;
        }
    }
    o.require(rejected == static_cast<int>(corrupt.size()), "corrupted streams rejected");
    o.detail << bytes.size() << "-byte model; " << identical << "/" << data.size() << " predictions identical; "
             << rejected << "/" << corrupt.size() << " corrupted streams rejected";
}

void grid_search_run(Outcome& o)
{
    const auto train_set = corpus(12, 0.3, 71, "gt");
    const auto val_set = corpus(6, 0.3, 72, "gv");
    GridSpec grid = default_grid();
    grid.base.cascade_depth = 3;
    grid.base.oversampling = 4;
    grid.base.num_test_splits = 8;
    grid.seed = 5;
    const auto start = Clock::now();
    const TuneResult result = grid_search(train_set, val_set, grid);
    const double elapsed = seconds_since(start);
    const std::string report = tune_report_csv(result);

    std::size_t argmin = 0;
    for (std::size_t i = 0; i < result.records.size(); ++i)
    {
        if (result.records[i].nrmse < result.records[argmin].nrmse)
        {
            argmin = i;
        }
    }
    std::istringstream lines(report);
    std::string line;
    std::getline(lines, line);
    std::size_t rows = 0;
    while (std::getline(lines, line))
    {
        rows += line.rfind("winner,", 0) != 0;
    }
    o.require(result.records.size() == 400, "400 permutations");
    o.require(result.winner == argmin, "winner is argmin");
    o.require(rows == 400, "400 report rows");
    const auto& w = result.best().params;
    o.detail << "400 permutations in " << std::fixed << std::setprecision(1) << elapsed << " s; winner K="
             << w.trees_per_cascade << " D=" << w.tree_depth << " m=" << w.min_samples_per_leaf
             << " P=" << w.feature_pool_size << " NRMSE " << std::setprecision(3) << result.best().nrmse << "%";
}

double worst_delta(const SideMetrics& d)
{
    return std::max({std::abs(d.brow_height), std::abs(d.palpebral_fissure_height), std::abs(d.commissure_excursion)});
}

void metrics_suite(Outcome& o)
{
    double worst_sym = 0;
    for (double axis : {0.0, 150.0, 333.25})
    {
        for (double scale : {50.0, 200.0})
        {
            worst_sym = std::max(worst_sym, worst_delta(compute_metrics(testing::symmetric_template(axis, scale)).delta));
        }
    }
    o.require(worst_sym < 1e-9, "symmetric template deltas");

    // Constructed displacements on one side of a symmetric face.
    const Shape68 base = testing::symmetric_template(100.0);
    const FacialMetrics m0 = compute_metrics(base);
    double worst_fixture = 0;
    {
        Shape68 s = base;
        for (int i = 22; i <= 26; ++i)
        {
            s[i].y -= 4.0; // left brow raised 4 px
        }
        const FacialMetrics m = compute_metrics(s);
        worst_fixture = std::max(worst_fixture, std::abs(m.delta.brow_height - 4.0));
        worst_fixture = std::max(worst_fixture, std::abs(m.right.brow_height - m0.right.brow_height));
    }
    {
        Shape68 s = base;
        s[46].y += 3.0; // left lower lid lowered 3 px
        s[47].y += 3.0;
        const FacialMetrics m = compute_metrics(s);
        worst_fixture = std::max(worst_fixture, std::abs(m.delta.palpebral_fissure_height - 3.0));
    }
    {
        Shape68 s = base;
        // Right commissure pulled 5 px away from the midline foot of landmark 57.
        const MidlineModel mid = estimate_midline(base);
        const Point2 foot = mid.project(base[57]);
        s[48] = s[48] + (5.0 / distance(base[48], foot)) * (base[48] - foot);
        const FacialMetrics m = compute_metrics(s);
        worst_fixture = std::max(worst_fixture, std::abs(m.delta.commissure_excursion + 5.0));
        worst_fixture = std::max(worst_fixture, std::abs(m.left.commissure_excursion - m0.left.commissure_excursion));
    }
    o.require(worst_fixture < 1e-9, "constructed displacements");

    Rng rng(77);
    double worst_mirror = 0;
    for (int trial = 0; trial < 50; ++trial)
    {
        Shape68 s = testing::symmetric_template(120.0);
        for (auto& p : s)
        {
            p = p + Point2{rng.normal() * 2, rng.normal() * 2};
        }
        const FacialMetrics a = compute_metrics(s);
        const FacialMetrics b = compute_metrics(mirror_shape(s, 120.0));
        worst_mirror = std::max(worst_mirror, std::abs(a.delta.brow_height + b.delta.brow_height));
        worst_mirror = std::max(worst_mirror,
                                std::abs(a.delta.palpebral_fissure_height + b.delta.palpebral_fissure_height));
        worst_mirror = std::max(worst_mirror, std::abs(a.delta.commissure_excursion + b.delta.commissure_excursion));
        worst_mirror = std::max(worst_mirror, std::abs(a.left.brow_height - b.right.brow_height));
    }
    o.require(worst_mirror < 1e-9, "mirror swaps sides");
    o.detail << std::scientific << std::setprecision(2) << "symmetric max |delta| " << worst_sym
             << "; fixtures max error " << worst_fixture << "; mirror max error " << worst_mirror;
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"geometry-oracles", geometry_suite},
        {"nrmse-fixtures", nrmse_suite},
        {"statistics-oracles", statistics_suite},
        {"training-efficacy", training_efficacy},
        {"domain-shift", domain_shift},
        {"latency", latency},
        {"determinism", determinism},
        {"serialization", serialization},
        {"grid-search", grid_search_run},
        {"metrics", metrics_suite},
    };
    const std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [name, fn] : criteria)
    {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end())
        {
            continue;
        }
        Outcome o;
        try
        {
            fn(o);
        }
        catch (const std::exception& e)
        {
            o.pass = false;
            o.detail << "[exception: " << e.what() << "]";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    }
    return failed == 0 ? 0 : 1;
}

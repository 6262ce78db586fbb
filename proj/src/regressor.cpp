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
#include "palsylm/regressor.hpp"

#include "palsylm/errors.hpp"
#include "palsylm/evaluation.hpp"
#include "palsylm/parallel.hpp"
#include "palsylm/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace palsylm {

void TrainParams::validate() const
{
    const auto require = [](bool ok, const char* what) {
        if (!ok)
        {
            throw InvalidParams(what);
        }
    };
    require(cascade_depth >= 1, "cascade_depth must be >= 1");
    require(trees_per_cascade >= 1, "trees_per_cascade must be >= 1");
    require(tree_depth >= 1 && tree_depth <= 20, "tree_depth must be in [1, 20]");
    require(min_samples_per_leaf >= 1, "min_samples_per_leaf must be >= 1");
    require(feature_pool_size >= 2, "feature_pool_size must be >= 2");
    require(oversampling >= 1, "oversampling must be >= 1");
    require(shrinkage > 0.0 && shrinkage <= 1.0, "shrinkage must be in (0, 1]");
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be > 0");
    require(num_test_splits >= 1, "num_test_splits must be >= 1");
    require(padding >= 0.0 && std::isfinite(padding), "padding must be >= 0");
}

ShapePredictorModel ShapePredictorModel::initial(const Shape68& mean_shape)
{
    ShapePredictorModel m;
    m.mean_shape = mean_shape;
    m.params.cascade_depth = 0;
    return m;
}

void ShapePredictorModel::validate() const
{
    const auto fail = [](const std::string& what) { throw ModelFormatError(what); };
    if (format_version != kFormatVersion)
    {
        fail("unsupported version " + std::to_string(format_version));
    }
    for (const auto& p : mean_shape)
    {
        if (!is_finite(p))
        {
            fail("mean shape has non-finite coordinates");
        }
    }
    for (std::size_t t = 0; t < cascades.size(); ++t)
    {
        const auto& stage = cascades[t];
        const std::string where = "cascade " + std::to_string(t) + ": ";
        if (stage.pool.empty())
        {
            fail(where + "empty feature pool");
        }
        for (const auto& f : stage.pool)
        {
            if (f.anchor >= kNumLandmarks || !is_finite(f.offset))
            {
                fail(where + "invalid feature point");
            }
        }
        for (const auto& tree : stage.trees)
        {
            if (tree.depth < 1 || tree.depth > 20)
            {
                fail(where + "tree depth out of range");
            }
            if (tree.splits.size() != tree.num_leaves() - 1 || tree.leaves.size() != tree.num_leaves() * kShapeDims)
            {
                fail(where + "tree node/leaf count does not match its depth");
            }
            for (const auto& s : tree.splits)
            {
                if (s.u >= stage.pool.size() || s.v >= stage.pool.size() || !std::isfinite(s.threshold))
                {
                    fail(where + "split references a feature outside the pool");
                }
            }
            for (float v : tree.leaves)
            {
                if (!std::isfinite(v))
                {
                    fail(where + "non-finite leaf value");
                }
            }
        }
    }
}

std::vector<LabeledImage> load_labeled_images(const DatasetIndex& index, unsigned threads)
{
    std::vector<LabeledImage> out(index.images.size());
    parallel_for(out.size(), threads, [&](std::size_t i) {
        const auto& img = index.images[i];
        out[i].id = img.id();
        out[i].image = load_image_grayscale(index.resolve(img));
        out[i].box = img.box;
        out[i].ground_truth = img.ground_truth;
    });
    return out;
}

Shape68 compute_mean_shape(std::span<const Shape68> shapes, std::span<const BoundingBox> boxes)
{
    if (shapes.empty())
    {
        throw EmptyDataset("cannot compute a mean shape from zero examples");
    }
    if (shapes.size() != boxes.size())
    {
        throw std::invalid_argument("compute_mean_shape: shapes and boxes differ in count");
    }
    Shape68 mean;
    for (std::size_t k = 0; k < shapes.size(); ++k)
    {
        if (!boxes[k].valid())
        {
            throw InvalidBox("training box has non-positive size");
        }
        for (std::size_t i = 0; i < kNumLandmarks; ++i)
        {
            mean[i] = mean[i] + boxes[k].to_unit(shapes[k][i]);
        }
    }
    const double n = static_cast<double>(shapes.size());
    for (auto& p : mean)
    {
        p = {p.x / n, p.y / n};
    }
    return mean;
}

FeaturePoint anchor_feature_point(const Shape68& mean_shape, Point2 location)
{
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t i = 0; i < kNumLandmarks; ++i)
    {
        const double d = squared_norm(location - mean_shape[i]);
        if (d < best_d)
        {
            best_d = d;
            best = i;
        }
    }
    return {best, location - mean_shape[best]};
}

Point2 feature_location(const Shape68& mean_shape, const FeaturePoint& f)
{
    return mean_shape[f.anchor] + f.offset;
}

std::vector<FeaturePoint> sample_feature_pool(const Shape68& mean_shape, int pool_size, double padding,
                                              std::uint64_t seed)
{
    if (pool_size < 1)
    {
        throw InvalidParams("feature pool size must be >= 1");
    }
    double min_x = mean_shape[0].x, max_x = min_x, min_y = mean_shape[0].y, max_y = min_y;
    for (const auto& p : mean_shape)
    {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double pad_x = padding * (max_x - min_x);
    const double pad_y = padding * (max_y - min_y);
    Rng rng(seed);
    std::vector<FeaturePoint> pool;
    pool.reserve(static_cast<std::size_t>(pool_size));
    for (int k = 0; k < pool_size; ++k)
    {
        const double x = rng.uniform(min_x - pad_x, max_x + pad_x);
        const double y = rng.uniform(min_y - pad_y, max_y + pad_y);
        pool.push_back(anchor_feature_point(mean_shape, {x, y}));
    }
    return pool;
}

namespace {

// Shapes are handled relative to an integer origin (the floor of the box
// corner); pixel lookups add the origin back as integers so that integer
// translations of image and box leave every feature bit-identical.
struct Frame
{
    long ox = 0;
    long oy = 0;
};

Frame frame_for(const BoundingBox& box)
{
    return {static_cast<long>(std::floor(box.left)), static_cast<long>(std::floor(box.top))};
}

inline std::uint8_t sample(const GrayImage& image, Frame f, double x, double y)
{
    long ix = static_cast<long>(std::floor(x + 0.5)) + f.ox;
    long iy = static_cast<long>(std::floor(y + 0.5)) + f.oy;
    ix = std::clamp(ix, 0L, static_cast<long>(image.width()) - 1);
    iy = std::clamp(iy, 0L, static_cast<long>(image.height()) - 1);
    return image.at(static_cast<int>(ix), static_cast<int>(iy));
}

void extract_into(const GrayImage& image, Frame frame, const Shape68& current, const LinearSimilarity& lin,
                  std::span<const FeaturePoint> pool, std::uint8_t* out)
{
    for (std::size_t k = 0; k < pool.size(); ++k)
    {
        const Point2 loc = current[pool[k].anchor] + lin(pool[k].offset);
        out[k] = sample(image, frame, loc.x, loc.y);
    }
}

Shape68 shifted(const Shape68& s, double dx, double dy)
{
    Shape68 out = s;
    for (auto& p : out)
    {
        p = {p.x + dx, p.y + dy};
    }
    return out;
}

BoundingBox local_box(const BoundingBox& box, Frame f)
{
    return {box.left - static_cast<double>(f.ox), box.top - static_cast<double>(f.oy), box.width, box.height};
}

Shape68 fit_to_box(const Shape68& unit_shape, const BoundingBox& box)
{
    Shape68 out;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        out[i] = box.from_unit(unit_shape[i]);
    }
    return out;
}

void apply_delta(Shape68& shape, const LinearSimilarity& lin, const double* delta)
{
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        shape[i] = shape[i] + lin({delta[2 * i], delta[2 * i + 1]});
    }
}

struct Candidate
{
    SplitNode split;
    double score = -1.0;
    std::size_t left_count = 0;
};

struct TreeFit
{
    RegressionTree tree;
    std::vector<std::uint32_t> leaf_of_sample;
};

// Fits one tree to the residual rows. Candidate generation consumes `rng`
// sequentially; scoring may run in parallel since each candidate is
// scored independently.
TreeFit fit_tree(std::span<const std::uint8_t> features, std::size_t pool_size, std::span<const double> residuals,
                 std::size_t n_samples, std::span<const Point2> pool_locations, const TrainParams& params, Rng& rng,
                 unsigned threads)
{
    const std::uint32_t depth = static_cast<std::uint32_t>(params.tree_depth);
    const std::size_t internal = (std::size_t{1} << depth) - 1;
    const std::size_t total_nodes = 2 * internal + 1;
    const std::size_t m = static_cast<std::size_t>(params.min_samples_per_leaf);

    TreeFit fit;
    fit.tree.depth = depth;
    fit.tree.splits.assign(internal, SplitNode{});
    fit.tree.leaves.assign((internal + 1) * kShapeDims, 0.0f);

    std::vector<std::vector<std::uint32_t>> members(total_nodes);
    std::vector<char> dead(total_nodes, 0);
    members[0].resize(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s)
    {
        members[0][s] = static_cast<std::uint32_t>(s);
    }

    const auto feature_diff = [&](std::uint32_t s, const SplitNode& sp) {
        const std::uint8_t* f = features.data() + static_cast<std::size_t>(s) * pool_size;
        return static_cast<double>(f[sp.u]) - static_cast<double>(f[sp.v]);
    };

    std::vector<Candidate> candidates(static_cast<std::size_t>(params.num_test_splits));
    std::vector<double> total(kShapeDims);
    for (std::size_t node = 0; node < internal; ++node)
    {
        auto& idx = members[node];
        const std::size_t left = 2 * node + 1;
        const std::size_t right = 2 * node + 2;
        if (dead[node] || idx.empty())
        {
            members[right] = std::move(idx);
            dead[left] = dead[right] = 1;
            continue;
        }

        for (auto& c : candidates)
        {
            std::uint32_t u, v;
            for (;;)
            {
                u = static_cast<std::uint32_t>(rng.below(pool_size));
                v = static_cast<std::uint32_t>(rng.below(pool_size));
                if (u == v)
                {
                    continue;
                }
                const double d = distance(pool_locations[u], pool_locations[v]);
                if (rng.uniform() < std::exp(-d / params.lambda))
                {
                    break;
                }
            }
            c.split.u = u;
            c.split.v = v;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::uint32_t s : idx)
            {
                const double d = feature_diff(s, c.split);
                lo = std::min(lo, d);
                hi = std::max(hi, d);
            }
            c.split.threshold = rng.uniform(lo, hi);
        }

        std::fill(total.begin(), total.end(), 0.0);
        for (std::uint32_t s : idx)
        {
            const double* r = residuals.data() + static_cast<std::size_t>(s) * kShapeDims;
            for (std::size_t d = 0; d < kShapeDims; ++d)
            {
                total[d] += r[d];
            }
        }
        parallel_for(candidates.size(), threads, [&](std::size_t ci) {
            Candidate& c = candidates[ci];
            std::vector<double> lsum(kShapeDims, 0.0);
            std::size_t nl = 0;
            for (std::uint32_t s : idx)
            {
                if (feature_diff(s, c.split) > c.split.threshold)
                {
                    const double* r = residuals.data() + static_cast<std::size_t>(s) * kShapeDims;
                    for (std::size_t d = 0; d < kShapeDims; ++d)
                    {
                        lsum[d] += r[d];
                    }
                    ++nl;
                }
            }
            c.left_count = nl;
            const std::size_t nr = idx.size() - nl;
            if (nl < m || nr < m)
            {
                c.score = -1.0;
                return;
            }
            double l2 = 0.0;
            double r2 = 0.0;
            for (std::size_t d = 0; d < kShapeDims; ++d)
            {
                const double rs = total[d] - lsum[d];
                l2 += lsum[d] * lsum[d];
                r2 += rs * rs;
            }
            c.score = l2 / static_cast<double>(nl) + r2 / static_cast<double>(nr);
        });

        const Candidate* best = nullptr;
        for (const auto& c : candidates)
        {
            if (c.score >= 0.0 && (best == nullptr || c.score > best->score))
            {
                best = &c;
            }
        }
        if (best == nullptr)
        {
            // No admissible split: the node acts as a leaf, routing everything right.
            members[right] = std::move(idx);
            dead[left] = dead[right] = 1;
            continue;
        }
        fit.tree.splits[node] = best->split;
        members[left].reserve(best->left_count);
        members[right].reserve(idx.size() - best->left_count);
        for (std::uint32_t s : idx)
        {
            (feature_diff(s, best->split) > best->split.threshold ? members[left] : members[right]).push_back(s);
        }
        idx.clear();
        idx.shrink_to_fit();
    }

    fit.leaf_of_sample.assign(n_samples, 0);
    std::vector<double> acc(kShapeDims);
    for (std::size_t leaf = 0; leaf <= internal; ++leaf)
    {
        const auto& idx = members[internal + leaf];
        if (idx.empty())
        {
            continue;
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::uint32_t s : idx)
        {
            fit.leaf_of_sample[s] = static_cast<std::uint32_t>(leaf);
            const double* r = residuals.data() + static_cast<std::size_t>(s) * kShapeDims;
            for (std::size_t d = 0; d < kShapeDims; ++d)
            {
                acc[d] += r[d];
            }
        }
        const double scale = params.shrinkage / static_cast<double>(idx.size());
        float* out = fit.tree.leaves.data() + leaf * kShapeDims;
        for (std::size_t d = 0; d < kShapeDims; ++d)
        {
            out[d] = static_cast<float>(acc[d] * scale);
        }
    }
    return fit;
}

double shape_nrmse(const Shape68& estimate, const Shape68& truth)
{
    return nrmse(estimate, truth);
}

} // namespace

std::vector<std::uint8_t> extract_features(const GrayImage& image, const Shape68& current_shape,
                                           std::span<const FeaturePoint> pool, const Shape68& mean_shape)
{
    if (image.empty())
    {
        throw std::invalid_argument("extract_features: empty image");
    }
    const LinearSimilarity lin = procrustes_linear(mean_shape.points(), current_shape.points());
    std::vector<std::uint8_t> out(pool.size());
    extract_into(image, Frame{}, current_shape, lin, pool, out.data());
    return out;
}

ShapePredictorModel train(std::span<const LabeledImage> dataset, const TrainParams& params,
                          const TrainOptions& options)
{
    params.validate();
    if (dataset.empty())
    {
        throw EmptyDataset("training set is empty");
    }
    std::vector<Shape68> truths;
    std::vector<BoundingBox> boxes;
    for (const auto& ex : dataset)
    {
        if (!ex.ground_truth)
        {
            throw MissingGroundTruth("training image without ground truth: " + ex.id);
        }
        if (!ex.box.valid())
        {
            throw InvalidBox("training image with invalid box: " + ex.id);
        }
        if (ex.image.empty())
        {
            throw EmptyDataset("training image without pixels: " + ex.id);
        }
        truths.push_back(*ex.ground_truth);
        boxes.push_back(ex.box);
    }
    const Shape68 mean = compute_mean_shape(truths, boxes);

    const std::size_t n_images = dataset.size();
    const std::size_t R = static_cast<std::size_t>(params.oversampling);
    const std::size_t n_samples = n_images * R;
    const std::size_t P = static_cast<std::size_t>(params.feature_pool_size);

    std::vector<Frame> frames(n_images);
    std::vector<Shape68> local_truth(n_images);
    for (std::size_t i = 0; i < n_images; ++i)
    {
        frames[i] = frame_for(boxes[i]);
        local_truth[i] = shifted(truths[i], -static_cast<double>(frames[i].ox), -static_cast<double>(frames[i].oy));
    }

    // Initial estimates: the mean shape, then other images' truths, all in this image's box.
    std::vector<std::uint32_t> image_of(n_samples);
    std::vector<Shape68> current(n_samples);
    {
        Rng rng(derive_seed(params.seed, 0));
        for (std::size_t i = 0; i < n_images; ++i)
        {
            const BoundingBox lb = local_box(boxes[i], frames[i]);
            for (std::size_t r = 0; r < R; ++r)
            {
                const std::size_t s = i * R + r;
                image_of[s] = static_cast<std::uint32_t>(i);
                if (r == 0 || n_images == 1)
                {
                    current[s] = fit_to_box(mean, lb);
                    continue;
                }
                std::size_t j = static_cast<std::size_t>(rng.below(n_images - 1));
                if (j >= i)
                {
                    ++j;
                }
                Shape68 init;
                for (std::size_t k = 0; k < kNumLandmarks; ++k)
                {
                    init[k] = lb.from_unit(boxes[j].to_unit(truths[j][k]));
                }
                current[s] = init;
            }
        }
    }

    const auto mean_train_nrmse = [&]() {
        std::vector<double> errs(n_samples);
        parallel_for(n_samples, options.threads,
                     [&](std::size_t s) { errs[s] = shape_nrmse(current[s], local_truth[image_of[s]]); });
        double sum = 0.0;
        for (double e : errs)
        {
            sum += e;
        }
        return sum / static_cast<double>(n_samples);
    };

    ShapePredictorModel model;
    model.mean_shape = mean;
    model.params = params;

    double previous = mean_train_nrmse();
    if (options.progress)
    {
        options.progress({0, params.cascade_depth, previous});
    }

    std::vector<std::uint8_t> features(n_samples * P);
    std::vector<double> residuals(n_samples * kShapeDims);
    std::vector<LinearSimilarity> lins(n_samples);

    for (int t = 0; t < params.cascade_depth; ++t)
    {
        CascadeStage stage;
        stage.pool = sample_feature_pool(mean, params.feature_pool_size, params.padding,
                                         derive_seed(params.seed, 1000 + static_cast<std::uint64_t>(t)));
        std::vector<Point2> pool_locations;
        pool_locations.reserve(P);
        for (const auto& f : stage.pool)
        {
            pool_locations.push_back(feature_location(mean, f));
        }

        parallel_for(n_samples, options.threads, [&](std::size_t s) {
            const std::size_t i = image_of[s];
            lins[s] = procrustes_linear(mean.points(), current[s].points());
            extract_into(dataset[i].image, frames[i], current[s], lins[s], stage.pool, features.data() + s * P);
            const LinearSimilarity inv = lins[s].inverse();
            double* r = residuals.data() + s * kShapeDims;
            for (std::size_t k = 0; k < kNumLandmarks; ++k)
            {
                const Point2 d = inv(local_truth[i][k] - current[s][k]);
                r[2 * k] = d.x;
                r[2 * k + 1] = d.y;
            }
        });

        Rng rng(derive_seed(params.seed, 2000 + static_cast<std::uint64_t>(t)));
        stage.trees.reserve(static_cast<std::size_t>(params.trees_per_cascade));
        for (int k = 0; k < params.trees_per_cascade; ++k)
        {
            TreeFit fit = fit_tree(features, P, residuals, n_samples, pool_locations, params, rng, options.threads);
            parallel_for(n_samples, options.threads, [&](std::size_t s) {
                const auto leaf = fit.tree.leaf(fit.leaf_of_sample[s]);
                double delta[kShapeDims];
                double* r = residuals.data() + s * kShapeDims;
                for (std::size_t d = 0; d < kShapeDims; ++d)
                {
                    delta[d] = static_cast<double>(leaf[d]);
                    r[d] -= delta[d];
                }
                apply_delta(current[s], lins[s], delta);
            });
            stage.trees.push_back(std::move(fit.tree));
        }
        model.cascades.push_back(std::move(stage));

        const double now = mean_train_nrmse();
        if (options.progress)
        {
            options.progress({t + 1, params.cascade_depth, now});
        }
        // NRMSE is tracked in percent; the tolerance applies to the unscaled ratio.
        if (now / 100.0 > previous / 100.0 + 1e-12)
        {
            std::ostringstream msg;
            msg.precision(17);
            msg << "training NRMSE increased at cascade stage " << (t + 1) << ": " << previous << " -> " << now
                << " (samples=" << n_samples << ", shrinkage=" << params.shrinkage << ")";
            throw TrainingDiverged(msg.str());
        }
        previous = now;
    }
    return model;
}

Shape68 predict(const ShapePredictorModel& model, const GrayImage& image, const BoundingBox& box)
{
    if (!box.valid())
    {
        throw InvalidBox("prediction box must have positive width and height");
    }
    if (image.empty())
    {
        throw std::invalid_argument("predict: empty image");
    }
    const Frame frame = frame_for(box);
    Shape68 current = fit_to_box(model.mean_shape, local_box(box, frame));
    std::vector<std::uint8_t> features;
    double delta[kShapeDims];
    for (const auto& stage : model.cascades)
    {
        const LinearSimilarity lin = procrustes_linear(model.mean_shape.points(), current.points());
        features.resize(stage.pool.size());
        extract_into(image, frame, current, lin, stage.pool, features.data());
        std::fill(std::begin(delta), std::end(delta), 0.0);
        for (const auto& tree : stage.trees)
        {
            const auto leaf = tree.leaf(tree.leaf_index(features));
            for (std::size_t d = 0; d < kShapeDims; ++d)
            {
                delta[d] += static_cast<double>(leaf[d]);
            }
        }
        apply_delta(current, lin, delta);
    }
    return shifted(current, static_cast<double>(frame.ox), static_cast<double>(frame.oy));
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'P', 'L', 'M'};

class ByteWriter
{
public:
    void u32(std::uint32_t v)
    {
        for (int k = 0; k < 4; ++k)
        {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
        }
    }
    void u64(std::uint64_t v)
    {
        for (int k = 0; k < 8; ++k)
        {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader
{
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t remaining() const { return in_.size() - pos_; }
    void need(std::size_t n, const char* what) const
    {
        if (remaining() < n)
        {
            throw ModelFormatError(std::string("truncated model stream while reading ") + what);
        }
    }
    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
        {
            v |= static_cast<std::uint32_t>(in_[pos_ + k]) << (8 * k);
        }
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what)
    {
        need(8, what);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k)
        {
            v |= static_cast<std::uint64_t>(in_[pos_ + k]) << (8 * k);
        }
        pos_ += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    void raw(char* out, std::size_t n, const char* what)
    {
        need(n, what);
        std::memcpy(out, in_.data() + pos_, n);
        pos_ += n;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> serialize(const ShapePredictorModel& model)
{
    ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(model.format_version);
    for (const auto& p : model.mean_shape)
    {
        w.f64(p.x);
        w.f64(p.y);
    }
    w.u32(static_cast<std::uint32_t>(model.cascades.size()));
    for (const auto& stage : model.cascades)
    {
        w.u32(static_cast<std::uint32_t>(stage.pool.size()));
        for (const auto& f : stage.pool)
        {
            w.u32(f.anchor);
            w.f64(f.offset.x);
            w.f64(f.offset.y);
        }
        w.u32(static_cast<std::uint32_t>(stage.trees.size()));
        for (const auto& tree : stage.trees)
        {
            w.u32(tree.depth);
            for (const auto& s : tree.splits)
            {
                w.u32(s.u);
                w.u32(s.v);
                w.f64(s.threshold);
            }
            for (float v : tree.leaves)
            {
                w.f32(v);
            }
        }
    }
    return w.take();
}

ShapePredictorModel deserialize(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
    {
        throw ModelFormatError("bad magic: not a model file");
    }
    ShapePredictorModel model;
    model.format_version = r.u32("format version");
    if (model.format_version != ShapePredictorModel::kFormatVersion)
    {
        throw ModelFormatError("unsupported version " + std::to_string(model.format_version));
    }
    for (auto& p : model.mean_shape)
    {
        p.x = r.f64("mean shape");
        p.y = r.f64("mean shape");
    }
    const std::uint32_t T = r.u32("cascade count");
    model.cascades.reserve(std::min<std::size_t>(T, r.remaining() / 8));
    std::uint32_t K_seen = 0;
    std::uint32_t D_seen = 0;
    std::uint32_t P_seen = 0;
    for (std::uint32_t t = 0; t < T; ++t)
    {
        CascadeStage stage;
        const std::uint32_t P = r.u32("pool size");
        r.need(static_cast<std::size_t>(P) * 20, "feature pool");
        stage.pool.resize(P);
        for (auto& f : stage.pool)
        {
            f.anchor = r.u32("feature anchor");
            f.offset.x = r.f64("feature offset");
            f.offset.y = r.f64("feature offset");
        }
        const std::uint32_t K = r.u32("tree count");
        stage.trees.reserve(std::min<std::size_t>(K, r.remaining() / 4));
        for (std::uint32_t k = 0; k < K; ++k)
        {
            RegressionTree tree;
            tree.depth = r.u32("tree depth");
            if (tree.depth < 1 || tree.depth > 20)
            {
                throw ModelFormatError("tree depth " + std::to_string(tree.depth) + " out of range");
            }
            const std::size_t leaves = tree.num_leaves();
            r.need((leaves - 1) * 16 + leaves * kShapeDims * 4, "tree body");
            tree.splits.resize(leaves - 1);
            for (auto& s : tree.splits)
            {
                s.u = r.u32("split");
                s.v = r.u32("split");
                s.threshold = r.f64("split");
            }
            tree.leaves.resize(leaves * kShapeDims);
            for (auto& v : tree.leaves)
            {
                v = r.f32("leaf");
            }
            D_seen = tree.depth;
            stage.trees.push_back(std::move(tree));
        }
        K_seen = K;
        P_seen = P;
        model.cascades.push_back(std::move(stage));
    }
    if (r.remaining() != 0)
    {
        throw ModelFormatError("trailing bytes after model body");
    }
    model.validate();
    model.params.cascade_depth = static_cast<int>(T);
    if (T > 0)
    {
        model.params.trees_per_cascade = static_cast<int>(K_seen);
        model.params.tree_depth = static_cast<int>(D_seen);
        model.params.feature_pool_size = static_cast<int>(P_seen);
    }
    return model;
}

void save_model(const ShapePredictorModel& model, const std::filesystem::path& path)
{
    const auto bytes = serialize(model);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
        {
            throw IoError("cannot write " + tmp);
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
        {
            throw IoError("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

ShapePredictorModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw IoError("cannot open model " + path.string());
    }
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize(bytes);
}

std::string model_metadata(const ShapePredictorModel& model, const std::string& corpus_description)
{
    const TrainParams& p = model.params;
    std::ostringstream out;
    out.precision(17);
    out << "format_version=" << model.format_version << "\n"
        << "cascade_depth=" << p.cascade_depth << "\n"
        << "trees_per_cascade=" << p.trees_per_cascade << "\n"
        << "tree_depth=" << p.tree_depth << "\n"
        << "min_samples_per_leaf=" << p.min_samples_per_leaf << "\n"
        << "feature_pool_size=" << p.feature_pool_size << "\n"
        << "oversampling=" << p.oversampling << "\n"
        << "shrinkage=" << p.shrinkage << "\n"
        << "lambda=" << p.lambda << "\n"
        << "num_test_splits=" << p.num_test_splits << "\n"
        << "padding=" << p.padding << "\n"
        << "seed=" << p.seed << "\n"
        << "corpus=" << corpus_description << "\n";
    return out.str();
}

} // namespace palsylm

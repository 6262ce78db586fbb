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
#include "palsylm/geometry.hpp"
#include "palsylm/image.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace palsylm {

/// Hyperparameters of the cascade. Defaults follow the common reference
/// settings for ensemble-of-regression-trees face alignment.
struct TrainParams
{
    int cascade_depth = 10;        // T, number of cascade stages
    int trees_per_cascade = 500;   // K
    int tree_depth = 4;            // D
    int min_samples_per_leaf = 5;  // m
    int feature_pool_size = 400;   // P
    int oversampling = 20;         // R, initial shapes per image
    double shrinkage = 0.1;        // nu
    double lambda = 0.1;           // feature-pair distance prior
    int num_test_splits = 20;      // S, candidate splits per node
    double padding = 0.1;          // pool sampling margin
    std::uint64_t seed = 0;

    /// Throws InvalidParams when an invariant is violated.
    void validate() const;

    friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

inline constexpr std::size_t kShapeDims = 2 * kNumLandmarks;

/// Pixel-difference feature location, relative to a mean-shape landmark.
struct FeaturePoint
{
    std::uint32_t anchor = 0;
    Point2 offset; // mean-shape normalized units

    friend bool operator==(const FeaturePoint&, const FeaturePoint&) = default;
};

struct SplitNode
{
    std::uint32_t u = 0;
    std::uint32_t v = 0;
    double threshold = 0.0; // (I_u - I_v) > threshold goes left

    friend bool operator==(const SplitNode&, const SplitNode&) = default;
};

/// Complete binary tree; node k has children 2k+1 (left) and 2k+2 (right).
struct RegressionTree
{
    std::uint32_t depth = 0;
    std::vector<SplitNode> splits; // 2^D - 1, breadth-first
    std::vector<float> leaves;     // 2^D blocks of 136 (x0, y0, x1, y1, ...)

    std::size_t num_leaves() const { return std::size_t{1} << depth; }
    std::span<const float> leaf(std::size_t k) const { return {leaves.data() + k * kShapeDims, kShapeDims}; }

    /// Index of the leaf reached with the given feature intensities.
    std::size_t leaf_index(std::span<const std::uint8_t> features) const
    {
        std::size_t node = 0;
        const std::size_t internal = splits.size();
        while (node < internal)
        {
            const SplitNode& s = splits[node];
            const double diff = static_cast<double>(features[s.u]) - static_cast<double>(features[s.v]);
            node = diff > s.threshold ? 2 * node + 1 : 2 * node + 2;
        }
        return node - internal;
    }

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct CascadeStage
{
    std::vector<FeaturePoint> pool;
    std::vector<RegressionTree> trees;

    friend bool operator==(const CascadeStage&, const CascadeStage&) = default;
};

struct ShapePredictorModel
{
    static constexpr std::uint32_t kFormatVersion = 1;

    Shape68 mean_shape; // unit frame of the bounding box
    std::vector<CascadeStage> cascades;
    TrainParams params;
    std::uint32_t format_version = kFormatVersion;

    /// Model that only places the mean shape in the box.
    static ShapePredictorModel initial(const Shape68& mean_shape);

    /// Structural checks (anchor/feature indices, node and leaf counts,
    /// finite values). Throws ModelFormatError.
    void validate() const;

    friend bool operator==(const ShapePredictorModel&, const ShapePredictorModel&) = default;
};

/// In-memory training/evaluation example.
struct LabeledImage
{
    std::string id;
    GrayImage image;
    BoundingBox box;
    std::optional<Shape68> ground_truth;
};

/// Loads pixels for every image of `index`, in order.
std::vector<LabeledImage> load_labeled_images(const DatasetIndex& index, unsigned threads = 0);

/// Mean of the ground truths mapped into their boxes' unit frames.
Shape68 compute_mean_shape(std::span<const Shape68> shapes, std::span<const BoundingBox> boxes);

/// Pool entry for a location in the mean-shape frame: nearest landmark as
/// anchor (lowest index on ties) and the residual offset.
FeaturePoint anchor_feature_point(const Shape68& mean_shape, Point2 location);
Point2 feature_location(const Shape68& mean_shape, const FeaturePoint& f);

std::vector<FeaturePoint> sample_feature_pool(const Shape68& mean_shape, int pool_size, double padding,
                                              std::uint64_t seed);

/// Intensities at the pool points warped onto `current_shape` (image frame).
std::vector<std::uint8_t> extract_features(const GrayImage& image, const Shape68& current_shape,
                                           std::span<const FeaturePoint> pool, const Shape68& mean_shape);

struct TrainProgress
{
    int stage = 0;           // 0 = initialization, then 1..T
    int total_stages = 0;
    double train_nrmse = 0;  // mean over all oversampled training samples, percent
};

struct TrainOptions
{
    unsigned threads = 0; // 0 = all cores; never affects the result
    std::function<void(const TrainProgress&)> progress;
};

/// Gradient-boosted cascade training. Throws EmptyDataset,
/// MissingGroundTruth, InvalidParams, or TrainingDiverged if the mean
/// training NRMSE ever increases between stages.
ShapePredictorModel train(std::span<const LabeledImage> dataset, const TrainParams& params,
                          const TrainOptions& options = {});

/// Throws InvalidBox for non-positive box dimensions.
Shape68 predict(const ShapePredictorModel& model, const GrayImage& image, const BoundingBox& box);

// --- serialization ----------------------------------------------------------

std::vector<std::uint8_t> serialize(const ShapePredictorModel& model);
/// Throws ModelFormatError on bad magic, unsupported version, truncation,
/// trailing bytes or structural mismatch.
ShapePredictorModel deserialize(std::span<const std::uint8_t> bytes);

void save_model(const ShapePredictorModel& model, const std::filesystem::path& path);
ShapePredictorModel load_model(const std::filesystem::path& path);

/// key=value sidecar echoing the training parameters and corpus.
std::string model_metadata(const ShapePredictorModel& model, const std::string& corpus_description);

} // namespace palsylm

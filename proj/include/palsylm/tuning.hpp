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

#include "palsylm/regressor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace palsylm {

/// Value lists for the four searched axes; every other TrainParams field
/// comes from `base`.
struct GridSpec
{
    std::vector<int> trees_per_cascade;
    std::vector<int> tree_depth;
    std::vector<int> min_samples_per_leaf;
    std::vector<int> feature_pool_size;
    TrainParams base;
    std::uint64_t seed = 0;
    /// When set, every permutation trains with `seed` itself instead of a
    /// per-permutation derived seed (common random numbers).
    bool common_random_numbers = false;

    std::size_t size() const;
    /// Permutation `index` in nested order: trees_per_cascade outermost,
    /// feature_pool_size innermost.
    TrainParams at(std::size_t index) const;
    void validate() const;
};

/// key=value-list lines, e.g. "trees_per_cascade=100,200,300". Fixed keys
/// (cascade_depth, oversampling, shrinkage, lambda, num_test_splits,
/// padding, seed, common_random_numbers) take a single value.
GridSpec parse_grid(std::string_view text);

/// Default stand-in grid: 5 x 4 x 4 x 5 = 400 permutations around the
/// reference defaults.
GridSpec default_grid();

struct TuneRecord
{
    std::size_t index = 0;
    TrainParams params;
    double nrmse = 0.0; // mean validation NRMSE, percent
    double seconds = 0.0;
    std::size_t model_bytes = 0;
};

struct TuneResult
{
    std::vector<TuneRecord> records; // ordered by permutation index
    std::size_t winner = 0;          // index into records

    const TuneRecord& best() const { return records.at(winner); }
};

struct TuneOptions
{
    unsigned threads = 0; // permutations run concurrently; results do not depend on it
    std::function<void(const TuneRecord&, std::size_t total)> progress;
};

/// Trains one model per permutation and keeps the lowest validation NRMSE;
/// ties go to the smaller model, then to the lexicographically smaller
/// (trees, depth, min_samples, pool) tuple. Fails fast on the first
/// permutation error.
TuneResult grid_search(std::span<const LabeledImage> train_set, std::span<const LabeledImage> validation_set,
                       const GridSpec& grid, const TuneOptions& options = {});

/// Deterministic CSV: one row per permutation plus a trailing winner line.
std::string tune_report_csv(const TuneResult& result);
/// Wall-clock seconds per permutation (kept out of the deterministic report).
std::string tune_timing_csv(const TuneResult& result);

} // namespace palsylm

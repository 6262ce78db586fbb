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
#include "palsylm/tuning.hpp"

#include "palsylm/errors.hpp"
#include "palsylm/evaluation.hpp"
#include "palsylm/parallel.hpp"
#include "palsylm/random.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <tuple>

namespace palsylm {

std::size_t GridSpec::size() const
{
    return trees_per_cascade.size() * tree_depth.size() * min_samples_per_leaf.size() * feature_pool_size.size();
}

TrainParams GridSpec::at(std::size_t index) const
{
    TrainParams p = base;
    std::size_t rest = index;
    p.feature_pool_size = feature_pool_size[rest % feature_pool_size.size()];
    rest /= feature_pool_size.size();
    p.min_samples_per_leaf = min_samples_per_leaf[rest % min_samples_per_leaf.size()];
    rest /= min_samples_per_leaf.size();
    p.tree_depth = tree_depth[rest % tree_depth.size()];
    rest /= tree_depth.size();
    p.trees_per_cascade = trees_per_cascade[rest];
    p.seed = common_random_numbers ? seed : derive_seed(seed, index);
    return p;
}

void GridSpec::validate() const
{
    if (trees_per_cascade.empty() || tree_depth.empty() || min_samples_per_leaf.empty() ||
        feature_pool_size.empty())
    {
        throw InvalidParams("every grid axis needs at least one value");
    }
    for (std::size_t i = 0; i < size(); ++i)
    {
        at(i).validate();
    }
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    {
        s.remove_suffix(1);
    }
    return s;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line)
{
    tok = trim(tok);
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    {
        throw ParseError("bad number '" + std::string(tok) + "'", line);
    }
    return v;
}

std::vector<int> parse_list(std::string_view value, std::size_t line)
{
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= value.size())
    {
        const std::size_t comma = value.find(',', start);
        const auto tok = value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        out.push_back(parse_number<int>(tok, line));
        if (comma == std::string_view::npos)
        {
            break;
        }
        start = comma + 1;
    }
    return out;
}

} // namespace

GridSpec parse_grid(std::string_view text)
{
    GridSpec grid;
    grid.trees_per_cascade.clear();
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size())
    {
        const std::size_t nl = text.find('\n', pos);
        const auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#')
        {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
        {
            throw ParseError("expected key=value", line_no);
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key == "trees_per_cascade") grid.trees_per_cascade = parse_list(value, line_no);
        else if (key == "tree_depth") grid.tree_depth = parse_list(value, line_no);
        else if (key == "min_samples_per_leaf") grid.min_samples_per_leaf = parse_list(value, line_no);
        else if (key == "feature_pool_size") grid.feature_pool_size = parse_list(value, line_no);
        else if (key == "cascade_depth") grid.base.cascade_depth = parse_number<int>(value, line_no);
        else if (key == "oversampling") grid.base.oversampling = parse_number<int>(value, line_no);
        else if (key == "num_test_splits") grid.base.num_test_splits = parse_number<int>(value, line_no);
        else if (key == "shrinkage") grid.base.shrinkage = parse_number<double>(value, line_no);
        else if (key == "lambda") grid.base.lambda = parse_number<double>(value, line_no);
        else if (key == "padding") grid.base.padding = parse_number<double>(value, line_no);
        else if (key == "seed") grid.seed = parse_number<std::uint64_t>(value, line_no);
        else if (key == "common_random_numbers") grid.common_random_numbers = parse_number<int>(value, line_no) != 0;
        else throw ParseError("unknown grid key '" + std::string(key) + "'", line_no);
    }
    const auto fill = [](std::vector<int>& axis, int fallback) {
        if (axis.empty())
        {
            axis.push_back(fallback);
        }
    };
    const TrainParams defaults;
    fill(grid.trees_per_cascade, defaults.trees_per_cascade);
    fill(grid.tree_depth, defaults.tree_depth);
    fill(grid.min_samples_per_leaf, defaults.min_samples_per_leaf);
    fill(grid.feature_pool_size, defaults.feature_pool_size);
    grid.validate();
    return grid;
}

GridSpec default_grid()
{
    GridSpec g;
    g.trees_per_cascade = {100, 200, 300, 400, 500};
    g.tree_depth = {2, 3, 4, 5};
    g.min_samples_per_leaf = {1, 5, 10, 20};
    g.feature_pool_size = {100, 200, 300, 400, 500};
    return g;
}

TuneResult grid_search(std::span<const LabeledImage> train_set, std::span<const LabeledImage> validation_set,
                       const GridSpec& grid, const TuneOptions& options)
{
    grid.validate();
    if (train_set.empty() || validation_set.empty())
    {
        throw EmptyDataset("grid search needs non-empty training and validation sets");
    }
    for (const auto& ex : validation_set)
    {
        if (!ex.ground_truth)
        {
            throw MissingGroundTruth("validation image without ground truth: " + ex.id);
        }
    }
    const std::size_t n = grid.size();
    TuneResult result;
    result.records.resize(n);
    std::mutex progress_mutex;
    std::atomic<bool> failed{false};
    parallel_for(n, options.threads, [&](std::size_t i) {
        if (failed.load())
        {
            return;
        }
        TuneRecord& rec = result.records[i];
        rec.index = i;
        rec.params = grid.at(i);
        const auto start = std::chrono::steady_clock::now();
        const auto annotate = [&](const std::exception& e) {
            char head[160];
            std::snprintf(head, sizeof head, "permutation %zu (trees=%d depth=%d min_leaf=%d pool=%d): ", i,
                          rec.params.trees_per_cascade, rec.params.tree_depth, rec.params.min_samples_per_leaf,
                          rec.params.feature_pool_size);
            return std::string(head) + e.what();
        };
        const auto fail = [&](auto&& error) {
            failed.store(true);
            throw error;
        };
        try
        {
            TrainOptions train_options;
            train_options.threads = 1;
            const ShapePredictorModel model = train(train_set, rec.params, train_options);
            const auto errors = evaluate_model(model, validation_set, "candidate", {}, 1);
            double sum = 0.0;
            for (const auto& e : errors)
            {
                sum += e.nrmse;
            }
            rec.nrmse = sum / static_cast<double>(errors.size());
            rec.model_bytes = serialize(model).size();
        }
        catch (const InvalidParams& e)
        {
            fail(InvalidParams(annotate(e)));
        }
        catch (const TrainingDiverged& e)
        {
            fail(TrainingDiverged(annotate(e)));
        }
        catch (const Error& e)
        {
            fail(Error(annotate(e)));
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (options.progress)
        {
            std::lock_guard lock(progress_mutex);
            options.progress(rec, n);
        }
    });

    const auto key = [](const TuneRecord& r) {
        return std::make_tuple(r.nrmse, r.model_bytes, r.params.trees_per_cascade, r.params.tree_depth,
                               r.params.min_samples_per_leaf, r.params.feature_pool_size);
    };
    for (std::size_t i = 1; i < n; ++i)
    {
        if (key(result.records[i]) < key(result.records[result.winner]))
        {
            result.winner = i;
        }
    }
    return result;
}

std::string tune_report_csv(const TuneResult& result)
{
    std::ostringstream out;
    out << "index,trees_per_cascade,tree_depth,min_samples_per_leaf,feature_pool_size,cascade_depth,oversampling,"
           "shrinkage,lambda,num_test_splits,padding,seed,nrmse,model_bytes\n";
    const auto row = [&](const TuneRecord& r) {
        char buf[512];
        std::snprintf(buf, sizeof buf, "%zu,%d,%d,%d,%d,%d,%d,%.17g,%.17g,%d,%.17g,%llu,%.17g,%zu", r.index,
                      r.params.trees_per_cascade, r.params.tree_depth, r.params.min_samples_per_leaf,
                      r.params.feature_pool_size, r.params.cascade_depth, r.params.oversampling, r.params.shrinkage,
                      r.params.lambda, r.params.num_test_splits, r.params.padding,
                      static_cast<unsigned long long>(r.params.seed), r.nrmse, r.model_bytes);
        return std::string(buf);
    };
    for (const auto& r : result.records)
    {
        out << row(r) << '\n';
    }
    if (!result.records.empty())
    {
        out << "winner," << row(result.best()) << '\n';
    }
    return out.str();
}

std::string tune_timing_csv(const TuneResult& result)
{
    std::ostringstream out;
    out << "index,seconds\n";
    char buf[64];
    for (const auto& r : result.records)
    {
        std::snprintf(buf, sizeof buf, "%zu,%.6f", r.index, r.seconds);
        out << buf << '\n';
    }
    return out.str();
}

} // namespace palsylm

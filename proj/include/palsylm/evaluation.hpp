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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace palsylm {

struct ShapePredictorModel;
struct LabeledImage;

/// Which landmark pair normalizes the error.
enum class Normalizer
{
    outer_eye_corners, // 36-45 (default)
    inner_eye_corners, // 39-42
    pupil_centroids,   // centroids of 36-41 and 42-47
};

/// Root-mean-square point error as percent of the ground truth's
/// normalizing distance. Throws DegenerateShape if that distance is zero.
double nrmse(const Shape68& predicted, const Shape68& ground_truth,
             Normalizer normalizer = Normalizer::outer_eye_corners);

// --- statistics --------------------------------------------------------------

/// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0.
double regularized_gamma_q(double a, double x);
/// Upper tail P(X > x) of a chi-square with `dof` degrees of freedom.
double chi_square_sf(double x, double dof);
/// Upper tail of the standard normal.
double normal_sf(double z);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct TestResult
{
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Kruskal-Wallis H with tie correction; p from chi-square(groups - 1).
/// Throws std::invalid_argument for < 2 groups, an empty group or N < 3,
/// DegenerateData when all values are equal.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// Wilcoxon signed-rank test on pairs (a, b), d = a - b, zeros dropped.
/// W = min(W+, W-). Two-sided p: exact by enumeration for n <= 20,
/// otherwise normal approximation with continuity and tie correction.
/// Throws DegenerateData when every difference is zero.
TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

/// Exact two-sided p for the non-zero differences `d`, any n: the share of
/// the 2^n sign assignments whose min(W+, W-) is <= the observed one.
double wilcoxon_exact_p(std::span<const double> differences);
/// Normal approximation used for n > 20.
double wilcoxon_normal_p(std::span<const double> differences);

// --- model evaluation --------------------------------------------------------

struct ImageError
{
    std::string image_id;
    Cohort cohort = Cohort::control;
    std::string model_id;
    double nrmse = 0.0; // percent
};

/// One ImageError per image, in dataset order. `cohorts` (optional)
/// supplies the cohort per image; otherwise control.
std::vector<ImageError> evaluate_model(const ShapePredictorModel& model, std::span<const LabeledImage> test_set,
                                       const std::string& model_id, std::span<const Cohort> cohorts = {},
                                       unsigned threads = 0, Normalizer normalizer = Normalizer::outer_eye_corners);

struct SummaryStats
{
    std::size_t n = 0;
    double mean = 0.0;
    double std_dev = 0.0; // sample standard deviation (n - 1)
};

SummaryStats summarize(std::span<const double> values);
/// "8.56 ± 2.16"
std::string format_mean_std(const SummaryStats& s);

struct CohortComparison
{
    std::string model_id;
    SummaryStats patient;
    SummaryStats control;
    std::optional<TestResult> kruskal_wallis; // empty when untestable
    std::string note;
    bool significant = false;
};

struct ModelComparison
{
    Cohort cohort = Cohort::patient;
    SummaryStats model_a;
    SummaryStats model_b;
    std::optional<TestResult> wilcoxon;
    std::string note; // e.g. "no difference" when every pair is equal
    bool significant = false;
};

struct EvaluationReport
{
    std::string model_a;
    std::string model_b;
    double alpha = 0.01;
    std::vector<CohortComparison> between_cohorts; // one per model
    std::vector<ModelComparison> between_models;   // one per cohort present
    std::vector<ImageError> errors;                // A's then B's
};

/// Fills the report: per model, patients vs controls (Kruskal-Wallis); per
/// cohort, model A vs model B paired by image id (Wilcoxon). Throws
/// PairingError unless both lists cover the same image ids.
EvaluationReport bias_report(std::span<const ImageError> model_a, std::span<const ImageError> model_b,
                             double alpha = 0.01);

std::string errors_csv(std::span<const ImageError> errors);
std::string report_markdown(const EvaluationReport& report);

} // namespace palsylm

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
#include "palsylm/evaluation.hpp"

#include "palsylm/errors.hpp"
#include "palsylm/parallel.hpp"
#include "palsylm/regressor.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace palsylm {

namespace {

double normalizing_distance(const Shape68& s, Normalizer normalizer)
{
    switch (normalizer)
    {
    case Normalizer::outer_eye_corners: return interocular_distance(s);
    case Normalizer::inner_eye_corners: {
        const double d = distance(s[39], s[42]);
        if (!(d > 0.0))
        {
            throw DegenerateShape("inner eye corners coincide");
        }
        return d;
    }
    case Normalizer::pupil_centroids: {
        const auto pts = s.points();
        const double d = distance(centroid(pts.subspan(36, 6)), centroid(pts.subspan(42, 6)));
        if (!(d > 0.0))
        {
            throw DegenerateShape("eye centroids coincide");
        }
        return d;
    }
    }
    throw std::invalid_argument("unknown normalizer");
}

} // namespace

double nrmse(const Shape68& predicted, const Shape68& ground_truth, Normalizer normalizer)
{
    const double norm_dist = normalizing_distance(ground_truth, normalizer);
    double sum = 0.0;
    for (std::size_t i = 0; i < kNumLandmarks; ++i)
    {
        sum += squared_norm(predicted[i] - ground_truth[i]);
    }
    return 100.0 * std::sqrt(sum / static_cast<double>(kNumLandmarks)) / norm_dist;
}

// --- special functions -----------------------------------------------------------

// Q(a, x) by the power series for P when x < a + 1, otherwise by the
// modified-Lentz continued fraction for Q directly.
double regularized_gamma_q(double a, double x)
{
    if (!(a > 0.0) || !(x >= 0.0))
    {
        throw std::invalid_argument("regularized_gamma_q: need a > 0 and x >= 0");
    }
    if (x == 0.0)
    {
        return 1.0;
    }
    if (std::isinf(x))
    {
        return 0.0;
    }
    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr int max_iter = 100000;
    const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
    if (x < a + 1.0)
    {
        double ap = a;
        double term = 1.0 / a;
        double sum = term;
        for (int n = 0; n < max_iter; ++n)
        {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps)
            {
                break;
            }
        }
        return 1.0 - sum * std::exp(log_prefactor);
    }
    constexpr double tiny = std::numeric_limits<double>::min() / eps;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < max_iter; ++i)
    {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps)
        {
            break;
        }
    }
    return std::exp(log_prefactor) * h;
}

double chi_square_sf(double x, double dof)
{
    if (!(dof > 0.0))
    {
        throw std::invalid_argument("chi_square_sf: dof must be positive");
    }
    if (x <= 0.0)
    {
        return 1.0;
    }
    return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

double normal_sf(double z)
{
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

std::vector<double> average_ranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size())
    {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]])
        {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
        {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

namespace {

// Sum of t^3 - t over tie groups of a sorted copy of `values`.
double tie_term(std::span<const double> values)
{
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    std::size_t i = 0;
    while (i < sorted.size())
    {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i])
        {
            ++j;
        }
        const double t = static_cast<double>(j - i + 1);
        acc += t * t * t - t;
        i = j + 1;
    }
    return acc;
}

} // namespace

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups)
{
    if (groups.size() < 2)
    {
        throw std::invalid_argument("kruskal_wallis: need at least two groups");
    }
    std::vector<double> all;
    for (const auto& g : groups)
    {
        if (g.empty())
        {
            throw std::invalid_argument("kruskal_wallis: empty group");
        }
        all.insert(all.end(), g.begin(), g.end());
    }
    const double N = static_cast<double>(all.size());
    if (all.size() < 3)
    {
        throw std::invalid_argument("kruskal_wallis: need at least three observations");
    }
    const double correction = 1.0 - tie_term(all) / (N * N * N - N);
    if (!(correction > 0.0))
    {
        throw DegenerateData("kruskal_wallis: all values are identical");
    }
    const auto ranks = average_ranks(all);
    double acc = 0.0;
    std::size_t offset = 0;
    for (const auto& g : groups)
    {
        double rank_sum = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k)
        {
            rank_sum += ranks[offset + k];
        }
        offset += g.size();
        acc += rank_sum * rank_sum / static_cast<double>(g.size());
    }
    double h = 12.0 / (N * (N + 1.0)) * acc - 3.0 * (N + 1.0);
    h /= correction;
    h = std::max(h, 0.0);
    return {h, chi_square_sf(h, static_cast<double>(groups.size() - 1))};
}

namespace {

struct SignedRanks
{
    std::vector<long> doubled; // 2 x average rank of |d|, always integral
    long w_plus2 = 0;
    long w_minus2 = 0;
};

SignedRanks signed_ranks(std::span<const double> d)
{
    std::vector<double> mags;
    mags.reserve(d.size());
    for (double v : d)
    {
        mags.push_back(std::abs(v));
    }
    const auto ranks = average_ranks(mags);
    SignedRanks out;
    for (std::size_t k = 0; k < d.size(); ++k)
    {
        const long r2 = std::lround(2.0 * ranks[k]);
        out.doubled.push_back(r2);
        (d[k] > 0.0 ? out.w_plus2 : out.w_minus2) += r2;
    }
    return out;
}

std::vector<double> nonzero_differences(std::span<const std::pair<double, double>> pairs)
{
    std::vector<double> d;
    for (const auto& [a, b] : pairs)
    {
        const double diff = a - b;
        if (!std::isfinite(diff))
        {
            throw std::invalid_argument("wilcoxon_signed_rank: non-finite value");
        }
        if (diff != 0.0)
        {
            d.push_back(diff);
        }
    }
    return d;
}

} // namespace

double wilcoxon_exact_p(std::span<const double> differences)
{
    if (differences.empty())
    {
        throw DegenerateData("wilcoxon: no non-zero differences");
    }
    const SignedRanks sr = signed_ranks(differences);
    const long total2 = sr.w_plus2 + sr.w_minus2;
    const long w2 = std::min(sr.w_plus2, sr.w_minus2);
    // counts[k] = number of sign assignments whose positive doubled-rank sum is k.
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long r2 : sr.doubled)
    {
        for (long k = reach; k >= 0; --k)
        {
            if (counts[k] != 0.0)
            {
                counts[k + r2] += counts[k];
            }
        }
        reach += r2;
    }
    double hits = 0.0;
    for (long k = 0; k <= total2; ++k)
    {
        if (k <= w2 || k >= total2 - w2)
        {
            hits += counts[k];
        }
    }
    return std::min(1.0, hits / std::ldexp(1.0, static_cast<int>(differences.size())));
}

double wilcoxon_normal_p(std::span<const double> differences)
{
    if (differences.empty())
    {
        throw DegenerateData("wilcoxon: no non-zero differences");
    }
    const SignedRanks sr = signed_ranks(differences);
    const double n = static_cast<double>(differences.size());
    const double w = 0.5 * static_cast<double>(std::min(sr.w_plus2, sr.w_minus2));
    const double mu = n * (n + 1.0) / 4.0;
    std::vector<double> mags;
    for (double v : differences)
    {
        mags.push_back(std::abs(v));
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(mags) / 48.0;
    if (!(var > 0.0))
    {
        throw DegenerateData("wilcoxon: zero variance");
    }
    const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
    return std::min(1.0, 2.0 * normal_sf(z));
}

TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs)
{
    const auto d = nonzero_differences(pairs);
    if (d.empty())
    {
        throw DegenerateData("wilcoxon_signed_rank: all differences are zero");
    }
    const SignedRanks sr = signed_ranks(d);
    TestResult out;
    out.statistic = 0.5 * static_cast<double>(std::min(sr.w_plus2, sr.w_minus2));
    out.p_value = d.size() <= 20 ? wilcoxon_exact_p(d) : wilcoxon_normal_p(d);
    return out;
}

// --- model evaluation ----------------------------------------------------------

std::vector<ImageError> evaluate_model(const ShapePredictorModel& model, std::span<const LabeledImage> test_set,
                                       const std::string& model_id, std::span<const Cohort> cohorts,
                                       unsigned threads, Normalizer normalizer)
{
    if (test_set.empty())
    {
        throw EmptyDataset("test set is empty");
    }
    if (!cohorts.empty() && cohorts.size() != test_set.size())
    {
        throw std::invalid_argument("evaluate_model: cohort list does not match the test set");
    }
    for (const auto& ex : test_set)
    {
        if (!ex.ground_truth)
        {
            throw MissingGroundTruth("test image without ground truth: " + ex.id);
        }
    }
    std::vector<ImageError> out(test_set.size());
    parallel_for(test_set.size(), threads, [&](std::size_t i) {
        const auto& ex = test_set[i];
        Shape68 predicted;
        try
        {
            predicted = predict(model, ex.image, ex.box);
        }
        catch (const InvalidBox& e)
        {
            throw InvalidBox(ex.id + ": " + e.what());
        }
        out[i] = {ex.id, cohorts.empty() ? Cohort::control : cohorts[i], model_id,
                  nrmse(predicted, *ex.ground_truth, normalizer)};
    });
    return out;
}

SummaryStats summarize(std::span<const double> values)
{
    SummaryStats s;
    s.n = values.size();
    if (values.empty())
    {
        return s;
    }
    double sum = 0.0;
    for (double v : values)
    {
        sum += v;
    }
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1)
    {
        double ss = 0.0;
        for (double v : values)
        {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.std_dev = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

std::string format_mean_std(const SummaryStats& s)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", s.mean, s.std_dev);
    return buf;
}

EvaluationReport bias_report(std::span<const ImageError> model_a, std::span<const ImageError> model_b, double alpha)
{
    if (model_a.empty() || model_b.empty())
    {
        throw EmptyDataset("bias_report: no errors to compare");
    }
    std::map<std::string, const ImageError*> by_id_b;
    for (const auto& e : model_b)
    {
        if (!by_id_b.emplace(e.image_id, &e).second)
        {
            throw PairingError("duplicate image id in model B errors: " + e.image_id);
        }
    }
    std::map<std::string, const ImageError*> by_id_a;
    for (const auto& e : model_a)
    {
        if (!by_id_a.emplace(e.image_id, &e).second)
        {
            throw PairingError("duplicate image id in model A errors: " + e.image_id);
        }
        const auto it = by_id_b.find(e.image_id);
        if (it == by_id_b.end())
        {
            throw PairingError("image " + e.image_id + " was evaluated by model A only");
        }
        if (it->second->cohort != e.cohort)
        {
            throw PairingError("image " + e.image_id + " has different cohorts in the two error lists");
        }
    }
    if (by_id_a.size() != by_id_b.size())
    {
        throw PairingError("model B was evaluated on images model A was not");
    }

    EvaluationReport report;
    report.model_a = model_a.front().model_id;
    report.model_b = model_b.front().model_id;
    report.alpha = alpha;

    for (const auto* errors : {&model_a, &model_b})
    {
        CohortComparison cmp;
        cmp.model_id = errors->front().model_id;
        std::vector<double> patient, control;
        for (const auto& e : *errors)
        {
            (e.cohort == Cohort::patient ? patient : control).push_back(e.nrmse);
        }
        cmp.patient = summarize(patient);
        cmp.control = summarize(control);
        if (patient.empty() || control.empty() || patient.size() + control.size() < 3)
        {
            cmp.note = "not tested (needs both cohorts)";
        }
        else
        {
            try
            {
                cmp.kruskal_wallis = kruskal_wallis({patient, control});
                cmp.significant = cmp.kruskal_wallis->p_value < alpha;
            }
            catch (const DegenerateData&)
            {
                cmp.note = "no difference";
            }
        }
        report.between_cohorts.push_back(std::move(cmp));
    }

    for (const Cohort cohort : {Cohort::patient, Cohort::control})
    {
        std::vector<std::pair<double, double>> pairs;
        std::vector<double> a_vals, b_vals;
        for (const auto& e : model_a)
        {
            if (e.cohort != cohort)
            {
                continue;
            }
            const double b = by_id_b.at(e.image_id)->nrmse;
            pairs.emplace_back(e.nrmse, b);
            a_vals.push_back(e.nrmse);
            b_vals.push_back(b);
        }
        if (pairs.empty())
        {
            continue;
        }
        ModelComparison cmp;
        cmp.cohort = cohort;
        cmp.model_a = summarize(a_vals);
        cmp.model_b = summarize(b_vals);
        try
        {
            cmp.wilcoxon = wilcoxon_signed_rank(pairs);
            cmp.significant = cmp.wilcoxon->p_value < alpha;
        }
        catch (const DegenerateData&)
        {
            cmp.note = "no difference";
        }
        report.between_models.push_back(std::move(cmp));
    }
    report.errors.assign(model_a.begin(), model_a.end());
    report.errors.insert(report.errors.end(), model_b.begin(), model_b.end());
    return report;
}

std::string errors_csv(std::span<const ImageError> errors)
{
    std::ostringstream out;
    out << "image_id,cohort,model_id,nrmse\n";
    char buf[64];
    for (const auto& e : errors)
    {
        std::snprintf(buf, sizeof buf, "%.6f", e.nrmse);
        out << detail::csv_field(e.image_id) << ',' << to_string(e.cohort) << ','
            << detail::csv_field(e.model_id) << ',' << buf << '\n';
    }
    return out.str();
}

namespace {

std::string format_p(const std::optional<TestResult>& t, const std::string& note)
{
    if (!t)
    {
        return note.empty() ? "n/a" : note;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", t->p_value);
    return buf;
}

std::string format_stat(const std::optional<TestResult>& t)
{
    if (!t)
    {
        return "-";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", t->statistic);
    return buf;
}

} // namespace

std::string report_markdown(const EvaluationReport& report)
{
    std::ostringstream out;
    out << "# Landmark localization error (NRMSE, % of inter-ocular distance)\n\n";
    out << "alpha = " << report.alpha << "\n\n";
    out << "## Patients vs controls (Kruskal-Wallis)\n\n";
    out << "| model | patients (n) | patients | controls (n) | controls | H | p | significant |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : report.between_cohorts)
    {
        out << "| " << c.model_id << " | " << c.patient.n << " | " << format_mean_std(c.patient) << " | "
            << c.control.n << " | " << format_mean_std(c.control) << " | " << format_stat(c.kruskal_wallis) << " | "
            << format_p(c.kruskal_wallis, c.note) << " | " << (c.significant ? "yes" : "no") << " |\n";
    }
    out << "\n## " << report.model_a << " vs " << report.model_b << " (Wilcoxon signed-rank, paired by image)\n\n";
    out << "| cohort | n | " << report.model_a << " | " << report.model_b << " | W | p | significant |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const auto& m : report.between_models)
    {
        out << "| " << to_string(m.cohort) << " | " << m.model_a.n << " | " << format_mean_std(m.model_a) << " | "
            << format_mean_std(m.model_b) << " | " << format_stat(m.wilcoxon) << " | " << format_p(m.wilcoxon, m.note)
            << " | " << (m.significant ? "yes" : "no") << " |\n";
    }
    return out.str();
}

} // namespace palsylm

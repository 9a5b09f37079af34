// SPDX-License-Identifier: Apache-2.0
//
// ulsense: asynchronous multi-user uplink OFDMA sensing with cluster sparse Bayesian learning
// Copyright (C) 2026 The ulsense authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "ulsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace ulsense
{

UeMatch match_paths(std::span<const double> true_delays, std::span<const double> est_delays, double gate)
{
    if (!(gate > 0.0))
        throw std::invalid_argument("match_paths: gate must be positive.");

    std::vector<std::tuple<double, int, int>> cand;
    for (int i = 0; i < static_cast<int>(true_delays.size()); ++i)
        for (int j = 0; j < static_cast<int>(est_delays.size()); ++j)
        {
            const double d = std::abs(true_delays[i] - est_delays[j]);
            if (d <= gate)
                cand.emplace_back(d, i, j);
        }
    std::sort(cand.begin(), cand.end());

    std::vector<bool> t_used(true_delays.size(), false), e_used(est_delays.size(), false);
    UeMatch m;
    for (const auto &[d, i, j] : cand)
    {
        if (t_used[i] || e_used[j])
            continue;
        t_used[i] = e_used[j] = true;
        m.pairs.push_back({i, j, d});
    }
    std::sort(m.pairs.begin(), m.pairs.end(), [](const PathPair &a, const PathPair &b) { return a.truth < b.truth; });
    for (int i = 0; i < static_cast<int>(t_used.size()); ++i)
        if (!t_used[i])
            m.missed.push_back(i);
    for (int j = 0; j < static_cast<int>(e_used.size()); ++j)
        if (!e_used[j])
            m.false_alarms.push_back(j);
    return m;
}

MatchResult match_paths(const Scenario &truth, const EstimateSet &est, double gate)
{
    if (truth.ues.size() != est.ues.size())
        throw std::invalid_argument("match_paths: scenario and estimates disagree on K.");
    MatchResult out;
    for (std::size_t k = 0; k < truth.ues.size(); ++k)
    {
        std::vector<double> td, ed;
        for (const Path &p : truth.ues[k].paths)
            td.push_back(p.delay);
        for (const PathEstimate &p : est.ues[k])
            ed.push_back(p.delay);
        out.ues.push_back(match_paths(td, ed, gate));
    }
    return out;
}

double nmse(const std::vector<std::vector<PairedValue>> &per_ue, int *skipped)
{
    double total = 0.0;
    int used = 0, skip = 0;
    for (const auto &ue : per_ue)
    {
        double num = 0.0, den = 0.0;
        for (const PairedValue &v : ue)
        {
            if (v.excluded)
                continue;
            num += (v.estimate - v.truth) * (v.estimate - v.truth);
            den += v.truth * v.truth;
        }
        if (!(den > 0.0))
        {
            ++skip;
            continue;
        }
        total += num / den;
        ++used;
    }
    if (skipped)
        *skipped = skip;
    return used > 0 ? total / used : std::numeric_limits<double>::quiet_NaN();
}

double rmse_aoa_deg(const std::vector<std::vector<PairedValue>> &per_ue)
{
    if (per_ue.empty())
        return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (const auto &ue : per_ue)
    {
        if (ue.empty())
            continue;
        double acc = 0.0;
        for (const PairedValue &v : ue)
            acc += (v.estimate - v.truth) * (v.estimate - v.truth);
        total += std::sqrt(acc / static_cast<double>(ue.size()));
    }
    return total / static_cast<double>(per_ue.size()) * 180.0 / kPi;
}

// Kuhn-Munkres on a square cost matrix padded from the rectangular score.
std::vector<int> hungarian_max(const RMatrix &score)
{
    const int rows = static_cast<int>(score.rows()), cols = static_cast<int>(score.cols());
    const int n = std::max(rows, cols);
    if (n == 0)
        return {};
    const double top = score.size() > 0 ? score.maxCoeff() : 0.0;
    RMatrix cost = RMatrix::Constant(n, n, top);
    cost.topLeftCorner(rows, cols) = (top - score.array()).matrix();

    // potentials formulation, 1-based internally
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i)
    {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do
        {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j)
                if (!used[j])
                {
                    const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if (cur < minv[j])
                    {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta)
                    {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j)
                if (used[j])
                {
                    u[p[j]] += delta;
                    v[j] -= delta;
                }
                else
                    minv[j] -= delta;
            j0 = j1;
        } while (p[j0] != 0);
        do
        {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> assign(rows, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] >= 1 && p[j] <= rows && j <= cols)
            assign[p[j] - 1] = j - 1;
    return assign;
}

double clustering_accuracy(std::span<const int> true_labels, std::span<const int> predicted)
{
    if (true_labels.size() != predicted.size())
        throw std::invalid_argument("clustering_accuracy: label vectors differ in length.");
    if (true_labels.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const int S = *std::max_element(true_labels.begin(), true_labels.end()) + 1;
    const int C = *std::max_element(predicted.begin(), predicted.end()) + 1;
    RMatrix confusion = RMatrix::Zero(S, C);
    for (std::size_t k = 0; k < true_labels.size(); ++k)
        confusion(true_labels[k], predicted[k]) += 1.0;
    const auto assign = hungarian_max(confusion);
    double hits = 0.0;
    for (int s = 0; s < S; ++s)
        if (assign[s] >= 0)
            hits += confusion(s, assign[s]);
    return hits / static_cast<double>(true_labels.size());
}

double clustering_accuracy(std::span<const int> true_labels, const RMatrix &resp)
{
    std::vector<int> predicted(static_cast<std::size_t>(resp.rows()));
    for (Eigen::Index k = 0; k < resp.rows(); ++k)
    {
        Eigen::Index c = 0;
        resp.row(k).maxCoeff(&c);
        predicted[static_cast<std::size_t>(k)] = static_cast<int>(c);
    }
    return clustering_accuracy(true_labels, predicted);
}

MetricsReport score_trial(const Scenario &truth, const EstimateSet &est, double gate)
{
    const MatchResult match = match_paths(truth, est, gate);

    std::vector<std::vector<PairedValue>> delay(truth.ues.size()), doppler(truth.ues.size()), aoa(truth.ues.size());
    double true_paths = 0.0, est_paths = 0.0, misses = 0.0, fas = 0.0;
    for (std::size_t k = 0; k < truth.ues.size(); ++k)
    {
        const auto &paths = truth.ues[k].paths;
        const UeMatch &m = match.ues[k];
        std::vector<int> matched(paths.size(), -1);
        for (const PathPair &pp : m.pairs)
            matched[static_cast<std::size_t>(pp.truth)] = pp.estimate;
        for (std::size_t l = 0; l < paths.size(); ++l)
        {
            const Path &p = paths[l];
            PairedValue d{p.delay, 0.0, p.is_los}, nu{p.doppler, 0.0, p.is_los}, th{p.aoa, 0.0, false};
            if (matched[l] >= 0)
            {
                const PathEstimate &e = est.ues[k][static_cast<std::size_t>(matched[l])];
                d.estimate = e.delay;
                if (e.reliable)
                {
                    nu.estimate = e.doppler;
                    th.estimate = e.aoa;
                }
            }
            delay[k].push_back(d);
            doppler[k].push_back(nu);
            aoa[k].push_back(th);
        }
        true_paths += static_cast<double>(paths.size());
        est_paths += static_cast<double>(est.ues[k].size());
        misses += static_cast<double>(m.missed.size());
        fas += static_cast<double>(m.false_alarms.size());
    }

    MetricsReport r;
    r.nmse_delay = nmse(delay);
    r.nmse_doppler = nmse(doppler);
    r.rmse_aoa_deg = rmse_aoa_deg(aoa);
    r.clustering_accuracy = std::numeric_limits<double>::quiet_NaN();
    r.miss_rate = true_paths > 0.0 ? misses / true_paths : 0.0;
    r.false_alarm_rate = est_paths > 0.0 ? fas / est_paths : 0.0;
    return r;
}

} // namespace ulsense

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

#pragma once

#include "ulsense/param_refine.hpp"
#include "ulsense/signal_model.hpp"

#include <span>
#include <vector>

namespace ulsense
{

struct PathPair
{
    int truth = 0;     // index into the UE's true paths
    int estimate = 0;  // index into the UE's estimated paths
    double distance = 0.0; // |delay difference|, s
};

struct UeMatch
{
    std::vector<PathPair> pairs;
    std::vector<int> missed;       // unmatched true paths
    std::vector<int> false_alarms; // unmatched estimates
};

struct MatchResult
{
    std::vector<UeMatch> ues;
};

// Greedy one-to-one association by ascending delay distance, gated. Ties in
// distance resolve by lower true index, then lower estimate index.
UeMatch match_paths(std::span<const double> true_delays, std::span<const double> est_delays, double gate);
MatchResult match_paths(const Scenario &truth, const EstimateSet &est, double gate);

// Paired scalar for one path. `estimate` absent means a miss (scored as 0).
struct PairedValue
{
    double truth = 0.0;
    double estimate = 0.0;
    bool excluded = false; // e.g. the LoS path for delay / Doppler NMSE
};

// (1/K') sum_k sum_l (xhat - x)^2 / sum_l x^2 over non-excluded paths. UEs with
// a zero denominator are skipped (K' counts the rest); returns NaN if none remain.
double nmse(const std::vector<std::vector<PairedValue>> &per_ue, int *skipped = nullptr);

// (1/K) sum_k sqrt(mean_l (thetahat - theta)^2), radians in, degrees out.
double rmse_aoa_deg(const std::vector<std::vector<PairedValue>> &per_ue);

// Rectangular assignment maximizing the total score. Returns, per row, the
// assigned column or -1.
std::vector<int> hungarian_max(const RMatrix &score);

// Permutation-matched hard accuracy of argmax_c resp(k, c) against labels.
double clustering_accuracy(std::span<const int> true_labels, const RMatrix &resp);
double clustering_accuracy(std::span<const int> true_labels, std::span<const int> predicted);

struct MetricsReport
{
    double nmse_delay = 0.0;
    double nmse_doppler = 0.0;
    double rmse_aoa_deg = 0.0;
    double clustering_accuracy = 0.0; // NaN when not applicable
    double miss_rate = 0.0;
    double false_alarm_rate = 0.0;
};

// Scores one trial. Missed paths contribute xhat = 0; Doppler/AoA of
// unreliable taps count as misses too.
MetricsReport score_trial(const Scenario &truth, const EstimateSet &est, double gate);

} // namespace ulsense

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

#include "ulsense/calibration.hpp"
#include "ulsense/cluster_sbl.hpp"
#include "ulsense/metrics.hpp"
#include "ulsense/param_refine.hpp"
#include "ulsense/signal_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ulsense
{

inline constexpr const char *kResultsSchema = "ulsense-results/1";

enum class SweepAxis
{
    snr,
    nk,
    packets,
};

enum class Method
{
    cluster_sbl,
    individual_sbl,
};

std::string to_string(SweepAxis a);
std::string to_string(Method m);
SweepAxis parse_axis(std::string_view s);
Method parse_method(std::string_view s);

struct Composition
{
    int shared = 3;
    int priv = 1;
    std::string label() const; // "3+1"
};

// Everything the pipeline needs besides the radio/sparsity configuration.
struct PipelineConfig
{
    CalibrationConfig calibration;
    SblHyperparameters hyper;
    ConvergenceConfig convergence;
    SupportPolicy support;
    RefineConfig refine;
    LinearSolver solver = LinearSolver::reduced;
    bool oracle_count = false;
    double gate_bins = 3.0; // path association gate in coarse bins
    double jitter = 0.01;
};

struct ExperimentSpec
{
    std::string name = "custom";
    SystemConfig sys;
    SparsityConfig sp;
    SweepAxis axis = SweepAxis::snr;
    std::vector<double> values{10.0};
    std::vector<Method> methods{Method::cluster_sbl, Method::individual_sbl};
    std::vector<Composition> variants; // empty: use sp as configured
    int trials = 100;
    std::uint64_t seed = 1;
    bool fix_scenario = false; // same scenario for every trial, offsets/noise redrawn
    PipelineConfig pipeline;
    std::filesystem::path output = "results.csv";
    int workers = 1;

    void validate() const;
    // Variants to run; a single entry built from sp when none are configured.
    std::vector<Composition> effective_variants() const;
};

ExperimentSpec preset(std::string_view name);

// Applies a JSON override document (see docs/config.md) on top of `spec`.
void apply_overrides(ExperimentSpec &spec, const nlohmann::json &overrides);
nlohmann::json spec_json(const ExperimentSpec &spec);

struct ResultRow
{
    std::string variant;
    double sweep_value = 0.0;
    Method method = Method::cluster_sbl;
    int trial = 0;
    MetricsReport metrics;
    int vi_iterations = 0;
    double wall_time_s = 0.0;   // kept out of the results CSV
    std::uint64_t csi_hash = 0; // FNV-1a of the calibrated CSI both methods consumed
    bool failed = false;
    std::string error;
};

// Configuration of one sweep point for one composition variant.
struct PointConfig
{
    SystemConfig sys;
    SparsityConfig sp;
    std::string variant;
    double sweep_value = 0.0;
};

PointConfig point_config(const ExperimentSpec &spec, const Composition &variant, double sweep_value);

std::uint64_t trial_seed(const ExperimentSpec &spec, int trial);
std::uint64_t hash_csi(const CsiTensor &csi);

// One row per configured method; all methods see the same calibrated data.
std::vector<ResultRow> run_trial(const ExperimentSpec &spec, const PointConfig &point, int trial);

struct SweepOptions
{
    bool resume = true;
    std::ostream *progress = nullptr;
};

struct SweepResult
{
    std::vector<ResultRow> rows; // canonical order
    int failed = 0;
    int skipped = 0; // trials restored from the manifest
};

// Runs variants x sweep values x trials, writes spec.output (results CSV),
// <output>.timing.csv and the resume manifest <output>.manifest.
SweepResult run_sweep(const ExperimentSpec &spec, const SweepOptions &opts = {});

std::string results_csv(const std::vector<ResultRow> &rows);
std::vector<ResultRow> parse_results_csv(const std::string &text);
std::string format_row(const ResultRow &row);

struct SummaryEntry
{
    std::string variant;
    double sweep_value = 0.0;
    Method method = Method::cluster_sbl;
    int count = 0;
    int failed = 0;
    MetricsReport mean;
    MetricsReport stddev;
    double mean_iterations = 0.0;
};

// Mean / std per (variant, sweep value, method), NaNs ignored per column.
std::vector<SummaryEntry> summarize(const std::vector<ResultRow> &rows);
std::string summary_table(const std::vector<SummaryEntry> &summary);

} // namespace ulsense

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
#include "ulsense/param_refine.hpp"
#include "ulsense/signal_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ulsense
{

inline constexpr const char *kTrialFormat = "ulsense-trial";
inline constexpr int kTrialVersion = 1;
inline constexpr const char *kSupportFormat = "ulsense-support";
inline constexpr const char *kEstimateFormat = "ulsense-estimates";
inline constexpr int kReportVersion = 1;

// One trial on disk: configuration, ground truth, offsets, raw CSI and, once
// the calibration stage has run, the calibrated CSI and TO estimates.
struct TrialBundle
{
    SystemConfig sys;
    SparsityConfig sp;
    Scenario scenario;
    OffsetTrace offsets;
    CsiTensor raw;
    std::optional<CsiTensor> calibrated;
    std::optional<std::vector<std::vector<ToEstimate>>> to_estimates;
};

void to_json(nlohmann::json &j, const SystemConfig &c);
void from_json(const nlohmann::json &j, SystemConfig &c);
void to_json(nlohmann::json &j, const SparsityConfig &c);
void from_json(const nlohmann::json &j, SparsityConfig &c);
void to_json(nlohmann::json &j, const Scenario &s);
void from_json(const nlohmann::json &j, Scenario &s);
void to_json(nlohmann::json &j, const OffsetTrace &o);
void from_json(const nlohmann::json &j, OffsetTrace &o);
void to_json(nlohmann::json &j, const CsiTensor &c);
void from_json(const nlohmann::json &j, CsiTensor &c);

nlohmann::json matrix_to_json(const CMatrix &m);
CMatrix matrix_from_json(const nlohmann::json &j);

// CBOR-encoded bundle. Throws std::runtime_error on I/O failure or a
// format/version mismatch.
void save_trial(const std::filesystem::path &path, const TrialBundle &bundle);
TrialBundle load_trial(const std::filesystem::path &path);

// Support / clustering report consumed by the refinement stage.
struct SupportReport
{
    std::string method; // "cluster_sbl" or "individual_sbl"
    int iterations = 0;
    bool converged = false;
    std::vector<SupportEstimate> supports;
    std::vector<RVector> energy;          // per UE row-energy profile
    RMatrix responsibilities;             // K x C, empty for the baseline
    std::vector<double> grid;
};

nlohmann::json support_report_json(const SupportReport &r);
SupportReport support_report_from_json(const nlohmann::json &j);
nlohmann::json estimate_set_json(const EstimateSet &est);
EstimateSet estimate_set_from_json(const nlohmann::json &j);

// k,t,true_to_s,est_to_s,abs_error_s,boundary
std::string calibration_diagnostics_csv(const OffsetTrace &truth, const std::vector<std::vector<ToEstimate>> &est);

void write_text(const std::filesystem::path &path, const std::string &text);
std::string read_text(const std::filesystem::path &path);

} // namespace ulsense

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

#include "ulsense/signal_model.hpp"
#include "ulsense/types.hpp"

#include <span>
#include <vector>

namespace ulsense
{

// Search window for the per-packet LoS peak, relative to the known geometric
// LoS delay: [tau_geom - lower_margin/B, tau_geom + upper_margin/B] with step
// 1 / (oversampling * N_k * subcarrier_spacing). B is the nominal bandwidth.
struct CalibrationConfig
{
    double lower_margin = 5.0;
    double upper_margin = 25.0;
    double oversampling = 4.0;
};

struct ToEstimate
{
    double observed_los_delay = 0.0; // s
    double timing_offset = 0.0;      // s, observed - geometric
    bool boundary_peak = false;      // parabolic step skipped
};

// p(tau_g) = (1/M) * || d(tau_g)^H Y ||^2
RVector delay_periodogram(const CMatrix &Y, std::span<const int> subcarriers, double subcarrier_spacing,
                          std::span<const double> grid);

// Vertex offset of the parabola through three equally spaced samples, in units
// of grid_spacing * (fraction of a bin). Flat triples give 0.
double parabolic_refine(double p_left, double p_peak, double p_right, double grid_spacing);

std::vector<double> calibration_grid(double los_geom_delay, int per_ue_subcarriers, const SystemConfig &sys,
                                     const CalibrationConfig &cfg = {});

ToEstimate estimate_to(const CMatrix &Y, std::span<const int> subcarriers, double los_geom_delay,
                       const SystemConfig &sys, const CalibrationConfig &cfg = {});

// diag(exp(+j 2 pi f_n dtau)) * Y
CMatrix compensate_to(const CMatrix &Y, double timing_offset, std::span<const int> subcarriers,
                      double subcarrier_spacing);

struct CalibrationResult
{
    CsiTensor calibrated;
    std::vector<std::vector<ToEstimate>> estimates; // [k][t]
};

// Per-(k, t) estimate-and-compensate over a whole tensor. Only the subcarrier
// sets and geometric LoS delays of `scn` are read.
CalibrationResult calibrate(const CsiTensor &raw, const Scenario &scn, const SystemConfig &sys,
                            const CalibrationConfig &cfg = {});

} // namespace ulsense

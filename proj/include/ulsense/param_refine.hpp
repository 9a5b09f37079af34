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

struct RefineConfig
{
    int factor = 4;           // F
    int span = 8;             // I, candidates i = -I..I
    double ridge = 1e-3;      // lambda of the regularized LS projection
    double reliability = 1e-4; // taps below this fraction of the strongest tap energy are not reported
    bool isolate_taps = true;  // search each tap with the other coarse taps projected out
};

struct RefinedTaps
{
    std::vector<double> delays; // s, one per coarse tap
    CMatrix reduced;            // N_k x L, columns d_k(delay)
    int reference = 0;          // tap nearest the geometric LoS delay
};

// Local periodogram search || d^H(tau) Ytilde ||^2 over tau_hat + i*spacing/F.
// Candidates outside [0, tau_max] are dropped. With cfg.isolate_taps the
// search for tap l runs on Ytilde minus the ridge-LS reconstruction of the
// other coarse taps.
RefinedTaps refine_delays(const CMatrix &stacked, std::span<const int> subcarriers, double subcarrier_spacing,
                          std::span<const double> coarse, double grid_spacing, double tau_max,
                          double los_geom_delay, const RefineConfig &cfg = {});

// Index of the tap nearest `los_geom_delay`; ties go to the larger energy.
int reference_tap(std::span<const double> delays, std::span<const double> energies, double los_geom_delay);

// (B^H B + lambda I)^-1 B^H Y
CMatrix ls_project(const CMatrix &Y, const CMatrix &reduced, double ridge);

struct DopplerEstimate
{
    double doppler = 0.0; // Hz
    bool reliable = true;
};

// LoS-referenced adjacent-packet phase estimator. coeffs[t] is L x M. The
// reference tap is reported with zero Doppler.
std::vector<DopplerEstimate> estimate_doppler(const std::vector<CMatrix> &coeffs, int reference,
                                              double packet_interval);

struct AoaGainEstimate
{
    double aoa = 0.0;        // rad
    double gain_power = 0.0; // |alpha|^2
    bool clamped = false;    // |sin| exceeded 1
};

// Adjacent-antenna conjugate product averaged over packets and antenna pairs.
// With a(theta)_m = exp(+j pi m sin theta) the averaged product is
// |alpha|^2 exp(-j pi sin theta), hence sin(theta) = -angle(c) / pi.
std::vector<AoaGainEstimate> estimate_aoa_gain(const std::vector<CMatrix> &coeffs);

struct PathEstimate
{
    double delay = 0.0;      // s
    double doppler = 0.0;    // Hz
    double aoa = 0.0;        // rad
    double gain_power = 0.0;
    bool reference = false;
    bool reliable = true;    // false: Doppler/AoA withheld (weak tap or weak reference)
    bool clamped = false;
};

using UeEstimate = std::vector<PathEstimate>;

struct EstimateSet
{
    std::vector<UeEstimate> ues;
};

// Full per-UE chain: refine, project every packet, estimate Doppler / AoA / gain.
UeEstimate estimate_ue(const std::vector<CMatrix> &calibrated, const CMatrix &stacked,
                       std::span<const int> subcarriers, std::span<const double> coarse_delays,
                       double los_geom_delay, const SystemConfig &sys, const SparsityConfig &sp,
                       const RefineConfig &cfg = {});

} // namespace ulsense

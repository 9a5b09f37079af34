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

#include "ulsense/rng.hpp"
#include "ulsense/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ulsense
{

// System-level radio parameters. Subcarrier n (0-based) sits at baseband
// frequency n * subcarrier_spacing.
struct SystemConfig
{
    double carrier_freq = 3.5e9;       // Hz
    double bandwidth = 140e6;          // Hz, nominal; only sets the TO draw range 20/B
    int num_subcarriers = 2048;        // N
    double subcarrier_spacing = 60e3;  // Hz
    double packet_interval = 0.25e-3;  // s
    int num_antennas = 8;              // M
    int num_ues = 8;                   // K
    int num_packets = 16;              // T
    double snr_db = 10.0;
    std::uint64_t rng_seed = 1;
    bool noise_enabled = true;
    bool offsets_enabled = true;
    double max_cfo = 150.0; // Hz, CFO drawn from [0, max_cfo]

    // N * subcarrier_spacing; used for all signal math
    double occupied_bandwidth() const { return num_subcarriers * subcarrier_spacing; }
    double max_timing_offset() const { return 20.0 / bandwidth; }
    void validate() const;
};

struct SparsityConfig
{
    double tau_max = 2.5e-6;      // s
    int grid_size = 256;          // G
    int num_clusters_true = 3;    // S
    int num_clusters_candidate = 8; // C
    int shared_paths = 3;         // L_sh
    int private_paths = 1;        // L_pr, the first private path is the LoS
    int per_ue_subcarriers = 128; // N_k
    bool on_grid = false;         // snap sampled delays to the coarse grid
    double max_doppler = 350.0;   // Hz, NLoS Doppler drawn from [-max, max]
    double los_gain_ratio = 3.0;  // |LoS gain| / largest |NLoS gain|

    int paths_per_ue() const { return shared_paths + private_paths; }
    double grid_spacing() const { return tau_max / (grid_size - 1); }
    double min_separation() const { return 2.0 * grid_spacing(); }
    void validate(const SystemConfig &sys) const;
};

struct Path
{
    cdouble gain;
    double delay = 0.0;   // s
    double doppler = 0.0; // Hz
    double aoa = 0.0;     // rad
    bool is_los = false;
};

struct UeChannel
{
    int cluster = 0;              // 0-based cluster label
    std::vector<int> subcarriers; // ordered 0-based subcarrier indices
    std::vector<Path> paths;      // shared paths first, then private (LoS first among those)
    double los_geom_delay = 0.0;  // s

    const Path &los() const;
    std::size_t los_index() const;
};

struct Scenario
{
    std::vector<UeChannel> ues;
};

struct PacketOffset
{
    double timing = 0.0; // s
    double cfo = 0.0;    // Hz
    double phase = 0.0;  // rad
};

// offsets[k][t]
struct OffsetTrace
{
    std::vector<std::vector<PacketOffset>> offsets;
};

// csi[k][t] is N_k x M. noise_variance == 0 means noise-free.
struct CsiTensor
{
    std::vector<std::vector<CMatrix>> csi;
    double noise_variance = 0.0;

    // Noise precision 1/variance; +inf for noise-free data.
    double noise_precision() const;
    int num_ues() const { return static_cast<int>(csi.size()); }
    int num_packets() const { return csi.empty() ? 0 : static_cast<int>(csi.front().size()); }
};

std::vector<std::vector<int>> allocate_subcarriers(int num_subcarriers, int num_ues, int per_ue);

CVector delay_steering(double tau, std::span<const int> subcarriers, double subcarrier_spacing);
CVector array_response(double theta, int num_antennas);

// Ascending coarse delay grid (g * tau_max / (G - 1)).
std::vector<double> delay_grid(const SparsityConfig &sp);

Scenario sample_scenario(const SystemConfig &sys, const SparsityConfig &sp, Rng &rng);
OffsetTrace sample_offsets(const SystemConfig &sys, Rng &rng);

// Noise-free multipath superposition for one (k, t)
CMatrix noiseless_csi(const UeChannel &ue, const PacketOffset &off, int packet, const SystemConfig &sys);

// Full synthesis. Noise variance = mean |noise-free Y|^2 / 10^(snr_db/10).
CsiTensor synthesize_csi(const Scenario &scn, const OffsetTrace &off, const SystemConfig &sys, Rng &rng);

} // namespace ulsense

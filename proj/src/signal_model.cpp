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

#include "ulsense/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ulsense
{

void SystemConfig::validate() const
{
    if (num_ues < 1)
        throw std::invalid_argument("SystemConfig: need at least one UE.");
    if (num_subcarriers < num_ues)
        throw std::invalid_argument("SystemConfig: N must be >= K.");
    if (num_antennas < 2)
        throw std::invalid_argument("SystemConfig: M must be >= 2.");
    if (num_packets < 2)
        throw std::invalid_argument("SystemConfig: T must be >= 2.");
    if (!(subcarrier_spacing > 0.0))
        throw std::invalid_argument("SystemConfig: subcarrier spacing must be positive.");
    if (!(packet_interval > 0.0))
        throw std::invalid_argument("SystemConfig: packet interval must be positive.");
    if (!(bandwidth > 0.0))
        throw std::invalid_argument("SystemConfig: bandwidth must be positive.");
    if (max_cfo < 0.0)
        throw std::invalid_argument("SystemConfig: max_cfo must be non-negative.");
}

void SparsityConfig::validate(const SystemConfig &sys) const
{
    if (grid_size < 2)
        throw std::invalid_argument("SparsityConfig: G must be >= 2.");
    if (!(tau_max > 0.0) || !(tau_max < 1.0 / sys.subcarrier_spacing))
        throw std::invalid_argument("SparsityConfig: tau_max must lie in (0, 1/subcarrier_spacing).");
    if (shared_paths < 0 || private_paths < 1)
        throw std::invalid_argument("SparsityConfig: need L_sh >= 0 and L_pr >= 1 (the LoS is private).");
    if (num_clusters_true < 1 || num_clusters_candidate < num_clusters_true)
        throw std::invalid_argument("SparsityConfig: need C >= S >= 1.");
    if (per_ue_subcarriers < 1 ||
        static_cast<long>(sys.num_ues) * per_ue_subcarriers > static_cast<long>(sys.num_subcarriers))
        throw std::invalid_argument("SparsityConfig: K * N_k exceeds N.");
    if (max_doppler < 0.0 || !(los_gain_ratio > 1.0))
        throw std::invalid_argument("SparsityConfig: need max_doppler >= 0 and los_gain_ratio > 1.");
}

const Path &UeChannel::los() const
{
    return paths.at(los_index());
}

std::size_t UeChannel::los_index() const
{
    for (std::size_t l = 0; l < paths.size(); ++l)
        if (paths[l].is_los)
            return l;
    throw std::logic_error("UeChannel: no LoS path.");
}

double CsiTensor::noise_precision() const
{
    return noise_variance > 0.0 ? 1.0 / noise_variance : std::numeric_limits<double>::infinity();
}

std::vector<std::vector<int>> allocate_subcarriers(int num_subcarriers, int num_ues, int per_ue)
{
    if (num_ues < 1 || per_ue < 1)
        throw std::invalid_argument("allocate_subcarriers: K and N_k must be positive.");
    if (static_cast<long>(num_ues) * per_ue > static_cast<long>(num_subcarriers))
        throw std::invalid_argument("allocate_subcarriers: K * N_k = " + std::to_string(long(num_ues) * per_ue) +
                                    " exceeds N = " + std::to_string(num_subcarriers) + ".");
    std::vector<std::vector<int>> sets(num_ues);
    for (int k = 0; k < num_ues; ++k)
    {
        sets[k].resize(per_ue);
        for (int i = 0; i < per_ue; ++i)
            sets[k][i] = k * per_ue + i;
    }
    return sets;
}

CVector delay_steering(double tau, std::span<const int> subcarriers, double subcarrier_spacing)
{
    CVector v(static_cast<Eigen::Index>(subcarriers.size()));
    for (std::size_t i = 0; i < subcarriers.size(); ++i)
    {
        const double phase = -2.0 * kPi * subcarriers[i] * subcarrier_spacing * tau;
        v[static_cast<Eigen::Index>(i)] = std::polar(1.0, phase);
    }
    return v;
}

CVector array_response(double theta, int num_antennas)
{
    CVector a(num_antennas);
    const double s = std::sin(theta);
    for (int m = 0; m < num_antennas; ++m)
        a[m] = std::polar(1.0, kPi * m * s);
    return a;
}

std::vector<double> delay_grid(const SparsityConfig &sp)
{
    std::vector<double> grid(sp.grid_size);
    for (int g = 0; g < sp.grid_size; ++g)
        grid[g] = g * sp.tau_max / (sp.grid_size - 1);
    return grid;
}

namespace
{

double draw_delay(const SparsityConfig &sp, Rng &rng)
{
    if (sp.on_grid)
    {
        const auto g = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(sp.grid_size - 1)));
        return g * sp.tau_max / (sp.grid_size - 1); // bitwise equal to delay_grid
    }
    return sp.tau_max * (1.0 - rng.uniform()); // (0, tau_max]
}

bool separated(double tau, const std::vector<double> &taken, double min_sep)
{
    // small slack so that on-grid delays exactly two bins apart are accepted
    const double tol = 1e-9 * min_sep;
    for (double t : taken)
        if (std::abs(t - tau) < min_sep - tol)
            return false;
    return true;
}

// Appends `count` delays to `taken`, each separated from everything already present.
void draw_separated(const SparsityConfig &sp, Rng &rng, int count, std::vector<double> &taken)
{
    constexpr int kMaxAttempts = 10000;
    for (int i = 0; i < count; ++i)
    {
        int attempt = 0;
        for (; attempt < kMaxAttempts; ++attempt)
        {
            const double tau = draw_delay(sp, rng);
            if (separated(tau, taken, sp.min_separation()))
            {
                taken.push_back(tau);
                break;
            }
        }
        if (attempt == kMaxAttempts)
            throw std::runtime_error("sample_scenario: cannot place delays with the required minimum separation.");
    }
}

cdouble draw_nlos_gain(Rng &rng)
{
    const double rho = rng.uniform(0.5, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return std::polar(rho, phi);
}

} // namespace

Scenario sample_scenario(const SystemConfig &sys, const SparsityConfig &sp, Rng &rng)
{
    sys.validate();
    sp.validate(sys);

    const int L = sp.paths_per_ue();
    if ((L - 1) * sp.min_separation() > sp.tau_max)
        throw std::runtime_error("sample_scenario: " + std::to_string(L) +
                                 " taps cannot satisfy the minimum separation within tau_max.");

    const int K = sys.num_ues;
    const int S = sp.num_clusters_true;

    // even partition: label k mod S, then a seeded shuffle of UE order
    std::vector<int> labels(K);
    for (int k = 0; k < K; ++k)
        labels[k] = k % S;
    for (int k = K - 1; k > 0; --k)
        std::swap(labels[k], labels[rng.index(static_cast<std::size_t>(k + 1))]);

    std::vector<std::vector<double>> shared(S);
    for (int c = 0; c < S; ++c)
        draw_separated(sp, rng, sp.shared_paths, shared[c]);

    const auto sets = allocate_subcarriers(sys.num_subcarriers, K, sp.per_ue_subcarriers);

    Scenario scn;
    scn.ues.resize(K);
    for (int k = 0; k < K; ++k)
    {
        UeChannel &ue = scn.ues[k];
        ue.cluster = labels[k];
        ue.subcarriers = sets[k];

        std::vector<double> delays = shared[labels[k]];
        draw_separated(sp, rng, sp.private_paths, delays);

        double max_nlos = 0.0;
        ue.paths.resize(L);
        for (int l = 0; l < L; ++l)
        {
            Path &p = ue.paths[l];
            p.delay = delays[l];
            p.is_los = (l == sp.shared_paths);
            p.aoa = rng.uniform(-0.5 * kPi, 0.5 * kPi);
            if (p.is_los)
            {
                p.doppler = 0.0;
                p.gain = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi)); // magnitude fixed below
            }
            else
            {
                p.doppler = rng.uniform(-sp.max_doppler, sp.max_doppler);
                p.gain = draw_nlos_gain(rng);
                max_nlos = std::max(max_nlos, std::abs(p.gain));
            }
        }
        Path &los = ue.paths[sp.shared_paths];
        los.gain *= sp.los_gain_ratio * (max_nlos > 0.0 ? max_nlos : 1.0);
        ue.los_geom_delay = los.delay;
    }
    return scn;
}

OffsetTrace sample_offsets(const SystemConfig &sys, Rng &rng)
{
    sys.validate();
    OffsetTrace trace;
    trace.offsets.assign(sys.num_ues, std::vector<PacketOffset>(sys.num_packets));
    if (!sys.offsets_enabled)
        return trace;
    for (auto &ue : trace.offsets)
        for (auto &off : ue)
        {
            off.timing = rng.uniform(0.0, sys.max_timing_offset());
            off.cfo = rng.uniform(0.0, sys.max_cfo);
            off.phase = rng.uniform(0.0, 2.0 * kPi);
        }
    return trace;
}

CMatrix noiseless_csi(const UeChannel &ue, const PacketOffset &off, int packet, const SystemConfig &sys)
{
    const auto Nk = static_cast<Eigen::Index>(ue.subcarriers.size());
    CMatrix Y = CMatrix::Zero(Nk, sys.num_antennas);
    const double t = packet * sys.packet_interval;
    for (const Path &p : ue.paths)
    {
        const CVector psi = delay_steering(p.delay + off.timing, ue.subcarriers, sys.subcarrier_spacing);
        const cdouble slow = p.gain * std::polar(1.0, off.phase) * std::polar(1.0, 2.0 * kPi * t * (p.doppler + off.cfo));
        const CVector s = slow * array_response(p.aoa, sys.num_antennas);
        Y.noalias() += psi * s.transpose();
    }
    return Y;
}

CsiTensor synthesize_csi(const Scenario &scn, const OffsetTrace &off, const SystemConfig &sys, Rng &rng)
{
    const int K = static_cast<int>(scn.ues.size());
    if (static_cast<int>(off.offsets.size()) != K)
        throw std::invalid_argument("synthesize_csi: offset trace and scenario disagree on K.");

    CsiTensor out;
    out.csi.resize(K);
    double power = 0.0;
    double count = 0.0;
    for (int k = 0; k < K; ++k)
    {
        if (static_cast<int>(off.offsets[k].size()) != sys.num_packets)
            throw std::invalid_argument("synthesize_csi: offset trace has the wrong packet count.");
        out.csi[k].resize(sys.num_packets);
        for (int t = 0; t < sys.num_packets; ++t)
        {
            out.csi[k][t] = noiseless_csi(scn.ues[k], off.offsets[k][t], t, sys);
            power += out.csi[k][t].squaredNorm();
            count += static_cast<double>(out.csi[k][t].size());
        }
    }

    if (!sys.noise_enabled || count == 0.0)
        return out;

    const double signal_power = power / count;
    // an empty scenario still gets unit-power noise
    out.noise_variance = (signal_power > 0.0 ? signal_power : 1.0) / std::pow(10.0, sys.snr_db / 10.0);
    for (auto &ue : out.csi)
        for (auto &Y : ue)
            for (Eigen::Index m = 0; m < Y.cols(); ++m)
                for (Eigen::Index n = 0; n < Y.rows(); ++n)
                    Y(n, m) += rng.complex_normal(out.noise_variance);
    return out;
}

} // namespace ulsense

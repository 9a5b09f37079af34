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

#include "ulsense/param_refine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ulsense
{

int reference_tap(std::span<const double> delays, std::span<const double> energies, double los_geom_delay)
{
    if (delays.empty())
        throw std::invalid_argument("reference_tap: no taps.");
    int best = 0;
    for (int l = 1; l < static_cast<int>(delays.size()); ++l)
    {
        const double d = std::abs(delays[l] - los_geom_delay);
        const double d_best = std::abs(delays[best] - los_geom_delay);
        if (d < d_best || (d == d_best && !energies.empty() && energies[l] > energies[best]))
            best = l;
    }
    return best;
}

RefinedTaps refine_delays(const CMatrix &stacked, std::span<const int> subcarriers, double subcarrier_spacing,
                          std::span<const double> coarse, double grid_spacing, double tau_max,
                          double los_geom_delay, const RefineConfig &cfg)
{
    if (cfg.factor < 1 || cfg.span < 0)
        throw std::invalid_argument("refine_delays: need F >= 1 and I >= 0.");
    if (coarse.empty())
        throw std::invalid_argument("refine_delays: no coarse taps.");

    // Each tap is searched on the data with the other coarse taps' LS
    // reconstruction removed, so a strong neighbour cannot capture the search.
    CMatrix coarse_dict(static_cast<Eigen::Index>(subcarriers.size()), static_cast<Eigen::Index>(coarse.size()));
    for (std::size_t l = 0; l < coarse.size(); ++l)
        coarse_dict.col(static_cast<Eigen::Index>(l)) = delay_steering(coarse[l], subcarriers, subcarrier_spacing);
    CMatrix coarse_coeff, residual;
    if (cfg.isolate_taps && coarse.size() > 1)
    {
        coarse_coeff = ls_project(stacked, coarse_dict, cfg.ridge);
        residual = stacked - coarse_dict * coarse_coeff;
    }

    RefinedTaps out;
    std::vector<double> energies;
    const double step = grid_spacing / cfg.factor;
    for (std::size_t l = 0; l < coarse.size(); ++l)
    {
        const double tau_hat = coarse[l];
        const auto li = static_cast<Eigen::Index>(l);
        const CMatrix data = residual.size() ? CMatrix(residual + coarse_dict.col(li) * coarse_coeff.row(li)) : stacked;
        double best_tau = std::clamp(tau_hat, 0.0, tau_max);
        double best_p = -1.0;
        for (int i = -cfg.span; i <= cfg.span; ++i)
        {
            const double tau = tau_hat + i * step;
            // small slack keeps the grid end points themselves
            if (tau < -1e-9 * step || tau > tau_max + 1e-9 * step)
                continue;
            const CVector d = delay_steering(tau, subcarriers, subcarrier_spacing);
            const double p = (d.adjoint() * data).squaredNorm();
            if (p > best_p)
            {
                best_p = p;
                best_tau = tau;
            }
        }
        out.delays.push_back(best_tau);
        energies.push_back(std::max(best_p, 0.0));
    }

    out.reduced.resize(static_cast<Eigen::Index>(subcarriers.size()), static_cast<Eigen::Index>(out.delays.size()));
    for (std::size_t l = 0; l < out.delays.size(); ++l)
        out.reduced.col(static_cast<Eigen::Index>(l)) = delay_steering(out.delays[l], subcarriers, subcarrier_spacing);
    out.reference = reference_tap(out.delays, energies, los_geom_delay);
    return out;
}

CMatrix ls_project(const CMatrix &Y, const CMatrix &reduced, double ridge)
{
    if (ridge < 0.0)
        throw std::invalid_argument("ls_project: ridge weight must be non-negative.");
    if (Y.rows() != reduced.rows())
        throw std::invalid_argument("ls_project: row mismatch between data and reduced dictionary.");
    CMatrix normal = reduced.adjoint() * reduced;
    normal.diagonal().array() += ridge;
    const CMatrix rhs = reduced.adjoint() * Y;
    if (ridge > 0.0)
        return normal.llt().solve(rhs);
    return normal.ldlt().solve(rhs);
}

std::vector<DopplerEstimate> estimate_doppler(const std::vector<CMatrix> &coeffs, int reference,
                                              double packet_interval)
{
    if (coeffs.size() < 2)
        throw std::invalid_argument("estimate_doppler: need at least two packets.");
    const Eigen::Index L = coeffs.front().rows();
    if (reference < 0 || reference >= L)
        throw std::invalid_argument("estimate_doppler: reference tap out of range.");

    RVector tap_energy = RVector::Zero(L);
    for (const CMatrix &X : coeffs)
        tap_energy += X.rowwise().squaredNorm();
    const bool ref_ok = tap_energy[reference] >= 1e-12 * tap_energy.maxCoeff() && tap_energy[reference] > 0.0;

    std::vector<DopplerEstimate> out(static_cast<std::size_t>(L));
    for (Eigen::Index l = 0; l < L; ++l)
    {
        if (l == reference)
        {
            out[l] = {0.0, ref_ok};
            continue;
        }
        cdouble acc{0.0, 0.0};
        for (std::size_t t = 0; t + 1 < coeffs.size(); ++t)
        {
            // reference: x[t] x*[t+1], target: x*[t] x[t+1]
            const cdouble ref = coeffs[t].row(reference).dot(coeffs[t + 1].row(reference)); // sum conj(a) b
            const cdouble tap = coeffs[t].row(l).dot(coeffs[t + 1].row(l));
            acc += std::conj(ref) * tap;
        }
        out[l] = {std::arg(acc) / (2.0 * kPi * packet_interval), ref_ok};
    }
    return out;
}

std::vector<AoaGainEstimate> estimate_aoa_gain(const std::vector<CMatrix> &coeffs)
{
    if (coeffs.empty())
        throw std::invalid_argument("estimate_aoa_gain: no packets.");
    const Eigen::Index L = coeffs.front().rows();
    const Eigen::Index M = coeffs.front().cols();
    if (M < 2)
        throw std::invalid_argument("estimate_aoa_gain: need at least two antennas.");

    std::vector<AoaGainEstimate> out(static_cast<std::size_t>(L));
    const double norm = 1.0 / (static_cast<double>(coeffs.size()) * static_cast<double>(M - 1));
    for (Eigen::Index l = 0; l < L; ++l)
    {
        cdouble c{0.0, 0.0};
        for (const CMatrix &X : coeffs)
            for (Eigen::Index m = 0; m + 1 < M; ++m)
                c += X(l, m) * std::conj(X(l, m + 1));
        c *= norm;
        double s = -std::arg(c) / kPi;
        AoaGainEstimate &e = out[static_cast<std::size_t>(l)];
        if (std::abs(s) > 1.0)
        {
            s = std::clamp(s, -1.0, 1.0);
            e.clamped = true;
        }
        e.aoa = std::asin(s);
        e.gain_power = std::abs(c);
    }
    return out;
}

UeEstimate estimate_ue(const std::vector<CMatrix> &calibrated, const CMatrix &stacked,
                       std::span<const int> subcarriers, std::span<const double> coarse_delays,
                       double los_geom_delay, const SystemConfig &sys, const SparsityConfig &sp,
                       const RefineConfig &cfg)
{
    const RefinedTaps taps = refine_delays(stacked, subcarriers, sys.subcarrier_spacing, coarse_delays,
                                           sp.grid_spacing(), sp.tau_max, los_geom_delay, cfg);

    std::vector<CMatrix> coeffs;
    coeffs.reserve(calibrated.size());
    for (const CMatrix &Y : calibrated)
        coeffs.push_back(ls_project(Y, taps.reduced, cfg.ridge));

    const auto doppler = estimate_doppler(coeffs, taps.reference, sys.packet_interval);
    const auto aoa = estimate_aoa_gain(coeffs);

    RVector energy = RVector::Zero(taps.reduced.cols());
    for (const CMatrix &X : coeffs)
        energy += X.rowwise().squaredNorm();
    const double strongest = energy.maxCoeff();

    UeEstimate est(taps.delays.size());
    for (std::size_t l = 0; l < est.size(); ++l)
    {
        PathEstimate &p = est[l];
        p.delay = taps.delays[l];
        p.reference = static_cast<int>(l) == taps.reference;
        p.doppler = doppler[l].doppler;
        p.aoa = aoa[l].aoa;
        p.gain_power = aoa[l].gain_power;
        p.clamped = aoa[l].clamped;
        p.reliable = doppler[l].reliable && energy[static_cast<Eigen::Index>(l)] >= cfg.reliability * strongest;
    }
    return est;
}

} // namespace ulsense

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

#include "ulsense/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ulsense
{

RVector delay_periodogram(const CMatrix &Y, std::span<const int> subcarriers, double subcarrier_spacing,
                          std::span<const double> grid)
{
    if (grid.empty())
        throw std::invalid_argument("delay_periodogram: empty grid.");
    if (static_cast<std::size_t>(Y.rows()) != subcarriers.size())
        throw std::invalid_argument("delay_periodogram: Y rows do not match the subcarrier set.");

    CMatrix D(Y.rows(), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t g = 0; g < grid.size(); ++g)
        D.col(static_cast<Eigen::Index>(g)) = delay_steering(grid[g], subcarriers, subcarrier_spacing);

    const CMatrix corr = D.adjoint() * Y;
    return corr.rowwise().squaredNorm() / static_cast<double>(Y.cols());
}

double parabolic_refine(double p_left, double p_peak, double p_right, double grid_spacing)
{
    const double denom = p_left - 2.0 * p_peak + p_right;
    const double scale = std::max({std::abs(p_left), std::abs(p_peak), std::abs(p_right)});
    if (std::abs(denom) <= 1e-12 * scale || denom == 0.0)
        return 0.0;
    double offset = 0.5 * (p_left - p_right) / denom;
    // a true peak sample bounds the vertex to half a bin either side
    offset = std::clamp(offset, -0.5, 0.5);
    return grid_spacing * offset;
}

std::vector<double> calibration_grid(double los_geom_delay, int per_ue_subcarriers, const SystemConfig &sys,
                                     const CalibrationConfig &cfg)
{
    const double step = 1.0 / (cfg.oversampling * per_ue_subcarriers * sys.subcarrier_spacing);
    const double lo = los_geom_delay - cfg.lower_margin / sys.bandwidth;
    const double hi = los_geom_delay + cfg.upper_margin / sys.bandwidth;
    // grid is anchored at tau_geom so that zero offset is a grid point
    const auto below = static_cast<int>(std::ceil((los_geom_delay - lo) / step));
    const auto above = static_cast<int>(std::ceil((hi - los_geom_delay) / step));
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(below + above + 1));
    for (int i = -below; i <= above; ++i)
        grid.push_back(los_geom_delay + i * step);
    return grid;
}

ToEstimate estimate_to(const CMatrix &Y, std::span<const int> subcarriers, double los_geom_delay,
                       const SystemConfig &sys, const CalibrationConfig &cfg)
{
    const auto grid = calibration_grid(los_geom_delay, static_cast<int>(subcarriers.size()), sys, cfg);
    const RVector p = delay_periodogram(Y, subcarriers, sys.subcarrier_spacing, grid);

    Eigen::Index peak = 0;
    p.maxCoeff(&peak);

    ToEstimate est;
    est.observed_los_delay = grid[static_cast<std::size_t>(peak)];
    if (peak == 0 || peak == p.size() - 1)
        est.boundary_peak = true;
    else
    {
        const double step = grid[1] - grid[0];
        est.observed_los_delay += parabolic_refine(p[peak - 1], p[peak], p[peak + 1], step);
    }
    est.timing_offset = est.observed_los_delay - los_geom_delay;
    return est;
}

CMatrix compensate_to(const CMatrix &Y, double timing_offset, std::span<const int> subcarriers,
                      double subcarrier_spacing)
{
    if (static_cast<std::size_t>(Y.rows()) != subcarriers.size())
        throw std::invalid_argument("compensate_to: Y rows do not match the subcarrier set.");
    // conj of the steering vector is the +j ramp
    const CVector phi = delay_steering(timing_offset, subcarriers, subcarrier_spacing).conjugate();
    return phi.asDiagonal() * Y;
}

CalibrationResult calibrate(const CsiTensor &raw, const Scenario &scn, const SystemConfig &sys,
                            const CalibrationConfig &cfg)
{
    if (raw.num_ues() != static_cast<int>(scn.ues.size()))
        throw std::invalid_argument("calibrate: tensor and scenario disagree on K.");

    CalibrationResult out;
    out.calibrated.noise_variance = raw.noise_variance;
    out.calibrated.csi.resize(raw.csi.size());
    out.estimates.resize(raw.csi.size());
    for (std::size_t k = 0; k < raw.csi.size(); ++k)
    {
        const UeChannel &ue = scn.ues[k];
        for (const CMatrix &Y : raw.csi[k])
        {
            const ToEstimate est = estimate_to(Y, ue.subcarriers, ue.los_geom_delay, sys, cfg);
            out.estimates[k].push_back(est);
            out.calibrated.csi[k].push_back(compensate_to(Y, est.timing_offset, ue.subcarriers, sys.subcarrier_spacing));
        }
    }
    return out;
}

} // namespace ulsense

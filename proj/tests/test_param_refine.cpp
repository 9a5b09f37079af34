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

#include "catch_amalgamated.hpp"

#include "ulsense/param_refine.hpp"
#include "ulsense/rng.hpp"

#include <cmath>

using namespace ulsense;
using Catch::Approx;

namespace
{

std::vector<int> block(int first, int count)
{
    std::vector<int> s(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        s[static_cast<std::size_t>(i)] = first + i;
    return s;
}

CMatrix random_matrix(Eigen::Index r, Eigen::Index c, Rng &rng)
{
    CMatrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m(i) = rng.complex_normal(1.0);
    return m;
}

// x_l[t] = alpha_l exp(j phi_t) exp(j 2 pi t T (nu_l + cfo_t)) a(theta_l)^T
std::vector<CMatrix> slow_time_coeffs(const std::vector<cdouble> &gain, const std::vector<double> &doppler,
                                      const std::vector<double> &aoa, int T, int M, double TA, Rng &rng)
{
    std::vector<CMatrix> out;
    double cfo_phase = 0.0;
    for (int t = 0; t < T; ++t)
    {
        const double po = rng.uniform(0.0, 2 * kPi);
        cfo_phase = 2 * kPi * t * TA * rng.uniform(0.0, 150.0);
        CMatrix X(static_cast<Eigen::Index>(gain.size()), M);
        for (std::size_t l = 0; l < gain.size(); ++l)
        {
            const cdouble s = gain[l] * std::polar(1.0, po + cfo_phase + 2 * kPi * t * TA * doppler[l]);
            X.row(static_cast<Eigen::Index>(l)) = (s * array_response(aoa[l], M)).transpose();
        }
        out.push_back(X);
    }
    return out;
}

} // namespace

TEST_CASE("refinement candidates span two grid bins", "[param_refine]")
{
    RefineConfig cfg;
    CHECK(cfg.factor == 4);
    CHECK(cfg.span == 8);
    CHECK(2 * cfg.span + 1 == 17);
    CHECK(cfg.span / static_cast<double>(cfg.factor) == 2.0);
}

TEST_CASE("on-grid tap keeps its coarse delay", "[param_refine]")
{
    SystemConfig sys;
    SparsityConfig sp;
    const auto grid = delay_grid(sp);
    const auto sc = block(0, 128);
    const CVector d = delay_steering(grid[40], sc, sys.subcarrier_spacing);
    const CMatrix Y = d * CVector::Ones(4).transpose();
    const std::vector<double> coarse{grid[40]};
    const RefinedTaps taps = refine_delays(Y, sc, sys.subcarrier_spacing, coarse, sp.grid_spacing(), sp.tau_max, grid[40]);
    CHECK(taps.delays[0] == grid[40]);
    CHECK(taps.reference == 0);
}

TEST_CASE("off-grid tap is refined to within half a refinement step", "[param_refine]")
{
    SystemConfig sys;
    SparsityConfig sp;
    const auto grid = delay_grid(sp);
    const auto sc = block(128, 128);
    const double step = sp.grid_spacing();
    for (double frac : {0.3, -0.3, 0.45, 0.1})
    {
        const double truth = grid[70] + frac * step;
        const CMatrix Y = delay_steering(truth, sc, sys.subcarrier_spacing) * CVector::Ones(2).transpose();

        // dense-grid argmax oracle over the same span
        double best = 0.0, best_p = -1.0;
        for (double tau = grid[70] - 2 * step; tau <= grid[70] + 2 * step; tau += step / 1000)
        {
            const double p = (delay_steering(tau, sc, sys.subcarrier_spacing).adjoint() * Y).squaredNorm();
            if (p > best_p)
            {
                best_p = p;
                best = tau;
            }
        }
        const std::vector<double> coarse{grid[70]};
        const RefinedTaps taps = refine_delays(Y, sc, sys.subcarrier_spacing, coarse, step, sp.tau_max, grid[70]);
        CHECK(std::abs(taps.delays[0] - truth) <= step / 8 + 1e-15);
        CHECK(std::abs(taps.delays[0] - best) <= step / 8 + 1e-15);
    }
}

TEST_CASE("tap isolation keeps a weak neighbour from being captured", "[param_refine]")
{
    SystemConfig sys;
    SparsityConfig sp;
    const auto grid = delay_grid(sp);
    const double bin = sp.grid_spacing();
    for (int nk : {128, 1024})
    {
        const auto sc = block(0, nk);
        const double weak = grid[53] + 0.25 * bin;
        const CMatrix Y = 10.0 * delay_steering(grid[50], sc, sys.subcarrier_spacing) * CVector::Ones(2).transpose() +
                          delay_steering(weak, sc, sys.subcarrier_spacing) * CVector::Ones(2).transpose();
        const std::vector<double> coarse{grid[50], grid[53]};
        RefineConfig plain;
        plain.isolate_taps = false;
        const RefinedTaps iso = refine_delays(Y, sc, sys.subcarrier_spacing, coarse, bin, sp.tau_max, grid[50]);
        const RefinedTaps raw = refine_delays(Y, sc, sys.subcarrier_spacing, coarse, bin, sp.tau_max, grid[50], plain);
        CHECK(std::abs(iso.delays[1] - weak) <= 0.25 * bin + 1e-15);
        CHECK(std::abs(raw.delays[1] - weak) > bin);
        CHECK(iso.reference == 0);
        if (nk == 1024)
            CHECK(std::abs(iso.delays[1] - weak) <= bin / 8 + 1e-15);
    }
}

TEST_CASE("candidates outside the delay range are dropped", "[param_refine]")
{
    SystemConfig sys;
    SparsityConfig sp;
    const auto sc = block(0, 64);
    const CMatrix Y = delay_steering(0.0, sc, sys.subcarrier_spacing) * CVector::Ones(2).transpose();
    const std::vector<double> coarse{0.0};
    const RefinedTaps taps = refine_delays(Y, sc, sys.subcarrier_spacing, coarse, sp.grid_spacing(), sp.tau_max, 0.0);
    CHECK(taps.delays[0] >= 0.0);
    RefineConfig bad;
    bad.factor = 0;
    CHECK_THROWS_AS(refine_delays(Y, sc, sys.subcarrier_spacing, coarse, sp.grid_spacing(), sp.tau_max, 0.0, bad),
                    std::invalid_argument);
}

TEST_CASE("reference_tap picks the tap nearest the geometric delay", "[param_refine]")
{
    const std::vector<double> d{100e-9, 300e-9, 500e-9};
    CHECK(reference_tap(d, {}, 290e-9) == 1);
    const std::vector<double> tie{100e-9, 300e-9};
    const std::vector<double> e{1.0, 4.0};
    CHECK(reference_tap(tie, e, 200e-9) == 1);
}

TEST_CASE("ls_project", "[param_refine]")
{
    Rng rng(3);
    const CMatrix B = random_matrix(4, 2, rng);
    CHECK(ls_project(CMatrix::Zero(4, 3), B, 0.1).norm() == 0.0);

    Eigen::HouseholderQR<CMatrix> qr(random_matrix(6, 3, rng));
    const CMatrix Q = qr.householderQ() * CMatrix::Identity(6, 3);
    const CMatrix Y6 = random_matrix(6, 2, rng);
    CHECK((ls_project(Y6, Q, 0.0) - Q.adjoint() * Y6).norm() < 1e-12);

    // normal equations by Cramer's rule on the 2x2 system
    const CMatrix Y = random_matrix(4, 2, rng);
    const double lambda = 0.3;
    cdouble n00{0, 0}, n01{0, 0}, n10{0, 0}, n11{0, 0};
    for (int i = 0; i < 4; ++i)
    {
        n00 += std::conj(B(i, 0)) * B(i, 0);
        n01 += std::conj(B(i, 0)) * B(i, 1);
        n10 += std::conj(B(i, 1)) * B(i, 0);
        n11 += std::conj(B(i, 1)) * B(i, 1);
    }
    n00 += lambda;
    n11 += lambda;
    const cdouble det = n00 * n11 - n01 * n10;
    const CMatrix X = ls_project(Y, B, lambda);
    for (int m = 0; m < 2; ++m)
    {
        cdouble r0{0, 0}, r1{0, 0};
        for (int i = 0; i < 4; ++i)
        {
            r0 += std::conj(B(i, 0)) * Y(i, m);
            r1 += std::conj(B(i, 1)) * Y(i, m);
        }
        CHECK(std::abs(X(0, m) - (r0 * n11 - n01 * r1) / det) < 1e-10);
        CHECK(std::abs(X(1, m) - (n00 * r1 - n10 * r0) / det) < 1e-10);
    }
    CHECK_THROWS_AS(ls_project(Y, B, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(ls_project(random_matrix(3, 2, rng), B, 0.0), std::invalid_argument);
}

TEST_CASE("Doppler estimation", "[param_refine]")
{
    const double TA = 0.25e-3;
    Rng rng(19);

    SECTION("zero Doppler with random CFO and phase")
    {
        auto X = slow_time_coeffs({{2, 0}, {0.5, 0.2}}, {0.0, 0.0}, {0.1, -0.4}, 16, 8, TA, rng);
        for (auto &x : X)
            for (Eigen::Index i = 0; i < x.size(); ++i)
                x(i) += rng.complex_normal(std::norm(cdouble(0.5, 0.2)) / 100.0); // 20 dB on the weak tap
        const auto est = estimate_doppler(X, 0, TA);
        CHECK(est[0].doppler == 0.0);
        CHECK(std::abs(est[1].doppler) < 1.0);
    }
    SECTION("200 Hz clean")
    {
        const auto X = slow_time_coeffs({{2, 0}, {0.5, 0.2}}, {0.0, 200.0}, {0.1, -0.4}, 16, 8, TA, rng);
        const auto est = estimate_doppler(X, 0, TA);
        CHECK(std::abs(est[1].doppler - 200.0) < 2.0);
    }
    SECTION("principal value wraps beyond 1/(2 T_A)")
    {
        const auto X = slow_time_coeffs({{2, 0}, {1, 0}}, {0.0, 2500.0}, {0.0, 0.0}, 4, 2, TA, rng);
        const auto est = estimate_doppler(X, 0, TA);
        CHECK(est[1].doppler == Approx(2500.0 - 4000.0).margin(1e-6));
        CHECK(std::abs(est[1].doppler) <= 1.0 / (2 * TA));
    }
    SECTION("invariant to a common per-packet phase")
    {
        auto X = slow_time_coeffs({{2, 0}, {0.5, 0.2}, {0.3, -0.7}}, {0.0, -120.0, 310.0}, {0.1, -0.4, 0.9}, 8, 4,
                                  TA, rng);
        const auto a = estimate_doppler(X, 0, TA);
        for (auto &x : X)
            x *= std::polar(1.0, rng.uniform(0.0, 2 * kPi));
        const auto b = estimate_doppler(X, 0, TA);
        for (std::size_t l = 0; l < a.size(); ++l)
            CHECK(std::abs(a[l].doppler - b[l].doppler) < 1e-9);
    }
    SECTION("errors")
    {
        const auto X = slow_time_coeffs({{1, 0}}, {0.0}, {0.0}, 1, 2, TA, rng);
        CHECK_THROWS_AS(estimate_doppler(X, 0, TA), std::invalid_argument);
        const auto Y = slow_time_coeffs({{1, 0}}, {0.0}, {0.0}, 3, 2, TA, rng);
        CHECK_THROWS_AS(estimate_doppler(Y, 2, TA), std::invalid_argument);
    }
}

TEST_CASE("AoA and gain estimation", "[param_refine]")
{
    Rng rng(23);
    const double TA = 0.25e-3;
    auto X = slow_time_coeffs({{1, 0}, {0.6, 0.8}, {0.2, 0.1}}, {0.0, 100.0, -50.0}, {0.0, kPi / 6, -1.1}, 16, 8, TA,
                              rng);
    const auto est = estimate_aoa_gain(X);
    CHECK(std::abs(est[0].aoa) < 1e-12);
    CHECK(std::sin(est[1].aoa) == Approx(0.5).margin(1e-3));
    CHECK(est[1].gain_power == Approx(1.0).margin(1e-3));
    CHECK(est[2].aoa == Approx(-1.1).margin(1e-9));
    for (const auto &e : est)
        CHECK(e.gain_power >= 0.0);

    const cdouble scale = std::polar(3.7, 1.9);
    for (auto &x : X)
        x *= scale;
    const auto scaled = estimate_aoa_gain(X);
    for (std::size_t l = 0; l < est.size(); ++l)
        CHECK(std::abs(scaled[l].aoa - est[l].aoa) < 1e-12);

    CHECK_THROWS_AS(estimate_aoa_gain({}), std::invalid_argument);
    CHECK_THROWS_AS(estimate_aoa_gain({CMatrix::Ones(2, 1)}), std::invalid_argument);
}

TEST_CASE("estimate_ue recovers a clean two-tap UE", "[param_refine]")
{
    SystemConfig sys;
    sys.num_packets = 8;
    SparsityConfig sp;
    const auto grid = delay_grid(sp);
    UeChannel ue;
    ue.subcarriers = block(0, 1024);
    ue.paths = {Path{{0.3, 0.2}, grid[90], -140.0, 0.5, false}, Path{{1.2, 0.0}, grid[30], 0.0, -0.2, true}};
    ue.los_geom_delay = grid[30];
    std::vector<CMatrix> packets;
    CMatrix stacked(1024, 8 * sys.num_antennas);
    for (int t = 0; t < sys.num_packets; ++t)
    {
        packets.push_back(noiseless_csi(ue, PacketOffset{0.0, 40.0, 0.7 * t}, t, sys));
        stacked.middleCols(t * sys.num_antennas, sys.num_antennas) = packets.back();
    }
    const std::vector<double> coarse{grid[30], grid[90]};
    RefineConfig cfg;
    cfg.ridge = 0.0;
    const UeEstimate est = estimate_ue(packets, stacked, ue.subcarriers, coarse, ue.los_geom_delay, sys, sp, cfg);
    REQUIRE(est.size() == 2);
    CHECK(est[0].reference);
    CHECK(est[0].delay == grid[30]);
    CHECK(est[1].delay == grid[90]);
    CHECK(est[1].doppler == Approx(-140.0).margin(1e-6));
    CHECK(est[1].aoa == Approx(0.5).margin(1e-9));
    CHECK(est[0].aoa == Approx(-0.2).margin(1e-9));
}

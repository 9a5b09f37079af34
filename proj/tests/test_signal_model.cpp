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

#include "ulsense/rng.hpp"
#include "ulsense/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

using namespace ulsense;
using Catch::Approx;

namespace
{

SystemConfig small_system()
{
    SystemConfig sys;
    sys.num_subcarriers = 64;
    sys.num_ues = 4;
    sys.num_packets = 3;
    sys.num_antennas = 2;
    return sys;
}

SparsityConfig small_sparsity()
{
    SparsityConfig sp;
    sp.grid_size = 64;
    sp.num_clusters_true = 2;
    sp.num_clusters_candidate = 2;
    sp.per_ue_subcarriers = 16;
    return sp;
}

} // namespace

TEST_CASE("allocate_subcarriers gives contiguous disjoint blocks", "[signal_model]")
{
    auto sets = allocate_subcarriers(2048, 8, 128);
    REQUIRE(sets.size() == 8);
    CHECK(sets[0].front() == 0);
    CHECK(sets[0].back() == 127);
    CHECK(sets[7].front() == 896);
    CHECK(sets[7].back() == 1023);

    sets = allocate_subcarriers(4, 1, 4);
    CHECK(sets[0] == std::vector<int>{0, 1, 2, 3});

    sets = allocate_subcarriers(8, 2, 4);
    CHECK(sets[0] == std::vector<int>{0, 1, 2, 3});
    CHECK(sets[1] == std::vector<int>{4, 5, 6, 7});
    std::set<int> a(sets[0].begin(), sets[0].end());
    for (int n : sets[1])
        CHECK(a.count(n) == 0);

    CHECK_THROWS_AS(allocate_subcarriers(100, 8, 16), std::invalid_argument);
}

TEST_CASE("delay_steering values", "[signal_model]")
{
    const std::vector<int> set{0, 3, 7};
    const CVector d0 = delay_steering(0.0, set, 60e3);
    for (Eigen::Index i = 0; i < d0.size(); ++i)
        CHECK(std::abs(d0[i] - cdouble(1.0, 0.0)) == 0.0);

    const std::vector<int> second{1};
    const CVector d = delay_steering(2.5e-6, second, 60e3);
    const cdouble expected = std::exp(cdouble(0.0, -0.3 * kPi));
    CHECK(std::abs(d[0] - expected) < 1e-14);

    const CVector any = delay_steering(1.234567e-6, set, 60e3);
    for (Eigen::Index i = 0; i < any.size(); ++i)
        CHECK(std::abs(any[i]) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("array_response values", "[signal_model]")
{
    const CVector a0 = array_response(0.0, 8);
    CHECK((a0 - CVector::Ones(8)).norm() < 1e-15);

    const CVector a1 = array_response(kPi / 2, 2);
    CHECK(std::abs(a1[0] - cdouble(1, 0)) < 1e-15);
    CHECK(std::abs(a1[1] - cdouble(-1, 0)) < 1e-14);

    const CVector a2 = array_response(kPi / 6, 3);
    CHECK(std::abs(a2[0] - cdouble(1, 0)) < 1e-14);
    CHECK(std::abs(a2[1] - cdouble(0, 1)) < 1e-14);
    CHECK(std::abs(a2[2] - cdouble(-1, 0)) < 1e-14);
}

TEST_CASE("delay_grid spacing", "[signal_model]")
{
    SparsityConfig sp;
    const auto grid = delay_grid(sp);
    REQUIRE(grid.size() == 256);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == Approx(2.5e-6).epsilon(1e-15));
    CHECK(grid[1] - grid[0] == Approx(9.8039e-9).epsilon(1e-4));
}

TEST_CASE("sample_scenario structure", "[signal_model]")
{
    SystemConfig sys; // K = 8
    SparsityConfig sp;
    Rng rng(7);
    const Scenario scn = sample_scenario(sys, sp, rng);
    REQUIRE(scn.ues.size() == 8);

    std::map<int, int> sizes;
    std::map<int, std::vector<double>> shared;
    for (const auto &ue : scn.ues)
    {
        ++sizes[ue.cluster];
        REQUIRE(ue.paths.size() == 4);
        std::vector<double> sh;
        for (int l = 0; l < sp.shared_paths; ++l)
            sh.push_back(ue.paths[l].delay);
        auto [it, fresh] = shared.emplace(ue.cluster, sh);
        if (!fresh)
            CHECK(it->second == sh);

        CHECK(ue.los().is_los);
        CHECK(ue.los().doppler == 0.0);
        CHECK(ue.los_geom_delay == ue.los().delay);
        double max_nlos = 0.0;
        for (const auto &p : ue.paths)
        {
            CHECK(p.delay >= 0.0);
            CHECK(p.delay <= sp.tau_max);
            CHECK(std::abs(p.aoa) <= kPi / 2);
            if (!p.is_los)
                max_nlos = std::max(max_nlos, std::abs(p.gain));
        }
        CHECK(std::abs(ue.los().gain) == Approx(sp.los_gain_ratio * max_nlos));

        for (std::size_t i = 0; i < ue.paths.size(); ++i)
            for (std::size_t j = i + 1; j < ue.paths.size(); ++j)
                CHECK(std::abs(ue.paths[i].delay - ue.paths[j].delay) >= sp.min_separation() * (1 - 1e-12));
    }
    std::vector<int> counts;
    for (auto [c, n] : sizes)
        counts.push_back(n);
    std::sort(counts.begin(), counts.end());
    CHECK(counts == std::vector<int>{2, 3, 3});
}

TEST_CASE("on-grid delays coincide with grid points", "[signal_model]")
{
    SystemConfig sys;
    SparsityConfig sp;
    sp.on_grid = true;
    Rng rng(3);
    const Scenario scn = sample_scenario(sys, sp, rng);
    const auto grid = delay_grid(sp);
    for (const auto &ue : scn.ues)
        for (const auto &p : ue.paths)
            CHECK(std::find(grid.begin(), grid.end(), p.delay) != grid.end());
}

TEST_CASE("sample_offsets ranges", "[signal_model]")
{
    SystemConfig sys;
    sys.num_ues = 50;
    sys.num_packets = 2000; // 1e5 draws
    Rng rng(11);
    const OffsetTrace off = sample_offsets(sys, rng);
    double sum_cfo = 0.0;
    int n = 0;
    for (const auto &ue : off.offsets)
        for (const auto &o : ue)
        {
            CHECK(o.timing >= 0.0);
            CHECK(o.timing <= 20.0 / 140e6);
            CHECK(o.phase >= 0.0);
            CHECK(o.phase < 2 * kPi);
            sum_cfo += o.cfo;
            ++n;
        }
    CHECK(std::abs(sum_cfo / n - 75.0) < 2.0);
    CHECK(sys.max_timing_offset() == Approx(142.857e-9).epsilon(1e-5));

    sys.offsets_enabled = false;
    const OffsetTrace zero = sample_offsets(sys, rng);
    for (const auto &ue : zero.offsets)
        for (const auto &o : ue)
            CHECK((o.timing == 0.0 && o.cfo == 0.0 && o.phase == 0.0));
}

TEST_CASE("noiseless_csi matches a scalar-loop oracle", "[signal_model]")
{
    SystemConfig sys = small_system();
    sys.num_antennas = 2;
    UeChannel ue;
    ue.subcarriers = {5, 6, 7, 8}; // N_k = 4
    ue.paths = {Path{{0.7, -0.2}, 130e-9, 120.0, 0.4, false}, Path{{1.5, 0.9}, 40e-9, 0.0, -0.3, true}};
    const PacketOffset off{23e-9, 61.0, 1.1};
    const int t = 2;

    const CMatrix Y = noiseless_csi(ue, off, t, sys);
    for (int n = 0; n < 4; ++n)
        for (int m = 0; m < 2; ++m)
        {
            cdouble acc{0, 0};
            for (const Path &p : ue.paths)
            {
                const double f = ue.subcarriers[n] * sys.subcarrier_spacing;
                const double phase = -2 * kPi * f * (p.delay + off.timing) + off.phase +
                                     2 * kPi * t * sys.packet_interval * (p.doppler + off.cfo) +
                                     kPi * m * std::sin(p.aoa);
                acc += p.gain * cdouble(std::cos(phase), std::sin(phase));
            }
            CHECK(std::abs(Y(n, m) - acc) < 1e-12);
        }
}

TEST_CASE("single path noise-free CSI is rank one", "[signal_model]")
{
    SystemConfig sys = small_system();
    sys.num_antennas = 4;
    UeChannel ue;
    for (int n = 0; n < 16; ++n)
        ue.subcarriers.push_back(n);
    ue.paths = {Path{{0.3, 0.4}, 200e-9, 50.0, 0.2, true}};
    const CMatrix Y = noiseless_csi(ue, {}, 1, sys);
    Eigen::JacobiSVD<CMatrix> svd(Y, Eigen::ComputeThinU);
    const auto s = svd.singularValues();
    CHECK(s[1] < 1e-12 * s[0]);
    const CVector psi = delay_steering(200e-9, ue.subcarriers, sys.subcarrier_spacing);
    const CVector u = svd.matrixU().col(0);
    CHECK(std::abs(std::abs(psi.dot(u)) - psi.norm()) < 1e-10);
}

TEST_CASE("zero-path UE yields pure noise", "[signal_model]")
{
    SystemConfig sys = small_system();
    sys.num_ues = 1;
    Scenario scn;
    scn.ues.resize(1);
    scn.ues[0].subcarriers = {0, 1, 2, 3};
    OffsetTrace off;
    off.offsets.assign(1, std::vector<PacketOffset>(sys.num_packets));
    Rng rng(5);
    const CsiTensor y = synthesize_csi(scn, off, sys, rng);
    CHECK(y.noise_variance > 0.0);
    CHECK(y.csi[0][0].norm() > 0.0);

    sys.noise_enabled = false;
    Rng rng2(5);
    const CsiTensor z = synthesize_csi(scn, off, sys, rng2);
    CHECK(z.csi[0][0].norm() == 0.0);
    CHECK(std::isinf(z.noise_precision()));
}

TEST_CASE("empirical noise power matches the configured SNR", "[signal_model]")
{
    SystemConfig sys;
    sys.num_ues = 8;
    sys.num_packets = 8;
    sys.num_subcarriers = 2048;
    sys.snr_db = 10.0;
    SparsityConfig sp;
    sp.per_ue_subcarriers = 256; // 8 * 8 * 256 * 8 = 131072 samples per run

    double noise_power = 0.0, expected = 0.0;
    long count = 0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) // ~1e6 samples
    {
        Rng rs(seed), ro(seed + 100), rn(seed + 200);
        const Scenario scn = sample_scenario(sys, sp, rs);
        const OffsetTrace off = sample_offsets(sys, ro);
        const CsiTensor y = synthesize_csi(scn, off, sys, rn);
        double sig = 0.0;
        long n = 0;
        for (int k = 0; k < sys.num_ues; ++k)
            for (int t = 0; t < sys.num_packets; ++t)
            {
                const CMatrix clean = noiseless_csi(scn.ues[k], off.offsets[k][t], t, sys);
                noise_power += (y.csi[k][t] - clean).squaredNorm();
                sig += clean.squaredNorm();
                n += clean.size();
            }
        count += n;
        expected += y.noise_variance * n;
        CHECK(y.noise_variance == Approx(sig / n / 10.0).epsilon(1e-12));
    }
    CHECK(count >= 1000000);
    CHECK(noise_power / expected == Approx(1.0).margin(0.02));
}

TEST_CASE("synthesis is deterministic for a seed", "[signal_model]")
{
    SystemConfig sys = small_system();
    SparsityConfig sp = small_sparsity();
    auto run = [&] {
        Rng rs(9), ro(10), rn(11);
        const Scenario scn = sample_scenario(sys, sp, rs);
        const OffsetTrace off = sample_offsets(sys, ro);
        return synthesize_csi(scn, off, sys, rn);
    };
    const CsiTensor a = run(), b = run();
    for (int k = 0; k < sys.num_ues; ++k)
        for (int t = 0; t < sys.num_packets; ++t)
            CHECK(a.csi[k][t] == b.csi[k][t]);
}

TEST_CASE("config validation rejects bad values", "[signal_model]")
{
    SystemConfig sys;
    sys.num_antennas = 0;
    CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
    sys = SystemConfig{};
    SparsityConfig sp;
    sp.per_ue_subcarriers = 512; // 8 * 512 > 2048
    CHECK_THROWS_AS(sp.validate(sys), std::invalid_argument);
    sp = SparsityConfig{};
    sp.num_clusters_candidate = 2; // < S
    CHECK_THROWS_AS(sp.validate(sys), std::invalid_argument);
}

TEST_CASE("rng streams are independent and portable", "[rng]")
{
    CHECK(derive_seed(1, stream::scenario) != derive_seed(1, stream::offsets));
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i)
        CHECK(a.uniform() == b.uniform());
    Rng c(1);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i)
    {
        const double x = c.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(s2 / n == Approx(1.0).margin(0.01));
    for (int i = 0; i < 1000; ++i)
        CHECK(c.index(7) < 7);
}

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

#include "vi_oracle.hpp"

#include "ulsense/cluster_sbl.hpp"
#include "ulsense/rng.hpp"

#include <algorithm>
#include <cstdint>

namespace vicheck
{

struct PassComparison
{
    double mean = 0.0, cov = 0.0, moments = 0.0;
    double gamma = 0.0, eta = 0.0, alpha = 0.0, resp = 0.0, beta = 0.0;
    double beta_direct = 0.0;  // direct-evaluation overload vs cached terms
    double resp_sum = 0.0;     // max_k |sum_c r_kc - 1|
    double hermitian = 0.0;    // max_k ||Sigma - Sigma^H||_max / ||Sigma||_max
    double min_eigenvalue = 0.0;

    double worst() const { return std::max({mean, cov, moments, gamma, eta, alpha, resp, beta, beta_direct}); }
};

inline double max_abs_rel(const ulsense::CMatrix &lib, const oracle::Mat &ref)
{
    double diff = 0.0, scale = 0.0;
    for (int i = 0; i < lib.rows(); ++i)
        for (int j = 0; j < lib.cols(); ++j)
        {
            diff = std::max(diff, std::abs(lib(i, j) - ref[i][j]));
            scale = std::max(scale, std::abs(ref[i][j]));
        }
    return scale == 0.0 ? diff : diff / scale;
}

// Tiny instance: N_k = 6, G = 4, C = 2, M = 2, T = 2 (MT = 4), K = 3, with a
// randomized prior state so that every term of every update is exercised.
inline PassComparison compare_one_pass(std::uint64_t seed, ulsense::LinearSolver solver)
{
    using namespace ulsense;
    const int K = 3, G = 4, C = 2, N = 6, MT = 4;
    Rng rng(seed);

    SparsityConfig sp;
    sp.grid_size = G;
    std::vector<std::vector<int>> sets;
    for (int k = 0; k < K; ++k)
    {
        std::vector<int> s;
        for (int n = 0; n < N; ++n)
            s.push_back(k * N + n);
        sets.push_back(s);
    }
    const Dictionary dict = build_dictionary(sp, sets, 60e3);

    StackedObservation obs;
    for (int k = 0; k < K; ++k)
    {
        CMatrix Y(N, MT);
        for (Eigen::Index i = 0; i < Y.size(); ++i)
            Y(i) = rng.complex_normal(1.0);
        obs.stacked.push_back(Y);
    }

    SblHyperparameters hyper;
    VIState s = vi_init(K, G, C, MT, hyper, seed, 0.3);
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < C; ++c)
        {
            s.gamma_shape(g, c) = rng.uniform(0.5, 3.0);
            s.gamma_rate(g, c) = rng.uniform(0.5, 3.0);
        }
    for (int k = 0; k < K; ++k)
        for (int g = 0; g < G; ++g)
        {
            s.eta_shape(k, g) = rng.uniform(0.5, 3.0);
            s.eta_rate(k, g) = rng.uniform(0.5, 3.0);
        }
    s.beta_shape = rng.uniform(1.0, 4.0);
    s.beta_rate = rng.uniform(0.5, 2.0);

    oracle::State o;
    o.K = K;
    o.G = G;
    o.C = C;
    o.MT = MT;
    o.a0 = hyper.a0;
    o.b0 = hyper.b0;
    o.alpha0.assign(C, hyper.alpha0);
    o.r.assign(K, std::vector<double>(C));
    o.ag.assign(G, std::vector<double>(C));
    o.bg = o.ag;
    o.ae.assign(K, std::vector<double>(G));
    o.be = o.ae;
    for (int k = 0; k < K; ++k)
        for (int c = 0; c < C; ++c)
            o.r[k][c] = s.resp(k, c);
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < C; ++c)
        {
            o.ag[g][c] = s.gamma_shape(g, c);
            o.bg[g][c] = s.gamma_rate(g, c);
        }
    for (int k = 0; k < K; ++k)
        for (int g = 0; g < G; ++g)
        {
            o.ae[k][g] = s.eta_shape(k, g);
            o.be[k][g] = s.eta_rate(k, g);
        }
    o.abeta = s.beta_shape;
    o.bbeta = s.beta_rate;

    std::vector<oracle::Mat> psi, Y;
    for (int k = 0; k < K; ++k)
    {
        psi.push_back(oracle::from_eigen(dict.psi[k]));
        Y.push_back(oracle::from_eigen(obs.stacked[k]));
    }
    oracle::one_pass(o, psi, Y);

    // library pass (a)-(d)
    std::vector<RowMoments> moments(K);
    for (int k = 0; k < K; ++k)
    {
        const RowPosterior post(dict.psi[k], obs.stacked[k], 2, solver);
        update_q_w(s, post, k, true);
        moments[k] = row_second_moments(s.row_mean[k], s.row_cov_diag[k], MT);
    }
    update_q_gamma_eta(s, moments);
    update_q_z_pi(s, moments);
    VIState direct = s;
    update_q_beta(s, std::vector<int>(K, N));
    update_q_beta(direct, dict, obs);

    PassComparison out;
    out.min_eigenvalue = INFINITY;
    for (int k = 0; k < K; ++k)
    {
        out.mean = std::max(out.mean, max_abs_rel(s.row_mean[k], o.U[k]));
        out.cov = std::max(out.cov, max_abs_rel(s.row_cov[k], o.Sigma[k]));
        for (int g = 0; g < G; ++g)
        {
            out.moments = std::max(out.moments, oracle::rel_err(moments[k].shared[g], o.msh[k][g]));
            out.moments = std::max(out.moments, oracle::rel_err(moments[k].priv[g], o.mpr[k][g]));
            out.eta = std::max(out.eta, oracle::rel_err(s.eta_shape(k, g), o.ae[k][g]));
            out.eta = std::max(out.eta, oracle::rel_err(s.eta_rate(k, g), o.be[k][g]));
        }
        for (int c = 0; c < C; ++c)
            out.resp = std::max(out.resp, oracle::rel_err(s.resp(k, c), o.r[k][c]));
        out.resp_sum = std::max(out.resp_sum, std::abs(s.resp.row(k).sum() - 1.0));

        const CMatrix &S = s.row_cov[k];
        out.hermitian = std::max(out.hermitian, (S - S.adjoint()).cwiseAbs().maxCoeff() / S.cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<CMatrix> eig(S);
        out.min_eigenvalue = std::min(out.min_eigenvalue, eig.eigenvalues().minCoeff());
    }
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < C; ++c)
        {
            out.gamma = std::max(out.gamma, oracle::rel_err(s.gamma_shape(g, c), o.ag[g][c]));
            out.gamma = std::max(out.gamma, oracle::rel_err(s.gamma_rate(g, c), o.bg[g][c]));
        }
    for (int c = 0; c < C; ++c)
        out.alpha = std::max(out.alpha, oracle::rel_err(s.alpha[c], o.alpha[c]));
    out.beta = std::max(oracle::rel_err(s.beta_shape, o.abeta), oracle::rel_err(s.beta_rate, o.bbeta));
    out.beta_direct = std::max(oracle::rel_err(direct.beta_shape, o.abeta), oracle::rel_err(direct.beta_rate, o.bbeta));
    return out;
}

} // namespace vicheck

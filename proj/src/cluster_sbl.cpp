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

#include "ulsense/cluster_sbl.hpp"

#include "ulsense/rng.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ulsense
{

// ---- dictionaries -------------------------------------------------------------

CMatrix delay_dictionary(std::span<const double> grid, std::span<const int> subcarriers, double subcarrier_spacing)
{
    CMatrix psi(static_cast<Eigen::Index>(subcarriers.size()), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t g = 0; g < grid.size(); ++g)
        psi.col(static_cast<Eigen::Index>(g)) = delay_steering(grid[g], subcarriers, subcarrier_spacing);
    return psi;
}

Dictionary build_dictionary(const SparsityConfig &sp, const std::vector<std::vector<int>> &subcarrier_sets,
                            double subcarrier_spacing)
{
    if (sp.grid_size < 2)
        throw std::invalid_argument("build_dictionary: G must be >= 2.");
    Dictionary dict;
    dict.grid = delay_grid(sp);
    dict.psi.reserve(subcarrier_sets.size());
    for (const auto &set : subcarrier_sets)
        dict.psi.push_back(delay_dictionary(dict.grid, set, subcarrier_spacing));
    return dict;
}

CMatrix Dictionary::duplicated(std::size_t k) const
{
    const CMatrix &p = psi.at(k);
    CMatrix out(p.rows(), 2 * p.cols());
    out << p, p;
    return out;
}

CMatrix Dictionary::gram(std::size_t k) const
{
    const CMatrix d = duplicated(k);
    return d.adjoint() * d;
}

StackedObservation stack_packets(const CsiTensor &calibrated)
{
    StackedObservation obs;
    obs.stacked.reserve(calibrated.csi.size());
    for (const auto &ue : calibrated.csi)
    {
        if (ue.empty())
            throw std::invalid_argument("stack_packets: UE without packets.");
        const Eigen::Index rows = ue.front().rows();
        const Eigen::Index M = ue.front().cols();
        CMatrix Y(rows, M * static_cast<Eigen::Index>(ue.size()));
        for (std::size_t t = 0; t < ue.size(); ++t)
        {
            if (ue[t].rows() != rows || ue[t].cols() != M)
                throw std::invalid_argument("stack_packets: inconsistent packet dimensions.");
            Y.middleCols(static_cast<Eigen::Index>(t) * M, M) = ue[t];
        }
        obs.stacked.push_back(std::move(Y));
    }
    return obs;
}

CMatrix StackedObservation::correlation(const Dictionary &dict, std::size_t k) const
{
    return dict.duplicated(k).adjoint() * stacked.at(k);
}

// ---- row posterior ----------------------------------------------------------------

RowPosterior::RowPosterior(const CMatrix &psi, const CMatrix &stacked, int blocks, LinearSolver solver,
                           double rank_tolerance)
    : psi_(psi), blocks_(blocks), solver_(solver), stacked_cols_(stacked.cols())
{
    if (blocks < 1)
        throw std::invalid_argument("RowPosterior: need at least one block.");
    if (psi.rows() != stacked.rows())
        throw std::invalid_argument("RowPosterior: dictionary and observation row counts differ.");

    if (solver_ == LinearSolver::reduced)
    {
        Eigen::BDCSVD<CMatrix> svd(psi, Eigen::ComputeThinU);
        const RVector &s = svd.singularValues();
        Eigen::Index r = 0;
        while (r < s.size() && s[r] > rank_tolerance * s[0])
            ++r;
        r = std::max<Eigen::Index>(r, 1);
        const CMatrix basis = svd.matrixU().leftCols(r);
        coeff_ = basis.adjoint() * psi;
        data_ = basis.adjoint() * stacked;
        perp_energy_ = (stacked - basis * data_).squaredNorm();
    }
    else
    {
        CMatrix dup(psi.rows(), blocks * psi.cols());
        for (int b = 0; b < blocks; ++b)
            dup.middleCols(b * psi.cols(), psi.cols()) = psi;
        gram_ = dup.adjoint() * dup;
        correlation_ = dup.adjoint() * stacked;
        stacked_ = stacked;
        coeff_.resize(std::min(psi.rows(), psi.cols()), 0); // rank() reports the dense dimension bound
    }
}

void RowPosterior::solve(const RVector &precisions, double beta, Result &out, bool full_covariance) const
{
    if (precisions.size() != blocks_ * psi_.cols())
        throw std::invalid_argument("RowPosterior::solve: precision vector has the wrong length.");
    if ((precisions.array() <= 0.0).any() || !precisions.allFinite())
        throw ViError("RowPosterior: row precisions must be positive and finite.", -1);
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw ViError("RowPosterior: noise precision must be positive and finite.", -1);
    if (solver_ == LinearSolver::reduced)
        solve_reduced(precisions, beta, out, full_covariance);
    else
        solve_dense(precisions, beta, out, full_covariance);
}

namespace
{

template <typename Llt>
std::string condition_note(const Llt &llt)
{
    const RVector d = llt.matrixLLT().diagonal().real().cwiseAbs2();
    std::ostringstream os;
    os << "diag(L)^2 spans [" << d.minCoeff() << ", " << d.maxCoeff() << "]";
    return os.str();
}

} // namespace

void RowPosterior::solve_reduced(const RVector &precisions, double beta, Result &out, bool full) const
{
    const Eigen::Index G = psi_.cols();
    const Eigen::Index r = coeff_.rows();
    const RVector var = precisions.cwiseInverse();
    RVector var_sum = RVector::Zero(G);
    for (int b = 0; b < blocks_; ++b)
        var_sum += var.segment(b * G, G);

    const double inv_beta = 1.0 / beta;
    const CMatrix scaled = coeff_ * var_sum.cwiseSqrt().asDiagonal();
    CMatrix c_r = CMatrix::Identity(r, r) * inv_beta;
    c_r.selfadjointView<Eigen::Lower>().rankUpdate(scaled);

    Eigen::LLT<CMatrix, Eigen::Lower> llt(c_r);
    if (llt.info() != Eigen::Success)
        throw ViError("RowPosterior: reduced system not positive definite; " + condition_note(llt), -1);

    const CMatrix z = llt.matrixL().solve(coeff_);     // L^-1 Phi
    const RVector q = z.colwise().squaredNorm().transpose(); // phi_g^H C^-1 phi_g
    const CMatrix w = llt.solve(data_);                // C^-1 Y_r
    const CMatrix v = coeff_.adjoint() * w;            // Psi^H C^-1 Ytilde

    out.mean.resize(blocks_ * G, stacked_cols_);
    out.cov_diag.resize(blocks_ * G);
    for (int b = 0; b < blocks_; ++b)
    {
        const auto vb = var.segment(b * G, G);
        out.mean.middleRows(b * G, G).noalias() = vb.asDiagonal() * v;
        out.cov_diag.segment(b * G, G) = vb - vb.cwiseAbs2().cwiseProduct(q);
    }
    out.residual = inv_beta * inv_beta * w.squaredNorm() + perp_energy_;
    out.trace = inv_beta * var_sum.dot(q);

    if (full)
    {
        const CMatrix zz = z.adjoint() * z;
        out.cov.resize(blocks_ * G, blocks_ * G);
        for (int b = 0; b < blocks_; ++b)
            for (int b2 = 0; b2 < blocks_; ++b2)
                out.cov.block(b * G, b2 * G, G, G) =
                    -(var.segment(b * G, G).asDiagonal() * zz * var.segment(b2 * G, G).asDiagonal());
        out.cov.diagonal() += var.cast<cdouble>();
    }
    else
        out.cov.resize(0, 0);
}

void RowPosterior::solve_dense(const RVector &precisions, double beta, Result &out, bool full) const
{
    const Eigen::Index G = psi_.cols();
    CMatrix system = beta * gram_;
    system.diagonal() += precisions.cast<cdouble>();
    Eigen::LLT<CMatrix, Eigen::Lower> llt(system);
    if (llt.info() != Eigen::Success)
        throw ViError("RowPosterior: dense system not positive definite; " + condition_note(llt), -1);

    const CMatrix sigma = llt.solve(CMatrix::Identity(system.rows(), system.cols()));
    out.mean.noalias() = beta * sigma * correlation_;
    out.cov_diag = sigma.diagonal().real();

    CMatrix combined = CMatrix::Zero(G, stacked_cols_);
    for (int b = 0; b < blocks_; ++b)
        combined += out.mean.middleRows(b * G, G);
    out.residual = (stacked_ - psi_ * combined).squaredNorm();
    out.trace = (sigma * gram_).trace().real();
    if (full)
        out.cov = sigma;
    else
        out.cov.resize(0, 0);
}

// ---- state and updates -------------------------------------------------------------------

double gamma_log_mean(double shape, double rate)
{
    return boost::math::digamma(shape) - std::log(rate);
}

RVector VIState::row_precisions(int k) const
{
    const RMatrix gm = gamma_mean();
    RVector lambda(private_rows ? 2 * grid_size : grid_size);
    lambda.head(grid_size) = gm * resp.row(k).transpose();
    if (private_rows)
        lambda.tail(grid_size) = eta_mean().row(k).transpose();
    return lambda;
}

RVector VIState::row_energy(int k) const
{
    const CMatrix &U = row_mean.at(k);
    RVector e = U.topRows(grid_size).rowwise().squaredNorm();
    if (private_rows)
        e += U.bottomRows(grid_size).rowwise().squaredNorm();
    return e;
}

VIState vi_init(int num_ues, int grid_size, int num_clusters, int num_columns, const SblHyperparameters &hyper,
                std::uint64_t seed, double jitter, bool private_rows)
{
    if (!(hyper.a0 > 0.0) || !(hyper.b0 > 0.0) || !(hyper.alpha0 > 0.0))
        throw std::invalid_argument("vi_init: a0, b0 and alpha0 must be positive.");
    if (num_ues < 1 || grid_size < 1 || num_clusters < 1 || num_columns < 1)
        throw std::invalid_argument("vi_init: K, G, C and MT must be positive.");

    VIState s;
    s.num_ues = num_ues;
    s.grid_size = grid_size;
    s.num_clusters = num_clusters;
    s.num_columns = num_columns;
    s.private_rows = private_rows;
    s.hyper = hyper;

    const Eigen::Index rows = private_rows ? 2 * grid_size : grid_size;
    s.row_mean.assign(num_ues, CMatrix::Zero(rows, num_columns));
    s.row_cov_diag.assign(num_ues, RVector::Ones(rows));
    s.row_cov.assign(num_ues, CMatrix());
    s.residual.assign(num_ues, 0.0);
    s.trace.assign(num_ues, 0.0);

    Rng rng(seed);
    s.resp.resize(num_ues, num_clusters);
    for (int k = 0; k < num_ues; ++k)
    {
        for (int c = 0; c < num_clusters; ++c)
            s.resp(k, c) = (1.0 + jitter * rng.uniform(-1.0, 1.0)) / num_clusters;
        s.resp.row(k) /= s.resp.row(k).sum();
    }

    s.gamma_shape = RMatrix::Ones(grid_size, num_clusters);
    s.gamma_rate = RMatrix::Ones(grid_size, num_clusters);
    s.eta_shape = RMatrix::Ones(num_ues, grid_size);
    s.eta_rate = RMatrix::Ones(num_ues, grid_size);
    s.alpha0 = RVector::Constant(num_clusters, hyper.alpha0);
    s.alpha = s.alpha0;
    s.beta_shape = 1.0;
    s.beta_rate = 1.0;
    return s;
}

void update_q_w(VIState &state, const RowPosterior &posterior, int k, bool full_covariance)
{
    RowPosterior::Result res;
    posterior.solve(state.row_precisions(k), state.beta_mean(), res, full_covariance);
    state.row_mean[k] = std::move(res.mean);
    state.row_cov_diag[k] = std::move(res.cov_diag);
    state.row_cov[k] = std::move(res.cov);
    state.residual[k] = res.residual;
    state.trace[k] = res.trace;
}

RowMoments row_second_moments(const CMatrix &row_mean, const RVector &row_cov_diag, int num_columns,
                              bool private_rows)
{
    const Eigen::Index G = private_rows ? row_mean.rows() / 2 : row_mean.rows();
    const RVector energy = row_mean.rowwise().squaredNorm();
    // rounding can leave a tiny negative variance on strongly determined rows
    const RVector var = row_cov_diag.cwiseMax(0.0);
    RowMoments m;
    m.shared = energy.head(G) + num_columns * var.head(G);
    if (private_rows)
        m.priv = energy.tail(G) + num_columns * var.tail(G);
    return m;
}

void update_q_gamma_eta(VIState &state, const std::vector<RowMoments> &moments)
{
    const int K = state.num_ues, G = state.grid_size, C = state.num_clusters;
    const double MT = state.num_columns;
    const auto &h = state.hyper;
    for (int c = 0; c < C; ++c)
    {
        const double mass = state.resp.col(c).sum();
        RVector rate = RVector::Constant(G, h.b0);
        for (int k = 0; k < K; ++k)
            rate += state.resp(k, c) * moments[k].shared;
        state.gamma_shape.col(c).setConstant(h.a0 + MT * mass);
        state.gamma_rate.col(c) = rate;
    }
    if (state.private_rows)
        for (int k = 0; k < K; ++k)
        {
            state.eta_shape.row(k).setConstant(h.a0 + MT);
            state.eta_rate.row(k) = (moments[k].priv.array() + h.b0).matrix().transpose();
        }
}

RVector responsibilities_from_logits(const RVector &xi)
{
    const double top = xi.maxCoeff();
    RVector r = (xi.array() - top).exp().matrix();
    return r / r.sum();
}

void update_q_z_pi(VIState &state, const std::vector<RowMoments> &moments)
{
    const int K = state.num_ues, G = state.grid_size, C = state.num_clusters;
    const double MT = state.num_columns;

    state.alpha = state.alpha0 + state.resp.colwise().sum().transpose();
    const double digamma_total = boost::math::digamma(state.alpha.sum());

    RVector log_pi(C), log_norm(C);
    RMatrix gm = state.gamma_mean();
    for (int c = 0; c < C; ++c)
    {
        log_pi[c] = boost::math::digamma(state.alpha[c]) - digamma_total;
        double acc = 0.0;
        for (int g = 0; g < G; ++g)
            acc += gamma_log_mean(state.gamma_shape(g, c), state.gamma_rate(g, c));
        log_norm[c] = MT * acc;
    }
    for (int k = 0; k < K; ++k)
    {
        const RVector fit = gm.transpose() * moments[k].shared; // sum_g E[gamma_gc] E||w^sh_kg||^2
        const RVector xi = log_pi + log_norm - fit;
        state.resp.row(k) = responsibilities_from_logits(xi).transpose();
    }
}

void update_q_beta(VIState &state, const std::vector<int> &subcarriers_per_ue)
{
    const double MT = state.num_columns;
    double rows = 0.0, rate = state.hyper.b0;
    for (int k = 0; k < state.num_ues; ++k)
    {
        rows += subcarriers_per_ue.at(k);
        rate += state.residual[k] + MT * state.trace[k];
    }
    state.beta_shape = state.hyper.a0 + MT * rows;
    state.beta_rate = rate;
}

void update_q_beta(VIState &state, const Dictionary &dict, const StackedObservation &obs)
{
    const double MT = state.num_columns;
    double rows = 0.0, rate = state.hyper.b0;
    for (int k = 0; k < state.num_ues; ++k)
    {
        if (state.row_cov[k].size() == 0)
            throw std::invalid_argument("update_q_beta: full row covariance required for the direct evaluation.");
        const CMatrix psi_tau = state.private_rows ? dict.duplicated(k) : dict.psi[k];
        const CMatrix gram = psi_tau.adjoint() * psi_tau;
        rows += static_cast<double>(obs.stacked[k].rows());
        rate += (obs.stacked[k] - psi_tau * state.row_mean[k]).squaredNorm();
        rate += MT * (state.row_cov[k] * gram).trace().real();
    }
    state.beta_shape = state.hyper.a0 + MT * rows;
    state.beta_rate = rate;
}

// ---- engine ------------------------------------------------------------------------------------

namespace
{

// max_g |e_g - e_g'| / max_g e_g, the per-UE convergence statistic
double energy_change(const RVector &now, const RVector &before)
{
    const double scale = now.maxCoeff();
    if (!(scale > 0.0))
        return before.size() == now.size() && before.maxCoeff() == 0.0 ? 0.0 : 1.0;
    if (before.size() != now.size())
        return 1.0;
    return (now - before).cwiseAbs().maxCoeff() / scale;
}

bool state_finite(const VIState &s)
{
    if (!std::isfinite(s.beta_mean()) || !s.resp.allFinite() || !s.alpha.allFinite())
        return false;
    if (!s.gamma_rate.allFinite() || !s.eta_rate.allFinite())
        return false;
    for (const auto &U : s.row_mean)
        if (!U.allFinite())
            return false;
    return true;
}

} // namespace

ViRunResult run_vi(const StackedObservation &obs, const Dictionary &dict, const VIConfig &cfg)
{
    const int K = static_cast<int>(obs.stacked.size());
    if (K == 0 || static_cast<int>(dict.psi.size()) != K)
        throw std::invalid_argument("run_vi: observation and dictionary disagree on K.");
    const int G = dict.grid_size();
    const int MT = obs.num_columns();

    std::vector<RowPosterior> posteriors;
    posteriors.reserve(K);
    std::vector<int> rows(K);
    for (int k = 0; k < K; ++k)
    {
        posteriors.emplace_back(dict.psi[k], obs.stacked[k], cfg.private_rows ? 2 : 1, cfg.solver);
        rows[k] = static_cast<int>(obs.stacked[k].rows());
    }

    ViRunResult run;
    VIState &s = run.state;
    s = vi_init(K, G, cfg.num_clusters, MT, cfg.hyper, cfg.seed, cfg.jitter, cfg.private_rows);

    // noise precision starts from the data power (update (d) with U = 0)
    double power = 0.0;
    for (const auto &Y : obs.stacked)
        power += Y.squaredNorm();
    s.beta_shape = cfg.hyper.a0 + static_cast<double>(MT) * std::accumulate(rows.begin(), rows.end(), 0.0);
    s.beta_rate = cfg.hyper.b0 + power;

    std::vector<RVector> energy(K);
    std::vector<RowMoments> moments(K);
    for (int it = 1; it <= cfg.convergence.max_iterations; ++it)
    {
        try
        {
            for (int k = 0; k < K; ++k)
                update_q_w(s, posteriors[k], k);
        }
        catch (const ViError &e)
        {
            throw ViError(std::string(e.what()) + " (iteration " + std::to_string(it) + ")", it);
        }
        for (int k = 0; k < K; ++k)
            moments[k] = row_second_moments(s.row_mean[k], s.row_cov_diag[k], MT, cfg.private_rows);
        update_q_gamma_eta(s, moments);
        update_q_z_pi(s, moments);
        update_q_beta(s, rows);

        if (!state_finite(s))
            throw ViError("run_vi: non-finite posterior at iteration " + std::to_string(it), it);

        if (cfg.track_residual)
            run.residual_history.push_back(s.residual);

        double change = 0.0;
        for (int k = 0; k < K; ++k)
        {
            RVector e = s.row_energy(k);
            change = std::max(change, energy_change(e, energy[k]));
            energy[k] = std::move(e);
        }
        run.iterations = it;
        if (it > 1 && change < cfg.convergence.tolerance)
        {
            run.converged = true;
            break;
        }
    }
    return run;
}

// ---- support extraction -------------------------------------------------------------------

namespace
{

std::vector<int> local_peaks(const RVector &e)
{
    std::vector<int> peaks;
    const auto G = static_cast<int>(e.size());
    for (int g = 0; g < G; ++g)
    {
        const bool has_left = g > 0, has_right = g + 1 < G;
        if (!has_left && !has_right)
            break;
        const bool ge_left = !has_left || e[g] >= e[g - 1];
        const bool ge_right = !has_right || e[g] >= e[g + 1];
        const bool gt_any = (has_left && e[g] > e[g - 1]) || (has_right && e[g] > e[g + 1]);
        if (ge_left && ge_right && gt_any)
            peaks.push_back(g);
    }
    return peaks;
}

void sort_by_energy(std::vector<int> &idx, const RVector &e)
{
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return e[a] > e[b]; });
}

bool far_enough(int g, const std::vector<int> &taken, int sep)
{
    return std::all_of(taken.begin(), taken.end(), [&](int t) { return std::abs(t - g) >= sep; });
}

} // namespace

SupportEstimate extract_support(const RVector &energy, std::span<const double> grid, const SupportPolicy &policy)
{
    if (energy.size() == 0 || static_cast<std::size_t>(energy.size()) != grid.size())
        throw std::invalid_argument("extract_support: energy and grid sizes differ.");

    Eigen::Index top = 0;
    const double max_e = energy.maxCoeff(&top);

    SupportEstimate est;
    std::vector<int> peaks = local_peaks(energy);
    sort_by_energy(peaks, energy);

    if (policy.oracle_count > 0)
    {
        for (int g : peaks)
            if (static_cast<int>(est.indices.size()) < policy.oracle_count && far_enough(g, est.indices, policy.min_separation))
                est.indices.push_back(g);
        if (static_cast<int>(est.indices.size()) < policy.oracle_count)
        {
            std::vector<int> all(static_cast<std::size_t>(energy.size()));
            std::iota(all.begin(), all.end(), 0);
            sort_by_energy(all, energy);
            for (int g : all)
                if (static_cast<int>(est.indices.size()) < policy.oracle_count && far_enough(g, est.indices, policy.min_separation))
                    est.indices.push_back(g);
        }
        est.degenerate = peaks.empty();
    }
    else
    {
        for (int g : peaks)
            if (energy[g] >= policy.relative_threshold * max_e && far_enough(g, est.indices, policy.min_separation))
                est.indices.push_back(g);
    }

    if (est.indices.empty() || !(max_e > 0.0))
    {
        est.indices.assign(1, static_cast<int>(top));
        est.degenerate = true;
    }
    std::sort(est.indices.begin(), est.indices.end());
    for (int g : est.indices)
        est.delays.push_back(grid[static_cast<std::size_t>(g)]);
    return est;
}

std::vector<SupportEstimate> extract_supports(const VIState &state, std::span<const double> grid,
                                              const SupportPolicy &policy, const std::vector<int> &oracle_counts)
{
    std::vector<SupportEstimate> out;
    out.reserve(static_cast<std::size_t>(state.num_ues));
    for (int k = 0; k < state.num_ues; ++k)
    {
        SupportPolicy p = policy;
        if (!oracle_counts.empty())
            p.oracle_count = oracle_counts.at(k);
        SupportEstimate est = extract_support(state.row_energy(k), grid, p);
        Eigen::Index c = 0;
        state.resp.row(k).maxCoeff(&c);
        est.cluster = static_cast<int>(c);
        out.push_back(std::move(est));
    }
    return out;
}

// ---- individual baseline ----------------------------------------------------------------------

IndividualSblResult individual_sbl(const CMatrix &stacked, const CMatrix &psi, std::span<const double> grid,
                                   const SblHyperparameters &hyper, const ConvergenceConfig &convergence,
                                   const SupportPolicy &policy, LinearSolver solver)
{
    if (!(hyper.a0 > 0.0) || !(hyper.b0 > 0.0))
        throw std::invalid_argument("individual_sbl: a0 and b0 must be positive.");
    const RowPosterior posterior(psi, stacked, 1, solver);
    const Eigen::Index G = psi.cols();
    const double MT = static_cast<double>(stacked.cols());
    const double N = static_cast<double>(stacked.rows());

    RVector eta_shape = RVector::Ones(G), eta_rate = RVector::Ones(G);
    double beta_shape = hyper.a0 + MT * N;
    double beta_rate = hyper.b0 + stacked.squaredNorm();

    IndividualSblResult out;
    RowPosterior::Result res;
    RVector energy;
    for (int it = 1; it <= convergence.max_iterations; ++it)
    {
        try
        {
            posterior.solve(eta_shape.cwiseQuotient(eta_rate), beta_shape / beta_rate, res);
        }
        catch (const ViError &e)
        {
            throw ViError(std::string(e.what()) + " (iteration " + std::to_string(it) + ")", it);
        }
        const RowMoments m = row_second_moments(res.mean, res.cov_diag, static_cast<int>(MT), false);
        eta_shape.setConstant(hyper.a0 + MT);
        eta_rate = (m.shared.array() + hyper.b0).matrix();
        beta_shape = hyper.a0 + MT * N;
        beta_rate = hyper.b0 + res.residual + MT * res.trace;

        if (!std::isfinite(beta_shape / beta_rate) || !res.mean.allFinite() || !eta_rate.allFinite())
            throw ViError("individual_sbl: non-finite posterior at iteration " + std::to_string(it), it);

        RVector e = res.mean.rowwise().squaredNorm();
        const double change = energy_change(e, energy);
        energy = std::move(e);
        out.iterations = it;
        if (it > 1 && change < convergence.tolerance)
        {
            out.converged = true;
            break;
        }
    }
    out.energy = energy;
    out.row_mean = res.mean;
    out.precision = eta_shape.cwiseQuotient(eta_rate);
    out.beta = beta_shape / beta_rate;
    out.support = extract_support(energy, grid, policy);
    return out;
}

} // namespace ulsense

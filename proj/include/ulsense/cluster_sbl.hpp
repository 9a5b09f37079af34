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

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ulsense
{

// ---- dictionaries and stacked observations ---------------------------------

// Per-UE delay dictionaries on the common coarse grid. The duplicated
// dictionary [Psi Psi] and its gram are derived on demand.
struct Dictionary
{
    std::vector<double> grid;
    std::vector<CMatrix> psi; // [k] N_k x G

    int grid_size() const { return static_cast<int>(grid.size()); }
    double spacing() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }
    CMatrix duplicated(std::size_t k) const;
    CMatrix gram(std::size_t k) const;
};

CMatrix delay_dictionary(std::span<const double> grid, std::span<const int> subcarriers, double subcarrier_spacing);
Dictionary build_dictionary(const SparsityConfig &sp, const std::vector<std::vector<int>> &subcarrier_sets,
                            double subcarrier_spacing);

struct StackedObservation
{
    std::vector<CMatrix> stacked; // [k] N_k x MT, column block t = Ybar_k[t]

    int num_columns() const { return stacked.empty() ? 0 : static_cast<int>(stacked.front().cols()); }
    // B_k = [Psi Psi]^H Ytilde_k
    CMatrix correlation(const Dictionary &dict, std::size_t k) const;
};

StackedObservation stack_packets(const CsiTensor &calibrated);

// ---- row posterior ---------------------------------------------------------

enum class LinearSolver
{
    reduced, // exact low-rank route through an orthonormal basis of range(Psi)
    dense,   // literal (E[beta] G + diag(lambda))^-1 via a Cholesky factorization
};

// Gaussian posterior of the row-sparse coefficients W in
//   Ytilde = [Psi ... Psi] W + E   (`blocks` copies of Psi)
// under independent CN(0, 1/lambda_i I) rows and noise precision beta.
class RowPosterior
{
public:
    RowPosterior(const CMatrix &psi, const CMatrix &stacked, int blocks, LinearSolver solver,
                 double rank_tolerance = 1e-13);

    struct Result
    {
        CMatrix mean;       // blocks*G x MT
        RVector cov_diag;   // blocks*G, diagonal of the row covariance
        CMatrix cov;        // full row covariance, only when requested
        double residual = 0.0; // || Ytilde - [Psi ...] mean ||_F^2
        double trace = 0.0;    // tr(Sigma * gram)
    };

    // precisions.size() == blocks * G
    void solve(const RVector &precisions, double beta, Result &out, bool full_covariance = false) const;

    int blocks() const { return blocks_; }
    int grid_size() const { return static_cast<int>(psi_.cols()); }
    int num_columns() const { return static_cast<int>(stacked_cols_); }
    int rank() const { return static_cast<int>(coeff_.rows()); }
    LinearSolver solver() const { return solver_; }

private:
    void solve_reduced(const RVector &precisions, double beta, Result &out, bool full) const;
    void solve_dense(const RVector &precisions, double beta, Result &out, bool full) const;

    CMatrix psi_;
    int blocks_;
    LinearSolver solver_;
    Eigen::Index stacked_cols_;
    // reduced route
    CMatrix coeff_;       // r x G, Psi = basis * coeff_
    CMatrix data_;        // r x MT, basis^H Ytilde
    double perp_energy_ = 0.0;
    // dense route
    CMatrix gram_;        // (blocks*G)^2
    CMatrix correlation_; // blocks*G x MT
    CMatrix stacked_;
};

// ---- variational state and updates ------------------------------------------

struct SblHyperparameters
{
    double a0 = 0.01;
    double b0 = 0.01;
    double alpha0 = 1.0; // symmetric Dirichlet concentration
};

// Raised when a posterior quantity turns non-finite or a factorization fails.
class ViError : public std::runtime_error
{
public:
    ViError(const std::string &what, int iteration) : std::runtime_error(what), iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

struct VIState
{
    int num_ues = 0, grid_size = 0, num_clusters = 0, num_columns = 0; // K, G, C, MT
    bool private_rows = true;

    std::vector<CMatrix> row_mean;     // [k] U_k, 2G x MT (G x MT without private rows)
    std::vector<RVector> row_cov_diag; // [k] diag of Sigma^row_k
    std::vector<CMatrix> row_cov;      // [k] full Sigma^row_k, filled only on request
    std::vector<double> residual;      // [k] || Ytilde_k - Psi_tau U_k ||_F^2
    std::vector<double> trace;         // [k] tr(Sigma^row_k G_k)

    RMatrix resp;                          // K x C responsibilities r_{k,c}
    RMatrix gamma_shape, gamma_rate;       // G x C
    RMatrix eta_shape, eta_rate;           // K x G
    RVector alpha, alpha0;                 // C
    double beta_shape = 1.0, beta_rate = 1.0;
    SblHyperparameters hyper;

    double beta_mean() const { return beta_shape / beta_rate; }
    RMatrix gamma_mean() const { return gamma_shape.cwiseQuotient(gamma_rate); }
    RMatrix eta_mean() const { return eta_shape.cwiseQuotient(eta_rate); }
    // lambda_k = [sum_c r_kc E[gamma_gc] ; E[eta_kg]]
    RVector row_precisions(int k) const;
    // ||U(g,:)||^2 + ||U(G+g,:)||^2
    RVector row_energy(int k) const;
};

struct RowMoments
{
    RVector shared;  // E||w^sh_g||^2
    RVector priv;    // E||w^pr_g||^2 (empty without private rows)
};

VIState vi_init(int num_ues, int grid_size, int num_clusters, int num_columns, const SblHyperparameters &hyper,
                std::uint64_t seed, double jitter = 0.01, bool private_rows = true);

// Update (a) for one UE.
void update_q_w(VIState &state, const RowPosterior &posterior, int k, bool full_covariance = false);

RowMoments row_second_moments(const CMatrix &row_mean, const RVector &row_cov_diag, int num_columns,
                              bool private_rows = true);

// Update (b)
void update_q_gamma_eta(VIState &state, const std::vector<RowMoments> &moments);
// Update (c): q(pi) from the current responsibilities, then q(z_k).
void update_q_z_pi(VIState &state, const std::vector<RowMoments> &moments);
// Update (d) from the residual/trace terms cached by update (a).
void update_q_beta(VIState &state, const std::vector<int> &subcarriers_per_ue);
// Update (d) evaluated directly from U_k and the full Sigma^row_k.
void update_q_beta(VIState &state, const Dictionary &dict, const StackedObservation &obs);

// softmax with max-subtraction
RVector responsibilities_from_logits(const RVector &xi);

// E[log x] for x ~ Gamma(shape, rate)
double gamma_log_mean(double shape, double rate);

struct ConvergenceConfig
{
    double tolerance = 1e-4;
    int max_iterations = 200;
};

struct VIConfig
{
    SblHyperparameters hyper;
    ConvergenceConfig convergence;
    int num_clusters = 8;
    LinearSolver solver = LinearSolver::reduced;
    double jitter = 0.01;
    std::uint64_t seed = 0;
    bool private_rows = true;
    bool track_residual = false;
};

struct ViRunResult
{
    VIState state;
    int iterations = 0;
    bool converged = false;
    std::vector<std::vector<double>> residual_history; // [iteration][k], when tracked
};

ViRunResult run_vi(const StackedObservation &obs, const Dictionary &dict, const VIConfig &cfg);

// ---- support extraction ------------------------------------------------------

struct SupportPolicy
{
    double relative_threshold = 0.05;
    int min_separation = 2; // bins
    int oracle_count = 0;   // > 0 selects the top-count separated peaks instead
};

struct SupportEstimate
{
    std::vector<int> indices;   // ascending grid indices
    std::vector<double> delays; // grid delays, s
    int cluster = -1;           // argmax_c r_{k,c}; -1 when not applicable
    bool degenerate = false;    // no peak passed the threshold
    int count() const { return static_cast<int>(indices.size()); }
};

SupportEstimate extract_support(const RVector &energy, std::span<const double> grid, const SupportPolicy &policy);

// Per-UE supports with cluster labels. oracle_counts, when non-empty, overrides
// policy.oracle_count per UE.
std::vector<SupportEstimate> extract_supports(const VIState &state, std::span<const double> grid,
                                              const SupportPolicy &policy,
                                              const std::vector<int> &oracle_counts = {});

// ---- per-UE baseline -----------------------------------------------------------

struct IndividualSblResult
{
    SupportEstimate support;
    RVector energy;     // ||U(g,:)||^2
    CMatrix row_mean;   // G x MT
    RVector precision;  // E[eta_g]
    double beta = 0.0;
    int iterations = 0;
    bool converged = false;
};

IndividualSblResult individual_sbl(const CMatrix &stacked, const CMatrix &psi, std::span<const double> grid,
                                   const SblHyperparameters &hyper, const ConvergenceConfig &convergence,
                                   const SupportPolicy &policy, LinearSolver solver = LinearSolver::reduced);

} // namespace ulsense

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
#include "ulsense/cluster_sbl.hpp"
#include "ulsense/container.hpp"
#include "ulsense/experiment.hpp"
#include "ulsense/metrics.hpp"
#include "ulsense/param_refine.hpp"
#include "ulsense/rng.hpp"
#include "ulsense/signal_model.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace ulsense;
using nlohmann::json;

namespace
{

std::vector<std::string> split_list(const std::string &s)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

struct RunArgs
{
    std::string preset = "smoke";
    int trials = -1;
    long long seed = -1;
    std::string out;
    std::string methods;
    std::string config;
    int workers = 1;
    bool oracle_count = false;
    bool no_offsets = false;
    bool no_noise = false;
    bool keep_going = false;
    bool fix_scenario = false;
    bool fresh = false;
    bool quiet = false;
};

int cmd_run(const RunArgs &a)
{
    ExperimentSpec spec = preset(a.preset);
    if (!a.config.empty())
        apply_overrides(spec, json::parse(read_text(a.config)));
    if (a.trials > 0)
        spec.trials = a.trials;
    if (a.seed >= 0)
        spec.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.out.empty())
        spec.output = a.out;
    if (!a.methods.empty())
    {
        spec.methods.clear();
        for (const auto &m : split_list(a.methods))
            spec.methods.push_back(parse_method(m));
    }
    if (a.oracle_count)
        spec.pipeline.oracle_count = true;
    if (a.no_offsets)
        spec.sys.offsets_enabled = false;
    if (a.no_noise)
        spec.sys.noise_enabled = false;
    if (a.fix_scenario)
        spec.fix_scenario = true;
    spec.workers = a.workers;

    SweepOptions opts;
    opts.resume = !a.fresh;
    opts.progress = a.quiet ? nullptr : &std::cerr;
    const SweepResult res = run_sweep(spec, opts);
    std::cout << summary_table(summarize(res.rows));
    std::cout << "wrote " << res.rows.size() << " rows to " << spec.output.string();
    if (res.skipped)
        std::cout << " (" << res.skipped << " trials resumed)";
    std::cout << '\n';
    if (res.failed)
    {
        std::cerr << res.failed << " trial rows failed\n";
        if (!a.keep_going)
            return 3;
    }
    return 0;
}

int cmd_inspect(const std::string &path)
{
    const auto rows = parse_results_csv(read_text(path));
    std::cout << summary_table(summarize(rows));
    return 0;
}

struct GenerateArgs
{
    std::string preset = "smoke";
    std::string config;
    std::string out = "trial.cbor";
    long long seed = 1;
    double sweep_value = 0.0;
    bool has_value = false;
};

int cmd_generate(const GenerateArgs &a)
{
    ExperimentSpec spec = preset(a.preset);
    if (!a.config.empty())
        apply_overrides(spec, json::parse(read_text(a.config)));
    const PointConfig point = point_config(spec, spec.effective_variants().front(),
                                           a.has_value ? a.sweep_value : spec.values.front());
    const auto seed = static_cast<std::uint64_t>(a.seed);
    TrialBundle b;
    b.sys = point.sys;
    b.sp = point.sp;
    Rng scn_rng(derive_seed(seed, stream::scenario));
    b.scenario = sample_scenario(b.sys, b.sp, scn_rng);
    Rng off_rng(derive_seed(seed, stream::offsets));
    b.offsets = sample_offsets(b.sys, off_rng);
    Rng noise_rng(derive_seed(seed, stream::noise));
    b.raw = synthesize_csi(b.scenario, b.offsets, b.sys, noise_rng);
    save_trial(a.out, b);
    std::cout << "wrote " << a.out << '\n';
    return 0;
}

int cmd_calibrate(const std::string &in, const std::string &out, const std::string &diag)
{
    TrialBundle b = load_trial(in);
    CalibrationResult cal = calibrate(b.raw, b.scenario, b.sys);
    if (!diag.empty())
        write_text(diag, calibration_diagnostics_csv(b.offsets, cal.estimates));
    b.calibrated = std::move(cal.calibrated);
    b.to_estimates = std::move(cal.estimates);
    save_trial(out.empty() ? in : out, b);
    return 0;
}

const CsiTensor &calibrated_of(const TrialBundle &b)
{
    if (!b.calibrated)
        throw std::runtime_error("trial has no calibrated CSI; run the calibrate stage first.");
    return *b.calibrated;
}

int cmd_sbl(const std::string &in, const std::string &out, const std::string &method_name, bool oracle,
            long long seed)
{
    const TrialBundle b = load_trial(in);
    const Method method = parse_method(method_name);
    const StackedObservation obs = stack_packets(calibrated_of(b));
    std::vector<std::vector<int>> sets;
    std::vector<int> counts;
    for (const auto &ue : b.scenario.ues)
    {
        sets.push_back(ue.subcarriers);
        counts.push_back(static_cast<int>(ue.paths.size()));
    }
    const Dictionary dict = build_dictionary(b.sp, sets, b.sys.subcarrier_spacing);
    SupportReport rep;
    rep.method = to_string(method);
    rep.grid = dict.grid;
    const PipelineConfig pc;
    if (method == Method::cluster_sbl)
    {
        VIConfig vc;
        vc.num_clusters = b.sp.num_clusters_candidate;
        vc.seed = derive_seed(static_cast<std::uint64_t>(seed), stream::inference);
        const ViRunResult vi = run_vi(obs, dict, vc);
        rep.iterations = vi.iterations;
        rep.converged = vi.converged;
        rep.supports = extract_supports(vi.state, dict.grid, pc.support, oracle ? counts : std::vector<int>{});
        for (int k = 0; k < vi.state.num_ues; ++k)
            rep.energy.push_back(vi.state.row_energy(k));
        rep.responsibilities = vi.state.resp;
    }
    else
    {
        rep.converged = true;
        for (std::size_t k = 0; k < obs.stacked.size(); ++k)
        {
            SupportPolicy policy = pc.support;
            if (oracle)
                policy.oracle_count = counts[k];
            const auto r = individual_sbl(obs.stacked[k], dict.psi[k], dict.grid, pc.hyper, pc.convergence, policy);
            rep.supports.push_back(r.support);
            rep.energy.push_back(r.energy);
            rep.iterations = std::max(rep.iterations, r.iterations);
            rep.converged = rep.converged && r.converged;
        }
    }
    write_text(out, support_report_json(rep).dump(1));
    return 0;
}

int cmd_refine(const std::string &in, const std::string &support, const std::string &out)
{
    const TrialBundle b = load_trial(in);
    const SupportReport rep = support_report_from_json(json::parse(read_text(support)));
    const CsiTensor &cal = calibrated_of(b);
    const StackedObservation obs = stack_packets(cal);
    if (rep.supports.size() != b.scenario.ues.size())
        throw std::runtime_error("support report and trial disagree on the number of UEs.");
    EstimateSet est;
    for (std::size_t k = 0; k < b.scenario.ues.size(); ++k)
    {
        const auto &ue = b.scenario.ues[k];
        est.ues.push_back(estimate_ue(cal.csi[k], obs.stacked[k], ue.subcarriers, rep.supports[k].delays,
                                      ue.los_geom_delay, b.sys, b.sp));
    }
    write_text(out, estimate_set_json(est).dump(1));
    return 0;
}

int cmd_score(const std::string &in, const std::string &estimates, const std::string &support, double gate_bins)
{
    const TrialBundle b = load_trial(in);
    const EstimateSet est = estimate_set_from_json(json::parse(read_text(estimates)));
    MetricsReport m = score_trial(b.scenario, est, gate_bins * b.sp.grid_spacing());
    if (!support.empty())
    {
        const SupportReport rep = support_report_from_json(json::parse(read_text(support)));
        if (rep.responsibilities.size() > 0)
        {
            std::vector<int> labels;
            for (const auto &ue : b.scenario.ues)
                labels.push_back(ue.cluster);
            m.clustering_accuracy = clustering_accuracy(labels, rep.responsibilities);
        }
    }
    json j = {{"nmse_delay", m.nmse_delay},       {"nmse_doppler", m.nmse_doppler},
              {"rmse_aoa_deg", m.rmse_aoa_deg},   {"clustering_accuracy", m.clustering_accuracy},
              {"miss_rate", m.miss_rate},         {"false_alarm_rate", m.false_alarm_rate}};
    std::cout << j.dump(1) << '\n';
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"ulsense: multi-user uplink sensing experiments"};
    app.require_subcommand(1);

    RunArgs run;
    auto *run_cmd = app.add_subcommand("run", "Run a sweep and write the results CSV");
    run_cmd->add_option("--preset", run.preset, "fig2, fig3, fig4, table1 or smoke")->capture_default_str();
    run_cmd->add_option("--trials", run.trials, "Trials per sweep point");
    run_cmd->add_option("--seed", run.seed, "Base seed");
    run_cmd->add_option("--out", run.out, "Results CSV path");
    run_cmd->add_option("--methods", run.methods, "Comma list: cluster_sbl,individual_sbl");
    run_cmd->add_option("--config", run.config, "JSON override file");
    run_cmd->add_option("--workers", run.workers, "Worker threads")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--oracle-count", run.oracle_count, "Keep the true number of taps per UE");
    run_cmd->add_flag("--no-offsets", run.no_offsets, "Disable TO/CFO/phase offsets");
    run_cmd->add_flag("--no-noise", run.no_noise, "Disable additive noise");
    run_cmd->add_flag("--keep-going", run.keep_going, "Exit 0 even if some trials failed");
    run_cmd->add_flag("--fix-scenario", run.fix_scenario, "Reuse one scenario across trials");
    run_cmd->add_flag("--fresh", run.fresh, "Ignore an existing resume manifest");
    run_cmd->add_flag("--quiet", run.quiet, "No progress output");

    std::string inspect_path;
    auto *inspect_cmd = app.add_subcommand("inspect", "Summarize a results CSV");
    inspect_cmd->add_option("csv", inspect_path)->required();

    GenerateArgs gen;
    auto *gen_cmd = app.add_subcommand("generate", "Sample one trial and save it as CBOR");
    gen_cmd->add_option("--preset", gen.preset)->capture_default_str();
    gen_cmd->add_option("--config", gen.config);
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
    gen_cmd->add_option("--out", gen.out)->capture_default_str();
    auto *value_opt = gen_cmd->add_option("--value", gen.sweep_value, "Sweep value (default: first of the preset)");

    std::string cal_in, cal_out, cal_diag;
    auto *cal_cmd = app.add_subcommand("calibrate", "Estimate and remove timing offsets");
    cal_cmd->add_option("trial", cal_in)->required();
    cal_cmd->add_option("--out", cal_out, "Output trial (default: overwrite input)");
    cal_cmd->add_option("--diag", cal_diag, "Write per-packet TO diagnostics CSV");

    std::string sbl_in, sbl_out = "support.json", sbl_method = "cluster_sbl";
    bool sbl_oracle = false;
    long long sbl_seed = 1;
    auto *sbl_cmd = app.add_subcommand("sbl", "Recover delay supports");
    sbl_cmd->add_option("trial", sbl_in)->required();
    sbl_cmd->add_option("--out", sbl_out)->capture_default_str();
    sbl_cmd->add_option("--method", sbl_method)->capture_default_str();
    sbl_cmd->add_option("--seed", sbl_seed)->capture_default_str();
    sbl_cmd->add_flag("--oracle-count", sbl_oracle);

    std::string ref_in, ref_support, ref_out = "estimates.json";
    auto *ref_cmd = app.add_subcommand("refine", "Refine delays and estimate Doppler, AoA and gains");
    ref_cmd->add_option("trial", ref_in)->required();
    ref_cmd->add_option("--support", ref_support)->required();
    ref_cmd->add_option("--out", ref_out)->capture_default_str();

    std::string score_in, score_est, score_support;
    double gate_bins = 3.0;
    auto *score_cmd = app.add_subcommand("score", "Score estimates against the trial ground truth");
    score_cmd->add_option("trial", score_in)->required();
    score_cmd->add_option("--estimates", score_est)->required();
    score_cmd->add_option("--support", score_support, "Support report, for clustering accuracy");
    score_cmd->add_option("--gate", gate_bins, "Association gate in coarse bins")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*run_cmd)
            return cmd_run(run);
        if (*inspect_cmd)
            return cmd_inspect(inspect_path);
        if (*gen_cmd)
        {
            gen.has_value = value_opt->count() > 0;
            return cmd_generate(gen);
        }
        if (*cal_cmd)
            return cmd_calibrate(cal_in, cal_out, cal_diag);
        if (*sbl_cmd)
            return cmd_sbl(sbl_in, sbl_out, sbl_method, sbl_oracle, sbl_seed);
        if (*ref_cmd)
            return cmd_refine(ref_in, ref_support, ref_out);
        if (*score_cmd)
            return cmd_score(score_in, score_est, score_support, gate_bins);
    }
    catch (const std::invalid_argument &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

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

#include "ulsense/experiment.hpp"

#include "ulsense/container.hpp"
#include "ulsense/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ulsense
{

using nlohmann::json;

std::string to_string(SweepAxis a)
{
    switch (a)
    {
    case SweepAxis::snr:
        return "snr";
    case SweepAxis::nk:
        return "nk";
    case SweepAxis::packets:
        return "packets";
    }
    return "?";
}

std::string to_string(Method m)
{
    return m == Method::cluster_sbl ? "cluster_sbl" : "individual_sbl";
}

SweepAxis parse_axis(std::string_view s)
{
    if (s == "snr")
        return SweepAxis::snr;
    if (s == "nk")
        return SweepAxis::nk;
    if (s == "packets")
        return SweepAxis::packets;
    throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "'");
}

Method parse_method(std::string_view s)
{
    if (s == "cluster_sbl" || s == "cluster")
        return Method::cluster_sbl;
    if (s == "individual_sbl" || s == "individual")
        return Method::individual_sbl;
    throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

std::string Composition::label() const
{
    return std::to_string(shared) + "+" + std::to_string(priv);
}

void ExperimentSpec::validate() const
{
    if (trials < 1)
        throw std::invalid_argument("ExperimentSpec: trials must be >= 1.");
    if (values.empty())
        throw std::invalid_argument("ExperimentSpec: sweep list is empty.");
    if (methods.empty())
        throw std::invalid_argument("ExperimentSpec: no methods selected.");
    if (workers < 1)
        throw std::invalid_argument("ExperimentSpec: workers must be >= 1.");
    const int L = sp.paths_per_ue();
    for (const Composition &c : variants)
        if (c.shared + c.priv != L || c.shared < 0 || c.priv < 1)
            throw std::invalid_argument("ExperimentSpec: composition " + c.label() + " must satisfy L_sh + L_pr = " +
                                        std::to_string(L) + " with L_pr >= 1.");
    for (const Composition &c : effective_variants())
        for (double v : values)
        {
            const PointConfig p = point_config(*this, c, v);
            p.sys.validate();
            p.sp.validate(p.sys);
        }
}

std::vector<Composition> ExperimentSpec::effective_variants() const
{
    if (!variants.empty())
        return variants;
    return {Composition{sp.shared_paths, sp.private_paths}};
}

ExperimentSpec preset(std::string_view name)
{
    ExperimentSpec s;
    s.name = std::string(name);
    s.trials = 100;
    if (name == "fig2")
    {
        s.axis = SweepAxis::snr;
        s.values = {-5, 0, 5, 10, 15};
    }
    else if (name == "fig3")
    {
        s.axis = SweepAxis::nk;
        s.values = {32, 64, 128, 256};
        s.sys.snr_db = 5.0;
        s.variants = {{3, 1}, {2, 2}};
    }
    else if (name == "fig4")
    {
        s.axis = SweepAxis::packets;
        s.values = {4, 8, 16, 32};
        s.sys.snr_db = 10.0;
        s.sp.per_ue_subcarriers = 128;
    }
    else if (name == "table1")
    {
        s.axis = SweepAxis::snr;
        s.values = {-5, 0, 5, 10, 15};
        s.methods = {Method::cluster_sbl};
    }
    else if (name == "smoke")
    {
        s.axis = SweepAxis::snr;
        s.values = {10};
        s.sys.num_ues = 2;
        s.sys.num_packets = 4;
        s.sp.grid_size = 64;
        s.sp.num_clusters_true = 2;
        s.sp.num_clusters_candidate = 2;
        s.sp.per_ue_subcarriers = 1024;
        s.sp.on_grid = true;
        s.pipeline.oracle_count = true;
        s.trials = 2;
    }
    else
        throw std::invalid_argument("unknown preset '" + std::string(name) +
                                    "' (expected fig2, fig3, fig4, table1 or smoke)");
    if (name == "fig2" || name == "fig3" || name == "fig4")
        s.pipeline.oracle_count = true;
    s.output = s.name + ".csv";
    return s;
}

// ---- overrides -------------------------------------------------------------

namespace
{

template <typename T>
void read_opt(const json &j, const char *key, T &out)
{
    if (auto it = j.find(key); it != j.end())
        it->get_to(out);
}

const char *solver_name(LinearSolver s)
{
    return s == LinearSolver::dense ? "dense" : "reduced";
}

} // namespace

void apply_overrides(ExperimentSpec &spec, const json &o)
{
    if (!o.is_object())
        throw std::invalid_argument("config override must be a JSON object.");
    read_opt(o, "name", spec.name);
    if (o.contains("system"))
        from_json(o.at("system"), spec.sys);
    if (o.contains("sparsity"))
        from_json(o.at("sparsity"), spec.sp);
    if (o.contains("sweep"))
    {
        const json &sw = o.at("sweep");
        if (sw.contains("axis"))
            spec.axis = parse_axis(sw.at("axis").get<std::string>());
        read_opt(sw, "values", spec.values);
    }
    if (o.contains("methods"))
    {
        spec.methods.clear();
        for (const json &m : o.at("methods"))
            spec.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (o.contains("variants"))
    {
        spec.variants.clear();
        for (const json &v : o.at("variants"))
            spec.variants.push_back({v.at(0).get<int>(), v.at(1).get<int>()});
    }
    read_opt(o, "trials", spec.trials);
    read_opt(o, "seed", spec.seed);
    read_opt(o, "fix_scenario", spec.fix_scenario);
    read_opt(o, "workers", spec.workers);
    if (o.contains("output"))
        spec.output = o.at("output").get<std::string>();

    if (o.contains("pipeline"))
    {
        const json &p = o.at("pipeline");
        PipelineConfig &pc = spec.pipeline;
        read_opt(p, "oracle_count", pc.oracle_count);
        read_opt(p, "gate_bins", pc.gate_bins);
        read_opt(p, "jitter", pc.jitter);
        read_opt(p, "a0", pc.hyper.a0);
        read_opt(p, "b0", pc.hyper.b0);
        read_opt(p, "alpha0", pc.hyper.alpha0);
        read_opt(p, "tolerance", pc.convergence.tolerance);
        read_opt(p, "max_iterations", pc.convergence.max_iterations);
        read_opt(p, "relative_threshold", pc.support.relative_threshold);
        read_opt(p, "min_separation", pc.support.min_separation);
        read_opt(p, "refine_factor", pc.refine.factor);
        read_opt(p, "refine_span", pc.refine.span);
        read_opt(p, "ridge", pc.refine.ridge);
        read_opt(p, "calibration_oversampling", pc.calibration.oversampling);
        read_opt(p, "calibration_lower_margin", pc.calibration.lower_margin);
        read_opt(p, "calibration_upper_margin", pc.calibration.upper_margin);
        if (p.contains("solver"))
        {
            const auto s = p.at("solver").get<std::string>();
            if (s == "dense")
                pc.solver = LinearSolver::dense;
            else if (s == "reduced")
                pc.solver = LinearSolver::reduced;
            else
                throw std::invalid_argument("unknown solver '" + s + "'");
        }
    }
}

json spec_json(const ExperimentSpec &spec)
{
    json variants = json::array();
    for (const Composition &c : spec.variants)
        variants.push_back({c.shared, c.priv});
    json methods = json::array();
    for (Method m : spec.methods)
        methods.push_back(to_string(m));
    const PipelineConfig &pc = spec.pipeline;
    json j;
    j["name"] = spec.name;
    to_json(j["system"], spec.sys);
    to_json(j["sparsity"], spec.sp);
    j["sweep"] = {{"axis", to_string(spec.axis)}, {"values", spec.values}};
    j["methods"] = methods;
    j["variants"] = variants;
    j["trials"] = spec.trials;
    j["seed"] = spec.seed;
    j["fix_scenario"] = spec.fix_scenario;
    j["pipeline"] = {{"oracle_count", pc.oracle_count},
                     {"gate_bins", pc.gate_bins},
                     {"jitter", pc.jitter},
                     {"a0", pc.hyper.a0},
                     {"b0", pc.hyper.b0},
                     {"alpha0", pc.hyper.alpha0},
                     {"tolerance", pc.convergence.tolerance},
                     {"max_iterations", pc.convergence.max_iterations},
                     {"relative_threshold", pc.support.relative_threshold},
                     {"min_separation", pc.support.min_separation},
                     {"refine_factor", pc.refine.factor},
                     {"refine_span", pc.refine.span},
                     {"ridge", pc.refine.ridge},
                     {"calibration_oversampling", pc.calibration.oversampling},
                     {"calibration_lower_margin", pc.calibration.lower_margin},
                     {"calibration_upper_margin", pc.calibration.upper_margin},
                     {"solver", solver_name(pc.solver)}};
    return j;
}

// ---- single trial ----------------------------------------------------------------

PointConfig point_config(const ExperimentSpec &spec, const Composition &variant, double sweep_value)
{
    PointConfig p{spec.sys, spec.sp, variant.label(), sweep_value};
    p.sp.shared_paths = variant.shared;
    p.sp.private_paths = variant.priv;
    switch (spec.axis)
    {
    case SweepAxis::snr:
        p.sys.snr_db = sweep_value;
        break;
    case SweepAxis::nk:
        p.sp.per_ue_subcarriers = static_cast<int>(std::lround(sweep_value));
        break;
    case SweepAxis::packets:
        p.sys.num_packets = static_cast<int>(std::lround(sweep_value));
        break;
    }
    return p;
}

std::uint64_t trial_seed(const ExperimentSpec &spec, int trial)
{
    return spec.seed ^ static_cast<std::uint64_t>(trial);
}

std::uint64_t hash_csi(const CsiTensor &csi)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void *p, std::size_t n) {
        const auto *b = static_cast<const unsigned char *>(p);
        for (std::size_t i = 0; i < n; ++i)
        {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto &ue : csi.csi)
        for (const CMatrix &Y : ue)
            mix(Y.data(), sizeof(cdouble) * static_cast<std::size_t>(Y.size()));
    return h;
}

namespace
{

ResultRow failed_row(const PointConfig &point, Method m, int trial, const std::string &what)
{
    ResultRow row;
    row.variant = point.variant;
    row.sweep_value = point.sweep_value;
    row.method = m;
    row.trial = trial;
    row.failed = true;
    row.error = what;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.metrics = {nan, nan, nan, nan, nan, nan};
    return row;
}

EstimateSet estimate_all(const CsiTensor &calibrated, const StackedObservation &obs, const Scenario &scn,
                         const std::vector<SupportEstimate> &supports, const PointConfig &point,
                         const PipelineConfig &pc)
{
    EstimateSet est;
    for (std::size_t k = 0; k < scn.ues.size(); ++k)
        est.ues.push_back(estimate_ue(calibrated.csi[k], obs.stacked[k], scn.ues[k].subcarriers, supports[k].delays,
                                      scn.ues[k].los_geom_delay, point.sys, point.sp, pc.refine));
    return est;
}

} // namespace

std::vector<ResultRow> run_trial(const ExperimentSpec &spec, const PointConfig &point, int trial)
{
    const PipelineConfig &pc = spec.pipeline;
    const std::uint64_t seed = trial_seed(spec, trial);

    Scenario scn;
    CalibrationResult cal;
    try
    {
        Rng scn_rng(derive_seed(spec.fix_scenario ? spec.seed : seed, stream::scenario));
        scn = sample_scenario(point.sys, point.sp, scn_rng);
        Rng off_rng(derive_seed(seed, stream::offsets));
        const OffsetTrace off = sample_offsets(point.sys, off_rng);
        Rng noise_rng(derive_seed(seed, stream::noise));
        const CsiTensor raw = synthesize_csi(scn, off, point.sys, noise_rng);
        cal = calibrate(raw, scn, point.sys, pc.calibration);
    }
    catch (const std::exception &e)
    {
        std::vector<ResultRow> rows;
        for (Method m : spec.methods)
            rows.push_back(failed_row(point, m, trial, e.what()));
        return rows;
    }

    const std::uint64_t hash = hash_csi(cal.calibrated);
    const StackedObservation obs = stack_packets(cal.calibrated);
    std::vector<std::vector<int>> sets;
    std::vector<int> labels, counts;
    for (const UeChannel &ue : scn.ues)
    {
        sets.push_back(ue.subcarriers);
        labels.push_back(ue.cluster);
        counts.push_back(static_cast<int>(ue.paths.size()));
    }
    const Dictionary dict = build_dictionary(point.sp, sets, point.sys.subcarrier_spacing);
    const double gate = pc.gate_bins * point.sp.grid_spacing();

    std::vector<ResultRow> rows;
    for (Method m : spec.methods)
    {
        const auto start = std::chrono::steady_clock::now();
        ResultRow row;
        try
        {
            row.variant = point.variant;
            row.sweep_value = point.sweep_value;
            row.method = m;
            row.trial = trial;
            row.csi_hash = hash;

            std::vector<SupportEstimate> supports;
            double accuracy = std::numeric_limits<double>::quiet_NaN();
            if (m == Method::cluster_sbl)
            {
                VIConfig vc;
                vc.hyper = pc.hyper;
                vc.convergence = pc.convergence;
                vc.num_clusters = point.sp.num_clusters_candidate;
                vc.solver = pc.solver;
                vc.jitter = pc.jitter;
                vc.seed = derive_seed(seed, stream::inference);
                const ViRunResult vi = run_vi(obs, dict, vc);
                supports = extract_supports(vi.state, dict.grid, pc.support, pc.oracle_count ? counts : std::vector<int>{});
                accuracy = clustering_accuracy(labels, vi.state.resp);
                row.vi_iterations = vi.iterations;
            }
            else
            {
                for (std::size_t k = 0; k < scn.ues.size(); ++k)
                {
                    SupportPolicy policy = pc.support;
                    if (pc.oracle_count)
                        policy.oracle_count = counts[k];
                    const IndividualSblResult r = individual_sbl(obs.stacked[k], dict.psi[k], dict.grid, pc.hyper,
                                                                 pc.convergence, policy, pc.solver);
                    supports.push_back(r.support);
                    row.vi_iterations = std::max(row.vi_iterations, r.iterations);
                }
            }
            const EstimateSet est = estimate_all(cal.calibrated, obs, scn, supports, point, pc);
            row.metrics = score_trial(scn, est, gate);
            row.metrics.clustering_accuracy = accuracy;
        }
        catch (const std::exception &e)
        {
            row = failed_row(point, m, trial, e.what());
            row.csi_hash = hash;
        }
        row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---- CSV -------------------------------------------------------------------------------

namespace
{

std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string &s)
{
    if (s == "nan" || s.empty())
        return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

std::vector<std::string> split(const std::string &line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep))
        out.push_back(cur);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

constexpr const char *kCsvHeader = "schema,variant,sweep_value,method,trial,nmse_delay,nmse_doppler,rmse_aoa_deg,"
                                   "clustering_accuracy,miss_rate,false_alarm_rate,vi_iterations,csi_hash,status";

ResultRow parse_row(const std::vector<std::string> &f)
{
    if (f.size() < 14 || f[0] != kResultsSchema)
        throw std::runtime_error("results CSV: malformed row or schema mismatch.");
    ResultRow r;
    r.variant = f[1];
    r.sweep_value = parse_double(f[2]);
    r.method = parse_method(f[3]);
    r.trial = std::stoi(f[4]);
    r.metrics.nmse_delay = parse_double(f[5]);
    r.metrics.nmse_doppler = parse_double(f[6]);
    r.metrics.rmse_aoa_deg = parse_double(f[7]);
    r.metrics.clustering_accuracy = parse_double(f[8]);
    r.metrics.miss_rate = parse_double(f[9]);
    r.metrics.false_alarm_rate = parse_double(f[10]);
    r.vi_iterations = std::stoi(f[11]);
    r.csi_hash = std::stoull(f[12], nullptr, 16);
    r.failed = f[13] != "ok";
    return r;
}

} // namespace

std::string format_row(const ResultRow &r)
{
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.csi_hash));
    std::ostringstream os;
    os << kResultsSchema << ',' << r.variant << ',' << fmt_double(r.sweep_value) << ',' << to_string(r.method) << ','
       << r.trial << ',' << fmt_double(r.metrics.nmse_delay) << ',' << fmt_double(r.metrics.nmse_doppler) << ','
       << fmt_double(r.metrics.rmse_aoa_deg) << ',' << fmt_double(r.metrics.clustering_accuracy) << ','
       << fmt_double(r.metrics.miss_rate) << ',' << fmt_double(r.metrics.false_alarm_rate) << ',' << r.vi_iterations
       << ',' << hash << ',' << (r.failed ? "failed" : "ok");
    return os.str();
}

std::string results_csv(const std::vector<ResultRow> &rows)
{
    std::string out = std::string(kCsvHeader) + "\n";
    for (const ResultRow &r : rows)
        out += format_row(r) + "\n";
    return out;
}

std::vector<ResultRow> parse_results_csv(const std::string &text)
{
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader)
        throw std::runtime_error("results CSV: header does not match schema " + std::string(kResultsSchema) + ".");
    std::vector<ResultRow> rows;
    while (std::getline(is, line))
        if (!line.empty())
            rows.push_back(parse_row(split(line, ',')));
    return rows;
}

// ---- sweep -------------------------------------------------------------------------------

namespace
{

struct Task
{
    std::size_t variant = 0, value = 0;
    int trial = 0;
};

std::string fingerprint(const ExperimentSpec &spec)
{
    const std::string dump = spec_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path sidecar(const std::filesystem::path &out, const char *suffix)
{
    return std::filesystem::path(out.string() + suffix);
}

} // namespace

SweepResult run_sweep(const ExperimentSpec &spec, const SweepOptions &opts)
{
    spec.validate();
    const auto variants = spec.effective_variants();
    const auto manifest_path = sidecar(spec.output, ".manifest");
    const std::string fp = fingerprint(spec);

    // fail before any computation if the outputs cannot be written
    {
        std::ofstream probe(spec.output, std::ios::app);
        if (!probe)
            throw std::runtime_error("cannot write results to " + spec.output.string());
    }

    std::map<std::tuple<std::string, double, int>, std::vector<ResultRow>> restored;
    if (opts.resume && std::filesystem::exists(manifest_path))
    {
        std::ifstream in(manifest_path);
        std::string line;
        if (std::getline(in, line) && line == "# spec " + fp)
            while (std::getline(in, line))
            {
                if (line.empty())
                    continue;
                auto f = split(line, ',');
                if (f.size() != 15)
                    continue; // torn final line from an interrupted run
                ResultRow r = parse_row(f);
                r.wall_time_s = parse_double(f[14]);
                restored[{r.variant, r.sweep_value, r.trial}].push_back(r);
            }
    }

    std::ofstream manifest;
    std::vector<ResultRow> kept;
    std::set<std::tuple<std::string, double, int>> done;
    for (auto &[key, rows] : restored)
        if (rows.size() == spec.methods.size())
        {
            done.insert(key);
            kept.insert(kept.end(), rows.begin(), rows.end());
        }
    manifest.open(manifest_path, std::ios::trunc);
    if (!manifest)
        throw std::runtime_error("cannot write manifest " + manifest_path.string());
    manifest << "# spec " << fp << '\n';
    for (const ResultRow &r : kept)
        manifest << format_row(r) << ',' << fmt_double(r.wall_time_s) << '\n';
    manifest.flush();

    std::vector<Task> tasks;
    for (std::size_t v = 0; v < variants.size(); ++v)
        for (std::size_t i = 0; i < spec.values.size(); ++i)
            for (int t = 0; t < spec.trials; ++t)
                if (!done.count({variants[v].label(), spec.values[i], t}))
                    tasks.push_back({v, i, t});

    SweepResult result;
    result.skipped = static_cast<int>(done.size());
    std::vector<ResultRow> fresh;
    std::mutex lock;
    std::atomic<std::size_t> next{0};
    std::size_t completed = 0;

    auto worker = [&]() {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
        {
            const Task &task = tasks[i];
            const PointConfig point = point_config(spec, variants[task.variant], spec.values[task.value]);
            std::vector<ResultRow> rows = run_trial(spec, point, task.trial);
            std::lock_guard<std::mutex> guard(lock);
            for (const ResultRow &r : rows)
            {
                manifest << format_row(r) << ',' << fmt_double(r.wall_time_s) << '\n';
                if (r.failed && opts.progress)
                    *opts.progress << "trial " << r.trial << " (" << to_string(r.method) << ", " << point.variant
                                   << ", " << to_string(spec.axis) << "=" << point.sweep_value
                                   << ") failed: " << r.error << '\n';
            }
            manifest.flush();
            fresh.insert(fresh.end(), rows.begin(), rows.end());
            ++completed;
            if (opts.progress)
                *opts.progress << "[" << completed << "/" << tasks.size() << "] " << point.variant << ' '
                               << to_string(spec.axis) << '=' << point.sweep_value << " trial " << task.trial << '\n';
        }
    };
    const int n_workers = std::min<int>(spec.workers, std::max<int>(1, static_cast<int>(tasks.size())));
    if (n_workers <= 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }

    result.rows = std::move(kept);
    result.rows.insert(result.rows.end(), fresh.begin(), fresh.end());

    std::map<std::string, std::size_t> variant_rank;
    for (std::size_t v = 0; v < variants.size(); ++v)
        variant_rank[variants[v].label()] = v;
    auto value_rank = [&](double x) {
        return static_cast<std::size_t>(std::find(spec.values.begin(), spec.values.end(), x) - spec.values.begin());
    };
    auto method_rank = [&](Method m) {
        return static_cast<std::size_t>(std::find(spec.methods.begin(), spec.methods.end(), m) - spec.methods.begin());
    };
    std::sort(result.rows.begin(), result.rows.end(), [&](const ResultRow &a, const ResultRow &b) {
        return std::make_tuple(variant_rank[a.variant], value_rank(a.sweep_value), a.trial, method_rank(a.method)) <
               std::make_tuple(variant_rank[b.variant], value_rank(b.sweep_value), b.trial, method_rank(b.method));
    });
    for (const ResultRow &r : result.rows)
        result.failed += r.failed ? 1 : 0;

    write_text(spec.output, results_csv(result.rows));
    std::ostringstream timing;
    timing << "variant,sweep_value,method,trial,wall_time_s\n";
    for (const ResultRow &r : result.rows)
        timing << r.variant << ',' << fmt_double(r.sweep_value) << ',' << to_string(r.method) << ',' << r.trial << ','
               << fmt_double(r.wall_time_s) << '\n';
    write_text(sidecar(spec.output, ".timing.csv"), timing.str());
    return result;
}

// ---- summaries ---------------------------------------------------------------------------------

namespace
{

struct Moments
{
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    void add(double v)
    {
        if (std::isnan(v))
            return;
        sum += v;
        sum2 += v * v;
        ++n;
    }
    double mean() const { return n ? sum / n : std::numeric_limits<double>::quiet_NaN(); }
    double sd() const
    {
        if (n < 2)
            return n ? 0.0 : std::numeric_limits<double>::quiet_NaN();
        const double m = mean();
        return std::sqrt(std::max(0.0, (sum2 - n * m * m) / (n - 1)));
    }
};

} // namespace

std::vector<SummaryEntry> summarize(const std::vector<ResultRow> &rows)
{
    struct Acc
    {
        SummaryEntry entry;
        Moments m[6], iters;
    };
    std::vector<Acc> groups;
    for (const ResultRow &r : rows)
    {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Acc &a) {
            return a.entry.variant == r.variant && a.entry.sweep_value == r.sweep_value && a.entry.method == r.method;
        });
        if (it == groups.end())
        {
            groups.push_back({});
            it = std::prev(groups.end());
            it->entry.variant = r.variant;
            it->entry.sweep_value = r.sweep_value;
            it->entry.method = r.method;
        }
        ++it->entry.count;
        if (r.failed)
        {
            ++it->entry.failed;
            continue;
        }
        const MetricsReport &x = r.metrics;
        const double vals[6] = {x.nmse_delay, x.nmse_doppler, x.rmse_aoa_deg, x.clustering_accuracy, x.miss_rate,
                                x.false_alarm_rate};
        for (int i = 0; i < 6; ++i)
            it->m[i].add(vals[i]);
        it->iters.add(r.vi_iterations);
    }
    std::vector<SummaryEntry> out;
    for (Acc &a : groups)
    {
        SummaryEntry &e = a.entry;
        e.mean = {a.m[0].mean(), a.m[1].mean(), a.m[2].mean(), a.m[3].mean(), a.m[4].mean(), a.m[5].mean()};
        e.stddev = {a.m[0].sd(), a.m[1].sd(), a.m[2].sd(), a.m[3].sd(), a.m[4].sd(), a.m[5].sd()};
        e.mean_iterations = a.iters.mean();
        out.push_back(e);
    }
    return out;
}

std::string summary_table(const std::vector<SummaryEntry> &summary)
{
    std::ostringstream os;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-8s %8s %-15s %5s  %-21s %-21s %-19s %-15s %-8s %-8s %6s\n", "variant", "value",
                  "method", "n", "nmse_delay", "nmse_doppler", "rmse_aoa_deg", "cluster_acc", "miss", "fa", "iters");
    os << buf;
    for (const SummaryEntry &e : summary)
    {
        std::snprintf(buf, sizeof buf,
                      "%-8s %8g %-15s %5d  %9.3e +- %8.2e %9.3e +- %8.2e %8.3f +- %7.3f %6.3f +- %5.3f %8.4f %8.4f %6.1f%s\n",
                      e.variant.c_str(), e.sweep_value, to_string(e.method).c_str(), e.count, e.mean.nmse_delay,
                      e.stddev.nmse_delay, e.mean.nmse_doppler, e.stddev.nmse_doppler, e.mean.rmse_aoa_deg,
                      e.stddev.rmse_aoa_deg, e.mean.clustering_accuracy, e.stddev.clustering_accuracy,
                      e.mean.miss_rate, e.mean.false_alarm_rate, e.mean_iterations,
                      e.failed ? (" (" + std::to_string(e.failed) + " failed)").c_str() : "");
        os << buf;
    }
    return os.str();
}

} // namespace ulsense

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

#include "ulsense/container.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace ulsense
{

using nlohmann::json;

void to_json(json &j, const SystemConfig &c)
{
    j = json{{"carrier_freq", c.carrier_freq},
             {"bandwidth", c.bandwidth},
             {"num_subcarriers", c.num_subcarriers},
             {"subcarrier_spacing", c.subcarrier_spacing},
             {"packet_interval", c.packet_interval},
             {"num_antennas", c.num_antennas},
             {"num_ues", c.num_ues},
             {"num_packets", c.num_packets},
             {"snr_db", c.snr_db},
             {"rng_seed", c.rng_seed},
             {"noise_enabled", c.noise_enabled},
             {"offsets_enabled", c.offsets_enabled},
             {"max_cfo", c.max_cfo}};
}

// Missing keys keep their defaults so override files can be partial.
template <typename T>
static void read_opt(const json &j, const char *key, T &out)
{
    if (auto it = j.find(key); it != j.end())
        it->get_to(out);
}

void from_json(const json &j, SystemConfig &c)
{
    read_opt(j, "carrier_freq", c.carrier_freq);
    read_opt(j, "bandwidth", c.bandwidth);
    read_opt(j, "num_subcarriers", c.num_subcarriers);
    read_opt(j, "subcarrier_spacing", c.subcarrier_spacing);
    read_opt(j, "packet_interval", c.packet_interval);
    read_opt(j, "num_antennas", c.num_antennas);
    read_opt(j, "num_ues", c.num_ues);
    read_opt(j, "num_packets", c.num_packets);
    read_opt(j, "snr_db", c.snr_db);
    read_opt(j, "rng_seed", c.rng_seed);
    read_opt(j, "noise_enabled", c.noise_enabled);
    read_opt(j, "offsets_enabled", c.offsets_enabled);
    read_opt(j, "max_cfo", c.max_cfo);
}

void to_json(json &j, const SparsityConfig &c)
{
    j = json{{"tau_max", c.tau_max},
             {"grid_size", c.grid_size},
             {"num_clusters_true", c.num_clusters_true},
             {"num_clusters_candidate", c.num_clusters_candidate},
             {"shared_paths", c.shared_paths},
             {"private_paths", c.private_paths},
             {"per_ue_subcarriers", c.per_ue_subcarriers},
             {"on_grid", c.on_grid},
             {"max_doppler", c.max_doppler},
             {"los_gain_ratio", c.los_gain_ratio}};
}

void from_json(const json &j, SparsityConfig &c)
{
    read_opt(j, "tau_max", c.tau_max);
    read_opt(j, "grid_size", c.grid_size);
    read_opt(j, "num_clusters_true", c.num_clusters_true);
    read_opt(j, "num_clusters_candidate", c.num_clusters_candidate);
    read_opt(j, "shared_paths", c.shared_paths);
    read_opt(j, "private_paths", c.private_paths);
    read_opt(j, "per_ue_subcarriers", c.per_ue_subcarriers);
    read_opt(j, "on_grid", c.on_grid);
    read_opt(j, "max_doppler", c.max_doppler);
    read_opt(j, "los_gain_ratio", c.los_gain_ratio);
}

void to_json(json &j, const Scenario &s)
{
    j = json::array();
    for (const UeChannel &ue : s.ues)
    {
        json paths = json::array();
        for (const Path &p : ue.paths)
            paths.push_back({{"gain", {p.gain.real(), p.gain.imag()}},
                             {"delay", p.delay},
                             {"doppler", p.doppler},
                             {"aoa", p.aoa},
                             {"is_los", p.is_los}});
        j.push_back({{"cluster", ue.cluster},
                     {"subcarriers", ue.subcarriers},
                     {"los_geom_delay", ue.los_geom_delay},
                     {"paths", paths}});
    }
}

void from_json(const json &j, Scenario &s)
{
    s.ues.clear();
    for (const json &u : j)
    {
        UeChannel ue;
        u.at("cluster").get_to(ue.cluster);
        u.at("subcarriers").get_to(ue.subcarriers);
        u.at("los_geom_delay").get_to(ue.los_geom_delay);
        for (const json &p : u.at("paths"))
        {
            Path path;
            path.gain = {p.at("gain").at(0).get<double>(), p.at("gain").at(1).get<double>()};
            p.at("delay").get_to(path.delay);
            p.at("doppler").get_to(path.doppler);
            p.at("aoa").get_to(path.aoa);
            p.at("is_los").get_to(path.is_los);
            ue.paths.push_back(path);
        }
        s.ues.push_back(std::move(ue));
    }
}

void to_json(json &j, const OffsetTrace &o)
{
    j = json::array();
    for (const auto &ue : o.offsets)
    {
        json rows = json::array();
        for (const PacketOffset &p : ue)
            rows.push_back({p.timing, p.cfo, p.phase});
        j.push_back(rows);
    }
}

void from_json(const json &j, OffsetTrace &o)
{
    o.offsets.clear();
    for (const json &ue : j)
    {
        std::vector<PacketOffset> rows;
        for (const json &p : ue)
            rows.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
        o.offsets.push_back(std::move(rows));
    }
}

json matrix_to_json(const CMatrix &m)
{
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(2 * m.size()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
        {
            data.push_back(m(r, c).real());
            data.push_back(m(r, c).imag());
        }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

CMatrix matrix_from_json(const json &j)
{
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto &data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != 2 * rows * cols)
        throw std::runtime_error("matrix_from_json: data length does not match dimensions.");
    CMatrix m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r, i += 2)
            m(r, c) = {data[i].get<double>(), data[i + 1].get<double>()};
    return m;
}

void to_json(json &j, const CsiTensor &c)
{
    json ues = json::array();
    for (const auto &ue : c.csi)
    {
        json packets = json::array();
        for (const CMatrix &Y : ue)
            packets.push_back(matrix_to_json(Y));
        ues.push_back(packets);
    }
    j = json{{"noise_variance", c.noise_variance}, {"csi", ues}};
}

void from_json(const json &j, CsiTensor &c)
{
    j.at("noise_variance").get_to(c.noise_variance);
    c.csi.clear();
    for (const json &ue : j.at("csi"))
    {
        std::vector<CMatrix> packets;
        for (const json &Y : ue)
            packets.push_back(matrix_from_json(Y));
        c.csi.push_back(std::move(packets));
    }
}

void write_text(const std::filesystem::path &path, const std::string &text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing.");
    out << text;
    if (!out)
        throw std::runtime_error("write to " + path.string() + " failed.");
}

std::string read_text(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string() + " for reading.");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_trial(const std::filesystem::path &path, const TrialBundle &b)
{
    json j{{"format", kTrialFormat},
           {"version", kTrialVersion},
           {"system", b.sys},
           {"sparsity", b.sp},
           {"scenario", b.scenario},
           {"offsets", b.offsets},
           {"raw", b.raw}};
    if (b.calibrated)
        j["calibrated"] = *b.calibrated;
    if (b.to_estimates)
    {
        json est = json::array();
        for (const auto &ue : *b.to_estimates)
        {
            json rows = json::array();
            for (const ToEstimate &e : ue)
                rows.push_back({e.observed_los_delay, e.timing_offset, e.boundary_peak});
            est.push_back(rows);
        }
        j["to_estimates"] = est;
    }
    const std::vector<std::uint8_t> bytes = json::to_cbor(j);
    write_text(path, std::string(bytes.begin(), bytes.end()));
}

TrialBundle load_trial(const std::filesystem::path &path)
{
    const std::string bytes = read_text(path);
    json j;
    try
    {
        j = json::from_cbor(bytes);
    }
    catch (const json::exception &e)
    {
        throw std::runtime_error("load_trial: " + path.string() + " is not a trial container (" + e.what() + ").");
    }
    if (j.value("format", std::string{}) != kTrialFormat)
        throw std::runtime_error("load_trial: unexpected container format in " + path.string() + ".");
    if (j.value("version", -1) != kTrialVersion)
        throw std::runtime_error("load_trial: unsupported container version in " + path.string() + ".");

    TrialBundle b;
    j.at("system").get_to(b.sys);
    j.at("sparsity").get_to(b.sp);
    j.at("scenario").get_to(b.scenario);
    j.at("offsets").get_to(b.offsets);
    j.at("raw").get_to(b.raw);
    if (j.contains("calibrated"))
        b.calibrated = j.at("calibrated").get<CsiTensor>();
    if (j.contains("to_estimates"))
    {
        std::vector<std::vector<ToEstimate>> est;
        for (const json &ue : j.at("to_estimates"))
        {
            std::vector<ToEstimate> rows;
            for (const json &e : ue)
                rows.push_back({e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<bool>()});
            est.push_back(std::move(rows));
        }
        b.to_estimates = std::move(est);
    }
    return b;
}

json support_report_json(const SupportReport &r)
{
    json ues = json::array();
    for (std::size_t k = 0; k < r.supports.size(); ++k)
    {
        const SupportEstimate &s = r.supports[k];
        json u{{"k", k},
               {"indices", s.indices},
               {"delays", s.delays},
               {"cluster", s.cluster},
               {"degenerate", s.degenerate}};
        if (k < r.energy.size())
            u["energy"] = std::vector<double>(r.energy[k].data(), r.energy[k].data() + r.energy[k].size());
        if (r.responsibilities.rows() > static_cast<Eigen::Index>(k))
        {
            std::vector<double> resp(static_cast<std::size_t>(r.responsibilities.cols()));
            for (Eigen::Index c = 0; c < r.responsibilities.cols(); ++c)
                resp[static_cast<std::size_t>(c)] = r.responsibilities(static_cast<Eigen::Index>(k), c);
            u["responsibilities"] = resp;
        }
        ues.push_back(u);
    }
    return json{{"format", kSupportFormat}, {"version", kReportVersion}, {"method", r.method},
                {"iterations", r.iterations}, {"converged", r.converged}, {"grid", r.grid}, {"ues", ues}};
}

SupportReport support_report_from_json(const json &j)
{
    if (j.value("format", std::string{}) != kSupportFormat || j.value("version", -1) != kReportVersion)
        throw std::runtime_error("support report: format/version mismatch.");
    SupportReport r;
    j.at("method").get_to(r.method);
    j.at("iterations").get_to(r.iterations);
    j.at("converged").get_to(r.converged);
    j.at("grid").get_to(r.grid);
    const auto &ues = j.at("ues");
    for (std::size_t k = 0; k < ues.size(); ++k)
    {
        const json &u = ues[k];
        SupportEstimate s;
        u.at("indices").get_to(s.indices);
        u.at("delays").get_to(s.delays);
        u.at("cluster").get_to(s.cluster);
        u.at("degenerate").get_to(s.degenerate);
        r.supports.push_back(s);
        if (u.contains("energy"))
        {
            const auto e = u.at("energy").get<std::vector<double>>();
            r.energy.emplace_back(Eigen::Map<const RVector>(e.data(), static_cast<Eigen::Index>(e.size())));
        }
        if (u.contains("responsibilities"))
        {
            const auto resp = u.at("responsibilities").get<std::vector<double>>();
            if (r.responsibilities.size() == 0)
                r.responsibilities = RMatrix::Zero(static_cast<Eigen::Index>(ues.size()), static_cast<Eigen::Index>(resp.size()));
            for (std::size_t c = 0; c < resp.size(); ++c)
                r.responsibilities(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = resp[c];
        }
    }
    return r;
}

json estimate_set_json(const EstimateSet &est)
{
    json ues = json::array();
    for (std::size_t k = 0; k < est.ues.size(); ++k)
    {
        json paths = json::array();
        for (std::size_t l = 0; l < est.ues[k].size(); ++l)
        {
            const PathEstimate &p = est.ues[k][l];
            paths.push_back({{"l", l},
                             {"delay", p.delay},
                             {"doppler", p.doppler},
                             {"aoa", p.aoa},
                             {"gain_power", p.gain_power},
                             {"reference", p.reference},
                             {"reliable", p.reliable},
                             {"clamped", p.clamped}});
        }
        ues.push_back({{"k", k}, {"paths", paths}});
    }
    return json{{"format", kEstimateFormat}, {"version", kReportVersion}, {"ues", ues}};
}

EstimateSet estimate_set_from_json(const json &j)
{
    if (j.value("format", std::string{}) != kEstimateFormat || j.value("version", -1) != kReportVersion)
        throw std::runtime_error("estimate set: format/version mismatch.");
    EstimateSet est;
    for (const json &u : j.at("ues"))
    {
        UeEstimate ue;
        for (const json &p : u.at("paths"))
        {
            PathEstimate e;
            p.at("delay").get_to(e.delay);
            p.at("doppler").get_to(e.doppler);
            p.at("aoa").get_to(e.aoa);
            p.at("gain_power").get_to(e.gain_power);
            p.at("reference").get_to(e.reference);
            p.at("reliable").get_to(e.reliable);
            p.at("clamped").get_to(e.clamped);
            ue.push_back(e);
        }
        est.ues.push_back(std::move(ue));
    }
    return est;
}

std::string calibration_diagnostics_csv(const OffsetTrace &truth, const std::vector<std::vector<ToEstimate>> &est)
{
    std::ostringstream os;
    os.precision(17);
    os << "k,t,true_to_s,est_to_s,abs_error_s,boundary\n";
    for (std::size_t k = 0; k < est.size(); ++k)
        for (std::size_t t = 0; t < est[k].size(); ++t)
        {
            const double truth_to = truth.offsets.at(k).at(t).timing;
            os << k << ',' << t << ',' << truth_to << ',' << est[k][t].timing_offset << ','
               << std::abs(est[k][t].timing_offset - truth_to) << ',' << (est[k][t].boundary_peak ? 1 : 0) << '\n';
        }
    return os.str();
}

} // namespace ulsense

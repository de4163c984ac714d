#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "daybreak/common.hpp"
#include "daybreak/detector.hpp"
#include "daybreak/mixture.hpp"

namespace daybreak {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Writes through a temporary file in the same directory plus a rename, so
// readers never observe a partial file.
inline void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write file: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Dataset file: one row per period, `date,r00..r23,b00..b23` (NA = missing).
// ---------------------------------------------------------------------------

inline std::string dataset_to_csv(const Dataset& data, const std::vector<std::string>& dates) {
    if (!dates.empty() && dates.size() != data.size())
        throw DataError("dataset_to_csv: date column length mismatch");
    std::ostringstream out;
    const int d = data.empty() ? 0 : data.front().dim();
    out << "date";
    for (int j = 0; j < d; ++j) out << ",r" << (j < 10 ? "0" : "") << j;
    for (int j = 0; j < d; ++j) out << ",b" << (j < 10 ? "0" : "") << j;
    out << "\n";
    for (std::size_t t = 0; t < data.size(); ++t) {
        out << (dates.empty() ? "d" + std::to_string(t + 1) : dates[t]);
        const auto& obs = data[t];
        for (int j = 0; j < d; ++j) {
            out << ',';
            if (obs.real_missing[static_cast<std::size_t>(j)])
                out << "NA";
            else
                out << format_double(obs.real_values[j]);
        }
        for (int j = 0; j < d; ++j) {
            out << ',';
            if (obs.bin_missing[static_cast<std::size_t>(j)])
                out << "NA";
            else
                out << obs.bin_values[j];
        }
        out << "\n";
    }
    return out.str();
}

struct LoadedDataset {
    Dataset observations;
    std::vector<std::string> dates;
};

inline LoadedDataset dataset_from_csv(const std::string& text) {
    LoadedDataset out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.front() == "date") continue;  // header
        if (fields.size() < 3 || (fields.size() - 1) % 2 != 0)
            throw DataError("dataset: malformed row '" + line + "'");
        const int d = static_cast<int>((fields.size() - 1) / 2);
        HeteroObservation obs;
        obs.real_values = Eigen::VectorXd::Zero(d);
        obs.real_missing.assign(static_cast<std::size_t>(d), 0);
        obs.bin_values = Eigen::VectorXi::Zero(d);
        obs.bin_missing.assign(static_cast<std::size_t>(d), 0);
        for (int j = 0; j < d; ++j) {
            const auto& tok = fields[static_cast<std::size_t>(j) + 1];
            if (tok == "NA") {
                obs.real_missing[static_cast<std::size_t>(j)] = 1;
            } else {
                obs.real_values[j] = std::stod(tok);
            }
        }
        for (int j = 0; j < d; ++j) {
            const auto& tok = fields[static_cast<std::size_t>(j) + 1 + static_cast<std::size_t>(d)];
            if (tok == "NA") {
                obs.bin_missing[static_cast<std::size_t>(j)] = 1;
            } else {
                const int v = std::stoi(tok);
                if (v != 0 && v != 1) throw DataError("dataset: binary field must be 0/1/NA");
                obs.bin_values[j] = v;
            }
        }
        out.dates.push_back(fields.front());
        out.observations.push_back(std::move(obs));
    }
    if (out.observations.empty()) throw EmptyDataset("dataset: no rows");
    return out;
}

// ---------------------------------------------------------------------------
// Label sequence: one 1-based integer or NA per line.
// ---------------------------------------------------------------------------

inline std::string labels_to_text(const std::vector<int>& labels) {
    std::ostringstream out;
    for (int z : labels) {
        if (z == kMissingLabel)
            out << "NA\n";
        else
            out << (z + 1) << "\n";
    }
    return out.str();
}

inline std::vector<int> labels_from_text(const std::string& text) {
    std::vector<int> labels;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line == "NA") {
            labels.push_back(kMissingLabel);
        } else {
            const int v = std::stoi(line);
            if (v < 1) throw DataError("labels: entries are 1-based");
            labels.push_back(v - 1);
        }
    }
    if (labels.empty()) throw EmptyDataset("labels: no rows");
    return labels;
}

// ---------------------------------------------------------------------------
// Posterior probability matrix: T rows of K comma-separated reals; a row of
// the single token NA marks a missing step.
// ---------------------------------------------------------------------------

struct PosteriorRows {
    std::vector<Eigen::VectorXd> rows;
    std::vector<std::uint8_t> missing;
};

inline std::string posterior_to_csv(const LatentPosterior& post) {
    std::ostringstream out;
    for (int t = 0; t < post.size(); ++t) {
        if (post.fully_missing[static_cast<std::size_t>(t)]) {
            out << "NA\n";
            continue;
        }
        for (int k = 0; k < post.probs.cols(); ++k) {
            if (k) out << ',';
            out << format_double(post.probs(t, k));
        }
        out << "\n";
    }
    return out.str();
}

inline PosteriorRows posterior_from_csv(const std::string& text) {
    PosteriorRows out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line == "NA") {
            out.rows.emplace_back();
            out.missing.push_back(1);
            continue;
        }
        std::vector<double> vals;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
        Eigen::VectorXd row(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i) row[static_cast<Eigen::Index>(i)] = vals[i];
        out.rows.push_back(std::move(row));
        out.missing.push_back(0);
    }
    if (out.rows.empty()) throw EmptyDataset("posterior: no rows");
    return out;
}

// ---------------------------------------------------------------------------
// Model checkpoint (versioned JSON). Numeric fields round-trip bitwise.
// ---------------------------------------------------------------------------

struct FitMetadata {
    std::uint64_t seed = 0;
    double objective = 0.0;
    int iterations = 0;
    int best_restart = 0;
};

inline nlohmann::json checkpoint_to_json(const MixtureParams& params, const FitMetadata& meta) {
    nlohmann::json j;
    j["format"] = "daybreak-model";
    j["version"] = 1;
    j["k"] = params.num_classes();
    j["d"] = params.dim();
    j["c"] = params.kernels.front().order();
    j["weights"] = std::vector<double>(params.weights.data(),
                                       params.weights.data() + params.weights.size());
    nlohmann::json means = nlohmann::json::array();
    for (int k = 0; k < params.num_classes(); ++k) {
        std::vector<double> row(static_cast<std::size_t>(params.dim()));
        for (int jx = 0; jx < params.dim(); ++jx) row[static_cast<std::size_t>(jx)] = params.bern_means(k, jx);
        means.push_back(row);
    }
    j["bern_means"] = means;
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& hp : params.kernels) {
        nlohmann::json c;
        c["fourier_cos"] = std::vector<double>(hp.fourier_cos.data(),
                                               hp.fourier_cos.data() + hp.fourier_cos.size());
        c["fourier_sin"] = std::vector<double>(hp.fourier_sin.data(),
                                               hp.fourier_sin.data() + hp.fourier_sin.size());
        c["amplitude"] = hp.amplitude;
        c["lengthscale"] = hp.lengthscale;
        c["period"] = hp.period;
        classes.push_back(c);
    }
    j["kernels"] = classes;
    j["noise_sd"] = std::vector<double>(params.noise.sd.data(),
                                        params.noise.sd.data() + params.noise.sd.size());
    j["fit"] = {{"seed", meta.seed},
                {"objective", meta.objective},
                {"iterations", meta.iterations},
                {"best_restart", meta.best_restart}};
    return j;
}

inline std::pair<MixtureParams, FitMetadata> checkpoint_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != "daybreak-model")
        throw DataError("checkpoint: unrecognized format");
    if (j.at("version").get<int>() != 1) throw DataError("checkpoint: unsupported version");
    MixtureParams params;
    const int k = j.at("k").get<int>();
    const int d = j.at("d").get<int>();
    const auto weights = j.at("weights").get<std::vector<double>>();
    params.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    params.bern_means.resize(k, d);
    const auto& means = j.at("bern_means");
    for (int kk = 0; kk < k; ++kk) {
        const auto row = means.at(static_cast<std::size_t>(kk)).get<std::vector<double>>();
        for (int jx = 0; jx < d; ++jx) params.bern_means(kk, jx) = row[static_cast<std::size_t>(jx)];
    }
    for (const auto& c : j.at("kernels")) {
        KernelParams hp;
        const auto fc = c.at("fourier_cos").get<std::vector<double>>();
        const auto fs = c.at("fourier_sin").get<std::vector<double>>();
        hp.fourier_cos = Eigen::Map<const Eigen::VectorXd>(fc.data(), static_cast<Eigen::Index>(fc.size()));
        hp.fourier_sin = Eigen::Map<const Eigen::VectorXd>(fs.data(), static_cast<Eigen::Index>(fs.size()));
        hp.amplitude = c.at("amplitude").get<double>();
        hp.lengthscale = c.at("lengthscale").get<double>();
        hp.period = c.at("period").get<int>();
        params.kernels.push_back(std::move(hp));
    }
    const auto sd = j.at("noise_sd").get<std::vector<double>>();
    params.noise.sd = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
    FitMetadata meta;
    const auto& fit = j.at("fit");
    meta.seed = fit.at("seed").get<std::uint64_t>();
    meta.objective = fit.at("objective").get<double>();
    meta.iterations = fit.at("iterations").get<int>();
    meta.best_restart = fit.at("best_restart").get<int>();
    params.validate();
    return {std::move(params), meta};
}

// ---------------------------------------------------------------------------
// Change-point report: JSON (MAP trace plus events) and an optional dense
// posterior CSV with rows padded by zeros beyond the feasible run lengths.
// ---------------------------------------------------------------------------

inline nlohmann::json cp_report_to_json(const CpReport& report) {
    nlohmann::json j;
    j["format"] = "daybreak-cp-report";
    j["version"] = 1;
    j["map_runlength"] = report.runlength_map;
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : report.detected_cps)
        events.push_back({{"time", ev.time}, {"estimated_cp_time", ev.estimated_cp_time}});
    j["detected_cps"] = events;
    return j;
}

inline CpReport cp_report_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != "daybreak-cp-report")
        throw DataError("cp report: unrecognized format");
    CpReport report;
    report.runlength_map = j.at("map_runlength").get<std::vector<int>>();
    for (const auto& ev : j.at("detected_cps"))
        report.detected_cps.push_back(
            {ev.at("time").get<int>(), ev.at("estimated_cp_time").get<int>()});
    return report;
}

inline std::string runlength_posterior_to_csv(const CpReport& report) {
    std::ostringstream out;
    const std::size_t t_len = report.posterior.size();
    for (std::size_t t = 0; t < t_len; ++t) {
        const auto& row = report.posterior[t];
        for (std::size_t r = 0; r <= t_len; ++r) {
            if (r) out << ',';
            out << format_double(r < row.size() ? row[r] : 0.0);
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Ground truth for synthetic runs.
// ---------------------------------------------------------------------------

struct GroundTruth {
    std::vector<int> labels;    // 0-based internally, may hold kMissingLabel
    std::vector<int> cp_times;  // first step of each new partition, 1-based
};

inline nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
    nlohmann::json j;
    j["format"] = "daybreak-ground-truth";
    j["version"] = 1;
    nlohmann::json labels = nlohmann::json::array();
    for (int z : gt.labels)
        labels.push_back(z == kMissingLabel ? nlohmann::json() : nlohmann::json(z + 1));
    j["labels"] = labels;
    j["cp_times"] = gt.cp_times;
    return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != "daybreak-ground-truth")
        throw DataError("ground truth: unrecognized format");
    GroundTruth gt;
    for (const auto& v : j.at("labels"))
        gt.labels.push_back(v.is_null() ? kMissingLabel : v.get<int>() - 1);
    gt.cp_times = j.at("cp_times").get<std::vector<int>>();
    return gt;
}

}  // namespace daybreak

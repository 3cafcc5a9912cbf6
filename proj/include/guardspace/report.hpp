#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "guardspace/tensor_io.hpp"
#include "guardspace/trainer.hpp"

namespace guardspace {

namespace detail {

// 17 significant digits round-trip any double exactly.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& key) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw contract_error("report: bad numeric value for " + key);
    }
    if (used != s.size()) throw contract_error("report: bad numeric value for " + key);
    return v;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& key) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        throw contract_error("report: bad integer value for " + key);
    }
    if (used != s.size()) throw contract_error("report: bad integer value for " + key);
    return v;
}

}  // namespace detail

// Plain-text report: a version line, the config echo, summary fields, then
// one "series <name> <v0> <v1> ..." line per metric. No timestamps, so equal
// runs produce byte-identical reports.
inline std::string format_report(const RunReport& r) {
    std::ostringstream out;
    const TrainConfig& c = r.config;
    out << "guardspace-report 1\n";
    out << "mode " << mode_name(c.mode) << "\n";
    out << "rank " << c.rank << "\n";
    out << "learning_rate " << detail::fmt_double(c.learning_rate) << "\n";
    out << "epochs " << c.epochs << "\n";
    out << "batch " << c.batch << "\n";
    out << "seed " << c.seed << "\n";
    out << "eps_null " << detail::fmt_double(c.eps_null) << "\n";
    out << "rho " << detail::fmt_double(c.rho) << "\n";
    out << "tau " << detail::fmt_double(c.tau) << "\n";
    out << "max_rounds " << c.max_rounds << "\n";
    out << "subspace_corpus_tag " << c.subspace_corpus_tag << "\n";
    out << "projector_corpus_tag " << c.projector_corpus_tag << "\n";
    out << "unsafe_ratio " << detail::fmt_double(c.unsafe_ratio) << "\n";
    out << "projector_constructor " << projector_constructor_name(c.projector_constructor)
        << "\n";
    out << "initial_task_loss " << detail::fmt_double(r.initial_task_loss) << "\n";
    out << "merged_checksum " << r.merged_checksum << "\n";
    auto series = [&](const char* name, const std::vector<double>& v) {
        out << "series " << name;
        for (double x : v) out << " " << detail::fmt_double(x);
        out << "\n";
    };
    series("task_loss", r.task_loss);
    series("task_accuracy", r.task_accuracy);
    series("harmful_drift", r.harmful_drift);
    series("calibration_drift", r.calibration_drift);
    return out.str();
}

inline RunReport parse_report(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "guardspace-report 1")
        throw contract_error("report: missing or unsupported header line");
    RunReport r;
    bool saw_checksum = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        TrainConfig& c = r.config;
        if (key == "mode") {
            c.mode = parse_mode(rest);
        } else if (key == "rank") {
            c.rank = detail::parse_u64(rest, key);
        } else if (key == "learning_rate") {
            c.learning_rate = detail::parse_double(rest, key);
        } else if (key == "epochs") {
            c.epochs = detail::parse_u64(rest, key);
        } else if (key == "batch") {
            c.batch = detail::parse_u64(rest, key);
        } else if (key == "seed") {
            c.seed = detail::parse_u64(rest, key);
        } else if (key == "eps_null") {
            c.eps_null = detail::parse_double(rest, key);
        } else if (key == "rho") {
            c.rho = detail::parse_double(rest, key);
        } else if (key == "tau") {
            c.tau = detail::parse_double(rest, key);
        } else if (key == "max_rounds") {
            c.max_rounds = detail::parse_u64(rest, key);
        } else if (key == "subspace_corpus_tag") {
            c.subspace_corpus_tag = rest;
        } else if (key == "projector_corpus_tag") {
            c.projector_corpus_tag = rest;
        } else if (key == "unsafe_ratio") {
            c.unsafe_ratio = detail::parse_double(rest, key);
        } else if (key == "projector_constructor") {
            c.projector_constructor = parse_projector_constructor(rest);
        } else if (key == "initial_task_loss") {
            r.initial_task_loss = detail::parse_double(rest, key);
        } else if (key == "merged_checksum") {
            r.merged_checksum = rest;
            saw_checksum = true;
        } else if (key == "series") {
            std::istringstream ss(rest);
            std::string name;
            ss >> name;
            std::vector<double> values;
            std::string tok;
            while (ss >> tok) values.push_back(detail::parse_double(tok, name));
            if (name == "task_loss")
                r.task_loss = std::move(values);
            else if (name == "task_accuracy")
                r.task_accuracy = std::move(values);
            else if (name == "harmful_drift")
                r.harmful_drift = std::move(values);
            else if (name == "calibration_drift")
                r.calibration_drift = std::move(values);
            else
                throw contract_error("report: unknown series \"" + name + "\"");
        } else {
            throw contract_error("report: unknown key \"" + key + "\"");
        }
    }
    if (!saw_checksum) throw contract_error("report: missing merged_checksum");
    const std::size_t n = r.task_loss.size();
    if (r.task_accuracy.size() != n || r.harmful_drift.size() != n ||
        r.calibration_drift.size() != n)
        throw contract_error("report: series lengths disagree");
    return r;
}

// CSV companion for plotting: one row per epoch.
inline std::string format_report_csv(const RunReport& r) {
    std::ostringstream out;
    out << "epoch,task_loss,task_accuracy,harmful_drift,calibration_drift\n";
    for (std::size_t t = 0; t < r.task_loss.size(); ++t)
        out << (t + 1) << "," << detail::fmt_double(r.task_loss[t]) << ","
            << detail::fmt_double(r.task_accuracy[t]) << ","
            << detail::fmt_double(r.harmful_drift[t]) << ","
            << detail::fmt_double(r.calibration_drift[t]) << "\n";
    return out.str();
}

inline void save_report(const std::filesystem::path& path, const RunReport& r) {
    detail::atomic_write(path, format_report(r));
}

inline RunReport load_report(const std::filesystem::path& path) {
    return parse_report(detail::read_file(path));
}

}  // namespace guardspace

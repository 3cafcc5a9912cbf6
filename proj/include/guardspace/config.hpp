#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include "guardspace/report.hpp"
#include "guardspace/synthetic.hpp"
#include "guardspace/trainer.hpp"

namespace guardspace {

// One experiment description: the training configuration plus the synthetic
// task it runs on. A single `seed` key drives both (the base-model weights
// derive a separate stream from it).
struct Settings {
    TrainConfig train;
    SyntheticTaskSpec task;

    bool operator==(const Settings&) const = default;
};

namespace detail {

inline std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& key) {
    std::vector<std::size_t> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        if (item.empty()) throw contract_error("config: empty entry in " + key);
        out.push_back(parse_u64(item, key));
    }
    if (out.empty()) throw contract_error("config: empty list for " + key);
    return out;
}

inline std::string format_size_list(const std::vector<std::size_t>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ",";
        out << v[i];
    }
    return out.str();
}

}  // namespace detail

// Keys are exactly the field names. Values may be separated by whitespace or
// a single '='; '#' starts a comment.
inline void apply_setting(Settings& s, const std::string& key, const std::string& value) {
    TrainConfig& c = s.train;
    SyntheticTaskSpec& t = s.task;
    if (key == "mode")
        c.mode = parse_mode(value);
    else if (key == "rank")
        c.rank = detail::parse_u64(value, key);
    else if (key == "learning_rate")
        c.learning_rate = detail::parse_double(value, key);
    else if (key == "epochs")
        c.epochs = detail::parse_u64(value, key);
    else if (key == "batch")
        c.batch = detail::parse_u64(value, key);
    else if (key == "seed")
        c.seed = t.seed = detail::parse_u64(value, key);
    else if (key == "eps_null")
        c.eps_null = detail::parse_double(value, key);
    else if (key == "rho")
        c.rho = detail::parse_double(value, key);
    else if (key == "tau")
        c.tau = detail::parse_double(value, key);
    else if (key == "max_rounds")
        c.max_rounds = detail::parse_u64(value, key);
    else if (key == "subspace_corpus_tag")
        c.subspace_corpus_tag = value;
    else if (key == "projector_corpus_tag")
        c.projector_corpus_tag = value;
    else if (key == "unsafe_ratio")
        c.unsafe_ratio = detail::parse_double(value, key);
    else if (key == "projector_constructor")
        c.projector_constructor = parse_projector_constructor(value);
    else if (key == "d_in")
        t.d_in = detail::parse_u64(value, key);
    else if (key == "hidden")
        t.hidden = detail::parse_size_list(value, key);
    else if (key == "d_out")
        t.d_out = detail::parse_u64(value, key);
    else if (key == "n_benign")
        t.n_benign = detail::parse_u64(value, key);
    else if (key == "n_harmful")
        t.n_harmful = detail::parse_u64(value, key);
    else if (key == "n_subspace")
        t.n_subspace = detail::parse_u64(value, key);
    else if (key == "separation")
        t.separation = detail::parse_double(value, key);
    else if (key == "harmful_rank")
        t.harmful_rank = detail::parse_u64(value, key);
    else if (key == "overlap")
        t.overlap = detail::parse_double(value, key);
    else if (key == "label_rule")
        t.label_rule = parse_label_rule(value);
    else
        throw contract_error("config: unknown key \"" + key + "\"");
}

inline Settings parse_settings(const std::string& text) {
    Settings s;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        std::size_t split = line.find_first_of(" \t=");
        if (split == std::string::npos)
            throw contract_error("config: line " + std::to_string(lineno) +
                                 " has a key without a value");
        std::string key = line.substr(0, split);
        std::size_t vstart = line.find_first_not_of(" \t=", split);
        if (vstart == std::string::npos)
            throw contract_error("config: line " + std::to_string(lineno) +
                                 " has a key without a value");
        apply_setting(s, key, line.substr(vstart));
    }
    return s;
}

inline std::string emit_settings(const Settings& s) {
    std::ostringstream out;
    const TrainConfig& c = s.train;
    const SyntheticTaskSpec& t = s.task;
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
    out << "d_in " << t.d_in << "\n";
    out << "hidden " << detail::format_size_list(t.hidden) << "\n";
    out << "d_out " << t.d_out << "\n";
    out << "n_benign " << t.n_benign << "\n";
    out << "n_harmful " << t.n_harmful << "\n";
    out << "n_subspace " << t.n_subspace << "\n";
    out << "separation " << detail::fmt_double(t.separation) << "\n";
    out << "harmful_rank " << t.harmful_rank << "\n";
    out << "overlap " << detail::fmt_double(t.overlap) << "\n";
    out << "label_rule " << label_rule_name(t.label_rule) << "\n";
    return out.str();
}

inline Settings load_settings(const std::filesystem::path& path) {
    return parse_settings(detail::read_file(path));
}

}  // namespace guardspace

#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "povmkit/errors.hpp"
#include "povmkit/models.hpp"
#include "povmkit/povm.hpp"
#include "povmkit/probes.hpp"

namespace povmkit {

namespace detail {

/// 17 significant digits: enough for a strtod round trip to recover the
/// exact double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline double parse_double(const std::string& token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(token, &used);
    } catch (const std::exception&) {
        throw ParameterError("not a number: '" + token + "'");
    }
    if (used != token.size())
        throw ParameterError("not a number: '" + token + "'");
    return v;
}

}  // namespace detail

using DetectorModel = std::variant<EqualSplitModel, LogLoopModel>;

inline std::string povm_to_json(const PovmSet& set) {
    const int k = set.outcome_count();
    const int m = set.dimension();
    std::string out;
    out.reserve(static_cast<std::size_t>(k) * m * 24 + 64);
    out += "{\"dimension\": " + std::to_string(m) + ", \"outcomes\": [";
    for (int n = 0; n < k; ++n) {
        out += n ? ",\n  [" : "\n  [";
        for (int i = 0; i < m; ++i) {
            if (i) out += ", ";
            out += detail::format_double(set.weights(n, i));
        }
        out += "]";
    }
    out += "\n]}\n";
    return out;
}

inline PovmSet povm_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object() || !j.contains("dimension") || !j.contains("outcomes"))
        throw ParameterError("POVM JSON must carry dimension and outcomes");
    const int m = j.at("dimension").get<int>();
    const nlohmann::json& rows = j.at("outcomes");
    if (!rows.is_array() || rows.empty())
        throw ParameterError("POVM JSON outcomes must be a nonempty array");
    if (m < 1) throw DimensionError("POVM dimension must be positive");
    PovmSet set;
    set.weights.resize(static_cast<int>(rows.size()), m);
    for (int n = 0; n < static_cast<int>(rows.size()); ++n) {
        const nlohmann::json& row = rows.at(n);
        if (!row.is_array() || static_cast<int>(row.size()) != m)
            throw ShapeError("POVM JSON outcome length does not match dimension");
        for (int i = 0; i < m; ++i) set.weights(n, i) = row.at(i).get<double>();
    }
    return set;
}

inline std::string povm_to_csv(const PovmSet& set) {
    const int k = set.outcome_count();
    const int m = set.dimension();
    std::string out;
    out.reserve(static_cast<std::size_t>(k + 1) * m * 24 + 64);
    out += "n";
    for (int i = 0; i < m; ++i) out += ",i" + std::to_string(i);
    out += "\n";
    for (int n = 0; n < k; ++n) {
        out += std::to_string(n);
        for (int i = 0; i < m; ++i) {
            out += ",";
            out += detail::format_double(set.weights(n, i));
        }
        out += "\n";
    }
    return out;
}

inline std::string probes_to_json(const ProbeSet& probes) {
    std::string out = "{\"means\": [";
    for (int m = 0; m < probes.size(); ++m) {
        if (m) out += ", ";
        out += detail::format_double(probes.means(m));
    }
    out += "]}\n";
    return out;
}

inline ProbeSet probes_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object() || !j.contains("means") || !j.at("means").is_array())
        throw ParameterError("probe JSON must carry a means array");
    const nlohmann::json& arr = j.at("means");
    ProbeSet probes;
    probes.means.resize(static_cast<int>(arr.size()));
    for (int m = 0; m < probes.size(); ++m) {
        probes.means(m) = arr.at(m).get<double>();
        if (!(probes.means(m) >= 0.0))
            throw ParameterError("probe means must be nonnegative");
        if (m > 0 && !(probes.means(m) > probes.means(m - 1)))
            throw ParameterError("probe means must be strictly increasing");
    }
    return probes;
}

inline std::string stats_to_csv(const OutcomeStats& stats,
                                const ProbeSet& probes) {
    const int probe_count = static_cast<int>(stats.frequencies.rows());
    const int k = static_cast<int>(stats.frequencies.cols());
    if (probe_count != probes.size())
        throw ShapeError("stats rows do not match probe count");
    std::string out = "mu,shots";
    for (int n = 0; n < k; ++n) out += ",n" + std::to_string(n);
    out += "\n";
    for (int m = 0; m < probe_count; ++m) {
        out += detail::format_double(probes.means(m));
        out += "," + std::to_string(stats.shots);
        for (int n = 0; n < k; ++n) {
            out += ",";
            out += detail::format_double(stats.frequencies(m, n));
        }
        out += "\n";
    }
    return out;
}

inline std::pair<ProbeSet, OutcomeStats> stats_from_csv(
    const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParameterError("stats CSV is empty");
    const std::vector<std::string> header = detail::split_csv(line);
    if (header.size() < 3 || header[0] != "mu" || header[1] != "shots")
        throw ParameterError("stats CSV header must start with mu,shots");
    const int k = static_cast<int>(header.size()) - 2;
    std::vector<double> means;
    std::vector<double> cells;
    long long shots = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> tok = detail::split_csv(line);
        if (static_cast<int>(tok.size()) != k + 2)
            throw ParameterError("stats CSV row width does not match header");
        means.push_back(detail::parse_double(tok[0]));
        const double srow = detail::parse_double(tok[1]);
        if (shots < 0) {
            shots = static_cast<long long>(srow);
        } else if (static_cast<long long>(srow) != shots) {
            throw ParameterError("stats CSV shots differ across probes");
        }
        for (int n = 0; n < k; ++n)
            cells.push_back(detail::parse_double(tok[n + 2]));
    }
    if (means.empty()) throw ParameterError("stats CSV has no data rows");
    ProbeSet probes;
    probes.means.resize(static_cast<int>(means.size()));
    OutcomeStats stats;
    stats.shots = shots;
    stats.frequencies.resize(static_cast<int>(means.size()), k);
    for (int m = 0; m < probes.size(); ++m) {
        probes.means(m) = means[m];
        for (int n = 0; n < k; ++n)
            stats.frequencies(m, n) = cells[static_cast<std::size_t>(m) * k + n];
    }
    return {probes, stats};
}

inline std::string model_to_json(const DetectorModel& model) {
    nlohmann::ordered_json j;
    if (const EqualSplitModel* es = std::get_if<EqualSplitModel>(&model)) {
        j["type"] = "equal_split";
        j["bins"] = es->bins;
        j["efficiency"] = es->efficiency;
        j["dark_prob"] = es->dark_prob;
        j["crosstalk_prob"] = es->crosstalk_prob;
    } else {
        const LogLoopModel& ll = std::get<LogLoopModel>(model);
        j["type"] = "log_loop";
        j["bins"] = ll.bins;
        j["out_coupling"] = ll.out_coupling;
        j["loop_efficiency"] = ll.loop_efficiency;
        j["detector_efficiency"] = ll.detector_efficiency;
        j["dark_prob"] = ll.dark_prob;
    }
    return j.dump(2) + "\n";
}

inline DetectorModel model_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object() || !j.contains("type"))
        throw ParameterError("model JSON must carry a type field");
    const std::string type = j.at("type").get<std::string>();
    if (type == "equal_split") {
        EqualSplitModel m;
        m.bins = j.at("bins").get<int>();
        m.efficiency = j.at("efficiency").get<double>();
        m.dark_prob = j.value("dark_prob", 0.0);
        m.crosstalk_prob = j.value("crosstalk_prob", 0.0);
        check_model(m);
        return m;
    }
    if (type == "log_loop") {
        LogLoopModel m;
        m.bins = j.at("bins").get<int>();
        m.out_coupling = j.at("out_coupling").get<double>();
        m.loop_efficiency = j.at("loop_efficiency").get<double>();
        m.detector_efficiency = j.at("detector_efficiency").get<double>();
        m.dark_prob = j.value("dark_prob", 0.0);
        check_model(m);
        return m;
    }
    throw ParameterError("unknown model type: " + type);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParameterError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Write via a temp file in the same directory plus rename, so readers never
/// observe a partially written file.
inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParameterError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw ParameterError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace povmkit

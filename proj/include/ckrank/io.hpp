#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ckrank/errors.hpp"
#include "ckrank/types.hpp"

namespace ckrank {
namespace io {

namespace detail {

inline constexpr char kBinaryMagic[8] = {'C', 'K', 'F', 'T', 'B', 'L', '0', '1'};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string(), -1, "cannot open file");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

inline double parse_double(std::string_view field, const std::filesystem::path& path,
                           long line) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError(path.string(), line,
                         "cannot parse '" + std::string(field) + "' as a real number");
    return value;
}

inline long parse_int(std::string_view field, const std::filesystem::path& path, long line) {
    long value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError(path.string(), line,
                         "cannot parse '" + std::string(field) + "' as an integer");
    return value;
}

// Visit non-empty, non-comment lines with their 1-based line numbers.
template <typename Fn>
inline void for_each_data_line(const std::string& text, Fn&& fn) {
    std::size_t start = 0;
    long line_no = 0;
    while (start <= text.size()) {
        const std::size_t end = text.find('\n', start);
        const std::size_t len = (end == std::string::npos ? text.size() : end) - start;
        ++line_no;
        std::string_view line = trim(std::string_view(text).substr(start, len));
        if (!line.empty() && line.front() != '#') fn(line, line_no);
        if (end == std::string::npos) break;
        start = end + 1;
    }
}

inline void format_double(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(len));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Labeled CSV: '#' comments, first column integer label, remaining columns
// real-valued. Shared by feature tables and source-prediction tables.
// ---------------------------------------------------------------------------

struct LabeledMatrix {
    std::vector<int> labels;
    Eigen::MatrixXd values;
};

inline LabeledMatrix load_labeled_csv(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    std::vector<int> labels;
    std::vector<double> values;
    Eigen::Index cols = -1;
    detail::for_each_data_line(text, [&](std::string_view line, long line_no) {
        const auto fields = detail::split(line, ',');
        if (fields.size() < 2)
            throw ParseError(path.string(), line_no, "expected label plus at least one value");
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(fields.size()) - 1;
        } else if (static_cast<Eigen::Index>(fields.size()) - 1 != cols) {
            throw ParseError(path.string(), line_no,
                             "expected " + std::to_string(cols + 1) + " columns, got " +
                                 std::to_string(fields.size()));
        }
        labels.push_back(static_cast<int>(detail::parse_int(fields[0], path, line_no)));
        for (std::size_t i = 1; i < fields.size(); ++i)
            values.push_back(detail::parse_double(fields[i], path, line_no));
    });
    if (labels.empty()) throw ParseError(path.string(), -1, "no data rows");
    LabeledMatrix out;
    out.labels = std::move(labels);
    out.values.resize(static_cast<Eigen::Index>(out.labels.size()), cols);
    for (Eigen::Index i = 0; i < out.values.rows(); ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out.values(i, j) = values[static_cast<std::size_t>(i * cols + j)];
    return out;
}

inline void save_labeled_csv(const std::filesystem::path& path, const std::vector<int>& labels,
                             const Eigen::MatrixXd& values,
                             const std::vector<std::string>& comments = {}) {
    std::string out;
    for (const auto& c : comments) out += "# " + c + "\n";
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        out += std::to_string(labels[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            out += ',';
            detail::format_double(out, values(i, j));
        }
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError(path.string(), -1, "cannot open file for writing");
    file << out;
}

// ---------------------------------------------------------------------------
// FeatureTable text and binary forms. Binary round-trips features
// bit-identically; the loader sniffs the magic so either form works anywhere
// a feature table path is expected.
// ---------------------------------------------------------------------------

inline void save_feature_table_text(const std::filesystem::path& path, const FeatureTable& t) {
    save_labeled_csv(path, t.labels, t.features,
                     {"checkpoint=" + t.checkpoint_id + " task=" + t.task_id +
                      " split=" + to_string(t.split) +
                      " num_classes=" + std::to_string(t.num_classes)});
}

inline void save_feature_table_binary(const std::filesystem::path& path, const FeatureTable& t) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError(path.string(), -1, "cannot open file for writing");
    auto write_raw = [&](const void* p, std::size_t size) {
        file.write(static_cast<const char*>(p), static_cast<std::streamsize>(size));
    };
    auto write_u64 = [&](std::uint64_t v) { write_raw(&v, sizeof v); };
    auto write_string = [&](const std::string& s) {
        write_u64(s.size());
        write_raw(s.data(), s.size());
    };
    write_raw(detail::kBinaryMagic, sizeof detail::kBinaryMagic);
    const std::uint8_t split = t.split == Split::train ? 0 : 1;
    write_raw(&split, 1);
    write_string(t.checkpoint_id);
    write_string(t.task_id);
    write_u64(static_cast<std::uint64_t>(t.num_classes));
    write_u64(static_cast<std::uint64_t>(t.features.rows()));
    write_u64(static_cast<std::uint64_t>(t.features.cols()));
    for (int label : t.labels) {
        const std::int32_t v = label;
        write_raw(&v, sizeof v);
    }
    for (Eigen::Index i = 0; i < t.features.rows(); ++i)
        for (Eigen::Index j = 0; j < t.features.cols(); ++j) {
            const double v = t.features(i, j);
            write_raw(&v, sizeof v);
        }
}

inline bool is_binary_feature_file(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError(path.string(), -1, "cannot open file");
    char magic[sizeof detail::kBinaryMagic] = {};
    file.read(magic, sizeof magic);
    return file.gcount() == sizeof magic &&
           std::memcmp(magic, detail::kBinaryMagic, sizeof magic) == 0;
}

inline FeatureTable load_feature_table_binary(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError(path.string(), -1, "cannot open file");
    auto read_raw = [&](void* p, std::size_t size) {
        file.read(static_cast<char*>(p), static_cast<std::streamsize>(size));
        if (file.gcount() != static_cast<std::streamsize>(size))
            throw ParseError(path.string(), -1, "truncated binary feature table");
    };
    auto read_u64 = [&] {
        std::uint64_t v = 0;
        read_raw(&v, sizeof v);
        return v;
    };
    auto read_string = [&] {
        const std::uint64_t len = read_u64();
        if (len > (1ULL << 20)) throw ParseError(path.string(), -1, "corrupt string length");
        std::string s(len, '\0');
        read_raw(s.data(), len);
        return s;
    };
    char magic[sizeof detail::kBinaryMagic] = {};
    read_raw(magic, sizeof magic);
    if (std::memcmp(magic, detail::kBinaryMagic, sizeof magic) != 0)
        throw ParseError(path.string(), -1, "bad magic: not a binary feature table");
    FeatureTable t;
    std::uint8_t split = 0;
    read_raw(&split, 1);
    t.split = split == 0 ? Split::train : Split::test;
    t.checkpoint_id = read_string();
    t.task_id = read_string();
    t.num_classes = static_cast<int>(read_u64());
    const std::uint64_t n = read_u64();
    const std::uint64_t d = read_u64();
    if (n == 0 || d == 0 || n > (1ULL << 32) || d > (1ULL << 24))
        throw ParseError(path.string(), -1, "corrupt dimensions in binary feature table");
    t.labels.resize(n);
    for (auto& label : t.labels) {
        std::int32_t v = 0;
        read_raw(&v, sizeof v);
        label = v;
    }
    t.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < t.features.rows(); ++i)
        for (Eigen::Index j = 0; j < t.features.cols(); ++j) {
            double v = 0.0;
            read_raw(&v, sizeof v);
            t.features(i, j) = v;
        }
    return t;
}

// Loads either form; text callers supply the table identity from context.
inline FeatureTable load_feature_table(const std::filesystem::path& path,
                                       const std::string& checkpoint_id,
                                       const std::string& task_id, Split split,
                                       int num_classes) {
    if (is_binary_feature_file(path)) return load_feature_table_binary(path);
    LabeledMatrix m = load_labeled_csv(path);
    FeatureTable t;
    t.checkpoint_id = checkpoint_id;
    t.task_id = task_id;
    t.split = split;
    t.labels = std::move(m.labels);
    t.features = std::move(m.values);
    t.num_classes = num_classes;
    return t;
}

inline SourcePredictionTable load_source_predictions(const std::filesystem::path& path,
                                                     const std::string& checkpoint_id,
                                                     const std::string& task_id, Split split,
                                                     int num_classes) {
    LabeledMatrix m = load_labeled_csv(path);
    SourcePredictionTable t;
    t.checkpoint_id = checkpoint_id;
    t.task_id = task_id;
    t.split = split;
    t.labels = std::move(m.labels);
    t.source_probs = std::move(m.values);
    t.num_classes = num_classes;
    return t;
}

// ---------------------------------------------------------------------------
// checkpoint_id,task_id,value CSVs (ground truth and external scores).
// ---------------------------------------------------------------------------

inline GroundTruthTable load_ground_truth_csv(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    GroundTruthTable table;
    detail::for_each_data_line(text, [&](std::string_view line, long line_no) {
        const auto fields = detail::split(line, ',');
        if (fields.size() != 3)
            throw ParseError(path.string(), line_no, "expected checkpoint_id,task_id,accuracy");
        if (fields[2] == "accuracy") return; // header row
        const double acc = detail::parse_double(fields[2], path, line_no);
        if (!(acc >= 0.0) || !(acc <= 1.0))
            throw ParseError(path.string(), line_no, "accuracy must lie in [0, 1]");
        const CellKey key{std::string(fields[0]), std::string(fields[1])};
        if (!table.accuracies.emplace(key, acc).second)
            throw ParseError(path.string(), line_no,
                             "duplicate key " + key.first + "," + key.second);
    });
    if (table.accuracies.empty()) throw ParseError(path.string(), -1, "no ground-truth rows");
    return table;
}

inline void save_ground_truth_csv(const std::filesystem::path& path,
                                  const GroundTruthTable& table) {
    std::string out = "# checkpoint_id,task_id,accuracy\n";
    for (const auto& [key, acc] : table.accuracies) {
        out += key.first + ',' + key.second + ',';
        detail::format_double(out, acc);
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError(path.string(), -1, "cannot open file for writing");
    file << out;
}

inline ScoreMatrix load_score_csv(const std::filesystem::path& path,
                                  const std::string& measure_name) {
    const std::string text = detail::read_file(path);
    ScoreMatrix matrix;
    matrix.measure_name = measure_name;
    detail::for_each_data_line(text, [&](std::string_view line, long line_no) {
        const auto fields = detail::split(line, ',');
        if (fields.size() != 3)
            throw ParseError(path.string(), line_no, "expected checkpoint_id,task_id,score");
        if (fields[2] == "score" || fields[2] == "accuracy") return; // header row
        const double score = detail::parse_double(fields[2], path, line_no);
        if (!std::isfinite(score))
            throw ParseError(path.string(), line_no, "score must be finite");
        const CellKey key{std::string(fields[0]), std::string(fields[1])};
        if (!matrix.scores.emplace(key, score).second)
            throw ParseError(path.string(), line_no,
                             "duplicate key " + key.first + "," + key.second);
    });
    if (matrix.scores.empty()) throw ParseError(path.string(), -1, "no score rows");
    return matrix;
}

// ---------------------------------------------------------------------------
// MeasureConfig <-> JSON.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json config_to_json(const MeasureConfig& c) {
    nlohmann::ordered_json j;
    j["pca_energy"] = c.pca_energy;
    j["components_per_class"] = c.components_per_class;
    j["covariance_kind"] = to_string(c.covariance_kind);
    j["em_max_iters"] = c.em_max_iters;
    j["em_rel_tol"] = c.em_rel_tol;
    j["em_restarts"] = c.em_restarts;
    j["ridge"] = c.ridge;
    j["prob_floor"] = c.prob_floor;
    j["seed"] = c.seed;
    j["probe_epochs"] = c.probe_epochs;
    j["probe_lr"] = c.probe_lr;
    j["probe_l2"] = c.probe_l2;
    j["split_mode"] = to_string(c.split_mode);
    if (!c.compute_budget_note.empty()) j["compute_budget_note"] = c.compute_budget_note;
    return j;
}

inline void apply_config_json(MeasureConfig& c, const nlohmann::json& j,
                              const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        if (key == "pca_energy") {
            c.pca_energy = value.get<double>();
        } else if (key == "components_per_class") {
            c.components_per_class = value.get<int>();
        } else if (key == "covariance_kind") {
            const auto s = value.get<std::string>();
            if (s == "full") {
                c.covariance_kind = CovarianceKind::full;
            } else if (s == "diagonal") {
                c.covariance_kind = CovarianceKind::diagonal;
            } else {
                throw ParseError(context, -1, "covariance_kind must be 'full' or 'diagonal'");
            }
        } else if (key == "em_max_iters") {
            c.em_max_iters = value.get<int>();
        } else if (key == "em_rel_tol") {
            c.em_rel_tol = value.get<double>();
        } else if (key == "em_restarts") {
            c.em_restarts = value.get<int>();
        } else if (key == "ridge") {
            c.ridge = value.get<double>();
        } else if (key == "prob_floor") {
            c.prob_floor = value.get<double>();
        } else if (key == "seed") {
            c.seed = value.get<std::uint64_t>();
        } else if (key == "probe_epochs") {
            c.probe_epochs = value.get<int>();
        } else if (key == "probe_lr") {
            c.probe_lr = value.get<double>();
        } else if (key == "probe_l2") {
            c.probe_l2 = value.get<double>();
        } else if (key == "split_mode") {
            const auto s = value.get<std::string>();
            if (s == "paper_split") {
                c.split_mode = SplitMode::paper_split;
            } else if (s == "single_split") {
                c.split_mode = SplitMode::single_split;
            } else {
                throw ParseError(context, -1,
                                 "split_mode must be 'paper_split' or 'single_split'");
            }
        } else if (key == "compute_budget_note") {
            c.compute_budget_note = value.get<std::string>();
        } else {
            throw ParseError(context, -1, "unknown config key '" + key + "'");
        }
    }
    c.validate();
}

} // namespace io
} // namespace ckrank

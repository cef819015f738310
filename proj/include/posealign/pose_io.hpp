#pragma once

// Loading, validation, resampling and retargeting of 3D point sequences.
//
// File formats:
//   layout:  JSON {"name": str, "points": [str...], "roles": {role: point},
//                  "lr_pairs": [[left, right]...], "frame_rate": number (optional)}
//   frames:  CSV, header "<pt>.x,<pt>.y,<pt>.z" per point in layout order,
//            one row per frame
//   retarget map: JSON {"source": str, "target": str,
//                       "rules": {target_pt: [[source_pt, weight]...]}}

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "posealign/common.hpp"

namespace posealign {

using Json = nlohmann::json;

// Anatomical role tags used to locate the normalization anchor.
enum class Role {
    left_pelvis_anterior,
    right_pelvis_anterior,
    left_pelvis_posterior,
    right_pelvis_posterior,
    left_hip,
    right_hip
};

inline const char* role_name(Role role) {
    switch (role) {
        case Role::left_pelvis_anterior: return "left-pelvis-anterior";
        case Role::right_pelvis_anterior: return "right-pelvis-anterior";
        case Role::left_pelvis_posterior: return "left-pelvis-posterior";
        case Role::right_pelvis_posterior: return "right-pelvis-posterior";
        case Role::left_hip: return "left-hip";
        case Role::right_hip: return "right-hip";
    }
    return "?";
}

inline std::optional<Role> role_from_name(const std::string& name) {
    static const std::pair<const char*, Role> table[] = {
        {"left-pelvis-anterior", Role::left_pelvis_anterior},
        {"right-pelvis-anterior", Role::right_pelvis_anterior},
        {"left-pelvis-posterior", Role::left_pelvis_posterior},
        {"right-pelvis-posterior", Role::right_pelvis_posterior},
        {"left-hip", Role::left_hip},
        {"right-hip", Role::right_hip},
    };
    for (const auto& [key, role] : table) {
        if (name == key) return role;
    }
    return std::nullopt;
}

namespace detail {

inline void check_json_keys(const Json& object, const std::set<std::string>& allowed,
                            const std::string& context) {
    for (const auto& item : object.items()) {
        if (!allowed.count(item.key())) {
            throw PoseError(ErrorCode::parse,
                            context + ": unknown key \"" + item.key() + "\"");
        }
    }
}

inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PoseError(ErrorCode::io, "cannot open " + path);
    Json parsed;
    try {
        parsed = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw PoseError(ErrorCode::parse, path + ": " + e.what());
    }
    return parsed;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PoseError(ErrorCode::io, "cannot write " + path);
    out << text;
    if (!out) throw PoseError(ErrorCode::io, "write failed for " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream stream(line);
    while (std::getline(stream, field, ',')) {
        // trim surrounding whitespace
        std::size_t begin = field.find_first_not_of(" \t\r");
        std::size_t end = field.find_last_not_of(" \t\r");
        fields.push_back(begin == std::string::npos ? ""
                                                    : field.substr(begin, end - begin + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

inline double parse_double(const std::string& token, const std::string& context) {
    const char* begin = token.c_str();
    char* end = nullptr;
    double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw PoseError(ErrorCode::parse, context + ": not a number: \"" + token + "\"");
    }
    return value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PointLayout

struct PointLayout {
    std::string name;
    std::vector<std::string> points;
    std::map<Role, std::string> roles;  // role -> point name
    std::vector<std::pair<std::string, std::string>> lr_pairs;
    std::optional<double> frame_rate;  // default rate for frames files

    int point_count() const { return static_cast<int>(points.size()); }

    int index_of(const std::string& point) const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i] == point) return static_cast<int>(i);
        }
        return -1;
    }

    int role_index(Role role) const {
        auto it = roles.find(role);
        return it == roles.end() ? -1 : index_of(it->second);
    }

    bool has_marker_anchor() const {
        return roles.count(Role::left_pelvis_anterior) && roles.count(Role::right_pelvis_anterior) &&
               roles.count(Role::left_pelvis_posterior) && roles.count(Role::right_pelvis_posterior);
    }

    bool has_hip_anchor() const {
        return roles.count(Role::left_hip) && roles.count(Role::right_hip);
    }

    void validate() const {
        if (name.empty()) throw PoseError(ErrorCode::validation, "layout has no name");
        if (points.empty()) throw PoseError(ErrorCode::validation, "layout \"" + name + "\" has no points");
        std::set<std::string> seen;
        for (const auto& point : points) {
            if (point.empty()) throw PoseError(ErrorCode::validation, "layout \"" + name + "\": empty point name");
            if (!seen.insert(point).second) {
                throw PoseError(ErrorCode::validation,
                                "layout \"" + name + "\": duplicate point \"" + point + "\"");
            }
        }
        for (const auto& [role, point] : roles) {
            if (index_of(point) < 0) {
                throw PoseError(ErrorCode::validation,
                                "layout \"" + name + "\": role " + role_name(role) +
                                    " references unknown point \"" + point + "\"");
            }
        }
        if (!has_marker_anchor() && !has_hip_anchor()) {
            throw PoseError(ErrorCode::validation,
                            "layout \"" + name +
                                "\" declares no normalization anchor: need all four pelvis roles "
                                "or both hip roles");
        }
        std::set<std::string> paired;
        for (const auto& [left, right] : lr_pairs) {
            if (left == right) {
                throw PoseError(ErrorCode::validation,
                                "layout \"" + name + "\": lr_pair maps \"" + left + "\" to itself");
            }
            for (const auto& point : {left, right}) {
                if (index_of(point) < 0) {
                    throw PoseError(ErrorCode::validation,
                                    "layout \"" + name + "\": lr_pair references unknown point \"" +
                                        point + "\"");
                }
                if (!paired.insert(point).second) {
                    throw PoseError(ErrorCode::validation,
                                    "layout \"" + name + "\": point \"" + point +
                                        "\" appears in multiple lr_pairs");
                }
            }
        }
        if (frame_rate && *frame_rate <= 0.0) {
            throw PoseError(ErrorCode::validation, "layout \"" + name + "\": frame_rate must be > 0");
        }
    }

    static PointLayout from_json(const Json& object) {
        detail::check_json_keys(object, {"name", "points", "roles", "lr_pairs", "frame_rate"},
                                "layout");
        PointLayout layout;
        if (!object.contains("name") || !object["name"].is_string()) {
            throw PoseError(ErrorCode::parse, "layout: missing string \"name\"");
        }
        layout.name = object["name"].get<std::string>();
        if (!object.contains("points") || !object["points"].is_array()) {
            throw PoseError(ErrorCode::parse, "layout: missing array \"points\"");
        }
        for (const auto& point : object["points"]) {
            if (!point.is_string()) throw PoseError(ErrorCode::parse, "layout: point names must be strings");
            layout.points.push_back(point.get<std::string>());
        }
        if (object.contains("roles")) {
            for (const auto& item : object["roles"].items()) {
                auto role = role_from_name(item.key());
                if (!role) {
                    throw PoseError(ErrorCode::parse, "layout: unknown role \"" + item.key() + "\"");
                }
                if (!item.value().is_string()) {
                    throw PoseError(ErrorCode::parse, "layout: role values must be point names");
                }
                layout.roles[*role] = item.value().get<std::string>();
            }
        }
        if (object.contains("lr_pairs")) {
            for (const auto& pair : object["lr_pairs"]) {
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
                    throw PoseError(ErrorCode::parse, "layout: lr_pairs entries must be [left, right]");
                }
                layout.lr_pairs.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
            }
        }
        if (object.contains("frame_rate")) {
            if (!object["frame_rate"].is_number()) {
                throw PoseError(ErrorCode::parse, "layout: frame_rate must be a number");
            }
            layout.frame_rate = object["frame_rate"].get<double>();
        }
        layout.validate();
        return layout;
    }

    Json to_json() const {
        Json object;
        object["name"] = name;
        object["points"] = points;
        Json roles_json = Json::object();
        for (const auto& [role, point] : roles) roles_json[role_name(role)] = point;
        object["roles"] = roles_json;
        Json pairs_json = Json::array();
        for (const auto& [left, right] : lr_pairs) pairs_json.push_back(Json::array({left, right}));
        object["lr_pairs"] = pairs_json;
        if (frame_rate) object["frame_rate"] = *frame_rate;
        return object;
    }

    static PointLayout load(const std::string& path) {
        return from_json(detail::load_json_file(path));
    }

    void save(const std::string& path) const {
        detail::write_text_file(path, to_json().dump(2) + "\n");
    }
};

// ---------------------------------------------------------------------------
// PoseSequence

// Frames are stored as an F x 3P matrix; point p occupies columns
// [3p, 3p+2] as x, y, z. Z is the vertical axis.
struct PoseSequence {
    PointLayout layout;
    Eigen::MatrixXd frames;
    double frame_rate = 0.0;
    std::string name;

    int frame_count() const { return static_cast<int>(frames.rows()); }

    // time of the last frame; frame i sits at i / frame_rate
    double duration() const { return (frame_count() - 1) / frame_rate; }

    Eigen::Vector3d point(int frame, int point_index) const {
        return frames.block<1, 3>(frame, 3 * point_index).transpose();
    }

    void validate() const {
        layout.validate();
        if (frames.rows() < 1) {
            throw PoseError(ErrorCode::validation, "sequence \"" + name + "\" has no frames");
        }
        if (frames.cols() != 3 * layout.point_count()) {
            throw PoseError(ErrorCode::shape,
                            "sequence \"" + name + "\": " + std::to_string(frames.cols()) +
                                " columns but layout \"" + layout.name + "\" has " +
                                std::to_string(layout.point_count()) + " points (" +
                                std::to_string(3 * layout.point_count()) + " columns)");
        }
        if (frame_rate <= 0.0) {
            throw PoseError(ErrorCode::validation, "sequence \"" + name + "\": frame_rate must be > 0");
        }
        if (!frames.allFinite()) {
            for (int f = 0; f < frames.rows(); ++f) {
                for (int c = 0; c < frames.cols(); ++c) {
                    if (!std::isfinite(frames(f, c))) {
                        static const char* coord_names[] = {"x", "y", "z"};
                        throw PoseError(ErrorCode::numeric,
                                        "sequence \"" + name + "\": non-finite value at frame " +
                                            std::to_string(f) + ", point \"" +
                                            layout.points[c / 3] + "." + coord_names[c % 3] + "\"");
                    }
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Frames CSV

inline std::vector<std::string> frames_csv_header(const PointLayout& layout) {
    std::vector<std::string> header;
    header.reserve(3 * layout.points.size());
    for (const auto& point : layout.points) {
        header.push_back(point + ".x");
        header.push_back(point + ".y");
        header.push_back(point + ".z");
    }
    return header;
}

inline Eigen::MatrixXd load_frames_csv(const std::string& path, const PointLayout& layout) {
    std::ifstream in(path);
    if (!in) throw PoseError(ErrorCode::io, "cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw PoseError(ErrorCode::parse, path + ": empty file");
    auto header = detail::split_csv_line(line);
    auto expected = frames_csv_header(layout);
    if (header != expected) {
        throw PoseError(ErrorCode::parse,
                        path + ": header does not match layout \"" + layout.name + "\" (" +
                            std::to_string(expected.size()) + " columns expected, got " +
                            std::to_string(header.size()) + ")");
    }

    std::vector<double> values;
    int rows = 0;
    int cols = static_cast<int>(expected.size());
    while (std::getline(in, line)) {
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != cols) {
            throw PoseError(ErrorCode::parse,
                            path + ": row " + std::to_string(rows) + " has " +
                                std::to_string(fields.size()) + " fields, expected " +
                                std::to_string(cols));
        }
        for (int c = 0; c < cols; ++c) {
            double value = detail::parse_double(
                fields[c], path + ": row " + std::to_string(rows) + ", column " + expected[c]);
            if (!std::isfinite(value)) {
                throw PoseError(ErrorCode::numeric,
                                path + ": non-finite value at frame " + std::to_string(rows) +
                                    ", column " + expected[c]);
            }
            values.push_back(value);
        }
        ++rows;
    }
    if (rows < 1) throw PoseError(ErrorCode::parse, path + ": no frame rows");

    Eigen::MatrixXd frames(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) frames(r, c) = values[static_cast<std::size_t>(r) * cols + c];
    }
    return frames;
}

inline void save_frames_csv(const PoseSequence& seq, const std::string& path) {
    std::ostringstream out;
    auto header = frames_csv_header(seq.layout);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (int r = 0; r < seq.frames.rows(); ++r) {
        for (int c = 0; c < seq.frames.cols(); ++c) {
            if (c) out << ',';
            out << format_float(seq.frames(r, c));
        }
        out << '\n';
    }
    detail::write_text_file(path, out.str());
}

inline std::string path_stem(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

inline PoseSequence load_sequence(const std::string& layout_path, const std::string& frames_path,
                                  std::optional<double> rate_override = std::nullopt) {
    PoseSequence seq;
    seq.layout = PointLayout::load(layout_path);
    seq.frames = load_frames_csv(frames_path, seq.layout);
    if (rate_override) {
        seq.frame_rate = *rate_override;
    } else if (seq.layout.frame_rate) {
        seq.frame_rate = *seq.layout.frame_rate;
    } else {
        throw PoseError(ErrorCode::validation,
                        frames_path + ": no frame rate given (pass one or set \"frame_rate\" in " +
                            layout_path + ")");
    }
    seq.name = path_stem(frames_path);
    seq.validate();
    return seq;
}

// ---------------------------------------------------------------------------
// RetargetMap

struct RetargetMap {
    std::string source_layout_name;
    std::string target_layout_name;
    // target point -> weighted source points; weights sum to 1
    std::map<std::string, std::vector<std::pair<std::string, double>>> rules;

    static RetargetMap from_json(const Json& object) {
        detail::check_json_keys(object, {"source", "target", "rules"}, "retarget map");
        RetargetMap map;
        if (!object.contains("source") || !object.contains("target") || !object.contains("rules")) {
            throw PoseError(ErrorCode::parse, "retarget map: need \"source\", \"target\", \"rules\"");
        }
        map.source_layout_name = object["source"].get<std::string>();
        map.target_layout_name = object["target"].get<std::string>();
        for (const auto& item : object["rules"].items()) {
            std::vector<std::pair<std::string, double>> terms;
            for (const auto& term : item.value()) {
                if (!term.is_array() || term.size() != 2 || !term[0].is_string() || !term[1].is_number()) {
                    throw PoseError(ErrorCode::parse,
                                    "retarget map: rule terms must be [source_point, weight]");
                }
                terms.emplace_back(term[0].get<std::string>(), term[1].get<double>());
            }
            map.rules[item.key()] = std::move(terms);
        }
        return map;
    }

    Json to_json() const {
        Json object;
        object["source"] = source_layout_name;
        object["target"] = target_layout_name;
        Json rules_json = Json::object();
        for (const auto& [target_point, terms] : rules) {
            Json list = Json::array();
            for (const auto& [source_point, weight] : terms) {
                list.push_back(Json::array({source_point, weight}));
            }
            rules_json[target_point] = list;
        }
        object["rules"] = rules_json;
        return object;
    }

    static RetargetMap load(const std::string& path) {
        return from_json(detail::load_json_file(path));
    }

    void save(const std::string& path) const {
        detail::write_text_file(path, to_json().dump(2) + "\n");
    }

    void validate_against(const PointLayout& source, const PointLayout& target) const {
        if (source_layout_name != source.name) {
            throw PoseError(ErrorCode::validation,
                            "retarget map expects source layout \"" + source_layout_name +
                                "\", got \"" + source.name + "\"");
        }
        if (target_layout_name != target.name) {
            throw PoseError(ErrorCode::validation,
                            "retarget map expects target layout \"" + target_layout_name +
                                "\", got \"" + target.name + "\"");
        }
        for (const auto& point : target.points) {
            auto it = rules.find(point);
            if (it == rules.end()) {
                throw PoseError(ErrorCode::validation,
                                "retarget map: no rule for target point \"" + point + "\"");
            }
            double total = 0.0;
            for (const auto& [source_point, weight] : it->second) {
                if (source.index_of(source_point) < 0) {
                    throw PoseError(ErrorCode::validation,
                                    "retarget map: rule for \"" + point +
                                        "\" references missing source point \"" + source_point + "\"");
                }
                total += weight;
            }
            if (std::abs(total - 1.0) > 1e-9) {
                throw PoseError(ErrorCode::validation,
                                "retarget map: weights for \"" + point + "\" sum to " +
                                    format_float(total) + ", expected 1");
            }
        }
        for (const auto& [target_point, terms] : rules) {
            (void)terms;
            if (target.index_of(target_point) < 0) {
                throw PoseError(ErrorCode::validation,
                                "retarget map: rule for \"" + target_point +
                                    "\" which is not in layout \"" + target.name + "\"");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Operations

// Linear interpolation of every point trajectory at uniformly spaced times
// spanning [0, duration]. Output frame count is round(F * target / source) so
// a 10 s 250 fps take becomes 250 frames at 25 fps.
inline PoseSequence resample(const PoseSequence& seq, double target_rate) {
    if (target_rate <= 0.0) {
        throw PoseError(ErrorCode::validation, "resample: target rate must be > 0");
    }
    const int frames_in = seq.frame_count();
    PoseSequence out;
    out.layout = seq.layout;
    out.frame_rate = target_rate;
    out.name = seq.name;
    if (frames_in == 1) {
        out.frames = seq.frames;
        return out;
    }
    long long count = std::llround(frames_in * target_rate / seq.frame_rate);
    int frames_out = static_cast<int>(std::max(2LL, count));
    out.frames.resize(frames_out, seq.frames.cols());
    const double duration = seq.duration();
    for (int i = 0; i < frames_out; ++i) {
        double t = duration * i / (frames_out - 1);
        double u = t * seq.frame_rate;
        int i0 = std::clamp(static_cast<int>(std::floor(u)), 0, frames_in - 2);
        double w = u - i0;
        out.frames.row(i) = seq.frames.row(i0) + w * (seq.frames.row(i0 + 1) - seq.frames.row(i0));
    }
    return out;
}

// Per-frame weighted sums of source points per the map's rules.
inline PoseSequence retarget(const PoseSequence& seq, const RetargetMap& map,
                             const PointLayout& target_layout) {
    target_layout.validate();
    map.validate_against(seq.layout, target_layout);
    PoseSequence out;
    out.layout = target_layout;
    out.frame_rate = seq.frame_rate;
    out.name = seq.name;
    out.frames = Eigen::MatrixXd::Zero(seq.frames.rows(), 3 * target_layout.point_count());
    for (int q = 0; q < target_layout.point_count(); ++q) {
        const auto& terms = map.rules.at(target_layout.points[q]);
        for (const auto& [source_point, weight] : terms) {
            int s = seq.layout.index_of(source_point);
            out.frames.middleCols<3>(3 * q) += weight * seq.frames.middleCols<3>(3 * s);
        }
    }
    return out;
}

// Swap each lr_pair's columns, then negate world X of every point. Unpaired
// midline points keep their name and only get X negated.
inline PoseSequence mirror_lr(const PoseSequence& seq) {
    PoseSequence out = seq;
    for (const auto& [left, right] : seq.layout.lr_pairs) {
        int l = seq.layout.index_of(left);
        int r = seq.layout.index_of(right);
        out.frames.middleCols<3>(3 * l).swap(out.frames.middleCols<3>(3 * r));
    }
    for (int p = 0; p < seq.layout.point_count(); ++p) {
        out.frames.col(3 * p) = -out.frames.col(3 * p);
    }
    return out;
}

}  // namespace posealign

#pragma once

// Corpus manifest: a JSON array of sequence entries. Paths are resolved
// relative to the manifest file's directory.
//
//   [{"name": str (optional, defaults to frames stem),
//     "layout": path, "frames": path,
//     "frame_rate": number (optional),
//     "keyposes": path (optional),
//     "action": str (optional, groups tau reporting)}]

#include <optional>
#include <string>
#include <vector>

#include "posealign/common.hpp"
#include "posealign/pose_io.hpp"

namespace posealign {

struct ManifestEntry {
    std::string name;
    std::string layout_path;
    std::string frames_path;
    std::optional<double> frame_rate;
    std::optional<std::string> keyposes_path;
    std::optional<std::string> action;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    static Manifest load(const std::string& path) {
        Json parsed = detail::load_json_file(path);
        if (!parsed.is_array()) {
            throw PoseError(ErrorCode::parse, path + ": manifest must be a JSON array");
        }
        std::string base_dir;
        if (std::size_t slash = path.find_last_of("/\\"); slash != std::string::npos) {
            base_dir = path.substr(0, slash + 1);
        }
        auto resolve = [&](const std::string& p) {
            return (p.empty() || p.front() == '/') ? p : base_dir + p;
        };
        Manifest manifest;
        for (const auto& item : parsed) {
            detail::check_json_keys(item, {"name", "layout", "frames", "frame_rate", "keyposes",
                                           "action"},
                                    path + ": manifest entry");
            if (!item.contains("layout") || !item.contains("frames")) {
                throw PoseError(ErrorCode::parse,
                                path + ": manifest entries need \"layout\" and \"frames\"");
            }
            ManifestEntry entry;
            entry.layout_path = resolve(item["layout"].get<std::string>());
            entry.frames_path = resolve(item["frames"].get<std::string>());
            entry.name = item.contains("name") ? item["name"].get<std::string>()
                                               : path_stem(entry.frames_path);
            if (item.contains("frame_rate")) entry.frame_rate = item["frame_rate"].get<double>();
            if (item.contains("keyposes")) entry.keyposes_path = resolve(item["keyposes"].get<std::string>());
            if (item.contains("action")) entry.action = item["action"].get<std::string>();
            manifest.entries.push_back(std::move(entry));
        }
        if (manifest.entries.empty()) {
            throw PoseError(ErrorCode::validation, path + ": manifest lists no sequences");
        }
        return manifest;
    }
};

inline PoseSequence load_manifest_sequence(const ManifestEntry& entry) {
    PoseSequence seq = load_sequence(entry.layout_path, entry.frames_path, entry.frame_rate);
    seq.name = entry.name;
    return seq;
}

inline std::vector<PoseSequence> load_manifest_sequences(const Manifest& manifest) {
    std::vector<PoseSequence> sequences;
    sequences.reserve(manifest.entries.size());
    for (const auto& entry : manifest.entries) {
        sequences.push_back(load_manifest_sequence(entry));
    }
    return sequences;
}

}  // namespace posealign

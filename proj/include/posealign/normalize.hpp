#pragma once

// Temporal window extraction, body-centric normalization, and the temporal
// offset/scale augmentation that generates positive training pairs.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posealign/common.hpp"
#include "posealign/pose_io.hpp"

namespace posealign {

struct WindowSpec {
    double length_seconds = 3.0;
    double sample_rate = 25.0;   // frames/second inside the window
    double stride_seconds = 0.5; // spacing of window centers over a performance

    int frame_count() const {
        return static_cast<int>(std::llround(length_seconds * sample_rate));
    }

    void validate() const {
        if (length_seconds <= 0.0) throw PoseError(ErrorCode::validation, "window length must be > 0");
        if (sample_rate <= 0.0) throw PoseError(ErrorCode::validation, "window sample rate must be > 0");
        if (stride_seconds <= 0.0) throw PoseError(ErrorCode::validation, "window stride must be > 0");
        if (frame_count() < 2) {
            throw PoseError(ErrorCode::validation,
                            "window spec yields " + std::to_string(frame_count()) +
                                " frames, need at least 2");
        }
    }
};

// One encoder input sample: N rows of 3P columns (x,y,z triplets in layout
// point order), tagged with where it came from.
struct Window {
    Eigen::MatrixXd data;
    std::string source_name;
    double center_time = 0.0;
    double sample_rate = 0.0;
    std::string layout_name;

    int rows() const { return static_cast<int>(data.rows()); }
    int center_row() const { return (rows() - 1) / 2; }

    Eigen::Vector3d point(int row, int point_index) const {
        return data.block<1, 3>(row, 3 * point_index).transpose();
    }
};

// Linear interpolation of one sequence row at time t, clamped to [0, duration].
inline Eigen::RowVectorXd sample_frame(const PoseSequence& seq, double t) {
    const int frames = seq.frame_count();
    if (frames == 1) return seq.frames.row(0);
    double u = t * seq.frame_rate;
    if (u <= 0.0) return seq.frames.row(0);
    if (u >= frames - 1) return seq.frames.row(frames - 1);
    int i0 = static_cast<int>(std::floor(u));
    double w = u - i0;
    return seq.frames.row(i0) + w * (seq.frames.row(i0 + 1) - seq.frames.row(i0));
}

// Raw (un-normalized) window: N rows sampled at t0 + (i - (N-1)/2) / rate,
// with times outside [0, duration] clamping to the boundary frames.
inline Window extract_window(const PoseSequence& seq, double center_time, const WindowSpec& spec) {
    spec.validate();
    const double length = spec.length_seconds;
    if (center_time < -length || center_time > seq.duration() + length) {
        throw PoseError(ErrorCode::validation,
                        "window center " + format_float(center_time) +
                            " s is more than one window length outside sequence \"" + seq.name +
                            "\" (duration " + format_float(seq.duration()) + " s)");
    }
    const int n = spec.frame_count();
    Window window;
    window.data.resize(n, seq.frames.cols());
    const double half_span = (n - 1) / 2.0;
    for (int i = 0; i < n; ++i) {
        double t = center_time + (i - half_span) / spec.sample_rate;
        window.data.row(i) = sample_frame(seq, t);
    }
    window.source_name = seq.name;
    window.center_time = center_time;
    window.sample_rate = spec.sample_rate;
    window.layout_name = seq.layout.name;
    return window;
}

// Uniformly strided window centers covering [0, duration].
inline std::vector<double> window_centers(const PoseSequence& seq, const WindowSpec& spec) {
    std::vector<double> centers;
    const double duration = seq.duration();
    for (int k = 0;; ++k) {
        double t = k * spec.stride_seconds;
        if (t > duration + 1e-9) break;
        centers.push_back(t);
    }
    return centers;
}

namespace detail {

struct Anchors {
    Eigen::Vector3d lmid;
    Eigen::Vector3d rmid;
};

// Marker layouts take pelvis-marker midpoints at the center frame; skeleton
// layouts use the hip joints directly.
inline Anchors window_anchors(const Window& window, const PointLayout& layout) {
    const int center = window.center_row();
    Anchors anchors;
    if (layout.has_marker_anchor()) {
        Eigen::Vector3d lasi = window.point(center, layout.role_index(Role::left_pelvis_anterior));
        Eigen::Vector3d lpsi = window.point(center, layout.role_index(Role::left_pelvis_posterior));
        Eigen::Vector3d rasi = window.point(center, layout.role_index(Role::right_pelvis_anterior));
        Eigen::Vector3d rpsi = window.point(center, layout.role_index(Role::right_pelvis_posterior));
        anchors.lmid = 0.5 * (lasi + lpsi);
        anchors.rmid = 0.5 * (rasi + rpsi);
    } else {
        anchors.lmid = window.point(center, layout.role_index(Role::left_hip));
        anchors.rmid = window.point(center, layout.role_index(Role::right_hip));
    }
    return anchors;
}

}  // namespace detail

// Body-centric normalization:
//   1. subtract (LMID+RMID)/2 of the center frame from every point,
//   2. rotate about Z so the XY projection of RMID-LMID lands on +X,
//   3. divide each channel (all X; all Y; all Z, pooled over points and
//      frames) by its standard deviation within the window.
// Constant channels (std < 1e-12) are divided by 1.
inline Window normalize_window(const Window& window, const PointLayout& layout) {
    if (window.layout_name != layout.name) {
        throw PoseError(ErrorCode::shape, "window was extracted with layout \"" + window.layout_name +
                                              "\", not \"" + layout.name + "\"");
    }
    if (window.data.cols() != 3 * layout.point_count()) {
        throw PoseError(ErrorCode::shape,
                        "window has " + std::to_string(window.data.cols()) + " columns, layout \"" +
                            layout.name + "\" needs " + std::to_string(3 * layout.point_count()));
    }
    const auto anchors = detail::window_anchors(window, layout);
    const Eigen::Vector3d side = anchors.rmid - anchors.lmid;
    const double planar = std::hypot(side.x(), side.y());
    if (planar < 1e-9) {
        throw PoseError(ErrorCode::degenerate,
                        "degenerate pose in window of \"" + window.source_name + "\" at " +
                            format_float(window.center_time) +
                            " s: pelvis axis has no horizontal extent");
    }

    Window out = window;
    const Eigen::Vector3d origin = 0.5 * (anchors.lmid + anchors.rmid);
    const int n_points = layout.point_count();
    for (int p = 0; p < n_points; ++p) {
        out.data.col(3 * p + 0).array() -= origin.x();
        out.data.col(3 * p + 1).array() -= origin.y();
        out.data.col(3 * p + 2).array() -= origin.z();
    }

    // rotate by -atan2(side.y, side.x) about Z
    const double c = side.x() / planar;
    const double s = side.y() / planar;
    for (int p = 0; p < n_points; ++p) {
        Eigen::VectorXd x = out.data.col(3 * p);
        Eigen::VectorXd y = out.data.col(3 * p + 1);
        out.data.col(3 * p) = c * x + s * y;
        out.data.col(3 * p + 1) = -s * x + c * y;
    }

    for (int channel = 0; channel < 3; ++channel) {
        double sum = 0.0, sum_sq = 0.0;
        const std::size_t count = static_cast<std::size_t>(out.rows()) * n_points;
        for (int p = 0; p < n_points; ++p) {
            sum += out.data.col(3 * p + channel).sum();
            sum_sq += out.data.col(3 * p + channel).squaredNorm();
        }
        double mean = sum / count;
        double variance = std::max(0.0, sum_sq / count - mean * mean);
        double stddev = std::sqrt(variance);
        if (stddev < 1e-12) continue;
        for (int p = 0; p < n_points; ++p) out.data.col(3 * p + channel) /= stddev;
    }
    return out;
}

// Temporal jitter drawn for one augmented sample. For 3 s windows the offset
// range is +-0.5 s; it scales with window length so shorter windows jitter
// proportionally.
struct Augmentation {
    double time_offset = 0.0;  // seconds
    double rate_scale = 0.0;   // relative, new rate = (1 + rate_scale) * rate
};

inline Augmentation draw_augmentation(const WindowSpec& spec, RandomStream& rng) {
    Augmentation aug;
    aug.time_offset = rng.uniform(-0.5, 0.5) * (spec.length_seconds / 3.0);
    aug.rate_scale = rng.uniform(-1.0 / 3.0, 1.0 / 3.0);
    return aug;
}

// Window at center t0 + dt sampled at (1 + dr) * rate; still exactly N rows,
// so the covered span becomes N / ((1 + dr) * rate) seconds.
inline Window augmented_window(const PoseSequence& seq, double center_time, const WindowSpec& spec,
                               const Augmentation& aug) {
    const double rate = (1.0 + aug.rate_scale) * spec.sample_rate;
    WindowSpec jittered = spec;
    jittered.sample_rate = rate;
    jittered.length_seconds = spec.frame_count() / rate;
    return extract_window(seq, center_time + aug.time_offset, jittered);
}

inline Window augment(const PoseSequence& seq, double center_time, const WindowSpec& spec,
                      RandomStream& rng) {
    return augmented_window(seq, center_time, spec, draw_augmentation(spec, rng));
}

// Debug dump: frames-CSV layout plus a JSON metadata sidecar at <path>.meta.json.
inline void dump_window(const Window& window, const PointLayout& layout, const std::string& path) {
    std::ostringstream out;
    auto header = frames_csv_header(layout);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (int r = 0; r < window.data.rows(); ++r) {
        for (int c = 0; c < window.data.cols(); ++c) {
            if (c) out << ',';
            out << format_float(window.data(r, c));
        }
        out << '\n';
    }
    detail::write_text_file(path, out.str());
    Json meta;
    meta["source_name"] = window.source_name;
    meta["center_time"] = round_to_9_digits(window.center_time);
    meta["sample_rate"] = round_to_9_digits(window.sample_rate);
    meta["layout_name"] = window.layout_name;
    detail::write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

}  // namespace posealign

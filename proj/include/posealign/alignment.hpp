#pragma once

// Cost matrices over embedding sequences, dynamic time warping with path
// extraction, the linear-time-warping prior, flip-aware pair alignment, and
// keypose label transfer.

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posealign/common.hpp"
#include "posealign/encoder.hpp"
#include "posealign/normalize.hpp"
#include "posealign/pose_io.hpp"

namespace posealign {

enum class EmbeddingMetric {
    cosine_distance,  // 1 - cosine similarity, range [0, 2]
    euclidean         // plain L2 distance (comparison harness)
};

struct CostMatrix {
    Eigen::MatrixXd values;         // n x m
    std::vector<double> row_times;  // window center times, seconds
    std::vector<double> col_times;

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }
};

struct AlignmentPath {
    std::vector<std::pair<int, int>> cells;
    std::vector<double> cell_costs;

    double total_cost() const {
        double total = 0.0;
        for (double c : cell_costs) total += c;
        return total;
    }

    double mean_cost() const { return cell_costs.empty() ? 0.0 : total_cost() / cell_costs.size(); }
};

struct KeyposeLabels {
    std::vector<std::pair<std::string, double>> entries;  // (label, time seconds)

    static KeyposeLabels load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw PoseError(ErrorCode::io, "cannot open " + path);
        std::string line;
        if (!std::getline(in, line)) throw PoseError(ErrorCode::parse, path + ": empty file");
        auto header = detail::split_csv_line(line);
        if (header != std::vector<std::string>{"label", "time_seconds"}) {
            throw PoseError(ErrorCode::parse, path + ": expected header \"label,time_seconds\"");
        }
        KeyposeLabels labels;
        int row = 0;
        while (std::getline(in, line)) {
            if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
            auto fields = detail::split_csv_line(line);
            if (fields.size() != 2 || fields[0].empty()) {
                throw PoseError(ErrorCode::parse, path + ": bad keypose row " + std::to_string(row));
            }
            labels.entries.emplace_back(
                fields[0], detail::parse_double(fields[1], path + ": row " + std::to_string(row)));
            ++row;
        }
        return labels;
    }

    void save(const std::string& path) const {
        std::ostringstream out;
        out << "label,time_seconds\n";
        for (const auto& [label, time] : entries) {
            out << label << ',' << format_float(time) << '\n';
        }
        detail::write_text_file(path, out.str());
    }
};

// ---------------------------------------------------------------------------
// Embedding sequences

struct EmbeddedSequence {
    std::vector<Embedding> embeddings;
    std::vector<double> times;
};

// Embeds uniformly strided, normalized windows of a whole performance.
inline EmbeddedSequence embed_sequence(const EncoderParams& params, const PoseSequence& seq,
                                       const WindowSpec& spec, int threads = 1) {
    EmbeddedSequence result;
    result.times = window_centers(seq, spec);
    result.embeddings.resize(result.times.size());
    parallel_for(result.times.size(), threads, [&](std::size_t i) {
        Window raw = extract_window(seq, result.times[i], spec);
        result.embeddings[i] = forward(params, normalize_window(raw, seq.layout));
    });
    return result;
}

inline CostMatrix cost_matrix(const std::vector<Embedding>& emb_a, const std::vector<double>& times_a,
                              const std::vector<Embedding>& emb_b, const std::vector<double>& times_b,
                              EmbeddingMetric metric = EmbeddingMetric::cosine_distance) {
    if (emb_a.empty() || emb_b.empty()) {
        throw PoseError(ErrorCode::validation, "cost matrix needs nonempty embedding lists");
    }
    if (emb_a.size() != times_a.size() || emb_b.size() != times_b.size()) {
        throw PoseError(ErrorCode::shape, "embedding/time list length mismatch");
    }
    auto check_nonzero = [](const std::vector<Embedding>& embeddings, const char* side) {
        for (std::size_t i = 0; i < embeddings.size(); ++i) {
            if (embeddings[i].norm() == 0.0) {
                throw PoseError(ErrorCode::numeric, std::string("zero-norm embedding at ") + side +
                                                        "[" + std::to_string(i) + "]");
            }
        }
    };
    CostMatrix cost;
    cost.row_times = times_a;
    cost.col_times = times_b;
    cost.values.resize(static_cast<int>(emb_a.size()), static_cast<int>(emb_b.size()));
    if (metric == EmbeddingMetric::cosine_distance) {
        check_nonzero(emb_a, "A");
        check_nonzero(emb_b, "B");
        for (std::size_t i = 0; i < emb_a.size(); ++i) {
            for (std::size_t j = 0; j < emb_b.size(); ++j) {
                double d = 1.0 - cosine_similarity(emb_a[i], emb_b[j]);
                cost.values(static_cast<int>(i), static_cast<int>(j)) = std::clamp(d, 0.0, 2.0);
            }
        }
    } else {
        for (std::size_t i = 0; i < emb_a.size(); ++i) {
            for (std::size_t j = 0; j < emb_b.size(); ++j) {
                cost.values(static_cast<int>(i), static_cast<int>(j)) = (emb_a[i] - emb_b[j]).norm();
            }
        }
    }
    return cost;
}

// ---------------------------------------------------------------------------
// Dynamic time warping

// Minimum-cost monotonic path from (0,0) to (n-1,m-1) under the step set
// {(1,0),(0,1),(1,1)}. Ties during traceback prefer the diagonal, then the
// row advance, which makes the returned path deterministic.
inline AlignmentPath dtw(const CostMatrix& cost) {
    const int n = cost.rows(), m = cost.cols();
    if (n < 1 || m < 1) throw PoseError(ErrorCode::validation, "dtw: empty cost matrix");
    if (!cost.values.allFinite()) throw PoseError(ErrorCode::numeric, "dtw: non-finite cost");

    Eigen::MatrixXd acc(n, m);
    acc(0, 0) = cost.values(0, 0);
    for (int i = 1; i < n; ++i) acc(i, 0) = acc(i - 1, 0) + cost.values(i, 0);
    for (int j = 1; j < m; ++j) acc(0, j) = acc(0, j - 1) + cost.values(0, j);
    for (int i = 1; i < n; ++i) {
        for (int j = 1; j < m; ++j) {
            acc(i, j) = cost.values(i, j) +
                        std::min({acc(i - 1, j - 1), acc(i - 1, j), acc(i, j - 1)});
        }
    }

    AlignmentPath path;
    int i = n - 1, j = m - 1;
    path.cells.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else if (acc(i - 1, j - 1) <= acc(i - 1, j) && acc(i - 1, j - 1) <= acc(i, j - 1)) {
            --i; --j;
        } else if (acc(i - 1, j) <= acc(i, j - 1)) {
            --i;
        } else {
            --j;
        }
        path.cells.emplace_back(i, j);
    }
    std::reverse(path.cells.begin(), path.cells.end());
    path.cell_costs.reserve(path.cells.size());
    for (const auto& [r, c] : path.cells) path.cell_costs.push_back(cost.values(r, c));
    return path;
}

// Additive deviation-from-diagonal penalty:
//   values'[i][j] = values[i][j] + gamma * |i/(n-1) - j/(m-1)|
// A single-row or single-column matrix contributes 0 for its degenerate
// fraction.
inline CostMatrix ltw_penalized(const CostMatrix& cost, double gamma) {
    if (gamma < 0.0) throw PoseError(ErrorCode::validation, "ltw prior: gamma must be >= 0");
    const int n = cost.rows(), m = cost.cols();
    CostMatrix out = cost;
    for (int i = 0; i < n; ++i) {
        double fi = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        for (int j = 0; j < m; ++j) {
            double fj = m > 1 ? static_cast<double>(j) / (m - 1) : 0.0;
            out.values(i, j) += gamma * std::abs(fi - fj);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pair alignment

struct AlignOptions {
    bool flip_lr = false;    // also try a mirrored B and keep the cheaper alignment
    double ltw_gamma = 0.0;  // 0 disables the prior
    bool ltw_auto = false;   // gamma = 0.5 * mean cost of the matrix
    EmbeddingMetric metric = EmbeddingMetric::cosine_distance;
    int threads = 1;
};

struct AlignResult {
    AlignmentPath path;   // cell_costs hold the raw pairwise distances
    double mean_cost = 0.0;
    bool flipped = false;
    int n = 0, m = 0;
    double ltw_gamma_used = 0.0;
    CostMatrix cost;      // raw (un-penalized) matrix of the chosen variant
};

namespace detail {

inline AlignResult align_against(const EmbeddedSequence& emb_a, const EmbeddedSequence& emb_b,
                                 const AlignOptions& options) {
    AlignResult result;
    result.cost = cost_matrix(emb_a.embeddings, emb_a.times, emb_b.embeddings, emb_b.times,
                              options.metric);
    double gamma = options.ltw_auto ? 0.5 * result.cost.values.mean() : options.ltw_gamma;
    result.ltw_gamma_used = gamma;
    // The prior only steers the path search; reported costs stay raw.
    AlignmentPath path = gamma > 0.0 ? dtw(ltw_penalized(result.cost, gamma)) : dtw(result.cost);
    path.cell_costs.clear();
    path.cell_costs.reserve(path.cells.size());
    for (const auto& [i, j] : path.cells) path.cell_costs.push_back(result.cost.values(i, j));
    result.mean_cost = path.mean_cost();
    result.path = std::move(path);
    result.n = result.cost.rows();
    result.m = result.cost.cols();
    return result;
}

}  // namespace detail

// Embeds strided windows of both sequences and aligns them. With flip_lr set,
// B is additionally aligned in mirrored form and the variant with the lower
// mean path cost wins (ties keep the unmirrored one).
inline AlignResult align_pair(const EncoderParams& params, const PoseSequence& seq_a,
                              const PoseSequence& seq_b, const WindowSpec& spec,
                              const AlignOptions& options = {}) {
    EmbeddedSequence emb_a = embed_sequence(params, seq_a, spec, options.threads);
    EmbeddedSequence emb_b = embed_sequence(params, seq_b, spec, options.threads);
    AlignResult result = detail::align_against(emb_a, emb_b, options);
    if (options.flip_lr) {
        EmbeddedSequence emb_flipped = embed_sequence(params, mirror_lr(seq_b), spec, options.threads);
        AlignResult flipped = detail::align_against(emb_a, emb_flipped, options);
        if (flipped.mean_cost < result.mean_cost) {
            flipped.flipped = true;
            return flipped;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Keypose transfer

// Each label maps to its nearest row; the path cells sharing that row span a
// column range, and the transferred time is the midpoint of that range's
// column times.
inline KeyposeLabels transfer_keyposes(const AlignmentPath& path, const KeyposeLabels& labels,
                                       const std::vector<double>& row_times,
                                       const std::vector<double>& col_times) {
    if (row_times.empty() || col_times.empty() || path.cells.empty()) {
        throw PoseError(ErrorCode::validation, "keypose transfer needs a nonempty path and times");
    }
    const double t_min = *std::min_element(row_times.begin(), row_times.end());
    const double t_max = *std::max_element(row_times.begin(), row_times.end());
    KeyposeLabels out;
    for (const auto& [label, time] : labels.entries) {
        if (label.empty()) throw PoseError(ErrorCode::validation, "keypose with empty label");
        if (time < t_min - 1e-9 || time > t_max + 1e-9) {
            throw PoseError(ErrorCode::validation,
                            "keypose \"" + label + "\" at " + format_float(time) +
                                " s is outside the reference span [" + format_float(t_min) + ", " +
                                format_float(t_max) + "]");
        }
        int nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < row_times.size(); ++i) {
            double d = std::abs(row_times[i] - time);
            if (d < best) {
                best = d;
                nearest = static_cast<int>(i);
            }
        }
        int col_lo = -1, col_hi = -1;
        for (const auto& [i, j] : path.cells) {
            if (i != nearest) continue;
            if (col_lo < 0 || j < col_lo) col_lo = j;
            if (col_hi < 0 || j > col_hi) col_hi = j;
        }
        if (col_lo < 0) {
            // cannot happen for a valid boundary-to-boundary path
            throw PoseError(ErrorCode::validation,
                            "alignment path does not visit row " + std::to_string(nearest));
        }
        out.entries.emplace_back(label, 0.5 * (col_times[col_lo] + col_times[col_hi]));
    }
    return out;
}

// Classical LTW baseline: straight-line interpolation between declared
// start/end anchor times.
inline KeyposeLabels linear_transfer_keyposes(const KeyposeLabels& labels, double src_start,
                                              double src_end, double dst_start, double dst_end) {
    if (src_end <= src_start) {
        throw PoseError(ErrorCode::validation, "linear transfer: source span is empty");
    }
    KeyposeLabels out;
    for (const auto& [label, time] : labels.entries) {
        double fraction = (time - src_start) / (src_end - src_start);
        out.entries.emplace_back(label, dst_start + fraction * (dst_end - dst_start));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report files

inline void save_path_csv(const AlignmentPath& path, const std::vector<double>& row_times,
                          const std::vector<double>& col_times, const std::string& file_path) {
    std::ostringstream out;
    out << "i,j,cost,row_time,col_time\n";
    for (std::size_t k = 0; k < path.cells.size(); ++k) {
        const auto& [i, j] = path.cells[k];
        out << i << ',' << j << ',' << format_float(path.cell_costs[k]) << ','
            << format_float(row_times[static_cast<std::size_t>(i)]) << ','
            << format_float(col_times[static_cast<std::size_t>(j)]) << '\n';
    }
    detail::write_text_file(file_path, out.str());
}

inline Json align_summary_json(const AlignResult& result) {
    Json summary;
    summary["mean_cost"] = round_to_9_digits(result.mean_cost);
    summary["flipped"] = result.flipped;
    summary["n"] = result.n;
    summary["m"] = result.m;
    summary["path_length"] = result.path.cells.size();
    summary["ltw_gamma"] = round_to_9_digits(result.ltw_gamma_used);
    return summary;
}

}  // namespace posealign

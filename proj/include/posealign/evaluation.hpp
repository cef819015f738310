#pragma once

// Alignment quality metrics: Kendall's Tau over nearest-neighbor frame
// assignments, keypose-transfer accuracy curves, and all-pairs alignment-cost
// sweeps against a reference performance.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "posealign/alignment.hpp"
#include "posealign/common.hpp"
#include "posealign/encoder.hpp"

namespace posealign {

// Nearest-neighbor assignment of every embedding in `from` to one in `to`.
inline std::vector<int> nearest_neighbor_assignment(const std::vector<Embedding>& from,
                                                    const std::vector<Embedding>& to,
                                                    EmbeddingMetric metric) {
    std::vector<int> assignment(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) {
        int best = 0;
        double best_score = 0.0;
        for (std::size_t j = 0; j < to.size(); ++j) {
            double score = metric == EmbeddingMetric::cosine_distance
                               ? cosine_similarity(from[i], to[j])  // maximize
                               : -(from[i] - to[j]).norm();         // minimize distance
            if (j == 0 || score > best_score) {
                best_score = score;
                best = static_cast<int>(j);
            }
        }
        assignment[i] = best;
    }
    return assignment;
}

namespace detail {

// (concordant - discordant) / (n choose 2) over index pairs i < j of the
// assignment; ties count as discordant.
inline double tau_of_assignment(const std::vector<int>& assignment) {
    const std::size_t n = assignment.size();
    long long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (assignment[i] < assignment[j]) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return static_cast<double>(concordant - discordant) / pairs;
}

}  // namespace detail

// Symmetrized Kendall's Tau: the A->B and B->A directions are averaged.
inline double kendalls_tau(const std::vector<Embedding>& emb_a, const std::vector<Embedding>& emb_b,
                           EmbeddingMetric metric = EmbeddingMetric::cosine_distance) {
    if (emb_a.size() < 2 || emb_b.size() < 2) {
        throw PoseError(ErrorCode::validation, "kendalls_tau needs at least 2 frames per side");
    }
    double forward_tau = detail::tau_of_assignment(nearest_neighbor_assignment(emb_a, emb_b, metric));
    double backward_tau = detail::tau_of_assignment(nearest_neighbor_assignment(emb_b, emb_a, metric));
    return 0.5 * (forward_tau + backward_tau);
}

struct TauReport {
    struct Entry {
        std::string seq_a;
        std::string seq_b;
        double tau;
    };
    std::vector<Entry> per_pair;
    double mean_tau = 0.0;  // arithmetic mean of per_pair

    void finalize() {
        double sum = 0.0;
        for (const auto& entry : per_pair) sum += entry.tau;
        mean_tau = per_pair.empty() ? 0.0 : sum / static_cast<double>(per_pair.size());
    }
};

struct AccuracyCurve {
    std::vector<double> thresholds;  // seconds, ascending
    std::vector<double> fractions;   // in [0, 1], non-decreasing
};

// Fraction of labels within each threshold of ground truth. Label sets must
// match; thresholds are reported in ascending order.
inline AccuracyCurve keypose_accuracy(const KeyposeLabels& predicted, const KeyposeLabels& ground_truth,
                                      std::vector<double> thresholds) {
    std::map<std::string, double> truth;
    for (const auto& [label, time] : ground_truth.entries) {
        if (!truth.emplace(label, time).second) {
            throw PoseError(ErrorCode::validation, "duplicate ground-truth label \"" + label + "\"");
        }
    }
    if (predicted.entries.size() != truth.size()) {
        throw PoseError(ErrorCode::validation,
                        "label sets differ: " + std::to_string(predicted.entries.size()) +
                            " predicted vs " + std::to_string(truth.size()) + " ground truth");
    }
    std::vector<double> errors;
    for (const auto& [label, time] : predicted.entries) {
        auto it = truth.find(label);
        if (it == truth.end()) {
            throw PoseError(ErrorCode::validation,
                            "predicted label \"" + label + "\" missing from ground truth");
        }
        errors.push_back(std::abs(time - it->second));
    }
    std::sort(thresholds.begin(), thresholds.end());
    AccuracyCurve curve;
    curve.thresholds = thresholds;
    for (double threshold : thresholds) {
        std::size_t hits = 0;
        for (double error : errors) {
            if (error <= threshold) ++hits;
        }
        curve.fractions.push_back(errors.empty() ? 0.0
                                                 : static_cast<double>(hits) / errors.size());
    }
    return curve;
}

struct PairCost {
    std::string name;
    double mean_cost;
    bool flipped;
};

// Aligns a reference performance against every sequence (itself included).
// The self-alignment is listed first; the rest are sorted by cost, then name.
inline std::vector<PairCost> all_pairs_cost(const EncoderParams& params,
                                            const std::vector<PoseSequence>& sequences,
                                            int reference_index, const WindowSpec& spec,
                                            const AlignOptions& options = {}) {
    if (reference_index < 0 || reference_index >= static_cast<int>(sequences.size())) {
        throw PoseError(ErrorCode::validation,
                        "reference index " + std::to_string(reference_index) + " out of range");
    }
    std::vector<PairCost> costs(sequences.size());
    parallel_for(sequences.size(), options.threads, [&](std::size_t i) {
        AlignResult result = align_pair(params, sequences[reference_index], sequences[i], spec,
                                        options);
        costs[i] = {sequences[i].name, result.mean_cost, result.flipped};
    });
    PairCost self = costs[reference_index];
    costs.erase(costs.begin() + reference_index);
    std::sort(costs.begin(), costs.end(), [](const PairCost& lhs, const PairCost& rhs) {
        return lhs.mean_cost != rhs.mean_cost ? lhs.mean_cost < rhs.mean_cost
                                              : lhs.name < rhs.name;
    });
    costs.insert(costs.begin(), self);
    return costs;
}

// ---------------------------------------------------------------------------
// Report files

inline void save_tau_csv(const TauReport& report, const std::string& path) {
    std::ostringstream out;
    out << "seq_a,seq_b,tau\n";
    for (const auto& entry : report.per_pair) {
        out << entry.seq_a << ',' << entry.seq_b << ',' << format_float(entry.tau) << '\n';
    }
    detail::write_text_file(path, out.str());
}

inline void save_pair_costs_csv(const std::vector<PairCost>& costs, const std::string& path) {
    std::ostringstream out;
    out << "name,mean_cost\n";
    for (const auto& entry : costs) {
        out << entry.name << ',' << format_float(entry.mean_cost) << '\n';
    }
    detail::write_text_file(path, out.str());
}

inline void save_accuracy_csv(const AccuracyCurve& curve, const std::string& path) {
    std::ostringstream out;
    out << "threshold,fraction\n";
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        out << format_float(curve.thresholds[i]) << ',' << format_float(curve.fractions[i]) << '\n';
    }
    detail::write_text_file(path, out.str());
}

}  // namespace posealign

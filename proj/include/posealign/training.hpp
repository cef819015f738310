#pragma once

// Contrastive minibatch losses with analytic gradients, SGD with momentum,
// Phase-1 augmentation-pair training, DTW-based Phase-2 pair harvesting and
// refinement, plus the max-margin (Hadsell) loss for comparison runs.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "posealign/alignment.hpp"
#include "posealign/common.hpp"
#include "posealign/encoder.hpp"
#include "posealign/normalize.hpp"
#include "posealign/pose_io.hpp"

namespace posealign {

enum class LossKind { cosine_contrastive, hadsell_margin };

struct LossConfig {
    LossKind kind = LossKind::cosine_contrastive;
    double margin = 1.0;  // hadsell only

    void validate() const {
        if (margin <= 0.0) throw PoseError(ErrorCode::validation, "loss margin must be > 0");
    }
};

struct TrainConfig {
    int batch_size = 128;
    double lr = 0.01;
    double momentum = 0.9;
    int epochs_phase1 = 15;
    int epochs_phase2 = 30;
    std::uint64_t seed = 0;
    bool pair_two_augmented = false;  // pair = (augmented, augmented) instead of (original, augmented)
    int max_harvest_pairs = 0;        // 0 = keep every DTW path cell
    int threads = 1;

    void validate() const {
        if (batch_size < 2) {
            throw PoseError(ErrorCode::validation,
                            "batch size must be >= 2 so off-diagonal terms exist");
        }
        if (lr <= 0.0) throw PoseError(ErrorCode::validation, "learning rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) {
            throw PoseError(ErrorCode::validation, "momentum must be in [0, 1)");
        }
        if (epochs_phase1 < 1 || epochs_phase2 < 1) {
            throw PoseError(ErrorCode::validation, "epoch counts must be >= 1");
        }
        if (max_harvest_pairs < 0) {
            throw PoseError(ErrorCode::validation, "max harvest pairs must be >= 0");
        }
    }
};

struct TrainingPair {
    enum class Origin { augmented, harvested };
    Window a;  // raw
    Window b;  // raw
    Origin origin = Origin::augmented;
};

// ---------------------------------------------------------------------------
// Losses

struct BatchLossResult {
    double loss = 0.0;
    Eigen::MatrixXd grad_a;  // dL/dA, D x N
    Eigen::MatrixXd grad_b;  // dL/dB
};

namespace detail {

inline void check_loss_inputs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw PoseError(ErrorCode::shape, "loss inputs must have matching shapes");
    }
    if (a.cols() < 2) {
        throw PoseError(ErrorCode::validation, "loss needs at least 2 pairs per minibatch");
    }
}

}  // namespace detail

// Sum of squared residuals between pairwise cosine similarities and their
// targets: diagonal entries are pulled to 1, off-diagonal entries to 0 with
// weight lambda. Gradients are analytic through the column normalization.
inline BatchLossResult batch_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double lambda) {
    detail::check_loss_inputs(a, b);
    const int n = static_cast<int>(a.cols());

    Eigen::VectorXd norm_a(n), norm_b(n);
    for (int i = 0; i < n; ++i) {
        norm_a(i) = a.col(i).norm();
        norm_b(i) = b.col(i).norm();
        if (norm_a(i) == 0.0 || norm_b(i) == 0.0) {
            throw PoseError(ErrorCode::numeric,
                            "zero-norm embedding column " + std::to_string(i) + " in minibatch");
        }
    }
    Eigen::MatrixXd a_hat = a.array().rowwise() / norm_a.transpose().array();
    Eigen::MatrixXd b_hat = b.array().rowwise() / norm_b.transpose().array();
    Eigen::MatrixXd cosines = a_hat.transpose() * b_hat;  // n x n

    BatchLossResult result;
    Eigen::MatrixXd residual_grad(n, n);  // dL/dC
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                double r = cosines(i, i) - 1.0;
                result.loss += r * r;
                residual_grad(i, i) = 2.0 * r;
            } else {
                result.loss += lambda * cosines(i, j) * cosines(i, j);
                residual_grad(i, j) = 2.0 * lambda * cosines(i, j);
            }
        }
    }

    // dL/da_hat_i = sum_j G_ij b_hat_j, then back through the normalization.
    Eigen::MatrixXd grad_a_hat = b_hat * residual_grad.transpose();
    Eigen::MatrixXd grad_b_hat = a_hat * residual_grad;
    result.grad_a.resize(a.rows(), n);
    result.grad_b.resize(a.rows(), n);
    for (int i = 0; i < n; ++i) {
        double radial = a_hat.col(i).dot(grad_a_hat.col(i));
        result.grad_a.col(i) = (grad_a_hat.col(i) - radial * a_hat.col(i)) / norm_a(i);
        radial = b_hat.col(i).dot(grad_b_hat.col(i));
        result.grad_b.col(i) = (grad_b_hat.col(i) - radial * b_hat.col(i)) / norm_b(i);
    }
    return result;
}

// lambda defaults to 1/(N-1), evenly weighting the N diagonal terms against
// the N(N-1) off-diagonal terms.
inline BatchLossResult batch_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    detail::check_loss_inputs(a, b);
    return batch_loss(a, b, 1.0 / (a.cols() - 1));
}

// Max-margin contrastive loss: positives pay squared distance, implicit
// negatives (within-batch off-diagonals, weighted by the same 1/(N-1) as
// batch_loss) pay a squared hinge below the margin.
inline BatchLossResult hadsell_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    double margin) {
    detail::check_loss_inputs(a, b);
    if (margin <= 0.0) throw PoseError(ErrorCode::validation, "hadsell margin must be > 0");
    const int n = static_cast<int>(a.cols());
    const double lambda = 1.0 / (n - 1);

    BatchLossResult result;
    result.grad_a = Eigen::MatrixXd::Zero(a.rows(), n);
    result.grad_b = Eigen::MatrixXd::Zero(a.rows(), n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd diff = a.col(i) - b.col(i);
        result.loss += diff.squaredNorm();
        result.grad_a.col(i) += 2.0 * diff;
        result.grad_b.col(i) -= 2.0 * diff;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            Eigen::VectorXd gap = a.col(i) - b.col(j);
            double distance = gap.norm();
            if (distance >= margin) continue;
            double hinge = margin - distance;
            result.loss += lambda * hinge * hinge;
            if (distance > 0.0) {  // subgradient 0 at the kink
                Eigen::VectorXd pull = (2.0 * lambda * hinge / distance) * gap;
                result.grad_a.col(i) -= pull;
                result.grad_b.col(j) += pull;
            }
        }
    }
    return result;
}

inline BatchLossResult minibatch_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                      const LossConfig& config) {
    return config.kind == LossKind::cosine_contrastive ? batch_loss(a, b)
                                                       : hadsell_loss(a, b, config.margin);
}

// ---------------------------------------------------------------------------
// SGD with momentum

// v <- momentum * v - lr * g;  p <- p + v
template <typename Tensor>
inline void sgd_momentum_update(Tensor& param, Tensor& velocity, const Tensor& grad, double lr,
                                double momentum) {
    velocity = momentum * velocity - lr * grad;
    param += velocity;
}

class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void step(EncoderParams& params, const EncoderGradients& grads) {
        if (!initialized_) {
            velocity_.set_zero(params.config);
            initialized_ = true;
        }
        sgd_momentum_update(params.w1, velocity_.w1, grads.w1, lr_, momentum_);
        sgd_momentum_update(params.b1, velocity_.b1, grads.b1, lr_, momentum_);
        sgd_momentum_update(params.w2, velocity_.w2, grads.w2, lr_, momentum_);
        sgd_momentum_update(params.b2, velocity_.b2, grads.b2, lr_, momentum_);
        sgd_momentum_update(params.w3, velocity_.w3, grads.w3, lr_, momentum_);
        sgd_momentum_update(params.b3, velocity_.b3, grads.b3, lr_, momentum_);
    }

private:
    double lr_;
    double momentum_;
    EncoderGradients velocity_;
    bool initialized_ = false;
};

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
    EncoderParams params;
    std::vector<double> epoch_mean_loss;  // per-sample mean, one entry per epoch
};

namespace detail {

// Gradients of the (already 1/n-scaled) batch loss, accumulated over both
// Siamese branches. Samples are reduced in fixed chunks of 8 so the summation
// order is identical for any thread count.
inline EncoderGradients batch_gradients(const EncoderParams& params,
                                        const std::vector<Window>& windows_a,
                                        const std::vector<Window>& windows_b,
                                        const std::vector<ForwardTrace>& traces_a,
                                        const std::vector<ForwardTrace>& traces_b,
                                        const Eigen::MatrixXd& grad_a,
                                        const Eigen::MatrixXd& grad_b, int threads) {
    const std::size_t n = windows_a.size();
    constexpr std::size_t kChunk = 8;
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
    std::vector<EncoderGradients> chunk_grads(n_chunks);
    parallel_for(n_chunks, threads, [&](std::size_t chunk) {
        EncoderGradients& acc = chunk_grads[chunk];
        acc.set_zero(params.config);
        const std::size_t end = std::min(n, (chunk + 1) * kChunk);
        for (std::size_t i = chunk * kChunk; i < end; ++i) {
            acc.accumulate(backward(params, windows_a[i].data, traces_a[i],
                                    grad_a.col(static_cast<int>(i))));
            acc.accumulate(backward(params, windows_b[i].data, traces_b[i],
                                    grad_b.col(static_cast<int>(i))));
        }
    });
    EncoderGradients total;
    total.set_zero(params.config);
    for (const auto& chunk : chunk_grads) total.accumulate(chunk);
    return total;
}

// One SGD step on a batch of window pairs; returns the per-sample loss.
inline double train_step(EncoderParams& params, SgdMomentum& optimizer,
                         const std::vector<Window>& windows_a, const std::vector<Window>& windows_b,
                         const LossConfig& loss_config, int threads) {
    const std::size_t n = windows_a.size();
    std::vector<ForwardTrace> traces_a(n), traces_b(n);
    parallel_for(n, threads, [&](std::size_t i) {
        traces_a[i] = forward_trace(params, windows_a[i].data);
        traces_b[i] = forward_trace(params, windows_b[i].data);
    });
    Eigen::MatrixXd emb_a(params.config.embed_dim, static_cast<int>(n));
    Eigen::MatrixXd emb_b(params.config.embed_dim, static_cast<int>(n));
    for (std::size_t i = 0; i < n; ++i) {
        emb_a.col(static_cast<int>(i)) = traces_a[i].out;
        emb_b.col(static_cast<int>(i)) = traces_b[i].out;
    }
    BatchLossResult loss = minibatch_loss(emb_a, emb_b, loss_config);
    const double scale = 1.0 / static_cast<double>(n);
    loss.grad_a *= scale;
    loss.grad_b *= scale;
    EncoderGradients grads =
        batch_gradients(params, windows_a, windows_b, traces_a, traces_b, loss.grad_a, loss.grad_b,
                        threads);
    optimizer.step(params, grads);
    return loss.loss * scale;
}

struct WindowRef {
    int seq_index;
    double center_time;
};

inline std::vector<WindowRef> collect_window_refs(const std::vector<PoseSequence>& sequences,
                                                  const WindowSpec& spec) {
    std::vector<WindowRef> refs;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        for (double t : window_centers(sequences[s], spec)) {
            refs.push_back({static_cast<int>(s), t});
        }
    }
    return refs;
}

inline void check_training_inputs(const std::vector<PoseSequence>& sequences,
                                  const WindowSpec& spec, const EncoderConfig& enc_config) {
    if (sequences.empty()) throw PoseError(ErrorCode::validation, "no training sequences");
    spec.validate();
    enc_config.validate();
    if (enc_config.n_frames != spec.frame_count()) {
        throw PoseError(ErrorCode::shape,
                        "encoder expects " + std::to_string(enc_config.n_frames) +
                            " frames per window, window spec yields " +
                            std::to_string(spec.frame_count()));
    }
    for (const auto& seq : sequences) {
        if (seq.layout.point_count() != enc_config.n_points) {
            throw PoseError(ErrorCode::shape,
                            "encoder expects " + std::to_string(enc_config.n_points) +
                                " points, sequence \"" + seq.name + "\" has " +
                                std::to_string(seq.layout.point_count()));
        }
        if (seq.layout.name != sequences.front().layout.name) {
            throw PoseError(ErrorCode::validation, "training sequences use different layouts");
        }
    }
}

// Dataset entry for the shuffled epoch order: either an augmentation-origin
// window reference or an index into the harvested pair list.
struct EpochItem {
    bool harvested;
    int index;  // into refs or harvested pairs
};

// Shared epoch loop for both phases.
inline TrainResult run_epochs(EncoderParams params, const std::vector<PoseSequence>& sequences,
                              const WindowSpec& spec, const std::vector<WindowRef>& refs,
                              const std::vector<Window>& normalized_originals,
                              const std::vector<std::pair<Window, Window>>& harvested_normalized,
                              int epochs, const TrainConfig& train_config,
                              const LossConfig& loss_config) {
    std::vector<EpochItem> items;
    items.reserve(refs.size() + harvested_normalized.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        items.push_back({false, static_cast<int>(i)});
    }
    for (std::size_t i = 0; i < harvested_normalized.size(); ++i) {
        items.push_back({true, static_cast<int>(i)});
    }
    if (static_cast<int>(items.size()) < train_config.batch_size) {
        throw PoseError(ErrorCode::validation,
                        "insufficient data: " + std::to_string(items.size()) +
                            " training samples for batch size " +
                            std::to_string(train_config.batch_size));
    }

    RandomStream rng(train_config.seed);
    SgdMomentum optimizer(train_config.lr, train_config.momentum);
    TrainResult result;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(items);
        double loss_sum = 0.0;
        std::size_t samples_used = 0;
        for (std::size_t start = 0; start < items.size(); start += train_config.batch_size) {
            const std::size_t end = std::min(items.size(), start + train_config.batch_size);
            if (end - start < 2) continue;  // a trailing single sample has no negatives
            std::vector<Window> windows_a, windows_b;
            windows_a.reserve(end - start);
            windows_b.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const EpochItem& item = items[k];
                if (item.harvested) {
                    windows_a.push_back(harvested_normalized[item.index].first);
                    windows_b.push_back(harvested_normalized[item.index].second);
                } else {
                    const WindowRef& ref = refs[item.index];
                    const PoseSequence& seq = sequences[ref.seq_index];
                    if (train_config.pair_two_augmented) {
                        windows_a.push_back(normalize_window(
                            augment(seq, ref.center_time, spec, rng), seq.layout));
                    } else {
                        windows_a.push_back(normalized_originals[item.index]);
                    }
                    windows_b.push_back(
                        normalize_window(augment(seq, ref.center_time, spec, rng), seq.layout));
                }
            }
            double batch_mean =
                train_step(params, optimizer, windows_a, windows_b, loss_config, train_config.threads);
            loss_sum += batch_mean * static_cast<double>(windows_a.size());
            samples_used += windows_a.size();
        }
        result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(samples_used));
    }
    result.params = std::move(params);
    return result;
}

inline std::vector<Window> normalize_originals(const std::vector<PoseSequence>& sequences,
                                               const WindowSpec& spec,
                                               const std::vector<WindowRef>& refs, int threads) {
    std::vector<Window> normalized(refs.size());
    parallel_for(refs.size(), threads, [&](std::size_t i) {
        const PoseSequence& seq = sequences[refs[i].seq_index];
        normalized[i] = normalize_window(extract_window(seq, refs[i].center_time, spec), seq.layout);
    });
    return normalized;
}

}  // namespace detail

// Phase 1: positive pairs come from temporal augmentation of uniformly
// strided windows. Fresh augmentations are drawn every epoch.
inline TrainResult train_phase1(const std::vector<PoseSequence>& sequences, const WindowSpec& spec,
                                const EncoderConfig& enc_config, const TrainConfig& train_config,
                                const LossConfig& loss_config = {}) {
    detail::check_training_inputs(sequences, spec, enc_config);
    train_config.validate();
    loss_config.validate();
    auto refs = detail::collect_window_refs(sequences, spec);
    if (static_cast<int>(refs.size()) < train_config.batch_size) {
        throw PoseError(ErrorCode::validation,
                        "insufficient data: " + std::to_string(refs.size()) +
                            " windows for batch size " + std::to_string(train_config.batch_size));
    }
    std::vector<Window> normalized_originals;
    if (!train_config.pair_two_augmented) {
        normalized_originals =
            detail::normalize_originals(sequences, spec, refs, train_config.threads);
    } else {
        normalized_originals.resize(refs.size());  // unused
    }
    return detail::run_epochs(init_encoder(enc_config), sequences, spec, refs,
                              normalized_originals, {}, train_config.epochs_phase1, train_config,
                              loss_config);
}

// ---------------------------------------------------------------------------
// Harvesting

struct HarvestResult {
    std::vector<TrainingPair> pairs;
    std::vector<double> costs;  // DTW cell cost per pair, parallel to pairs
};

// Aligns every unordered sequence pair with DTW on the cosine-distance matrix
// and emits one raw window pair per path cell.
inline HarvestResult harvest_pairs(const EncoderParams& params,
                                   const std::vector<PoseSequence>& sequences,
                                   const WindowSpec& spec, int max_pairs = 0, int threads = 1) {
    if (sequences.size() < 2) {
        throw PoseError(ErrorCode::validation, "harvest needs at least 2 sequences");
    }
    std::vector<EmbeddedSequence> embedded(sequences.size());
    parallel_for(sequences.size(), threads, [&](std::size_t s) {
        embedded[s] = embed_sequence(params, sequences[s], spec);
    });

    HarvestResult result;
    std::set<std::tuple<int, int, int, int>> seen;  // (seq_a, window_a, seq_b, window_b)
    for (std::size_t s1 = 0; s1 < sequences.size(); ++s1) {
        for (std::size_t s2 = s1 + 1; s2 < sequences.size(); ++s2) {
            CostMatrix cost = cost_matrix(embedded[s1].embeddings, embedded[s1].times,
                                          embedded[s2].embeddings, embedded[s2].times);
            AlignmentPath path = dtw(cost);
            for (std::size_t k = 0; k < path.cells.size(); ++k) {
                if (max_pairs > 0 && static_cast<int>(result.pairs.size()) >= max_pairs) {
                    return result;
                }
                const auto& [i, j] = path.cells[k];
                if (!seen.insert({static_cast<int>(s1), i, static_cast<int>(s2), j}).second) {
                    continue;
                }
                TrainingPair pair;
                pair.a = extract_window(sequences[s1], embedded[s1].times[i], spec);
                pair.b = extract_window(sequences[s2], embedded[s2].times[j], spec);
                pair.origin = TrainingPair::Origin::harvested;
                result.pairs.push_back(std::move(pair));
                result.costs.push_back(path.cell_costs[k]);
            }
        }
    }
    return result;
}

// Phase 2: continues SGD from the Phase-1 parameters on the union of
// augmentation-generated and harvested pairs, mixed by uniform shuffle.
inline TrainResult train_phase2(const EncoderParams& initial,
                                const std::vector<PoseSequence>& sequences, const WindowSpec& spec,
                                const std::vector<TrainingPair>& harvested,
                                const TrainConfig& train_config,
                                const LossConfig& loss_config = {}) {
    detail::check_training_inputs(sequences, spec, initial.config);
    train_config.validate();
    loss_config.validate();
    if (harvested.empty()) {
        throw PoseError(ErrorCode::validation,
                        "phase 2 needs harvested pairs; without them it is phase 1");
    }
    auto refs = detail::collect_window_refs(sequences, spec);
    std::vector<Window> normalized_originals;
    if (!train_config.pair_two_augmented) {
        normalized_originals =
            detail::normalize_originals(sequences, spec, refs, train_config.threads);
    } else {
        normalized_originals.resize(refs.size());
    }
    const PointLayout& layout = sequences.front().layout;
    std::vector<std::pair<Window, Window>> harvested_normalized(harvested.size());
    parallel_for(harvested.size(), train_config.threads, [&](std::size_t i) {
        harvested_normalized[i] = {normalize_window(harvested[i].a, layout),
                                   normalize_window(harvested[i].b, layout)};
    });
    return detail::run_epochs(initial, sequences, spec, refs, normalized_originals,
                              harvested_normalized, train_config.epochs_phase2, train_config,
                              loss_config);
}

// ---------------------------------------------------------------------------
// Report files

inline void save_loss_csv(const std::vector<double>& epoch_mean_loss, const std::string& path) {
    std::ostringstream out;
    out << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < epoch_mean_loss.size(); ++e) {
        out << (e + 1) << ',' << format_float(epoch_mean_loss[e]) << '\n';
    }
    detail::write_text_file(path, out.str());
}

inline void save_harvest_csv(const HarvestResult& harvest, const std::string& path) {
    std::ostringstream out;
    out << "seq_a,t_a,seq_b,t_b,cost\n";
    for (std::size_t k = 0; k < harvest.pairs.size(); ++k) {
        const TrainingPair& pair = harvest.pairs[k];
        out << pair.a.source_name << ',' << format_float(pair.a.center_time) << ','
            << pair.b.source_name << ',' << format_float(pair.b.center_time) << ','
            << format_float(harvest.costs[k]) << '\n';
    }
    detail::write_text_file(path, out.str());
}

}  // namespace posealign

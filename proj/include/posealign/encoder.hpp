#pragma once

// Shallow 3-layer convolutional encoder mapping a normalized N x 3P window to
// a D-dimensional embedding. Layer 1 slides over each point's x,y,z triplet
// in isolation (spatial kernel 3, stride 3); layer 2 spans all P points;
// layer 3 is fully connected. ReLU after layers 1 and 2, nothing after 3,
// valid convolutions throughout. Forward and backward are written out
// directly so gradients are exact by construction and checkable against
// finite differences.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "posealign/common.hpp"
#include "posealign/normalize.hpp"
#include "posealign/pose_io.hpp"

namespace posealign {

using Embedding = Eigen::VectorXd;

// Cosine similarity of two embeddings; range [-1, 1].
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
    double norm_a = a.norm();
    double norm_b = b.norm();
    if (norm_a == 0.0 || norm_b == 0.0) {
        throw PoseError(ErrorCode::numeric, "cosine similarity of a zero-norm vector");
    }
    return a.dot(b) / (norm_a * norm_b);
}

struct EncoderConfig {
    int n_frames = 75;  // N
    int n_points = 39;  // P
    int c1 = 32;        // layer-1 output channels
    int k1_t = 5;       // layer-1 temporal kernel
    int s1_t = 3;       // layer-1 temporal stride
    int c2 = 64;        // layer-2 output channels
    int k2_t = 5;       // layer-2 temporal kernel
    int s2_t = 2;       // layer-2 temporal stride
    int embed_dim = 256;
    std::uint64_t seed = 0;

    // temporal output extents (valid convolution)
    int t1() const { return (n_frames - k1_t) / s1_t + 1; }
    int t2() const { return (t1() - k2_t) / s2_t + 1; }

    void validate() const {
        if (n_frames < 2 || n_points < 1) {
            throw PoseError(ErrorCode::validation, "encoder config: need n_frames >= 2, n_points >= 1");
        }
        if (c1 < 1 || c2 < 1 || embed_dim < 1 || k1_t < 1 || k2_t < 1 || s1_t < 1 || s2_t < 1) {
            throw PoseError(ErrorCode::validation, "encoder config: sizes and strides must be >= 1");
        }
        if (n_frames < k1_t || t1() < 1) {
            throw PoseError(ErrorCode::validation, "encoder config: layer-1 temporal extent < 1");
        }
        if (t1() < k2_t || t2() < 1) {
            throw PoseError(ErrorCode::validation, "encoder config: layer-2 temporal extent < 1");
        }
    }

    bool operator==(const EncoderConfig&) const = default;
};

// All weights and biases. w2 rows are laid out (dt, point, channel)
// innermost-last; w3 input is the layer-2 activation flattened (t, channel).
struct EncoderParams {
    EncoderConfig config;
    Eigen::MatrixXd w1;  // c1 x (k1_t * 3)
    Eigen::VectorXd b1;  // c1
    Eigen::MatrixXd w2;  // c2 x (k2_t * P * c1)
    Eigen::VectorXd b2;  // c2
    Eigen::MatrixXd w3;  // D x (t2 * c2)
    Eigen::VectorXd b3;  // D
};

namespace detail {

inline void fill_uniform(Eigen::MatrixXd& m, double bound, RandomStream& rng) {
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
    }
}

}  // namespace detail

// Zero-mean uniform init with fan-in scaling: bound = sqrt(1 / fan_in).
// Biases start at zero. Deterministic given config.seed.
inline EncoderParams init_encoder(const EncoderConfig& config) {
    config.validate();
    EncoderParams params;
    params.config = config;
    RandomStream rng(config.seed);

    params.w1.resize(config.c1, config.k1_t * 3);
    detail::fill_uniform(params.w1, std::sqrt(1.0 / (config.k1_t * 3)), rng);
    params.b1 = Eigen::VectorXd::Zero(config.c1);

    const int fan2 = config.k2_t * config.n_points * config.c1;
    params.w2.resize(config.c2, fan2);
    detail::fill_uniform(params.w2, std::sqrt(1.0 / fan2), rng);
    params.b2 = Eigen::VectorXd::Zero(config.c2);

    const int fan3 = config.t2() * config.c2;
    params.w3.resize(config.embed_dim, fan3);
    detail::fill_uniform(params.w3, std::sqrt(1.0 / fan3), rng);
    params.b3 = Eigen::VectorXd::Zero(config.embed_dim);
    return params;
}

inline void check_window_shape(const EncoderConfig& config, const Eigen::MatrixXd& window) {
    if (window.rows() != config.n_frames || window.cols() != 3 * config.n_points) {
        throw PoseError(ErrorCode::shape,
                        "encoder expects " + std::to_string(config.n_points) + " points over " +
                            std::to_string(config.n_frames) + " frames (" +
                            std::to_string(3 * config.n_points) + " columns), window has " +
                            std::to_string(window.cols() / 3) + " points over " +
                            std::to_string(window.rows()) + " frames (" +
                            std::to_string(window.cols()) + " columns)");
    }
}

// Intermediate activations kept for the backward pass and for tests that probe
// pre-activations. act1 rows are times, columns are (point, channel) pairs
// laid out p * c1 + c.
struct ForwardTrace {
    Eigen::MatrixXd pre1, act1;  // t1 x (P * c1)
    Eigen::MatrixXd pre2, act2;  // t2 x c2
    Embedding out;
};

inline ForwardTrace forward_trace(const EncoderParams& params, const Eigen::MatrixXd& window) {
    const EncoderConfig& cfg = params.config;
    check_window_shape(cfg, window);

    ForwardTrace trace;
    const int t1 = cfg.t1(), t2 = cfg.t2(), n_points = cfg.n_points;

    trace.pre1.resize(t1, n_points * cfg.c1);
    for (int t = 0; t < t1; ++t) {
        for (int p = 0; p < n_points; ++p) {
            for (int c = 0; c < cfg.c1; ++c) {
                double acc = params.b1(c);
                for (int dt = 0; dt < cfg.k1_t; ++dt) {
                    acc += params.w1.row(c).segment<3>(dt * 3)
                               .dot(window.row(t * cfg.s1_t + dt).segment<3>(p * 3));
                }
                trace.pre1(t, p * cfg.c1 + c) = acc;
            }
        }
    }
    trace.act1 = trace.pre1.cwiseMax(0.0);

    const int row_width = n_points * cfg.c1;  // one temporal slice of layer-1 output
    trace.pre2.resize(t2, cfg.c2);
    for (int t = 0; t < t2; ++t) {
        for (int o = 0; o < cfg.c2; ++o) {
            double acc = params.b2(o);
            for (int dt = 0; dt < cfg.k2_t; ++dt) {
                acc += params.w2.row(o).segment(dt * row_width, row_width)
                           .dot(trace.act1.row(t * cfg.s2_t + dt));
            }
            trace.pre2(t, o) = acc;
        }
    }
    trace.act2 = trace.pre2.cwiseMax(0.0);

    Eigen::VectorXd flat(t2 * cfg.c2);
    for (int t = 0; t < t2; ++t) flat.segment(t * cfg.c2, cfg.c2) = trace.act2.row(t).transpose();
    trace.out = params.w3 * flat + params.b3;
    return trace;
}

inline Embedding forward(const EncoderParams& params, const Eigen::MatrixXd& window) {
    return forward_trace(params, window).out;
}

inline Embedding forward(const EncoderParams& params, const Window& window) {
    return forward_trace(params, window.data).out;
}

struct EncoderGradients {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
    Eigen::MatrixXd input;  // gradient w.r.t. the window

    void set_zero(const EncoderConfig& cfg) {
        w1 = Eigen::MatrixXd::Zero(cfg.c1, cfg.k1_t * 3);
        b1 = Eigen::VectorXd::Zero(cfg.c1);
        w2 = Eigen::MatrixXd::Zero(cfg.c2, cfg.k2_t * cfg.n_points * cfg.c1);
        b2 = Eigen::VectorXd::Zero(cfg.c2);
        w3 = Eigen::MatrixXd::Zero(cfg.embed_dim, cfg.t2() * cfg.c2);
        b3 = Eigen::VectorXd::Zero(cfg.embed_dim);
        input = Eigen::MatrixXd::Zero(cfg.n_frames, 3 * cfg.n_points);
    }

    void accumulate(const EncoderGradients& other) {
        w1 += other.w1; b1 += other.b1;
        w2 += other.w2; b2 += other.b2;
        w3 += other.w3; b3 += other.b3;
    }
};

// Exact gradients of grad_out . forward(params, window) with respect to every
// parameter and the input.
inline EncoderGradients backward(const EncoderParams& params, const Eigen::MatrixXd& window,
                                 const ForwardTrace& trace, const Eigen::VectorXd& grad_out) {
    const EncoderConfig& cfg = params.config;
    check_window_shape(cfg, window);
    if (grad_out.size() != cfg.embed_dim) {
        throw PoseError(ErrorCode::shape, "grad_out has " + std::to_string(grad_out.size()) +
                                              " entries, embedding dim is " +
                                              std::to_string(cfg.embed_dim));
    }

    EncoderGradients grads;
    grads.set_zero(cfg);
    const int t1 = cfg.t1(), t2 = cfg.t2(), n_points = cfg.n_points;

    Eigen::VectorXd flat(t2 * cfg.c2);
    for (int t = 0; t < t2; ++t) flat.segment(t * cfg.c2, cfg.c2) = trace.act2.row(t).transpose();
    grads.w3 = grad_out * flat.transpose();
    grads.b3 = grad_out;
    Eigen::VectorXd grad_flat = params.w3.transpose() * grad_out;

    Eigen::MatrixXd grad_pre2(t2, cfg.c2);
    for (int t = 0; t < t2; ++t) {
        for (int o = 0; o < cfg.c2; ++o) {
            grad_pre2(t, o) = trace.pre2(t, o) > 0.0 ? grad_flat(t * cfg.c2 + o) : 0.0;
        }
    }
    grads.b2 = grad_pre2.colwise().sum().transpose();

    const int row_width = n_points * cfg.c1;
    Eigen::MatrixXd grad_act1 = Eigen::MatrixXd::Zero(t1, row_width);
    for (int t = 0; t < t2; ++t) {
        for (int o = 0; o < cfg.c2; ++o) {
            const double g = grad_pre2(t, o);
            if (g == 0.0) continue;
            for (int dt = 0; dt < cfg.k2_t; ++dt) {
                grads.w2.row(o).segment(dt * row_width, row_width) +=
                    g * trace.act1.row(t * cfg.s2_t + dt);
                grad_act1.row(t * cfg.s2_t + dt) +=
                    g * params.w2.row(o).segment(dt * row_width, row_width);
            }
        }
    }

    Eigen::MatrixXd grad_pre1 =
        (trace.pre1.array() > 0.0).select(grad_act1, Eigen::MatrixXd::Zero(t1, row_width));
    for (int t = 0; t < t1; ++t) {
        for (int p = 0; p < n_points; ++p) {
            for (int c = 0; c < cfg.c1; ++c) {
                const double g = grad_pre1(t, p * cfg.c1 + c);
                if (g == 0.0) continue;
                grads.b1(c) += g;
                for (int dt = 0; dt < cfg.k1_t; ++dt) {
                    grads.w1.row(c).segment<3>(dt * 3) +=
                        g * window.row(t * cfg.s1_t + dt).segment<3>(p * 3);
                    grads.input.row(t * cfg.s1_t + dt).segment<3>(p * 3) +=
                        g * params.w1.row(c).segment<3>(dt * 3);
                }
            }
        }
    }
    return grads;
}

inline EncoderGradients backward(const EncoderParams& params, const Eigen::MatrixXd& window,
                                 const Eigen::VectorXd& grad_out) {
    return backward(params, window, forward_trace(params, window), grad_out);
}

// ---------------------------------------------------------------------------
// Model file

namespace detail {

inline Json tensor_to_json(const Eigen::MatrixXd& m) {
    Json entry;
    entry["shape"] = Json::array({m.rows(), m.cols()});
    Json data = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    entry["data"] = data;
    return entry;
}

inline Json tensor_to_json(const Eigen::VectorXd& v) {
    Json entry;
    entry["shape"] = Json::array({v.size()});
    Json data = Json::array();
    for (int i = 0; i < v.size(); ++i) data.push_back(v(i));
    entry["data"] = data;
    return entry;
}

inline Eigen::MatrixXd matrix_from_json(const Json& entry, int rows, int cols,
                                        const std::string& tensor_name) {
    const auto& shape = entry.at("shape");
    if (shape.size() != 2 || shape[0].get<int>() != rows || shape[1].get<int>() != cols) {
        throw PoseError(ErrorCode::shape,
                        "model tensor " + tensor_name + ": stored shape " + shape.dump() +
                            " does not match config shape [" + std::to_string(rows) + "," +
                            std::to_string(cols) + "]");
    }
    const auto& data = entry.at("data");
    if (static_cast<long long>(data.size()) != static_cast<long long>(rows) * cols) {
        throw PoseError(ErrorCode::shape, "model tensor " + tensor_name + ": wrong element count");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    }
    if (!m.allFinite()) {
        throw PoseError(ErrorCode::numeric, "model tensor " + tensor_name + ": non-finite value");
    }
    return m;
}

inline Eigen::VectorXd vector_from_json(const Json& entry, int size, const std::string& tensor_name) {
    const auto& shape = entry.at("shape");
    if (shape.size() != 1 || shape[0].get<int>() != size) {
        throw PoseError(ErrorCode::shape,
                        "model tensor " + tensor_name + ": stored shape " + shape.dump() +
                            " does not match config shape [" + std::to_string(size) + "]");
    }
    const auto& data = entry.at("data");
    if (static_cast<int>(data.size()) != size) {
        throw PoseError(ErrorCode::shape, "model tensor " + tensor_name + ": wrong element count");
    }
    Eigen::VectorXd v(size);
    for (int i = 0; i < size; ++i) v(i) = data[static_cast<std::size_t>(i)].get<double>();
    if (!v.allFinite()) {
        throw PoseError(ErrorCode::numeric, "model tensor " + tensor_name + ": non-finite value");
    }
    return v;
}

}  // namespace detail

inline Json encoder_config_to_json(const EncoderConfig& cfg) {
    Json object;
    object["n_frames"] = cfg.n_frames;
    object["n_points"] = cfg.n_points;
    object["c1"] = cfg.c1;
    object["k1_t"] = cfg.k1_t;
    object["s1_t"] = cfg.s1_t;
    object["c2"] = cfg.c2;
    object["k2_t"] = cfg.k2_t;
    object["s2_t"] = cfg.s2_t;
    object["embed_dim"] = cfg.embed_dim;
    object["seed"] = cfg.seed;
    return object;
}

inline EncoderConfig encoder_config_from_json(const Json& object) {
    detail::check_json_keys(object,
                            {"n_frames", "n_points", "c1", "k1_t", "s1_t", "c2", "k2_t", "s2_t",
                             "embed_dim", "seed"},
                            "encoder config");
    EncoderConfig cfg;
    auto get_int = [&](const char* key, int fallback) {
        return object.contains(key) ? object.at(key).get<int>() : fallback;
    };
    cfg.n_frames = get_int("n_frames", cfg.n_frames);
    cfg.n_points = get_int("n_points", cfg.n_points);
    cfg.c1 = get_int("c1", cfg.c1);
    cfg.k1_t = get_int("k1_t", cfg.k1_t);
    cfg.s1_t = get_int("s1_t", cfg.s1_t);
    cfg.c2 = get_int("c2", cfg.c2);
    cfg.k2_t = get_int("k2_t", cfg.k2_t);
    cfg.s2_t = get_int("s2_t", cfg.s2_t);
    cfg.embed_dim = get_int("embed_dim", cfg.embed_dim);
    if (object.contains("seed")) cfg.seed = object.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

// Model file values round-trip exactly: nlohmann/json emits shortest decimals
// that parse back to the identical double.
inline void save_encoder(const EncoderParams& params, const std::string& path) {
    Json object;
    object["format_version"] = 1;
    object["config"] = encoder_config_to_json(params.config);
    Json tensors;
    tensors["w1"] = detail::tensor_to_json(params.w1);
    tensors["b1"] = detail::tensor_to_json(params.b1);
    tensors["w2"] = detail::tensor_to_json(params.w2);
    tensors["b2"] = detail::tensor_to_json(params.b2);
    tensors["w3"] = detail::tensor_to_json(params.w3);
    tensors["b3"] = detail::tensor_to_json(params.b3);
    object["tensors"] = tensors;
    detail::write_text_file(path, object.dump() + "\n");
}

inline EncoderParams load_encoder(const std::string& path) {
    Json object = detail::load_json_file(path);
    try {
        if (!object.contains("format_version") || object["format_version"].get<int>() != 1) {
            throw PoseError(ErrorCode::parse,
                            path + ": unsupported model format_version (expected 1)");
        }
        EncoderParams params;
        params.config = encoder_config_from_json(object.at("config"));
        const EncoderConfig& cfg = params.config;
        const auto& tensors = object.at("tensors");
        params.w1 = detail::matrix_from_json(tensors.at("w1"), cfg.c1, cfg.k1_t * 3, "w1");
        params.b1 = detail::vector_from_json(tensors.at("b1"), cfg.c1, "b1");
        params.w2 = detail::matrix_from_json(tensors.at("w2"), cfg.c2,
                                             cfg.k2_t * cfg.n_points * cfg.c1, "w2");
        params.b2 = detail::vector_from_json(tensors.at("b2"), cfg.c2, "b2");
        params.w3 = detail::matrix_from_json(tensors.at("w3"), cfg.embed_dim,
                                             cfg.t2() * cfg.c2, "w3");
        params.b3 = detail::vector_from_json(tensors.at("b3"), cfg.embed_dim, "b3");
        return params;
    } catch (const Json::exception& e) {
        throw PoseError(ErrorCode::parse, path + ": " + e.what());
    }
}

}  // namespace posealign

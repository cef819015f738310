#include <catch2/catch_amalgamated.hpp>

#include "posealign/encoder.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace posealign;

namespace {

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.n_frames = 8;
    cfg.n_points = 3;
    cfg.c1 = 2;
    cfg.k1_t = 3;
    cfg.s1_t = 2;
    cfg.c2 = 2;
    cfg.k2_t = 2;
    cfg.s2_t = 1;
    cfg.embed_dim = 4;
    cfg.seed = 11;
    return cfg;
}

Eigen::MatrixXd random_window(const EncoderConfig& cfg, RandomStream& rng) {
    Eigen::MatrixXd window(cfg.n_frames, 3 * cfg.n_points);
    for (int r = 0; r < window.rows(); ++r) {
        for (int c = 0; c < window.cols(); ++c) window(r, c) = rng.uniform(-1.0, 1.0);
    }
    return window;
}

}  // namespace

TEST_CASE("init is deterministic given the seed", "[encoder]") {
    EncoderConfig cfg = small_config();
    EncoderParams p1 = init_encoder(cfg);
    EncoderParams p2 = init_encoder(cfg);
    CHECK(p1.w1 == p2.w1);
    CHECK(p1.w2 == p2.w2);
    CHECK(p1.w3 == p2.w3);
    CHECK(p1.b1.isZero());
    CHECK(p1.b2.isZero());
    CHECK(p1.b3.isZero());
    cfg.seed = 12;
    EncoderParams p3 = init_encoder(cfg);
    CHECK(p1.w1 != p3.w1);
}

TEST_CASE("default mocap configuration has the documented extents", "[encoder]") {
    EncoderConfig cfg;  // N=75, P=39 defaults
    cfg.validate();
    CHECK(3 * cfg.n_points == 117);  // layer-1 input width
    CHECK(cfg.t1() == 24);
    CHECK(cfg.t2() == 10);
    EncoderParams params = init_encoder(cfg);
    CHECK(params.w1.rows() == 32);
    CHECK(params.w1.cols() == 15);
    CHECK(params.w2.cols() == 5 * 39 * 32);
    CHECK(params.w3.cols() == 10 * 64);
    // layer-1 output has one spatial position per marker
    Eigen::MatrixXd window = Eigen::MatrixXd::Zero(75, 117);
    ForwardTrace trace = forward_trace(params, window);
    CHECK(trace.act1.cols() == 39 * 32);
}

TEST_CASE("invalid derived extents are rejected", "[encoder]") {
    EncoderConfig cfg = small_config();
    cfg.k2_t = 10;  // larger than t1
    CHECK_THROWS_AS(cfg.validate(), PoseError);
    cfg = small_config();
    cfg.n_frames = 2;
    cfg.k1_t = 5;
    CHECK_THROWS_AS(cfg.validate(), PoseError);
}

TEST_CASE("fan-in bound is respected empirically", "[encoder]") {
    EncoderConfig cfg;  // w3 alone has 163840 draws
    EncoderParams params = init_encoder(cfg);
    const double bound = std::sqrt(1.0 / (cfg.t2() * cfg.c2));
    REQUIRE(params.w3.size() >= 100000);
    CHECK(params.w3.cwiseAbs().maxCoeff() <= bound);
    CHECK(params.w3.cwiseAbs().maxCoeff() > 0.99 * bound);  // draws fill the range
    CHECK(std::abs(params.w3.mean()) < bound / 100.0);
}

TEST_CASE("zero window maps to the layer-3 bias", "[encoder]") {
    EncoderConfig cfg = small_config();
    EncoderParams params = init_encoder(cfg);
    Eigen::MatrixXd window = Eigen::MatrixXd::Zero(cfg.n_frames, 3 * cfg.n_points);
    Embedding out = forward(params, window);
    CHECK(out == params.b3);
    CHECK(out.isZero());  // biases are zero at init
}

TEST_CASE("doubling the window doubles layer-1 pre-activations", "[encoder]") {
    EncoderConfig cfg = small_config();
    EncoderParams params = init_encoder(cfg);
    RandomStream rng(3);
    Eigen::MatrixXd window = random_window(cfg, rng);
    ForwardTrace base = forward_trace(params, window);
    ForwardTrace doubled = forward_trace(params, 2.0 * window);
    CHECK((doubled.pre1 - 2.0 * base.pre1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward matches a direct-summation oracle", "[encoder]") {
    RandomStream rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        EncoderConfig cfg = small_config();
        cfg.seed = 100 + trial;
        EncoderParams params = init_encoder(cfg);
        // nonzero biases so all three bias paths are exercised
        for (int i = 0; i < params.b1.size(); ++i) params.b1(i) = rng.uniform(-0.2, 0.2);
        for (int i = 0; i < params.b2.size(); ++i) params.b2(i) = rng.uniform(-0.2, 0.2);
        for (int i = 0; i < params.b3.size(); ++i) params.b3(i) = rng.uniform(-0.2, 0.2);
        Eigen::MatrixXd window = random_window(cfg, rng);
        Embedding ours = forward(params, window);
        Eigen::VectorXd oracle = oracles::naive_forward(params, window);
        REQUIRE((ours - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("zeroing all but one marker triplet only changes that marker's layer-1 slice",
          "[encoder]") {
    EncoderConfig cfg = small_config();
    EncoderParams params = init_encoder(cfg);
    RandomStream rng(23);
    Eigen::MatrixXd window = random_window(cfg, rng);
    ForwardTrace zero = forward_trace(params, Eigen::MatrixXd::Zero(window.rows(), window.cols()));
    for (int p = 0; p < cfg.n_points; ++p) {
        Eigen::MatrixXd only_p = Eigen::MatrixXd::Zero(window.rows(), window.cols());
        only_p.middleCols<3>(3 * p) = window.middleCols<3>(3 * p);
        ForwardTrace trace = forward_trace(params, only_p);
        for (int q = 0; q < cfg.n_points; ++q) {
            Eigen::MatrixXd diff = trace.act1.middleCols(q * cfg.c1, cfg.c1) -
                                   zero.act1.middleCols(q * cfg.c1, cfg.c1);
            if (q == p) {
                CHECK(diff.cwiseAbs().maxCoeff() > 0.0);
            } else {
                CHECK(diff.cwiseAbs().maxCoeff() == 0.0);
            }
        }
    }
}

TEST_CASE("zero grad_out yields zero gradients", "[encoder]") {
    EncoderConfig cfg = small_config();
    EncoderParams params = init_encoder(cfg);
    RandomStream rng(29);
    Eigen::MatrixXd window = random_window(cfg, rng);
    EncoderGradients grads = backward(params, window, Eigen::VectorXd::Zero(cfg.embed_dim));
    CHECK(grads.w1.isZero());
    CHECK(grads.w2.isZero());
    CHECK(grads.w3.isZero());
    CHECK(grads.b1.isZero());
    CHECK(grads.b2.isZero());
    CHECK(grads.b3.isZero());
    CHECK(grads.input.isZero());
}

TEST_CASE("analytic gradients match central finite differences", "[encoder]") {
    RandomStream rng(31);
    const double h = 1e-4;
    for (int trial = 0; trial < 3; ++trial) {
        EncoderConfig cfg = small_config();
        cfg.seed = 200 + trial;
        EncoderParams params = init_encoder(cfg);
        for (int i = 0; i < params.b1.size(); ++i) params.b1(i) = rng.uniform(-0.1, 0.1);
        for (int i = 0; i < params.b2.size(); ++i) params.b2(i) = rng.uniform(-0.1, 0.1);
        Eigen::MatrixXd window = random_window(cfg, rng);
        Eigen::VectorXd probe(cfg.embed_dim);
        for (int i = 0; i < probe.size(); ++i) probe(i) = rng.uniform(-1.0, 1.0);

        EncoderGradients grads = backward(params, window, probe);
        auto loss = [&]() { return probe.dot(forward(params, window)); };

        double worst = 0.0;
        auto check_tensor = [&](Eigen::MatrixXd& tensor, const Eigen::MatrixXd& grad) {
            for (int r = 0; r < tensor.rows(); ++r) {
                for (int c = 0; c < tensor.cols(); ++c) {
                    double fd = oracles::central_difference(loss, tensor(r, c), h);
                    worst = std::max(worst, oracles::gradient_error(grad(r, c), fd));
                }
            }
        };
        auto check_vector = [&](Eigen::VectorXd& tensor, const Eigen::VectorXd& grad) {
            for (int i = 0; i < tensor.size(); ++i) {
                double fd = oracles::central_difference(loss, tensor(i), h);
                worst = std::max(worst, oracles::gradient_error(grad(i), fd));
            }
        };
        check_tensor(params.w1, grads.w1);
        check_tensor(params.w2, grads.w2);
        check_tensor(params.w3, grads.w3);
        check_vector(params.b1, grads.b1);
        check_vector(params.b2, grads.b2);
        check_vector(params.b3, grads.b3);
        check_tensor(window, grads.input);
        REQUIRE(worst < 1e-4);
    }
}

TEST_CASE("dead ReLU units pass no gradient", "[encoder]") {
    EncoderConfig cfg = small_config();
    EncoderParams params = init_encoder(cfg);
    params.b1.setConstant(-100.0);  // every layer-1 unit is dead
    RandomStream rng(37);
    Eigen::MatrixXd window = random_window(cfg, rng);
    Eigen::VectorXd probe = Eigen::VectorXd::Ones(cfg.embed_dim);
    EncoderGradients grads = backward(params, window, probe);
    CHECK(grads.w1.isZero());
    CHECK(grads.b1.isZero());
    CHECK(grads.input.isZero());
    CHECK(!grads.b3.isZero());  // the fully-connected bias still gets gradient
}

TEST_CASE("model files round-trip", "[encoder]") {
    testsupport::TempDir dir("model");
    EncoderConfig cfg = small_config();
    EncoderParams params = init_encoder(cfg);
    RandomStream rng(41);
    Eigen::MatrixXd window = random_window(cfg, rng);
    Embedding before = forward(params, window);

    const std::string path = dir.file("model.json");
    save_encoder(params, path);
    EncoderParams loaded = load_encoder(path);
    Embedding after = forward(loaded, window);
    CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);

    // saving the loaded model reproduces the file byte-for-byte
    save_encoder(loaded, dir.file("model2.json"));
    CHECK(testsupport::read_file(path) == testsupport::read_file(dir.file("model2.json")));
}

TEST_CASE("truncated model files fail to parse", "[encoder]") {
    testsupport::TempDir dir("trunc");
    EncoderParams params = init_encoder(small_config());
    const std::string path = dir.file("model.json");
    save_encoder(params, path);
    std::string text = testsupport::read_file(path);
    detail::write_text_file(path, text.substr(0, text.size() / 2));
    try {
        load_encoder(path);
        FAIL("expected parse error");
    } catch (const PoseError& e) {
        CHECK(e.code() == ErrorCode::parse);
    }
}

TEST_CASE("model/window point-count mismatch names both counts", "[encoder]") {
    EncoderConfig cfg;
    cfg.n_points = 39;
    cfg.n_frames = 15;
    cfg.s1_t = 1;
    cfg.s2_t = 1;
    cfg.c1 = 4;
    cfg.c2 = 4;
    cfg.embed_dim = 8;
    EncoderParams params = init_encoder(cfg);
    Eigen::MatrixXd window = Eigen::MatrixXd::Zero(15, 3 * 25);
    try {
        forward(params, window);
        FAIL("expected shape error");
    } catch (const PoseError& e) {
        CHECK(e.code() == ErrorCode::shape);
        CHECK(std::string(e.what()).find("39") != std::string::npos);
        CHECK(std::string(e.what()).find("25") != std::string::npos);
    }
}

TEST_CASE("tampered tensor shapes are rejected on load", "[encoder]") {
    testsupport::TempDir dir("shape");
    EncoderParams params = init_encoder(small_config());
    const std::string path = dir.file("model.json");
    save_encoder(params, path);
    Json object = detail::load_json_file(path);
    object["config"]["n_points"] = 5;  // tensors no longer match
    detail::write_text_file(path, object.dump());
    try {
        load_encoder(path);
        FAIL("expected shape error");
    } catch (const PoseError& e) {
        CHECK(e.code() == ErrorCode::shape);
    }
    object = detail::load_json_file(dir.file("model.json"));
    object["format_version"] = 2;
    detail::write_text_file(path, object.dump());
    CHECK_THROWS_AS(load_encoder(path), PoseError);
}

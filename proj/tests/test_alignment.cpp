#include <catch2/catch_amalgamated.hpp>

#include "posealign/alignment.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace posealign;
using testsupport::make_performance;
using testsupport::SyntheticSpec;

namespace {

const WindowSpec kTinySpec{1.5, 10.0, 0.5};

EncoderConfig tiny_encoder_config() {
    EncoderConfig cfg;
    cfg.n_frames = kTinySpec.frame_count();
    cfg.n_points = 7;
    cfg.c1 = 6;
    cfg.k1_t = 3;
    cfg.s1_t = 2;
    cfg.c2 = 8;
    cfg.k2_t = 2;
    cfg.s2_t = 1;
    cfg.embed_dim = 8;
    cfg.seed = 5;
    return cfg;
}

CostMatrix matrix_from(const Eigen::MatrixXd& values) {
    CostMatrix cost;
    cost.values = values;
    for (int i = 0; i < values.rows(); ++i) cost.row_times.push_back(0.5 * i);
    for (int j = 0; j < values.cols(); ++j) cost.col_times.push_back(0.5 * j);
    return cost;
}

void check_path_valid(const AlignmentPath& path, int n, int m) {
    REQUIRE(!path.cells.empty());
    CHECK(path.cells.front() == std::make_pair(0, 0));
    CHECK(path.cells.back() == std::make_pair(n - 1, m - 1));
    for (std::size_t k = 1; k < path.cells.size(); ++k) {
        int di = path.cells[k].first - path.cells[k - 1].first;
        int dj = path.cells[k].second - path.cells[k - 1].second;
        bool valid_step = (di == 1 && dj == 0) || (di == 0 && dj == 1) || (di == 1 && dj == 1);
        REQUIRE(valid_step);
    }
    CHECK(path.cell_costs.size() == path.cells.size());
}

std::vector<Embedding> unit_axes(int count, int dim) {
    std::vector<Embedding> embeddings;
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
        v(i % dim) = 1.0;
        embeddings.push_back(v);
    }
    return embeddings;
}

}  // namespace

TEST_CASE("cost matrix values are one minus cosine", "[alignment]") {
    std::vector<double> times = {0.0, 0.5};
    Eigen::VectorXd e1(2), e2(2);
    e1 << 1, 0;
    e2 << 0, 1;
    SECTION("identical lists give a zero diagonal") {
        std::vector<Embedding> emb = {e1, e2};
        CostMatrix cost = cost_matrix(emb, times, emb, times);
        CHECK(cost.values(0, 0) < 1e-12);
        CHECK(cost.values(1, 1) < 1e-12);
        CHECK(cost.values(0, 1) == Catch::Approx(1.0));  // orthogonal
    }
    SECTION("antipodal embeddings cost 2") {
        std::vector<Embedding> emb_a = {e1, e1};
        std::vector<Embedding> emb_b = {Eigen::VectorXd(-e1), Eigen::VectorXd(-e1)};
        CostMatrix cost = cost_matrix(emb_a, times, emb_b, times);
        CHECK(cost.values(0, 0) == Catch::Approx(2.0));
    }
    SECTION("zero-norm embeddings are reported with their index") {
        std::vector<Embedding> emb_a = {e1, Eigen::VectorXd::Zero(2)};
        try {
            cost_matrix(emb_a, times, emb_a, times);
            FAIL("expected zero-norm error");
        } catch (const PoseError& e) {
            CHECK(e.code() == ErrorCode::numeric);
            CHECK(std::string(e.what()).find("[1]") != std::string::npos);
        }
    }
}

TEST_CASE("dtw follows a zero diagonal exactly", "[alignment]") {
    const int n = 6;
    Eigen::MatrixXd values = Eigen::MatrixXd::Ones(n, n);
    values.diagonal().setZero();
    AlignmentPath path = dtw(matrix_from(values));
    REQUIRE(path.cells.size() == n);
    for (int i = 0; i < n; ++i) CHECK(path.cells[i] == std::make_pair(i, i));
    CHECK(path.total_cost() == 0.0);
}

TEST_CASE("dtw on a single column visits every row", "[alignment]") {
    Eigen::MatrixXd values(4, 1);
    values << 0.3, 0.1, 0.7, 0.2;
    AlignmentPath path = dtw(matrix_from(values));
    REQUIRE(path.cells.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(path.cells[i] == std::make_pair(i, 0));
    CHECK(path.total_cost() == Catch::Approx(1.3));
}

TEST_CASE("dtw ties prefer the diagonal", "[alignment]") {
    AlignmentPath path = dtw(matrix_from(Eigen::MatrixXd::Zero(5, 5)));
    REQUIRE(path.cells.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(path.cells[i] == std::make_pair(i, i));
}

TEST_CASE("dtw equals brute-force enumeration on random matrices", "[alignment]") {
    RandomStream rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(rng.index(7));
        int m = 1 + static_cast<int>(rng.index(7));
        Eigen::MatrixXd values(n, m);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) values(i, j) = rng.uniform(0.0, 2.0);
        }
        CostMatrix cost = matrix_from(values);
        AlignmentPath path = dtw(cost);
        check_path_valid(path, n, m);
        REQUIRE(path.total_cost() == Catch::Approx(oracles::dtw_brute_force(values)).margin(1e-9));
    }
}

TEST_CASE("dtw total cost is symmetric under transpose", "[alignment]") {
    RandomStream rng(103);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng.index(6));
        int m = 2 + static_cast<int>(rng.index(6));
        Eigen::MatrixXd values(n, m);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) values(i, j) = rng.uniform(0.0, 2.0);
        }
        double forward = dtw(matrix_from(values)).total_cost();
        double transposed = dtw(matrix_from(values.transpose().eval())).total_cost();
        CHECK(forward == Catch::Approx(transposed).margin(1e-9));
    }
}

TEST_CASE("a constant shift moves the optimum by c times the path length", "[alignment]") {
    RandomStream rng(107);
    const double shift = 0.37;
    for (int trial = 0; trial < 40; ++trial) {
        int n = 2 + static_cast<int>(rng.index(4));
        int m = 2 + static_cast<int>(rng.index(4));
        Eigen::MatrixXd values(n, m);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) values(i, j) = rng.uniform(0.0, 2.0);
        }
        Eigen::MatrixXd shifted = values.array() + shift;
        oracles::BruteForcePaths base = oracles::dtw_brute_force_paths(values);
        bool equal_lengths = true;
        for (int length : base.optimal_lengths) {
            if (length != base.optimal_lengths.front()) equal_lengths = false;
        }
        AlignmentPath path = dtw(matrix_from(values));
        AlignmentPath shifted_path = dtw(matrix_from(shifted));
        if (equal_lengths) {
            // the returned path stays optimal after the shift
            double path_cost_shifted = 0.0;
            for (const auto& [i, j] : path.cells) path_cost_shifted += shifted(i, j);
            CHECK(path_cost_shifted ==
                  Catch::Approx(oracles::dtw_brute_force(shifted)).margin(1e-9));
            CHECK(shifted_path.total_cost() ==
                  Catch::Approx(base.min_cost +
                                shift * static_cast<double>(base.optimal_lengths.front()))
                      .margin(1e-9));
        } else {
            // total-cost bookkeeping only
            CHECK(shifted_path.total_cost() ==
                  Catch::Approx(oracles::dtw_brute_force(shifted)).margin(1e-9));
        }
    }
}

TEST_CASE("ltw prior penalizes deviation from the diagonal", "[alignment]") {
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(4, 5);
    CostMatrix cost = matrix_from(values);
    SECTION("gamma zero leaves the matrix unchanged") {
        CostMatrix out = ltw_penalized(cost, 0.0);
        CHECK(out.values == values);
    }
    SECTION("square-matrix diagonal cells pay nothing") {
        CostMatrix square = matrix_from(Eigen::MatrixXd::Zero(5, 5));
        CostMatrix out = ltw_penalized(square, 2.0);
        for (int i = 0; i < 5; ++i) CHECK(out.values(i, i) == 0.0);
        CHECK(out.values(0, 4) == Catch::Approx(2.0));  // corner pays gamma
    }
    SECTION("rectangular corner pays gamma") {
        CostMatrix out = ltw_penalized(cost, 1.5);
        CHECK(out.values(0, 4) == Catch::Approx(1.5));
        CHECK(out.values(3, 0) == Catch::Approx(1.5));
        CHECK(out.values(0, 0) == 0.0);
        CHECK(out.values(3, 4) == 0.0);
    }
    SECTION("single-row matrices use 0 for the degenerate fraction") {
        CostMatrix row = matrix_from(Eigen::MatrixXd::Zero(1, 3));
        CostMatrix out = ltw_penalized(row, 2.0);
        CHECK(out.values(0, 0) == 0.0);
        CHECK(out.values(0, 2) == Catch::Approx(2.0));
    }
    SECTION("negative gamma is rejected") {
        CHECK_THROWS_AS(ltw_penalized(cost, -0.1), PoseError);
    }
}

TEST_CASE("self-alignment has near-zero mean cost on the diagonal", "[alignment]") {
    SyntheticSpec spec;
    spec.n_primitives = 5;
    spec.base_primitive_seconds = 1.6;
    PoseSequence seq = make_performance(spec, 201, "selfie").seq;
    EncoderParams params = init_encoder(tiny_encoder_config());
    AlignResult result = align_pair(params, seq, seq, kTinySpec);
    CHECK(result.mean_cost < 1e-6);
    CHECK_FALSE(result.flipped);
    CHECK(result.n == result.m);
    for (std::size_t k = 0; k < result.path.cells.size(); ++k) {
        CHECK(result.path.cells[k].first == result.path.cells[k].second);
    }
    CHECK(result.mean_cost >= 0.0);
    CHECK(result.mean_cost <= 2.0);
}

TEST_CASE("flip-aware alignment detects a mirrored copy", "[alignment]") {
    SyntheticSpec spec;
    spec.n_primitives = 5;
    spec.base_primitive_seconds = 1.6;
    PoseSequence seq = make_performance(spec, 202, "flip").seq;
    PoseSequence mirrored = mirror_lr(seq);
    mirrored.name = "flip_mirrored";
    EncoderParams params = init_encoder(tiny_encoder_config());

    AlignOptions options;
    options.flip_lr = true;
    AlignResult result = align_pair(params, seq, mirrored, kTinySpec, options);
    CHECK(result.flipped);
    CHECK(result.mean_cost < 1e-6);

    // without the flag the mirrored copy aligns poorly
    AlignResult plain = align_pair(params, seq, mirrored, kTinySpec);
    CHECK_FALSE(plain.flipped);
    CHECK(plain.mean_cost > result.mean_cost);
}

TEST_CASE("a truncated copy costs more than the full copy", "[alignment]") {
    SyntheticSpec spec;
    spec.n_primitives = 6;
    spec.base_primitive_seconds = 1.6;
    PoseSequence seq = make_performance(spec, 203, "full").seq;
    PoseSequence truncated = testsupport::truncate_sequence(seq, 0.6, "truncated");
    EncoderParams params = init_encoder(tiny_encoder_config());
    double full_cost = align_pair(params, seq, seq, kTinySpec).mean_cost;
    double truncated_cost = align_pair(params, seq, truncated, kTinySpec).mean_cost;
    CHECK(truncated_cost > full_cost);
}

TEST_CASE("keypose transfer through a diagonal path is the identity", "[alignment]") {
    const int n = 9;
    std::vector<double> times;
    AlignmentPath path;
    for (int i = 0; i < n; ++i) {
        times.push_back(0.5 * i);
        path.cells.emplace_back(i, i);
        path.cell_costs.push_back(0.0);
    }
    KeyposeLabels labels;
    labels.entries = {{"a", 0.6}, {"b", 2.1}, {"c", 3.9}};
    KeyposeLabels out = transfer_keyposes(path, labels, times, times);
    REQUIRE(out.entries.size() == 3);
    for (std::size_t k = 0; k < out.entries.size(); ++k) {
        CHECK(out.entries[k].first == labels.entries[k].first);
        CHECK(std::abs(out.entries[k].second - labels.entries[k].second) <= 0.5);
    }
}

TEST_CASE("keypose transfer follows a known 2x stretch path", "[alignment]") {
    // reference row i corresponds to target columns {2i, 2i+1}
    const int n = 10;
    std::vector<double> row_times, col_times;
    AlignmentPath path;
    for (int i = 0; i < n; ++i) row_times.push_back(0.5 * i);
    for (int j = 0; j < 2 * n; ++j) col_times.push_back(0.5 * j);
    for (int i = 0; i < n; ++i) {
        path.cells.emplace_back(i, 2 * i);
        path.cells.emplace_back(i, 2 * i + 1);
        path.cell_costs.push_back(0.0);
        path.cell_costs.push_back(0.0);
    }
    KeyposeLabels labels;
    labels.entries = {{"k0", 1.0}, {"k1", 2.5}, {"k2", 4.0}};
    KeyposeLabels out = transfer_keyposes(path, labels, row_times, col_times);
    for (std::size_t k = 0; k < labels.entries.size(); ++k) {
        CHECK(std::abs(out.entries[k].second - 2.0 * labels.entries[k].second) <= 0.5);
    }
}

TEST_CASE("a singularity run maps to the midpoint of its column range", "[alignment]") {
    // row 1 pins against columns 1..4 before the path moves on
    AlignmentPath path;
    path.cells = {{0, 0}, {1, 1}, {1, 2}, {1, 3}, {1, 4}, {2, 5}};
    path.cell_costs.assign(path.cells.size(), 0.0);
    std::vector<double> row_times = {0.0, 0.5, 1.0};
    std::vector<double> col_times = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
    KeyposeLabels labels;
    labels.entries = {{"pinned", 0.5}};
    KeyposeLabels out = transfer_keyposes(path, labels, row_times, col_times);
    CHECK(out.entries[0].second == Catch::Approx(0.5 * (0.5 + 2.0)));
}

TEST_CASE("keypose labels outside the reference span are rejected", "[alignment]") {
    AlignmentPath path;
    path.cells = {{0, 0}, {1, 1}};
    path.cell_costs = {0.0, 0.0};
    std::vector<double> times = {0.0, 0.5};
    KeyposeLabels labels;
    labels.entries = {{"late", 3.0}};
    CHECK_THROWS_AS(transfer_keyposes(path, labels, times, times), PoseError);
}

TEST_CASE("linear keypose transfer interpolates between anchors", "[alignment]") {
    KeyposeLabels labels;
    labels.entries = {{"start", 1.0}, {"mid", 3.0}, {"end", 5.0}};
    KeyposeLabels out = linear_transfer_keyposes(labels, 1.0, 5.0, 10.0, 18.0);
    CHECK(out.entries[0].second == Catch::Approx(10.0));
    CHECK(out.entries[1].second == Catch::Approx(14.0));
    CHECK(out.entries[2].second == Catch::Approx(18.0));
    CHECK_THROWS_AS(linear_transfer_keyposes(labels, 5.0, 5.0, 0.0, 1.0), PoseError);
}

TEST_CASE("euclidean metric cost matrices hold plain distances", "[alignment]") {
    Eigen::VectorXd e1(2), e2(2);
    e1 << 3, 0;
    e2 << 0, 4;
    std::vector<double> times = {0.0, 0.5};
    CostMatrix cost = cost_matrix({e1, e2}, times, {e1, e2}, times, EmbeddingMetric::euclidean);
    CHECK(cost.values(0, 0) == 0.0);
    CHECK(cost.values(0, 1) == Catch::Approx(5.0));
}

TEST_CASE("keypose csv files round-trip", "[alignment]") {
    testsupport::TempDir dir("keypose");
    KeyposeLabels labels;
    labels.entries = {{"opening", 1.25}, {"closing", 17.5}};
    labels.save(dir.file("k.csv"));
    KeyposeLabels loaded = KeyposeLabels::load(dir.file("k.csv"));
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[0].first == "opening");
    CHECK(loaded.entries[0].second == 1.25);
    CHECK(loaded.entries[1].first == "closing");
    CHECK(loaded.entries[1].second == 17.5);
}

TEST_CASE("alignment path csv and summary json are written", "[alignment]") {
    testsupport::TempDir dir("pathcsv");
    SyntheticSpec spec;
    spec.n_primitives = 3;
    spec.base_primitive_seconds = 1.5;
    PoseSequence seq = make_performance(spec, 204, "writer").seq;
    EncoderParams params = init_encoder(tiny_encoder_config());
    AlignResult result = align_pair(params, seq, seq, kTinySpec);
    save_path_csv(result.path, result.cost.row_times, result.cost.col_times, dir.file("path.csv"));
    std::string text = testsupport::read_file(dir.file("path.csv"));
    CHECK(text.rfind("i,j,cost,row_time,col_time\n", 0) == 0);
    Json summary = align_summary_json(result);
    CHECK(summary["flipped"] == false);
    CHECK(summary["n"] == result.n);
    CHECK(summary["path_length"] == result.path.cells.size());
}

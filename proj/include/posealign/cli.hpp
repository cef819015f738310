#pragma once

// Command-line front end. Subcommands: train, embed, align, harvest,
// transfer, tau, retarget, resample. Settings resolve as
// defaults < config file < flags. Every run is deterministic given --seed and
// identical inputs; error paths exit nonzero with a single
// "error: E_CODE: message" line on stderr.

#include <array>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "posealign/alignment.hpp"
#include "posealign/common.hpp"
#include "posealign/encoder.hpp"
#include "posealign/evaluation.hpp"
#include "posealign/manifest.hpp"
#include "posealign/normalize.hpp"
#include "posealign/pose_io.hpp"
#include "posealign/training.hpp"

namespace posealign {

struct RunConfig {
    WindowSpec window;
    EncoderConfig encoder;
    bool encoder_n_frames_set = false;
    bool encoder_n_points_set = false;
    TrainConfig train;
    LossConfig loss;
    AlignOptions align;
    std::uint64_t seed = 0;
    int threads = 0;  // 0: POSEALIGN_THREADS or 1

    void apply_seed(std::uint64_t value) {
        seed = value;
        encoder.seed = value;
        train.seed = value;
    }
};

namespace cli_detail {

inline LossKind loss_kind_from_name(const std::string& name) {
    if (name == "cosine" || name == "cosine_contrastive") return LossKind::cosine_contrastive;
    if (name == "hadsell" || name == "hadsell_margin") return LossKind::hadsell_margin;
    throw PoseError(ErrorCode::usage, "unknown loss kind \"" + name + "\"");
}

inline EmbeddingMetric metric_from_name(const std::string& name) {
    if (name == "cosine" || name == "cosine_distance") return EmbeddingMetric::cosine_distance;
    if (name == "euclidean") return EmbeddingMetric::euclidean;
    throw PoseError(ErrorCode::usage, "unknown metric \"" + name + "\"");
}

// "auto" enables the data-driven gamma (half the mean matrix cost).
inline void set_ltw_gamma(AlignOptions& options, const std::string& text) {
    if (text == "auto") {
        options.ltw_auto = true;
        options.ltw_gamma = 0.0;
        return;
    }
    options.ltw_auto = false;
    options.ltw_gamma = detail::parse_double(text, "--ltw-gamma");
    if (options.ltw_gamma < 0.0) throw PoseError(ErrorCode::usage, "--ltw-gamma must be >= 0");
}

inline void parse_config_file(RunConfig& run, const std::string& path) {
    Json config = detail::load_json_file(path);
    detail::check_json_keys(config, {"window", "encoder", "train", "loss", "align", "seed", "threads"},
                            path);
    if (config.contains("seed")) run.apply_seed(config["seed"].get<std::uint64_t>());
    if (config.contains("threads")) run.threads = config["threads"].get<int>();
    if (config.contains("window")) {
        const Json& window = config["window"];
        detail::check_json_keys(window, {"length_seconds", "sample_rate", "stride_seconds"},
                                path + ": window");
        if (window.contains("length_seconds")) run.window.length_seconds = window["length_seconds"].get<double>();
        if (window.contains("sample_rate")) run.window.sample_rate = window["sample_rate"].get<double>();
        if (window.contains("stride_seconds")) run.window.stride_seconds = window["stride_seconds"].get<double>();
    }
    if (config.contains("encoder")) {
        const Json& encoder = config["encoder"];
        detail::check_json_keys(encoder,
                                {"n_frames", "n_points", "c1", "k1_t", "s1_t", "c2", "k2_t", "s2_t",
                                 "embed_dim", "seed"},
                                path + ": encoder");
        auto get = [&](const char* key, int& field) {
            if (encoder.contains(key)) field = encoder[key].get<int>();
        };
        if (encoder.contains("n_frames")) {
            run.encoder.n_frames = encoder["n_frames"].get<int>();
            run.encoder_n_frames_set = true;
        }
        if (encoder.contains("n_points")) {
            run.encoder.n_points = encoder["n_points"].get<int>();
            run.encoder_n_points_set = true;
        }
        get("c1", run.encoder.c1);
        get("k1_t", run.encoder.k1_t);
        get("s1_t", run.encoder.s1_t);
        get("c2", run.encoder.c2);
        get("k2_t", run.encoder.k2_t);
        get("s2_t", run.encoder.s2_t);
        get("embed_dim", run.encoder.embed_dim);
        if (encoder.contains("seed")) run.encoder.seed = encoder["seed"].get<std::uint64_t>();
    }
    if (config.contains("train")) {
        const Json& train = config["train"];
        detail::check_json_keys(train,
                                {"batch_size", "lr", "momentum", "epochs_phase1", "epochs_phase2",
                                 "seed", "pair_two_augmented", "max_harvest_pairs"},
                                path + ": train");
        if (train.contains("batch_size")) run.train.batch_size = train["batch_size"].get<int>();
        if (train.contains("lr")) run.train.lr = train["lr"].get<double>();
        if (train.contains("momentum")) run.train.momentum = train["momentum"].get<double>();
        if (train.contains("epochs_phase1")) run.train.epochs_phase1 = train["epochs_phase1"].get<int>();
        if (train.contains("epochs_phase2")) run.train.epochs_phase2 = train["epochs_phase2"].get<int>();
        if (train.contains("seed")) run.train.seed = train["seed"].get<std::uint64_t>();
        if (train.contains("pair_two_augmented")) run.train.pair_two_augmented = train["pair_two_augmented"].get<bool>();
        if (train.contains("max_harvest_pairs")) run.train.max_harvest_pairs = train["max_harvest_pairs"].get<int>();
    }
    if (config.contains("loss")) {
        const Json& loss = config["loss"];
        detail::check_json_keys(loss, {"kind", "margin"}, path + ": loss");
        if (loss.contains("kind")) run.loss.kind = loss_kind_from_name(loss["kind"].get<std::string>());
        if (loss.contains("margin")) run.loss.margin = loss["margin"].get<double>();
    }
    if (config.contains("align")) {
        const Json& align = config["align"];
        detail::check_json_keys(align, {"flip_lr", "ltw_gamma", "metric"}, path + ": align");
        if (align.contains("flip_lr")) run.align.flip_lr = align["flip_lr"].get<bool>();
        if (align.contains("ltw_gamma")) {
            if (align["ltw_gamma"].is_string()) {
                set_ltw_gamma(run.align, align["ltw_gamma"].get<std::string>());
            } else {
                run.align.ltw_gamma = align["ltw_gamma"].get<double>();
            }
        }
        if (align.contains("metric")) run.align.metric = metric_from_name(align["metric"].get<std::string>());
    }
}

// Flag values land in optionals; only options the user actually passed
// override the config file.
struct FlagOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<double> stride, window_length, window_rate;
    bool flip_lr = false;
    std::optional<std::string> ltw_gamma;
    std::optional<std::string> metric;
    std::optional<int> batch_size, epochs_phase1, epochs_phase2, max_harvest_pairs, embed_dim;
    std::optional<double> lr, momentum, margin;
    std::optional<std::string> loss;
    bool pair_two_augmented = false;

    void apply(RunConfig& run) const {
        if (seed) run.apply_seed(*seed);
        if (threads) run.threads = *threads;
        if (stride) run.window.stride_seconds = *stride;
        if (window_length) run.window.length_seconds = *window_length;
        if (window_rate) run.window.sample_rate = *window_rate;
        if (flip_lr) run.align.flip_lr = true;
        if (ltw_gamma) set_ltw_gamma(run.align, *ltw_gamma);
        if (metric) run.align.metric = metric_from_name(*metric);
        if (batch_size) run.train.batch_size = *batch_size;
        if (epochs_phase1) run.train.epochs_phase1 = *epochs_phase1;
        if (epochs_phase2) run.train.epochs_phase2 = *epochs_phase2;
        if (max_harvest_pairs) run.train.max_harvest_pairs = *max_harvest_pairs;
        if (embed_dim) run.encoder.embed_dim = *embed_dim;
        if (lr) run.train.lr = *lr;
        if (momentum) run.train.momentum = *momentum;
        if (margin) run.loss.margin = *margin;
        if (loss) run.loss.kind = loss_kind_from_name(*loss);
        if (pair_two_augmented) run.train.pair_two_augmented = true;
    }
};

struct SequenceArgs {
    std::string layout_path;
    std::string frames_path;
    std::optional<double> rate;

    PoseSequence load() const { return load_sequence(layout_path, frames_path, rate); }
};

inline void ensure_parent_dir(const std::string& path) {
    std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline void save_embeddings_csv(const EmbeddedSequence& embedded, const std::string& path) {
    std::ostringstream out;
    out << "time";
    const int dim = embedded.embeddings.empty() ? 0 : static_cast<int>(embedded.embeddings[0].size());
    for (int d = 0; d < dim; ++d) out << ",e" << d;
    out << '\n';
    for (std::size_t i = 0; i < embedded.times.size(); ++i) {
        out << format_float(embedded.times[i]);
        for (int d = 0; d < dim; ++d) out << ',' << format_float(embedded.embeddings[i](d));
        out << '\n';
    }
    detail::write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Subcommand bodies

struct TrainArgs {
    std::string manifest_path;
    std::string phase = "both";
    std::string out_dir;
    std::string init_model;
};

inline int cmd_train(RunConfig& run, const TrainArgs& args) {
    if (args.phase != "1" && args.phase != "2" && args.phase != "both") {
        throw PoseError(ErrorCode::usage, "--phase must be 1, 2 or both");
    }
    Manifest manifest = Manifest::load(args.manifest_path);
    std::vector<PoseSequence> sequences = load_manifest_sequences(manifest);
    run.window.validate();

    EncoderConfig enc_config = run.encoder;
    if (!run.encoder_n_frames_set) enc_config.n_frames = run.window.frame_count();
    if (!run.encoder_n_points_set) enc_config.n_points = sequences.front().layout.point_count();
    run.train.threads = resolve_thread_count(run.threads);

    std::filesystem::create_directories(args.out_dir);
    const std::string model_path = args.out_dir + "/model.json";

    EncoderParams params;
    if (args.phase == "1" || args.phase == "both") {
        TrainResult phase1 = train_phase1(sequences, run.window, enc_config, run.train, run.loss);
        params = std::move(phase1.params);
        save_loss_csv(phase1.epoch_mean_loss, args.out_dir + "/loss_phase1.csv");
    } else {
        if (args.init_model.empty()) {
            throw PoseError(ErrorCode::usage, "--phase 2 needs --init-model from a phase-1 run");
        }
        params = load_encoder(args.init_model);
    }
    if (args.phase == "2" || args.phase == "both") {
        HarvestResult harvest = harvest_pairs(params, sequences, run.window,
                                              run.train.max_harvest_pairs, run.train.threads);
        save_harvest_csv(harvest, args.out_dir + "/harvest.csv");
        TrainResult phase2 =
            train_phase2(params, sequences, run.window, harvest.pairs, run.train, run.loss);
        params = std::move(phase2.params);
        save_loss_csv(phase2.epoch_mean_loss, args.out_dir + "/loss_phase2.csv");
    }
    save_encoder(params, model_path);
    std::cout << "model: " << model_path << '\n';
    return 0;
}

struct AlignArgs {
    std::string model_path;
    SequenceArgs seq_a, seq_b;
    std::string out_path;     // path CSV
    std::string out_summary;  // summary JSON
    // all-pairs mode
    std::string manifest_path;
    std::string reference;
    std::string out_csv;
};

inline int cmd_align_pairwise(RunConfig& run, const AlignArgs& args) {
    EncoderParams params = load_encoder(args.model_path);
    PoseSequence seq_a = args.seq_a.load();
    PoseSequence seq_b = args.seq_b.load();
    run.align.threads = resolve_thread_count(run.threads);
    AlignResult result = align_pair(params, seq_a, seq_b, run.window, run.align);
    if (!args.out_path.empty()) {
        ensure_parent_dir(args.out_path);
        save_path_csv(result.path, result.cost.row_times, result.cost.col_times, args.out_path);
    }
    Json summary = align_summary_json(result);
    if (!args.out_summary.empty()) {
        ensure_parent_dir(args.out_summary);
        detail::write_text_file(args.out_summary, summary.dump(2) + "\n");
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

inline int cmd_align_all_pairs(RunConfig& run, const AlignArgs& args) {
    EncoderParams params = load_encoder(args.model_path);
    Manifest manifest = Manifest::load(args.manifest_path);
    std::vector<PoseSequence> sequences = load_manifest_sequences(manifest);
    int reference_index = -1;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (sequences[i].name == args.reference) reference_index = static_cast<int>(i);
    }
    if (reference_index < 0) {
        throw PoseError(ErrorCode::usage,
                        "reference \"" + args.reference + "\" not found in manifest");
    }
    run.align.threads = resolve_thread_count(run.threads);
    auto costs = all_pairs_cost(params, sequences, reference_index, run.window, run.align);
    ensure_parent_dir(args.out_csv);
    save_pair_costs_csv(costs, args.out_csv);
    std::cout << "pair costs: " << args.out_csv << '\n';
    return 0;
}

struct TransferArgs {
    std::string model_path;
    SequenceArgs seq_a, seq_b;
    std::string keyposes_path;
    std::string out_path;
    bool linear = false;
    double src_start = 0, src_end = 0, dst_start = 0, dst_end = 0;
};

inline int cmd_transfer(RunConfig& run, const TransferArgs& args) {
    KeyposeLabels labels = KeyposeLabels::load(args.keyposes_path);
    KeyposeLabels transferred;
    if (args.linear) {
        transferred = linear_transfer_keyposes(labels, args.src_start, args.src_end, args.dst_start,
                                               args.dst_end);
    } else {
        if (args.model_path.empty()) {
            throw PoseError(ErrorCode::usage, "--model is required unless --linear is given");
        }
        EncoderParams params = load_encoder(args.model_path);
        PoseSequence seq_a = args.seq_a.load();
        PoseSequence seq_b = args.seq_b.load();
        run.align.threads = resolve_thread_count(run.threads);
        AlignResult result = align_pair(params, seq_a, seq_b, run.window, run.align);
        transferred = transfer_keyposes(result.path, labels, result.cost.row_times,
                                        result.cost.col_times);
    }
    ensure_parent_dir(args.out_path);
    transferred.save(args.out_path);
    std::cout << "keyposes: " << args.out_path << '\n';
    return 0;
}

struct TauArgs {
    std::string model_path;
    std::string manifest_path;
    std::string out_csv;
    std::string out_json;
};

inline int cmd_tau(RunConfig& run, const TauArgs& args) {
    EncoderParams params = load_encoder(args.model_path);
    Manifest manifest = Manifest::load(args.manifest_path);
    std::vector<PoseSequence> sequences = load_manifest_sequences(manifest);
    if (sequences.size() < 2) {
        throw PoseError(ErrorCode::validation, "tau needs at least 2 sequences");
    }
    const int threads = resolve_thread_count(run.threads);
    std::vector<EmbeddedSequence> embedded(sequences.size());
    parallel_for(sequences.size(), threads, [&](std::size_t i) {
        embedded[i] = embed_sequence(params, sequences[i], run.window);
    });

    // With actions present, only within-action pairs are scored.
    auto action_of = [&](std::size_t i) -> std::string {
        return manifest.entries[i].action.value_or("");
    };
    bool any_action = false;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (!action_of(i).empty()) any_action = true;
    }
    TauReport report;
    std::map<std::string, std::pair<double, int>> by_action;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        for (std::size_t j = i + 1; j < sequences.size(); ++j) {
            if (any_action && action_of(i) != action_of(j)) continue;
            double tau = kendalls_tau(embedded[i].embeddings, embedded[j].embeddings,
                                      run.align.metric);
            report.per_pair.push_back({sequences[i].name, sequences[j].name, tau});
            if (any_action) {
                auto& [sum, count] = by_action[action_of(i)];
                sum += tau;
                ++count;
            }
        }
    }
    if (report.per_pair.empty()) {
        throw PoseError(ErrorCode::validation, "no sequence pairs to score");
    }
    report.finalize();
    if (!args.out_csv.empty()) {
        ensure_parent_dir(args.out_csv);
        save_tau_csv(report, args.out_csv);
    }

    Json summary;
    summary["mean_tau"] = round_to_9_digits(report.mean_tau);
    summary["metric"] =
        run.align.metric == EmbeddingMetric::cosine_distance ? "cosine_distance" : "euclidean";
    summary["symmetrized"] = true;
    Json per_pair = Json::array();
    for (const auto& entry : report.per_pair) {
        per_pair.push_back({{"seq_a", entry.seq_a}, {"seq_b", entry.seq_b},
                            {"tau", round_to_9_digits(entry.tau)}});
    }
    summary["per_pair"] = per_pair;
    if (any_action) {
        // per-action means, then the mean over actions
        Json actions = Json::object();
        double action_sum = 0.0;
        for (const auto& [action, stats] : by_action) {
            double mean = stats.first / stats.second;
            actions[action] = round_to_9_digits(mean);
            action_sum += mean;
        }
        summary["per_action"] = actions;
        summary["action_mean"] = round_to_9_digits(action_sum / by_action.size());
    }
    if (!args.out_json.empty()) {
        ensure_parent_dir(args.out_json);
        detail::write_text_file(args.out_json, summary.dump(2) + "\n");
    }
    std::cout << "mean_tau: " << format_float(report.mean_tau) << '\n';
    return 0;
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args) {
    using namespace cli_detail;
    RunConfig run;
    FlagOverrides flags;
    std::string config_path;

    CLI::App app{"posealign: contrastive pose-sequence embeddings and DTW alignment"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", flags.seed, "seed for init, shuffling, augmentation");
        cmd->add_option("--threads", flags.threads, "worker threads (env POSEALIGN_THREADS)");
    };
    auto add_window_flags = [&](CLI::App* cmd) {
        cmd->add_option("--stride", flags.stride, "window stride (seconds)");
        cmd->add_option("--window-length", flags.window_length, "window length (seconds)");
        cmd->add_option("--window-rate", flags.window_rate, "window sample rate (fps)");
    };
    auto add_align_flags = [&](CLI::App* cmd) {
        cmd->add_flag("--flip-lr", flags.flip_lr, "also try mirrored B, keep the cheaper alignment");
        cmd->add_option("--ltw-gamma", flags.ltw_gamma,
                        "linear-time-warping prior strength, or \"auto\"");
        cmd->add_option("--metric", flags.metric, "cosine or euclidean");
    };
    auto add_sequence_options = [](CLI::App* cmd, SequenceArgs& seq, const std::string& suffix,
                                   bool required) {
        auto* layout = cmd->add_option("--layout" + suffix, seq.layout_path, "layout JSON file");
        auto* frames = cmd->add_option("--frames" + suffix, seq.frames_path, "frames CSV file");
        if (required) {
            layout->required();
            frames->required();
        }
        cmd->add_option("--rate" + suffix, seq.rate, "frame rate override (frames/second)");
    };

    // train
    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "two-phase contrastive training");
    train_cmd->add_option("--manifest", train_args.manifest_path, "corpus manifest JSON")->required();
    train_cmd->add_option("--phase", train_args.phase, "1, 2 or both (default both)");
    train_cmd->add_option("--out-dir", train_args.out_dir, "output directory")->required();
    train_cmd->add_option("--init-model", train_args.init_model, "phase-1 model for --phase 2");
    train_cmd->add_option("--batch-size", flags.batch_size);
    train_cmd->add_option("--lr", flags.lr);
    train_cmd->add_option("--momentum", flags.momentum);
    train_cmd->add_option("--epochs-phase1", flags.epochs_phase1);
    train_cmd->add_option("--epochs-phase2", flags.epochs_phase2);
    train_cmd->add_option("--max-harvest-pairs", flags.max_harvest_pairs);
    train_cmd->add_option("--embed-dim", flags.embed_dim);
    train_cmd->add_flag("--pair-two-augmented", flags.pair_two_augmented,
                        "pair two augmented samples instead of (original, augmented)");
    train_cmd->add_option("--loss", flags.loss, "cosine or hadsell");
    train_cmd->add_option("--margin", flags.margin, "hadsell margin");
    add_common(train_cmd);
    add_window_flags(train_cmd);

    // embed
    SequenceArgs embed_seq;
    std::string embed_model, embed_out;
    CLI::App* embed_cmd = app.add_subcommand("embed", "embed strided windows of one sequence");
    embed_cmd->add_option("--model", embed_model, "model JSON")->required();
    add_sequence_options(embed_cmd, embed_seq, "", true);
    embed_cmd->add_option("--out", embed_out, "output CSV")->required();
    add_common(embed_cmd);
    add_window_flags(embed_cmd);

    // align
    AlignArgs align_args;
    CLI::App* align_cmd = app.add_subcommand("align", "DTW-align two sequences (or all pairs)");
    align_cmd->add_option("--model", align_args.model_path, "model JSON")->required();
    add_sequence_options(align_cmd, align_args.seq_a, "-a", false);
    add_sequence_options(align_cmd, align_args.seq_b, "-b", false);
    align_cmd->add_option("--out-path", align_args.out_path, "alignment path CSV");
    align_cmd->add_option("--out-summary", align_args.out_summary, "summary JSON");
    align_cmd->add_option("--manifest", align_args.manifest_path, "manifest for all-pairs mode");
    align_cmd->add_option("--reference", align_args.reference, "reference name (all-pairs mode)");
    align_cmd->add_option("--out-csv", align_args.out_csv, "name,mean_cost CSV (all-pairs mode)");
    add_common(align_cmd);
    add_window_flags(align_cmd);
    add_align_flags(align_cmd);

    // harvest
    std::string harvest_model, harvest_manifest, harvest_out;
    CLI::App* harvest_cmd = app.add_subcommand("harvest", "mine cross-performance pairs via DTW");
    harvest_cmd->add_option("--model", harvest_model)->required();
    harvest_cmd->add_option("--manifest", harvest_manifest)->required();
    harvest_cmd->add_option("--out", harvest_out, "harvest CSV")->required();
    harvest_cmd->add_option("--max-harvest-pairs", flags.max_harvest_pairs);
    add_common(harvest_cmd);
    add_window_flags(harvest_cmd);

    // transfer
    TransferArgs transfer_args;
    CLI::App* transfer_cmd =
        app.add_subcommand("transfer", "transfer keypose labels across performances");
    transfer_cmd->add_option("--model", transfer_args.model_path);
    add_sequence_options(transfer_cmd, transfer_args.seq_a, "-a", false);
    add_sequence_options(transfer_cmd, transfer_args.seq_b, "-b", false);
    transfer_cmd->add_option("--keyposes", transfer_args.keyposes_path, "keypose CSV")->required();
    transfer_cmd->add_option("--out", transfer_args.out_path, "output keypose CSV")->required();
    transfer_cmd->add_flag("--linear", transfer_args.linear, "classical linear time warping baseline");
    transfer_cmd->add_option("--src-start", transfer_args.src_start);
    transfer_cmd->add_option("--src-end", transfer_args.src_end);
    transfer_cmd->add_option("--dst-start", transfer_args.dst_start);
    transfer_cmd->add_option("--dst-end", transfer_args.dst_end);
    add_common(transfer_cmd);
    add_window_flags(transfer_cmd);
    add_align_flags(transfer_cmd);

    // tau
    TauArgs tau_args;
    CLI::App* tau_cmd = app.add_subcommand("tau", "Kendall's Tau over a corpus");
    tau_cmd->add_option("--model", tau_args.model_path)->required();
    tau_cmd->add_option("--manifest", tau_args.manifest_path)->required();
    tau_cmd->add_option("--out-csv", tau_args.out_csv);
    tau_cmd->add_option("--out-json", tau_args.out_json);
    add_common(tau_cmd);
    add_window_flags(tau_cmd);
    add_align_flags(tau_cmd);

    // retarget
    SequenceArgs retarget_seq;
    std::string retarget_map, retarget_target_layout, retarget_out;
    CLI::App* retarget_cmd =
        app.add_subcommand("retarget", "map a sequence onto another point layout");
    retarget_cmd->add_option("--map", retarget_map, "retarget map JSON")->required();
    add_sequence_options(retarget_cmd, retarget_seq, "", true);
    retarget_cmd->add_option("--target-layout", retarget_target_layout, "target layout JSON")
        ->required();
    retarget_cmd->add_option("--out", retarget_out, "output frames CSV")->required();
    add_common(retarget_cmd);

    // resample
    SequenceArgs resample_seq;
    double resample_rate = 0.0;
    std::string resample_out;
    CLI::App* resample_cmd = app.add_subcommand("resample", "linear-interpolation resampling");
    add_sequence_options(resample_cmd, resample_seq, "", true);
    resample_cmd->add_option("--target-rate", resample_rate, "output frames/second")->required();
    resample_cmd->add_option("--out", resample_out, "output frames CSV")->required();
    add_common(resample_cmd);

    std::vector<const char*> argv;
    argv.push_back("posealign");
    for (const auto& arg : args) argv.push_back(arg.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << error_code_name(ErrorCode::usage) << ": " << e.what() << '\n';
        return 1;
    }

    try {
        if (!config_path.empty()) parse_config_file(run, config_path);
        flags.apply(run);

        if (train_cmd->parsed()) return cmd_train(run, train_args);
        if (embed_cmd->parsed()) {
            EncoderParams params = load_encoder(embed_model);
            PoseSequence seq = embed_seq.load();
            EmbeddedSequence embedded =
                embed_sequence(params, seq, run.window, resolve_thread_count(run.threads));
            ensure_parent_dir(embed_out);
            save_embeddings_csv(embedded, embed_out);
            std::cout << "embeddings: " << embed_out << '\n';
            return 0;
        }
        if (align_cmd->parsed()) {
            if (!align_args.manifest_path.empty()) {
                if (align_args.reference.empty() || align_args.out_csv.empty()) {
                    throw PoseError(ErrorCode::usage,
                                    "all-pairs mode needs --reference and --out-csv");
                }
                return cmd_align_all_pairs(run, align_args);
            }
            if (align_args.seq_a.layout_path.empty() || align_args.seq_b.layout_path.empty() ||
                align_args.seq_a.frames_path.empty() || align_args.seq_b.frames_path.empty()) {
                throw PoseError(ErrorCode::usage,
                                "pairwise mode needs --layout-a/--frames-a/--layout-b/--frames-b");
            }
            return cmd_align_pairwise(run, align_args);
        }
        if (harvest_cmd->parsed()) {
            EncoderParams params = load_encoder(harvest_model);
            Manifest manifest = Manifest::load(harvest_manifest);
            std::vector<PoseSequence> sequences = load_manifest_sequences(manifest);
            HarvestResult harvest = harvest_pairs(params, sequences, run.window,
                                                  run.train.max_harvest_pairs,
                                                  resolve_thread_count(run.threads));
            ensure_parent_dir(harvest_out);
            save_harvest_csv(harvest, harvest_out);
            std::cout << "harvested " << harvest.pairs.size() << " pairs: " << harvest_out << '\n';
            return 0;
        }
        if (transfer_cmd->parsed()) {
            if (!transfer_args.linear &&
                (transfer_args.seq_a.layout_path.empty() || transfer_args.seq_b.layout_path.empty() ||
                 transfer_args.seq_a.frames_path.empty() ||
                 transfer_args.seq_b.frames_path.empty())) {
                throw PoseError(ErrorCode::usage,
                                "transfer needs --layout-a/--frames-a/--layout-b/--frames-b");
            }
            return cmd_transfer(run, transfer_args);
        }
        if (tau_cmd->parsed()) return cmd_tau(run, tau_args);
        if (retarget_cmd->parsed()) {
            PoseSequence seq = retarget_seq.load();
            RetargetMap map = RetargetMap::load(retarget_map);
            PointLayout target = PointLayout::load(retarget_target_layout);
            PoseSequence out = retarget(seq, map, target);
            ensure_parent_dir(retarget_out);
            save_frames_csv(out, retarget_out);
            std::cout << "retargeted: " << retarget_out << '\n';
            return 0;
        }
        if (resample_cmd->parsed()) {
            PoseSequence seq = resample_seq.load();
            PoseSequence out = resample(seq, resample_rate);
            ensure_parent_dir(resample_out);
            save_frames_csv(out, resample_out);
            std::cout << "resampled: " << resample_out << '\n';
            return 0;
        }
        throw PoseError(ErrorCode::usage, "no subcommand given");
    } catch (const PoseError& e) {
        std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: E_INTERNAL: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace posealign

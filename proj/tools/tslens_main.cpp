// ts-lens command line: synthetic corpus generation, capture, similarity,
// block pruning, probing and steering over the toy encoder model.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tslens/tslens.hpp"

using namespace tslens;

namespace {

struct GlobalOpts {
    std::string out_dir;
    bool quiet = false;
};

std::string joined(const GlobalOpts& g, const std::string& path) {
    if (g.out_dir.empty() || path.empty() || path.front() == '/') return path;
    return g.out_dir + "/" + path;
}

void say(const GlobalOpts& g, const std::string& line) {
    if (!g.quiet) std::printf("%s\n", line.c_str());
}

std::vector<GenSpec> parse_classes(const std::string& csv, bool full_scale,
                                   std::vector<std::string>& names) {
    std::vector<GenSpec> specs;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        const std::string name = csv.substr(pos, next - pos);
        if (!name.empty()) {
            PatternClass cls;
            if (!pattern_class_from_string(name, cls))
                throw CLI::ValidationError(
                    "--classes",
                    "unknown class '" + name +
                        "'; valid classes: constant, increasing_slope, decreasing_slope, "
                        "sine_constant, sine_increasing, sine_decreasing");
            specs.push_back(full_scale ? GenSpec::full_scale(cls) : GenSpec::desk_scale(cls));
            names.push_back(name);
        }
        pos = next + 1;
        if (next == csv.size()) break;
    }
    if (specs.empty()) throw CLI::ValidationError("--classes", "no classes given");
    return specs;
}

int parse_int_flag(const std::string& flag, const std::string& text) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        throw CLI::ValidationError(flag, "expected a number, got '" + text + "'");
    return std::stoi(text);
}

std::vector<int> parse_layer_list(const std::string& text, int total_layers) {
    if (text == "all" || text.empty()) return {};
    if (text == "last") return {total_layers};
    std::vector<int> layers;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        const std::string tok = text.substr(pos, next - pos);
        if (!tok.empty()) layers.push_back(parse_int_flag("--layers", tok));
        pos = next + 1;
        if (next == text.size()) break;
    }
    for (int l : layers)
        if (l < 1 || l > total_layers)
            throw Error("--layers: layer " + std::to_string(l) + " outside 1.." +
                        std::to_string(total_layers));
    return layers;
}

int run(int argc, char** argv) {
    CLI::App app{"ts-lens: layer-similarity analysis, block pruning, linear probing and "
                 "activation steering on a deterministic toy time-series transformer"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--out-dir", g.out_dir, "directory prefix for relative output paths");
    app.add_flag("--quiet", g.quiet, "suppress one-line summaries");

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_classes = "constant,sine_constant";
    std::size_t gen_n = 512, gen_len = 128;
    std::uint64_t gen_seed = 7;
    bool gen_normalize = false, gen_full = false;
    std::string gen_out = "data.tlt";
    gen->add_option("--classes", gen_classes, "comma-separated pattern classes");
    gen->add_option("--n", gen_n, "series per class");
    gen->add_option("--len", gen_len, "series length T");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_flag("--normalize", gen_normalize, "z-normalize each row");
    gen->add_flag("--full-scale", gen_full, "period f=128 presets instead of desk f=32");
    gen->add_option("--out", gen_out, "output tensor path");
    gen->callback([&] {
        std::vector<std::string> names;
        std::vector<GenSpec> specs = parse_classes(gen_classes, gen_full, names);
        SeriesSet set = make_dataset(specs, gen_n, gen_len, gen_seed, gen_normalize);
        const std::string path = joined(g, gen_out);
        save_dataset(path, set);
        say(g, "gen: n=" + std::to_string(set.n) + " T=" + std::to_string(set.length) +
                   " checksum=" + hex64(set.checksum()) + " out=" + path);
    });

    // ---- init ----
    auto* init = app.add_subcommand("init", "initialize seeded model weights");
    std::size_t init_layers = 8, init_dim = 64, init_heads = 4, init_patch = 8,
                init_seq = 128, init_ff = 4;
    std::uint64_t init_seed = 1;
    std::string init_out = "model.tlt";
    init->add_option("--layers", init_layers, "encoder layers L");
    init->add_option("--dim", init_dim, "hidden width D");
    init->add_option("--heads", init_heads, "attention heads H");
    init->add_option("--patch", init_patch, "patch length P");
    init->add_option("--seq-len", init_seq, "input length T");
    init->add_option("--ff-mult", init_ff, "feed-forward width multiplier");
    init->add_option("--seed", init_seed, "weight init seed");
    init->add_option("--out", init_out, "output weights path");
    init->callback([&] {
        ModelConfig cfg;
        cfg.layers = init_layers;
        cfg.dim = init_dim;
        cfg.heads = init_heads;
        cfg.patch = init_patch;
        cfg.seq_len = init_seq;
        cfg.ff_mult = init_ff;
        cfg.init_seed = init_seed;
        Weights w = init_model(cfg);
        const std::string path = joined(g, init_out);
        save_weights(path, w);
        say(g, "init: L=" + std::to_string(cfg.layers) + " D=" + std::to_string(cfg.dim) +
                   " N=" + std::to_string(cfg.tokens()) + " model=" + hex64(model_hash(w)) +
                   " out=" + path);
    });

    // ---- capture ----
    auto* capture = app.add_subcommand("capture", "run the model and record residual streams");
    std::string cap_model = "model.tlt", cap_data = "data.tlt", cap_out = "caps.tlt";
    std::string cap_plan, cap_steer, cap_mode = "all", cap_layers = "last";
    double cap_lambda = 1.0;
    int cap_token = -1;
    capture->add_option("--model", cap_model, "weights file");
    capture->add_option("--data", cap_data, "dataset file");
    capture->add_option("--skip-plan", cap_plan, "pruning plan json (skip-at-execution)");
    capture->add_option("--steer", cap_steer, "steering matrix tensor");
    capture->add_option("--lambda", cap_lambda, "steering strength");
    capture->add_option("--mode", cap_mode, "steer token mode: all | single");
    capture->add_option("--token", cap_token, "token index for single mode (default last)");
    capture->add_option("--layers", cap_layers, "steered layers: last | all | i,j,...");
    capture->add_option("--out", cap_out, "output captures path");
    capture->callback([&] {
        Weights w = load_weights(joined(g, cap_model));
        const ModelConfig& cfg = w.config;
        SeriesSet data = load_dataset(joined(g, cap_data));

        ForwardOptions opts;
        SkipMask mask;
        if (!cap_plan.empty()) {
            std::ifstream f(joined(g, cap_plan));
            if (!f) throw IoFailure("capture: cannot open " + cap_plan);
            PruningPlan plan = plan_from_json(nlohmann::json::parse(f));
            if (plan.total_layers != static_cast<int>(cfg.layers))
                throw ShapeMismatch("capture: plan layer count does not match model");
            mask = to_skip_mask(plan);
            opts.mask = &mask;
        }
        SteeringMatrix steer;
        if (!cap_steer.empty()) {
            steer = load_steering(joined(g, cap_steer));
            if (steer.model_hash != model_hash(w))
                throw ModelMismatch("capture: steering matrix from model " +
                                    hex64(steer.model_hash) + " but weights hash to " +
                                    hex64(model_hash(w)));
            opts.steer = &steer;
            opts.steer_cfg.lambda = cap_lambda;
            opts.steer_cfg.mode =
                cap_mode == "single" ? SteerMode::single_token : SteerMode::all_tokens;
            opts.steer_cfg.token_index =
                cap_token < 0 ? cfg.tokens() - 1 : static_cast<std::size_t>(cap_token);
            opts.steer_cfg.layers =
                parse_layer_list(cap_layers, static_cast<int>(cfg.layers));
            if (!SteerConfig::lambda_in_recommended_range(cap_lambda) && cap_lambda != 0.0)
                std::fprintf(stderr,
                             "warning: |lambda| = %g outside the recommended [0.1, 2.0]\n",
                             std::abs(cap_lambda));
        }
        CaptureSet caps = capture_dataset(cfg, w, data, opts);
        const std::string path = joined(g, cap_out);
        save_captures(path, caps);
        say(g, "capture: shape=(" + std::to_string(caps.layers) + ", " +
                   std::to_string(caps.n) + ", " + std::to_string(caps.tokens) + ", " +
                   std::to_string(caps.dim) + ") model=" + hex64(caps.model_hash) +
                   " data=" + hex64(caps.dataset_checksum) + " out=" + path);
    });

    // ---- sim ----
    auto* sim = app.add_subcommand("sim", "layer x layer similarity matrix");
    std::string sim_a = "caps.tlt", sim_b, sim_metric = "cka", sim_reduction = "mean";
    std::string sim_out = "sim.csv";
    bool sim_embed = false;
    sim->add_option("--a", sim_a, "captures file");
    sim->add_option("--b", sim_b, "second captures file (cross-model)");
    sim->add_option("--metric", sim_metric, "cka | cosine | svcca");
    sim->add_option("--reduction", sim_reduction, "mean | flatten");
    sim->add_flag("--include-embedding", sim_embed, "include the post-embedding stream");
    sim->add_option("--out", sim_out, "output csv path");
    sim->callback([&] {
        CaptureSet a = load_captures(joined(g, sim_a));
        CaptureSet b_store;
        const CaptureSet* b = &a;
        if (!sim_b.empty()) {
            b_store = load_captures(joined(g, sim_b));
            b = &b_store;
        }
        SimMetric metric = SimMetric::cka;
        if (sim_metric == "cosine") metric = SimMetric::cosine;
        else if (sim_metric == "svcca") metric = SimMetric::svcca;
        else if (sim_metric != "cka")
            throw Error("sim: unknown metric '" + sim_metric + "'");
        Reduction reduction =
            sim_reduction == "flatten" ? Reduction::token_flatten : Reduction::token_mean;
        SimilarityMatrix matrix = layer_matrix(a, *b, metric, reduction, sim_embed);

        const std::string path = joined(g, sim_out);
        write_matrix_csv(path, matrix.values);
        nlohmann::json meta;
        meta["metric"] = to_string(matrix.metric);
        meta["reduction"] = to_string(matrix.reduction);
        meta["model_hash_a"] = hex64(matrix.model_hash_a);
        meta["model_hash_b"] = hex64(matrix.model_hash_b);
        meta["dataset_checksum"] = hex64(matrix.dataset_checksum);
        meta["first_layer"] = matrix.first_layer;
        std::ofstream meta_out(sidecar_path(path), std::ios::trunc);
        if (!meta_out) throw IoFailure("sim: cannot open " + sidecar_path(path));
        meta_out << meta.dump(2) << "\n";
        say(g, "sim: metric=" + std::string(to_string(matrix.metric)) + " shape=" +
                   std::to_string(matrix.values.rows) + "x" +
                   std::to_string(matrix.values.cols) + " out=" + path);
    });

    // ---- blocks ----
    auto* blocks_cmd = app.add_subcommand("blocks", "identify redundant layer blocks");
    std::string blk_sim = "sim.csv", blk_out = "blocks.json";
    double blk_tau = 0.85;
    int blk_k = 3;
    blocks_cmd->add_option("--sim", blk_sim, "similarity csv (square, self-comparison)");
    blocks_cmd->add_option("--tau", blk_tau, "similarity threshold");
    blocks_cmd->add_option("--k", blk_k, "minimum block size");
    blocks_cmd->add_option("--out", blk_out, "output blocks json");
    blocks_cmd->callback([&] {
        const std::string sim_path = joined(g, blk_sim);
        Matrix m = read_matrix_csv(sim_path);
        BlockSet blocks = identify_blocks(m, blk_tau, blk_k);
        {
            std::ifstream src(sim_path, std::ios::binary);
            std::string bytes((std::istreambuf_iterator<char>(src)),
                              std::istreambuf_iterator<char>());
            blocks.source_checksum = fnv1a64(bytes.data(), bytes.size());
        }
        const std::string path = joined(g, blk_out);
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoFailure("blocks: cannot open " + path);
        f << to_json(blocks).dump(2) << "\n";

        std::string listing = "[";
        for (std::size_t i = 0; i < blocks.blocks.size(); ++i) {
            if (i) listing += ",";
            listing += "[" + std::to_string(blocks.blocks[i].start) + "," +
                       std::to_string(blocks.blocks[i].end) + "]";
        }
        listing += "]";
        char tau_text[32];
        std::snprintf(tau_text, sizeof(tau_text), "%g", blk_tau);
        say(g, "blocks: " + listing + " tau=" + std::string(tau_text) +
                   " k=" + std::to_string(blk_k) + " out=" + path);
    });

    // ---- prune ----
    auto* prune = app.add_subcommand("prune", "turn blocks into a pruning plan");
    std::string prune_blocks = "blocks.json", prune_selection = "all", prune_out = "plan.json";
    int prune_total = 0;
    prune->add_option("--blocks", prune_blocks, "blocks json");
    prune->add_option("--selection", prune_selection, "all | block index (1-based)");
    prune->add_option("--total-layers", prune_total, "override encoder layer count");
    prune->add_option("--out", prune_out, "output plan json");
    prune->callback([&] {
        std::ifstream f(joined(g, prune_blocks));
        if (!f) throw IoFailure("prune: cannot open " + prune_blocks);
        BlockSet blocks = blockset_from_json(nlohmann::json::parse(f));
        const int total = prune_total > 0 ? prune_total : blocks.total_layers;
        if (total <= 0)
            throw Error("prune: layer count unknown; pass --total-layers");
        PruneSelection sel = PruneSelection::every();
        if (prune_selection != "all")
            sel = PruneSelection::single(parse_int_flag("--selection", prune_selection));
        PruningPlan plan = plan_prune(blocks, total, sel);
        const std::string path = joined(g, prune_out);
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoFailure("prune: cannot open " + path);
        out << to_json(plan).dump(2) << "\n";
        char text[64];
        std::snprintf(text, sizeof(text), "sparsity: %.2f%%", 100.0 * encoder_sparsity(plan));
        say(g, std::string(text) + " skipped=" + std::to_string(plan.skipped.size()) + "/" +
                   std::to_string(plan.total_layers) + " out=" + path);
    });

    // ---- bench ----
    auto* bench_cmd = app.add_subcommand("bench", "forward-pass latency under a plan");
    std::string bench_model = "model.tlt", bench_plan, bench_data, bench_out;
    int bench_reps = 100;
    std::uint64_t bench_seed = 7;
    bench_cmd->add_option("--model", bench_model, "weights file");
    bench_cmd->add_option("--plan", bench_plan, "pruning plan json (default: no pruning)");
    bench_cmd->add_option("--reps", bench_reps, "timed passes (plus 5 warm-up)");
    bench_cmd->add_option("--data", bench_data, "dataset file; default: one synthetic sample");
    bench_cmd->add_option("--seed", bench_seed, "seed for the default sample");
    bench_cmd->add_option("--out", bench_out, "optional stats json");
    bench_cmd->callback([&] {
        Weights w = load_weights(joined(g, bench_model));
        const ModelConfig& cfg = w.config;
        SeriesSet data;
        if (bench_data.empty()) {
            data = make_dataset({GenSpec::desk_scale(PatternClass::sine_constant)}, 1,
                                cfg.seq_len, bench_seed, false);
        } else {
            data = load_dataset(joined(g, bench_data));
        }
        PruningPlan plan;
        plan.total_layers = static_cast<int>(cfg.layers);
        if (!bench_plan.empty()) {
            std::ifstream f(joined(g, bench_plan));
            if (!f) throw IoFailure("bench: cannot open " + bench_plan);
            plan = plan_from_json(nlohmann::json::parse(f));
        }
        LatencyStats stats =
            bench(cfg, w, plan, bench_reps, std::span<const float>(data.series), data.n);
        char text[160];
        std::snprintf(text, sizeof(text),
                      "bench: median=%.4fms mean=%.4fms stdev=%.4fms reps=%d sparsity=%.2f%%",
                      stats.median_ms, stats.mean_ms, stats.stdev_ms, stats.reps,
                      100.0 * encoder_sparsity(plan));
        say(g, text);
        if (!bench_out.empty()) {
            nlohmann::json j;
            j["median_ms"] = stats.median_ms;
            j["mean_ms"] = stats.mean_ms;
            j["stdev_ms"] = stats.stdev_ms;
            j["reps"] = stats.reps;
            j["sparsity"] = encoder_sparsity(plan);
            std::ofstream out(joined(g, bench_out), std::ios::trunc);
            out << j.dump(2) << "\n";
        }
    });

    // ---- probe ----
    auto* probe_cmd = app.add_subcommand("probe", "Fisher probes, accuracy curve and LDR map");
    std::string probe_caps = "caps.tlt", probe_prefix = "probe";
    int probe_pos = 1, probe_neg = 0;
    probe_cmd->add_option("--caps", probe_caps, "captures file");
    probe_cmd->add_option("--pos", probe_pos, "positive (s) class label");
    probe_cmd->add_option("--neg", probe_neg, "negative (c) class label");
    probe_cmd->add_option("--out-prefix", probe_prefix, "output path prefix");
    probe_cmd->callback([&] {
        CaptureSet caps = load_captures(joined(g, probe_caps));
        auto curve = probe_token_averaged(caps, probe_pos, probe_neg);
        ProbeSet probes;
        LDRMap map = ldr_map(caps, probe_pos, probe_neg, &probes);

        const std::string prefix = joined(g, probe_prefix);
        Matrix acc(curve.size(), 2);
        std::size_t best_layer = 0;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            acc(i, 0) = static_cast<double>(i);
            acc(i, 1) = curve[i].holdout_accuracy;
            if (curve[i].holdout_accuracy > curve[best_layer].holdout_accuracy) best_layer = i;
        }
        write_matrix_csv(prefix + "_accuracy.csv", acc);
        write_matrix_csv(prefix + "_ldr.csv", map.values);
        write_matrix_csv(prefix + "_ldr_raw.csv", map.raw);
        MetaSidecar meta;
        meta.kind = "probes";
        meta.dims = {map.values.rows, map.values.cols};
        meta.model_hash = caps.model_hash;
        meta.dataset_checksum = caps.dataset_checksum;
        meta.extra["pos"] = probe_pos;
        meta.extra["neg"] = probe_neg;
        write_sidecar(prefix + "_ldr.csv", meta);
        save_probes(prefix + "_probes.tlt", probes, caps.dim);

        double lo = 1e300, hi = -1e300;
        for (double v : map.values.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        char text[192];
        std::snprintf(text, sizeof(text),
                      "probe: best_layer=%zu acc=%.4f ldr_range=[%.2f, %.2f] out=%s_*",
                      best_layer, curve[best_layer].holdout_accuracy, lo, hi, prefix.c_str());
        say(g, text);
    });

    // ---- steer ----
    auto* steer_cmd = app.add_subcommand("steer", "derive, compose or negate steering matrices");
    steer_cmd->require_subcommand(1);

    auto* derive = steer_cmd->add_subcommand("derive", "class-difference steering matrix");
    std::string der_caps = "caps.tlt", der_stat = "median", der_out = "steer.tlt";
    int der_source = 0, der_target = 1;
    derive->add_option("--caps", der_caps, "captures file with both classes");
    derive->add_option("--source", der_source, "source class label");
    derive->add_option("--target", der_target, "target class label");
    derive->add_option("--stat", der_stat, "median | mean");
    derive->add_option("--out", der_out, "output tensor path");
    derive->callback([&] {
        CaptureSet caps = load_captures(joined(g, der_caps));
        SteerStat stat = der_stat == "mean" ? SteerStat::mean : SteerStat::median;
        SteeringMatrix s = derive_steering(filter_by_label(caps, der_target),
                                           filter_by_label(caps, der_source), stat);
        const std::string path = joined(g, der_out);
        save_steering(path, s);
        say(g, "steer: stat=" + std::string(to_string(s.stat)) + " " +
                   std::to_string(der_source) + "->" + std::to_string(der_target) +
                   " layers=" + std::to_string(s.layers) + " checksum=" + hex64(fnv1a64(s.s)) +
                   " out=" + path);
    });

    auto* compose_cmd = steer_cmd->add_subcommand("compose", "convex combination of matrices");
    std::string comp_a = "steer_a.tlt", comp_b = "steer_b.tlt", comp_out = "steer_mix.tlt";
    double comp_beta = 0.5;
    compose_cmd->add_option("--a", comp_a, "matrix at beta=0");
    compose_cmd->add_option("--b", comp_b, "matrix at beta=1");
    compose_cmd->add_option("--beta", comp_beta, "composition weight in [0, 1]");
    compose_cmd->add_option("--out", comp_out, "output tensor path");
    compose_cmd->callback([&] {
        SteeringMatrix a = load_steering(joined(g, comp_a));
        SteeringMatrix b = load_steering(joined(g, comp_b));
        SteeringMatrix mix = compose(a, b, comp_beta);
        const std::string path = joined(g, comp_out);
        save_steering(path, mix);
        char text[64];
        std::snprintf(text, sizeof(text), "steer: beta=%.3f", comp_beta);
        say(g, std::string(text) + " checksum=" + hex64(fnv1a64(mix.s)) + " out=" + path);
    });

    auto* negate_cmd = steer_cmd->add_subcommand("negate", "reverse the steering direction");
    std::string neg_in = "steer.tlt", neg_out = "steer_neg.tlt";
    negate_cmd->add_option("--in", neg_in, "input tensor path");
    negate_cmd->add_option("--out", neg_out, "output tensor path");
    negate_cmd->callback([&] {
        SteeringMatrix s = negate(load_steering(joined(g, neg_in)));
        const std::string path = joined(g, neg_out);
        save_steering(path, s);
        say(g, "steer: negated " + std::to_string(s.source_label) + "->" +
                   std::to_string(s.target_label) + " out=" + path);
    });

    // ---- decode ----
    auto* decode_cmd =
        app.add_subcommand("decode", "fit the ridge readout and decode captures to series");
    std::string dec_caps = "caps.tlt", dec_fit, dec_data = "data.tlt", dec_out = "decoded.tlt";
    double dec_alpha = 1.0;
    decode_cmd->add_option("--caps", dec_caps, "captures to decode");
    decode_cmd->add_option("--fit-caps", dec_fit,
                           "captures the readout is fitted on (default: --caps)");
    decode_cmd->add_option("--data", dec_data, "dataset with the readout's fit targets");
    decode_cmd->add_option("--alpha", dec_alpha, "ridge strength");
    decode_cmd->add_option("--out", dec_out, "output tensor path (n x T float32)");
    decode_cmd->callback([&] {
        CaptureSet caps = load_captures(joined(g, dec_caps));
        CaptureSet fit_caps = dec_fit.empty() ? caps : load_captures(joined(g, dec_fit));
        if (fit_caps.model_hash != caps.model_hash)
            throw ModelMismatch("decode: captures come from different models (" +
                                hex64(caps.model_hash) + " vs " + hex64(fit_caps.model_hash) +
                                ")");
        SeriesSet data = load_dataset(joined(g, dec_data));
        if (data.checksum() != fit_caps.dataset_checksum)
            throw SampleMismatch("decode: dataset checksum does not match the fit captures");
        ReadoutHead head =
            fit_readout(fit_caps, std::span<const float>(data.series), dec_alpha);
        std::vector<double> decoded = decode(head, caps);
        std::vector<float> payload(decoded.size());
        for (std::size_t i = 0; i < decoded.size(); ++i)
            payload[i] = static_cast<float>(decoded[i]);
        const std::string path = joined(g, dec_out);
        write_tensor(path, {caps.n, caps.tokens * head.weight.cols}, payload);
        MetaSidecar meta;
        meta.kind = "dataset";
        meta.dims = {caps.n, caps.tokens * head.weight.cols};
        meta.model_hash = caps.model_hash;
        meta.dataset_checksum = fnv1a64(payload);
        meta.labels = caps.labels;
        meta.extra["alpha"] = dec_alpha;
        meta.extra["train_mse"] = head.train_mse;
        write_sidecar(path, meta);
        char text[96];
        std::snprintf(text, sizeof(text), "decode: train_mse=%.6g alpha=%g", head.train_mse,
                      dec_alpha);
        say(g, std::string(text) + " out=" + path);
    });

    // ---- pca ----
    auto* pca_cmd = app.add_subcommand("pca", "steering displacement report in PCA space");
    std::string pca_before = "caps.tlt", pca_after = "steered.tlt",
                pca_out = "displacement.csv";
    int pca_layer = -1, pca_source = 0, pca_target = 1;
    pca_cmd->add_option("--before", pca_before, "unsteered captures");
    pca_cmd->add_option("--after", pca_after, "steered captures");
    pca_cmd->add_option("--layer", pca_layer, "capture stream index (default: last)");
    pca_cmd->add_option("--source", pca_source, "steered class label");
    pca_cmd->add_option("--target", pca_target, "target class label");
    pca_cmd->add_option("--out", pca_out, "output csv path");
    pca_cmd->callback([&] {
        CaptureSet before = load_captures(joined(g, pca_before));
        CaptureSet after = load_captures(joined(g, pca_after));
        if (before.model_hash != after.model_hash)
            throw ModelMismatch("pca: capture sets come from different models");
        if (before.dataset_checksum != after.dataset_checksum)
            throw SampleMismatch("pca: capture sets come from different datasets");
        const std::size_t layer =
            pca_layer < 0 ? before.layers - 1 : static_cast<std::size_t>(pca_layer);
        DisplacementReport rep =
            steering_displacement_report(before, after, layer, pca_source, pca_target, 2);

        Matrix table(rep.rows.size(), 9);
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            const DisplacementRow& r = rep.rows[i];
            table(i, 0) = static_cast<double>(r.sample);
            table(i, 1) = r.pre_x;
            table(i, 2) = r.pre_y;
            table(i, 3) = r.post_x;
            table(i, 4) = r.post_y;
            table(i, 5) = r.dist_before;
            table(i, 6) = r.dist_after;
            table(i, 7) = r.dist_before_raw;
            table(i, 8) = r.dist_after_raw;
        }
        const std::string path = joined(g, pca_out);
        write_matrix_csv(path, table);
        char text[160];
        std::snprintf(
            text, sizeof(text), "pca: layer=%zu moved_closer=%.1f%% raw=%.1f%% samples=%zu",
            layer, 100.0 * rep.moved_closer / std::max<std::size_t>(1, rep.rows.size()),
            100.0 * rep.moved_closer_raw / std::max<std::size_t>(1, rep.rows.size()),
            rep.rows.size());
        say(g, std::string(text) + " out=" + path);
    });

    // ---- report ----
    auto* report = app.add_subcommand("report", "render a matrix csv as an SVG heatmap");
    std::string rep_matrix = "sim.csv", rep_out = "report.svg", rep_title = "ts-lens heatmap";
    bool rep_minmax = false;
    report->add_option("--matrix", rep_matrix, "input csv");
    report->add_option("--out", rep_out, "output svg");
    report->add_option("--title", rep_title, "figure title");
    report->add_flag("--minmax", rep_minmax, "min-max rescale entries into [0, 1] first");
    report->callback([&] {
        Matrix m = read_matrix_csv(joined(g, rep_matrix));
        if (rep_minmax) m = minmax_scale(m);
        const std::string path = joined(g, rep_out);
        write_svg_heatmap(path, m, rep_title);
        say(g, "report: " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                   " out=" + path);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage errors
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;  // pipeline errors
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

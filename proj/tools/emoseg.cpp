// emoseg: synthetic data generation, supervision building, training,
// evaluation and event-free inference in one binary.
//
// Exit codes: 0 success, 1 usage error, 2 data-integrity error,
// 3 numeric failure (NaN loss / gradcheck).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "emoseg/gradcheck.hpp"
#include "emoseg/io.hpp"
#include "emoseg/metrics.hpp"
#include "emoseg/model.hpp"
#include "emoseg/runconfig.hpp"
#include "emoseg/scene.hpp"
#include "emoseg/supervision.hpp"

namespace fs = std::filesystem;
using namespace emoseg;

namespace {

constexpr const char* kVersion = "emoseg-v0.1.0";

std::string seq_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%06d", index);
    return buf;
}

std::vector<std::string> read_manifest(const std::string& data, const std::string& split) {
    std::ifstream f(fs::path(data) / (split + ".txt"));
    if (!f) throw io::IoError(data + ": missing manifest " + split + ".txt");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) out.push_back((fs::path(data) / line).string());
    return out;
}

void write_manifest_file(const std::string& path, const std::vector<std::string>& names) {
    std::string text;
    for (const auto& n : names) text += n + "\n";
    write_text_atomic(path, text);
}

// ---------------------------------------------------------------- gen

int cmd_gen(const std::string& config, const std::string& out, uint64_t seed, int count,
            int test_count) {
    RunConfig cfg = load_run_config(config);
    fs::create_directories(out);
    std::vector<std::string> train_names, test_names;
    for (int i = 0; i < count + test_count; ++i) {
        const std::string name = seq_name(i);
        SceneSample s = generate(cfg.scene, Rng::mix(seed ^ Rng::mix(static_cast<uint64_t>(i))));
        write_sample((fs::path(out) / name).string(), s);
        (i < count ? train_names : test_names).push_back(name);
    }
    write_manifest_file((fs::path(out) / "train.txt").string(), train_names);
    write_manifest_file((fs::path(out) / "test.txt").string(), test_names);
    write_text_atomic((fs::path(out) / "config.txt").string(), cfg.echo());
    return 0;
}

// ---------------------------------------------------------------- build-sup

int cmd_build_sup(const std::string& data, std::string source_name, bool no_dilate) {
    if (no_dilate) {
        if (source_name == "event_gt_dilated") source_name = "event_gt";
        if (source_name == "semantic_dilated") source_name = "semantic";
    }
    const SupSource source = parse_sup_source(source_name);
    int splits_found = 0;
    for (const std::string& split : {"train", "test"}) {
        std::vector<std::string> seqs;
        try {
            seqs = read_manifest(data, split);
        } catch (const io::IoError&) {
            continue;  // a dataset may lack one of the splits
        }
        ++splits_found;
        for (const auto& seq : seqs) {
            const bool need_flow = source == SupSource::flow;
            SceneSample s = read_sample(seq, /*require_events=*/source != SupSource::flow &&
                                                 source != SupSource::semantic &&
                                                 source != SupSource::semantic_dilated,
                                        need_flow);
            auto targets = build_supervision(source, s.masks, s.events,
                                             need_flow ? &s.flow : nullptr);
            const std::string dir = (fs::path(seq) / ("sup_" + sup_source_name(source))).string();
            fs::create_directories(dir);
            for (size_t t = 0; t < targets.size(); ++t) {
                const auto& map = targets[t];
                std::vector<uint8_t> pix(map.data.size());
                for (size_t i = 0; i < pix.size(); ++i)
                    pix[i] = static_cast<uint8_t>(map.data[i] * 255.f + 0.5f);
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%06zu.pgm", t);
                io::write_pgm((fs::path(dir) / buf).string(), map.dim(1), map.dim(2), pix);
            }
        }
    }
    if (splits_found == 0) throw io::IoError(data + ": no train.txt or test.txt manifest");
    return 0;
}

// ---------------------------------------------------------------- train

struct LoadedClip {
    std::vector<Tensor<float>> frames;
    std::vector<Tensor<float>> masks;      // [1,H,W]
    std::vector<Tensor<float>> st_targets; // [1,h,w]
};

LoadedClip load_train_clip(const std::string& seq, const ModelConfig& mc, bool with_prior,
                           SupSource source) {
    LoadedClip c;
    SceneSample s = read_sample(seq, /*require_events=*/false, /*require_flow=*/false);
    for (size_t t = 0; t < s.frames.size(); ++t) {
        if (s.frames[t].dim(1) != mc.h || s.frames[t].dim(2) != mc.w)
            throw io::IoError(seq + ": frame size does not match model config");
        c.frames.push_back(std::move(s.frames[t]));
        c.masks.push_back(mask_to_tensor(s.masks[t]));
        if (with_prior) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%06zu.pgm", t);
            const std::string sp =
                (fs::path(seq) / ("sup_" + sup_source_name(source)) / buf).string();
            if (!fs::exists(sp))
                throw io::IoError(seq + ": missing supervision map " + sp +
                                  " (run build-sup first)");
            int h = 0, w = 0;
            auto pix = io::read_pgm(sp, h, w);
            Tensor<float> full({1, h, w});
            for (size_t i = 0; i < pix.size(); ++i)
                full[static_cast<long>(i)] = static_cast<float>(pix[i]) / 255.f;
            c.st_targets.push_back(downsample_target(full, mc.fh(), mc.fw()));
        }
    }
    return c;
}

int cmd_train(const std::string& data, const std::string& config, const std::string& out,
              bool no_prior, const std::string& sup_source, const std::string& fusion,
              int64_t seed_override, int steps_override) {
    const auto t_start = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(config);
    if (!sup_source.empty()) cfg.sup_source = parse_sup_source(sup_source);
    if (!fusion.empty()) cfg.model.fusion = parse_fusion(fusion);
    if (seed_override >= 0) { cfg.seed = static_cast<uint64_t>(seed_override); cfg.model.seed = cfg.seed; }
    if (steps_override > 0) cfg.steps = steps_override;
    cfg.model.with_prior = !no_prior;
    cfg.model.validate();

    const auto seqs = read_manifest(data, "train");
    if (seqs.empty()) throw io::IoError(data + ": empty train split");
    std::vector<LoadedClip> clips;
    clips.reserve(seqs.size());
    for (const auto& seq : seqs)
        clips.push_back(load_train_clip(seq, cfg.model, cfg.model.with_prior, cfg.sup_source));

    fs::create_directories(out);
    write_text_atomic((fs::path(out) / "config.txt").string(), cfg.echo());

    ParamSet<float> params = init_params<float>(cfg.model, cfg.seed);
    const std::string ckpt_path = (fs::path(out) / "checkpoint.emoc").string();
    std::ofstream log(fs::path(out) / "loss.csv");
    log << "step,L_sem,L_ST\n";

    Rng order = Rng::substream(cfg.seed, 0xBA7C4);
    LossBreakdown last{};
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<ClipBatchItem<float>> batch;
        for (int b = 0; b < cfg.batch; ++b) {
            const LoadedClip& c =
                clips[static_cast<size_t>(order.next_u64() % clips.size())];
            batch.push_back(ClipBatchItem<float>{c.frames, c.masks, c.st_targets});
        }
        try {
            last = train_step(cfg.model, params, batch, cfg.optim);
        } catch (const NumericError& e) {
            std::cerr << "step " << step << ": " << e.what()
                      << " (last-good checkpoint kept)\n";
            return 3;
        }
        if (step % 25 == 0 || step == cfg.steps - 1) {
            char row[96];
            std::snprintf(row, sizeof(row), "%d,%.6f,%.6f\n", step, last.l_sem, last.l_st);
            log << row;
        }
        if (step % 200 == 199) save_checkpoint(ckpt_path, cfg.model, params);
    }
    save_checkpoint(ckpt_path, cfg.model, params);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    char tail[256];
    std::snprintf(tail, sizeof(tail),
                  "version=%s\nwall_clock_s=%.2f\nL_sem=%.6f\nL_ST=%.6f\nL_total=%.6f\n",
                  kVersion, wall, last.l_sem, last.l_st, last.total);
    write_text_atomic((fs::path(out) / "manifest.txt").string(),
                      cfg.echo() + std::string(tail));
    return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& data, const std::string& ckpt, bool ms,
             const std::string& report_path) {
    const auto t_start = std::chrono::steady_clock::now();
    ModelConfig mc;
    ParamSet<float> params = load_checkpoint(ckpt, mc);
    const auto seqs = read_manifest(data, "test");
    if (seqs.empty()) throw io::IoError(data + ": empty test split");

    std::vector<FrameScore> scores;
    std::string csv = "frame_id,J,F\n";
    for (const auto& seq : seqs) {
        SceneSample s = read_sample(seq, /*require_events=*/false, /*require_flow=*/false);
        for (const auto& f : s.frames)
            if (f.dim(1) != mc.h || f.dim(2) != mc.w)
                throw io::IoError(seq + ": frame size does not match checkpoint config");
        std::vector<Mask> preds = infer(mc, params, s.frames, ms);
        for (size_t t = 0; t < preds.size(); ++t) {
            FrameScore sc;
            sc.j = jaccard(preds[t], s.masks[t]);
            sc.f = boundary_f(preds[t], s.masks[t]);
            scores.push_back(sc);
            char row[160];
            std::snprintf(row, sizeof(row), "%s/%06zu,%.6f,%.6f\n",
                          fs::path(seq).filename().c_str(), t, sc.j, sc.f);
            csv += row;
        }
    }
    const Report rep = aggregate(scores);
    const std::string text = format_report(rep);
    if (!report_path.empty()) {
        write_text_atomic(report_path, text);
        write_text_atomic(report_path + ".csv", csv);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        char tail[128];
        std::snprintf(tail, sizeof(tail), "version=%s\nwall_clock_s=%.2f\n", kVersion, wall);
        write_text_atomic(report_path + ".manifest", text + tail);
    }
    std::cout << text;
    return 0;
}

// ---------------------------------------------------------------- infer

int cmd_infer(const std::string& frames_dir, const std::string& ckpt, bool ms,
              const std::string& out) {
    ModelConfig mc;
    ParamSet<float> params = load_checkpoint(ckpt, mc);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(frames_dir))
        if (e.path().extension() == ".ppm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw io::IoError(frames_dir + ": no .ppm frames found");
    fs::create_directories(out);
    for (const auto& f : files) {
        Tensor<float> frame = io::read_ppm(f);
        std::vector<Mask> pred = infer(mc, params, {frame}, ms);
        const std::string name = fs::path(f).stem().string() + ".pgm";
        write_mask_pgm((fs::path(out) / name).string(), pred[0]);
    }
    return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(uint64_t seed) {
    ModelConfig mc;
    mc.t_frames = 1;
    mc.h = 8;
    mc.w = 8;
    mc.c = 4;
    mc.r = 2;
    mc.validate();
    Rng rng = Rng::substream(seed, 0x6C);
    ClipBatchItem<double> item;
    for (int t = 0; t < mc.t_frames; ++t) {
        Tensor<double> frame({3, mc.h, mc.w});
        for (auto& v : frame.data) v = rng.uniform();
        item.frames.push_back(std::move(frame));
        Tensor<double> mask({1, mc.h, mc.w});
        for (auto& v : mask.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
        item.masks.push_back(std::move(mask));
        Tensor<double> st({1, mc.fh(), mc.fw()});
        for (auto& v : st.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
        item.st_targets.push_back(std::move(st));
    }
    ParamSet<double> params = init_params<double>(mc, seed);
    // Jitter every parameter away from zero so no ReLU sits exactly on its
    // kink, where central differences and the subgradient legitimately differ.
    for (const auto& n : params.names)
        for (auto& v : params.at(n).data) v += rng.uniform(-0.2, 0.2);
    const std::vector<ClipBatchItem<double>> batch{item};

    Tape<double> tape;
    auto pids = track_params(tape, params);
    auto total = batch_loss(tape, mc, pids, batch, nullptr);
    tape.backward(total);

    std::vector<Tensor<double>> values, grads;
    for (const auto& n : params.names) {
        values.push_back(params.at(n));
        const auto& g = tape.grad(pids.at(n));
        grads.push_back(g.numel() > 0 ? g : Tensor<double>(params.at(n).shape));
    }
    auto f = [&](const std::vector<Tensor<double>>& ps) {
        ParamSet<double> p2 = params;
        for (size_t i = 0; i < ps.size(); ++i) p2.value[params.names[i]] = ps[i];
        Tape<double> t2;
        auto ids2 = track_params(t2, p2);
        return t2.val(batch_loss(t2, mc, ids2, batch, nullptr))[0];
    };
    const double err = finite_diff_check<double>(f, values, grads, 1e-4);
    std::printf("gradcheck max relative error: %.3e (threshold 1e-05)\n", err);
    return err < 1e-5 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-prior moving-object segmentation toolkit"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_config, gen_out;
    uint64_t gen_seed = 0;
    int gen_count = 8, gen_test_count = 0;
    gen->add_option("--config", gen_config, "run config file");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--count", gen_count, "number of training sequences");
    gen->add_option("--test-count", gen_test_count, "number of test sequences");

    // build-sup
    auto* bsup = app.add_subcommand("build-sup", "build supervision maps");
    std::string bs_data, bs_source = "event_gt_dilated";
    bool bs_nodilate = false;
    bsup->add_option("--data", bs_data, "dataset directory")->required();
    bsup->add_option("--source", bs_source,
                     "flow|semantic|semantic_dilated|event_raw|event_gt|event_gt_dilated");
    bsup->add_flag("--no-dilate", bs_nodilate, "drop the dilation step");

    // train
    auto* train = app.add_subcommand("train", "train a model");
    std::string tr_data, tr_config, tr_out, tr_sup, tr_fusion;
    bool tr_noprior = false;
    int64_t tr_seed = -1;
    int tr_steps = 0;
    train->add_option("--data", tr_data, "dataset directory")->required();
    train->add_option("--config", tr_config, "run config file");
    train->add_option("--out", tr_out, "run output directory")->required();
    train->add_flag("--no-prior", tr_noprior, "RGB baseline without the prior branch");
    train->add_option("--sup-source", tr_sup, "override supervision source");
    train->add_option("--fusion", tr_fusion, "ours|add|mul");
    train->add_option("--seed", tr_seed, "override seed");
    train->add_option("--steps", tr_steps, "override step count");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string ev_data, ev_ckpt, ev_report;
    bool ev_ms = false;
    eval->add_option("--data", ev_data, "dataset directory")->required();
    eval->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    eval->add_flag("--ms", ev_ms, "multi-scale inference");
    eval->add_option("--report", ev_report, "report output path");

    // infer (takes frames only; there is no way to hand it events)
    auto* infer_cmd = app.add_subcommand("infer", "predict masks from frames");
    std::string in_frames, in_ckpt, in_out;
    bool in_ms = false;
    infer_cmd->add_option("--frames", in_frames, "directory of .ppm frames")->required();
    infer_cmd->add_option("--ckpt", in_ckpt, "checkpoint file")->required();
    infer_cmd->add_flag("--ms", in_ms, "multi-scale inference");
    infer_cmd->add_option("--out", in_out, "output mask directory")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the joint loss");
    uint64_t gc_seed = 0;
    gc->add_option("--seed", gc_seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message / help text
        return code == 0 ? 0 : 1;     // usage errors exit 1; --help exits 0
    }
    // EMOSEG_THREADS caps internal parallelism. All kernels currently run
    // single-threaded (the default of 1), so the value only needs validating.
    if (const char* tv = std::getenv("EMOSEG_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(tv, &end, 10);
        if (end == tv || *end != '\0' || n < 1) {
            std::cerr << "error: EMOSEG_THREADS must be a positive integer, got \"" << tv
                      << "\"\n";
            return 1;
        }
    }
    try {
        if (gen->parsed()) return cmd_gen(gen_config, gen_out, gen_seed, gen_count, gen_test_count);
        if (bsup->parsed()) return cmd_build_sup(bs_data, bs_source, bs_nodilate);
        if (train->parsed())
            return cmd_train(tr_data, tr_config, tr_out, tr_noprior, tr_sup, tr_fusion, tr_seed,
                             tr_steps);
        if (eval->parsed()) return cmd_eval(ev_data, ev_ckpt, ev_ms, ev_report);
        if (infer_cmd->parsed()) return cmd_infer(in_frames, in_ckpt, in_ms, in_out);
        if (gc->parsed()) return cmd_gradcheck(gc_seed);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const io::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

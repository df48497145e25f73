#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "emoseg/gradcheck.hpp"
#include "emoseg/io.hpp"
#include "emoseg/model.hpp"

using namespace emoseg;
namespace fsys = std::filesystem;

namespace {

ModelConfig toy_config() {
    ModelConfig mc;
    mc.t_frames = 1;
    mc.h = 8;
    mc.w = 8;
    mc.c = 4;
    mc.r = 2;
    return mc;
}

template <typename S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, double lo = 0, double hi = 1) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

template <typename S>
ClipBatchItem<S> random_item(const ModelConfig& mc, uint64_t seed) {
    Rng rng = Rng::substream(seed, 99);
    ClipBatchItem<S> item;
    for (int t = 0; t < mc.t_frames; ++t) {
        item.frames.push_back(random_tensor<S>({3, mc.h, mc.w}, rng));
        Tensor<S> mask({1, mc.h, mc.w});
        for (auto& v : mask.data) v = rng.uniform() < 0.3 ? S(1) : S(0);
        item.masks.push_back(std::move(mask));
        Tensor<S> st({1, mc.fh(), mc.fw()});
        for (auto& v : st.data) v = rng.uniform() < 0.3 ? S(1) : S(0);
        item.st_targets.push_back(std::move(st));
    }
    return item;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig mc = toy_config();
    CHECK_NOTHROW(mc.validate());
    mc.r = 8;  // r >= C
    CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
    mc = toy_config();
    mc.scales = {0.75, 1.25};
    CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
}

TEST_CASE("forward shape contracts") {
    ModelConfig mc = toy_config();
    mc.t_frames = 2;
    auto params = init_params<float>(mc, 5);
    auto item = random_item<float>(mc, 5);

    Tape<float> tape;
    auto pids = track_params(tape, params);
    auto fwd = forward_clip(tape, mc, pids, item.frames);
    REQUIRE(fwd.logits.size() == 2);
    REQUIRE(fwd.pm.size() == 2);
    CHECK(tape.val(fwd.logits[0]).shape == std::vector<int>{1, 8, 8});
    CHECK(tape.val(fwd.pm[0]).shape == std::vector<int>{1, 2, 2});
    for (auto id : fwd.logits) tape.val(id).check_finite("logits");
}

TEST_CASE("baseline forward has no prior prediction") {
    ModelConfig mc = toy_config();
    mc.with_prior = false;
    auto params = init_params<float>(mc, 5);
    CHECK(params.value.count("gen1.w") == 0);
    CHECK(params.value.count("fuse.rgb.w") == 0);

    Tape<float> tape;
    auto pids = track_params(tape, params);
    auto item = random_item<float>(mc, 5);
    auto fwd = forward_clip(tape, mc, pids, item.frames);
    CHECK(fwd.pm.empty());
    CHECK(fwd.logits.size() == 1);
}

TEST_CASE("all-zero clip with zero biases encodes to zero and decodes to 0.5") {
    ModelConfig mc = toy_config();
    auto params = init_params<float>(mc, 5);
    Tape<float> tape;
    auto pids = track_params(tape, params);
    std::vector<Tensor<float>> frames{Tensor<float>({3, 8, 8})};
    auto fwd = forward_clip(tape, mc, pids, frames);
    // biases are zero at init, so zero input stays zero through every conv
    for (float v : tape.val(fwd.logits[0]).data) CHECK(v == 0.f);
}

TEST_CASE("forward equals a manual composition of the published stages") {
    ModelConfig mc = toy_config();
    auto params = init_params<float>(mc, 77);
    auto item = random_item<float>(mc, 77);

    Tape<float> tape;
    auto pids = track_params(tape, params);
    auto fwd = forward_clip(tape, mc, pids, item.frames);

    // independent recomposition with the raw kernels
    const auto& P = params.value;
    auto rl = [](Tensor<float> t) { return ops::relu(t); };
    auto f_rgb = rl(ops::conv3x3(rl(ops::conv3x3(item.frames[0], P.at("enc1.w"), P.at("enc1.b"), 2)),
                                 P.at("enc2.w"), P.at("enc2.b"), 2));
    auto f_m = ops::conv1x1(
        rl(ops::depthwise_conv3x3(rl(ops::conv1x1(f_rgb, P.at("gen1.w"), P.at("gen1.b"))),
                                  P.at("gen.dw"))),
        P.at("gen2.w"), P.at("gen2.b"));
    auto pm = ops::conv1x1(f_m, P.at("pred.w"), P.at("pred.b"));
    auto lr_rgb = ops::conv1x1(f_rgb, P.at("fuse.rgb.w"), P.at("fuse.rgb.b"));
    auto lr_m = ops::conv1x1(f_m, P.at("fuse.m.w"), P.at("fuse.m.b"));
    auto att = ops::softmax_spatial(ops::conv1x1(ops::concat_channels(lr_rgb, lr_m),
                                                 P.at("fuse.corr.w"), P.at("fuse.corr.b")));
    auto fused = ops::conv1x1(ops::concat_channels(ops::hadamard(lr_rgb, att), lr_m),
                              P.at("fuse.out.w"), P.at("fuse.out.b"));
    auto d = rl(ops::conv3x3(fused, P.at("dec1.w"), P.at("dec1.b"), 1));
    d = ops::bilinear_resize(d, 4, 4);
    d = rl(ops::conv3x3(d, P.at("dec2.w"), P.at("dec2.b"), 1));
    d = ops::bilinear_resize(d, 8, 8);
    auto logits = ops::conv1x1(d, P.at("dec.out.w"), P.at("dec.out.b"));

    CHECK(tape.val(fwd.pm[0]).data == pm.data);
    CHECK(tape.val(fwd.logits[0]).data == logits.data);
}

TEST_CASE("degenerate 1x1 fusion reduces to plain concat projection") {
    // at h=w=1 the spatial softmax is identically 1, so the attention weighting
    // is the identity
    ModelConfig mc = toy_config();
    mc.h = 4;
    mc.w = 4;  // features become 1x1
    auto params = init_params<float>(mc, 3);
    auto item = random_item<float>(mc, 3);

    Tape<float> tape;
    auto pids = track_params(tape, params);
    auto fwd = forward_clip(tape, mc, pids, item.frames);

    const auto& P = params.value;
    auto rl = [](Tensor<float> t) { return ops::relu(t); };
    auto f_rgb = rl(ops::conv3x3(rl(ops::conv3x3(item.frames[0], P.at("enc1.w"), P.at("enc1.b"), 2)),
                                 P.at("enc2.w"), P.at("enc2.b"), 2));
    auto f_m = ops::conv1x1(
        rl(ops::depthwise_conv3x3(rl(ops::conv1x1(f_rgb, P.at("gen1.w"), P.at("gen1.b"))),
                                  P.at("gen.dw"))),
        P.at("gen2.w"), P.at("gen2.b"));
    auto lr_rgb = ops::conv1x1(f_rgb, P.at("fuse.rgb.w"), P.at("fuse.rgb.b"));
    auto lr_m = ops::conv1x1(f_m, P.at("fuse.m.w"), P.at("fuse.m.b"));
    auto fused = ops::conv1x1(ops::concat_channels(lr_rgb, lr_m), P.at("fuse.out.w"),
                              P.at("fuse.out.b"));
    auto d = rl(ops::conv3x3(fused, P.at("dec1.w"), P.at("dec1.b"), 1));
    d = ops::bilinear_resize(d, 2, 2);
    d = rl(ops::conv3x3(d, P.at("dec2.w"), P.at("dec2.b"), 1));
    d = ops::bilinear_resize(d, 4, 4);
    auto logits = ops::conv1x1(d, P.at("dec.out.w"), P.at("dec.out.b"));
    for (long i = 0; i < logits.numel(); ++i)
        CHECK(tape.val(fwd.logits[0])[i] == doctest::Approx(logits[i]).epsilon(1e-5));
}

TEST_CASE("joint loss closed forms") {
    // single pixel: logit 0 vs target 1 gives ln 2; sigmoid 0.5 vs target 1
    // gives MSE 0.25
    Tensor<double> logit({1, 1, 1}), target({1, 1, 1}, 1.0);
    CHECK(ops::bce_with_logits(logit, target) == doctest::Approx(std::log(2.0)));
    CHECK(ops::mse(ops::sigmoid(logit), target) == doctest::Approx(0.25));
}

TEST_CASE("lambda_st = 0 blocks all gradients into the prediction head") {
    ModelConfig mc = toy_config();
    mc.lambda_st = 0.f;
    auto params = init_params<double>(mc, 9);
    auto item = random_item<double>(mc, 9);

    Tape<double> tape;
    auto pids = track_params(tape, params);
    LossBreakdown lb;
    auto total = batch_loss(tape, mc, pids, {item}, &lb);
    CHECK(lb.total == doctest::Approx(lb.l_sem));
    tape.backward(total);
    for (const char* n : {"pred.w", "pred.b"}) {
        const auto& g = tape.grad(pids.at(n));
        for (long i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0);
    }
}

TEST_CASE("full joint loss passes the finite-difference oracle") {
    ModelConfig mc = toy_config();
    Rng rng = Rng::substream(4, 1);
    auto params = init_params<double>(mc, 4);
    for (const auto& n : params.names)
        for (auto& v : params.at(n).data) v += rng.uniform(-0.2, 0.2);  // off the ReLU kinks
    auto item = random_item<double>(mc, 4);
    const std::vector<ClipBatchItem<double>> batch{item};

    Tape<double> tape;
    auto pids = track_params(tape, params);
    tape.backward(batch_loss(tape, mc, pids, batch, nullptr));

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
    CHECK(finite_diff_check<double>(f, values, grads) < 1e-5);
}

TEST_CASE("train_step determinism and weight-decay-only updates") {
    ModelConfig mc = toy_config();
    mc.lambda_st = 0.f;  // prediction head receives no gradient
    AdamWConfig opt;
    auto item = random_item<float>(mc, 11);

    auto p1 = init_params<float>(mc, 11);
    auto p2 = init_params<float>(mc, 11);
    const float before = p1.at("pred.w")[0];
    for (int s = 0; s < 3; ++s) {
        train_step(mc, p1, {item}, opt);
        train_step(mc, p2, {item}, opt);
    }
    for (const auto& n : p1.names) CHECK(p1.at(n).data == p2.at(n).data);  // bitwise

    // zero-gradient parameter moves only by the decoupled weight decay
    float expect = before;
    for (int s = 0; s < 3; ++s) expect -= opt.lr * opt.weight_decay * expect;
    CHECK(p1.at("pred.w")[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("overfitting a single batch reduces the loss") {
    ModelConfig mc = toy_config();
    AdamWConfig opt;
    auto params = init_params<float>(mc, 13);
    auto item = random_item<float>(mc, 13);
    LossBreakdown first = train_step(mc, params, {item}, opt);
    LossBreakdown last{};
    for (int s = 0; s < 49; ++s) last = train_step(mc, params, {item}, opt);
    CHECK(last.total < first.total);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
    const auto dir = fsys::temp_directory_path() / "emoseg_ckpt_test";
    fsys::create_directories(dir);
    ModelConfig mc = toy_config();
    auto params = init_params<float>(mc, 17);
    AdamWConfig opt;
    auto item = random_item<float>(mc, 17);
    for (int s = 0; s < 3; ++s) train_step(mc, params, {item}, opt);

    const std::string p1 = (dir / "a.emoc").string(), p2 = (dir / "b.emoc").string();
    save_checkpoint(p1, mc, params);
    ModelConfig loaded_cfg;
    auto loaded = load_checkpoint(p1, loaded_cfg);
    save_checkpoint(p2, loaded_cfg, loaded);
    CHECK(io::detail::read_all(p1) == io::detail::read_all(p2));
    CHECK(loaded.step == params.step);

    // inference unchanged after the round trip
    auto before = infer(mc, params, item.frames, false);
    auto after = infer(loaded_cfg, loaded, item.frames, false);
    CHECK(before == after);

    // corrupt magic is rejected
    io::detail::write_all((dir / "bad.emoc").string(), "XXXX....");
    ModelConfig dummy;
    CHECK_THROWS_AS(load_checkpoint((dir / "bad.emoc").string(), dummy), io::IoError);
}

TEST_CASE("inference thresholds and multi-scale degeneracy") {
    ModelConfig mc = toy_config();
    auto params = init_params<float>(mc, 19);
    // force strongly negative logits via the output bias
    for (auto& v : params.at("dec.out.w").data) v = 0;
    params.at("dec.out.b")[0] = -10.f;
    auto item = random_item<float>(mc, 19);
    auto masks = infer(mc, params, item.frames, false);
    CHECK(masks[0].count() == 0);

    // constant logits across scales: multi-scale equals single-scale
    params.at("dec.out.b")[0] = 3.f;
    auto ss = infer(mc, params, item.frames, false);
    auto ms = infer(mc, params, item.frames, true);
    CHECK(ss == ms);
    CHECK(ss[0].count() == 64);  // all positive

    // crafted square: positive logits only inside the upsampled block
    params.at("dec.out.b")[0] = 0.f;
    CHECK(infer(mc, params, item.frames, false)[0].count() == 64);  // logit 0 -> sigmoid 0.5 -> in
}

#include "emoseg/model.hpp"

#include <cmath>
#include <sstream>

#include "emoseg/io.hpp"

namespace emoseg {

Fusion parse_fusion(const std::string& s) {
    if (s == "ours" || s == "lowrank") return Fusion::lowrank;
    if (s == "add") return Fusion::add;
    if (s == "mul") return Fusion::mul;
    throw std::invalid_argument("unknown fusion variant: " + s);
}

std::string fusion_name(Fusion f) {
    switch (f) {
        case Fusion::lowrank: return "ours";
        case Fusion::add: return "add";
        case Fusion::mul: return "mul";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (t_frames < 1) throw std::invalid_argument("config: T must be >= 1");
    if (h % 4 != 0 || w % 4 != 0) throw std::invalid_argument("config: H and W must be multiples of 4");
    if (c < 4 || c % 4 != 0) throw std::invalid_argument("config: C must be a positive multiple of 4");
    if (rank() < 1 || rank() >= c) throw std::invalid_argument("config: requires 1 <= r < C");
    bool has_unit = false;
    for (double s : scales) has_unit |= s == 1.0;
    if (!has_unit) throw std::invalid_argument("config: scales must contain 1.0");
}

namespace {

template <typename S>
Tensor<S> he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor<S> t(std::move(shape));
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
    return t;
}

}  // namespace

template <typename S>
ParamSet<S> init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParamSet<S> p;
    Rng rng = Rng::substream(seed, 0xA11C);
    const int c = cfg.c, ce = cfg.expansion(), r = cfg.rank();
    auto conv3 = [&](const std::string& n, int cout, int cin) {
        p.add(n + ".w", he_uniform<S>({cout, cin, 3, 3}, cin * 9, rng));
        p.add(n + ".b", Tensor<S>({cout}));
    };
    auto conv1 = [&](const std::string& n, int cout, int cin) {
        p.add(n + ".w", he_uniform<S>({cout, cin}, cin, rng));
        p.add(n + ".b", Tensor<S>({cout}));
    };
    conv3("enc1", c / 2, 3);
    conv3("enc2", c, c / 2);
    if (cfg.with_prior) {
        conv1("gen1", ce, c);
        p.add("gen.dw", he_uniform<S>({ce, 3, 3}, 9, rng));
        conv1("gen2", c, ce);
        conv1("pred", 1, c);
        if (cfg.fusion == Fusion::lowrank) {
            conv1("fuse.rgb", r, c);
            conv1("fuse.m", r, c);
            conv1("fuse.corr", r, 2 * r);
            conv1("fuse.out", c, 2 * r);
        }
    }
    conv3("dec1", c / 2, c);
    conv3("dec2", c / 2, c / 2);
    conv1("dec.out", 1, c / 2);
    return p;
}

template <typename S>
std::map<std::string, typename Tape<S>::Id> track_params(Tape<S>& tape, const ParamSet<S>& params) {
    std::map<std::string, typename Tape<S>::Id> ids;
    for (const auto& n : params.names) ids[n] = tape.input(params.at(n), true);
    return ids;
}

namespace {

template <typename S>
typename Tape<S>::Id encode_frame(Tape<S>& tape, const std::map<std::string, typename Tape<S>::Id>& p,
                                  typename Tape<S>::Id frame) {
    auto x = tape.relu(tape.conv3x3(frame, p.at("enc1.w"), p.at("enc1.b"), 2));
    return tape.relu(tape.conv3x3(x, p.at("enc2.w"), p.at("enc2.b"), 2));
}

template <typename S>
typename Tape<S>::Id prior_generate(Tape<S>& tape,
                                    const std::map<std::string, typename Tape<S>::Id>& p,
                                    typename Tape<S>::Id f_rgb) {
    auto x = tape.relu(tape.conv1x1(f_rgb, p.at("gen1.w"), p.at("gen1.b")));
    x = tape.relu(tape.depthwise_conv3x3(x, p.at("gen.dw")));
    return tape.conv1x1(x, p.at("gen2.w"), p.at("gen2.b"));
}

template <typename S>
typename Tape<S>::Id prior_fuse(Tape<S>& tape, const ModelConfig& cfg,
                                const std::map<std::string, typename Tape<S>::Id>& p,
                                typename Tape<S>::Id f_rgb, typename Tape<S>::Id f_m) {
    switch (cfg.fusion) {
        case Fusion::add:
            return tape.add(f_rgb, f_m);
        case Fusion::mul:
            return tape.hadamard(f_rgb, f_m);
        case Fusion::lowrank:
            break;
    }
    auto lr_rgb = tape.conv1x1(f_rgb, p.at("fuse.rgb.w"), p.at("fuse.rgb.b"));
    auto lr_m = tape.conv1x1(f_m, p.at("fuse.m.w"), p.at("fuse.m.b"));
    auto corr = tape.conv1x1(tape.concat_channels(lr_rgb, lr_m), p.at("fuse.corr.w"),
                             p.at("fuse.corr.b"));
    auto att = tape.softmax_spatial(corr);
    auto mixed = tape.concat_channels(tape.hadamard(lr_rgb, att), lr_m);
    return tape.conv1x1(mixed, p.at("fuse.out.w"), p.at("fuse.out.b"));
}

template <typename S>
typename Tape<S>::Id decode_frame(Tape<S>& tape, const std::map<std::string, typename Tape<S>::Id>& p,
                                  typename Tape<S>::Id f, int h, int w) {
    auto x = tape.relu(tape.conv3x3(f, p.at("dec1.w"), p.at("dec1.b"), 1));
    x = tape.bilinear_resize(x, h / 2, w / 2);
    x = tape.relu(tape.conv3x3(x, p.at("dec2.w"), p.at("dec2.b"), 1));
    x = tape.bilinear_resize(x, h, w);
    return tape.conv1x1(x, p.at("dec.out.w"), p.at("dec.out.b"));
}

}  // namespace

template <typename S>
ForwardIds<S> forward_clip(Tape<S>& tape, const ModelConfig& cfg,
                           const std::map<std::string, typename Tape<S>::Id>& pids,
                           const std::vector<Tensor<S>>& frames) {
    ForwardIds<S> out;
    for (const auto& frame : frames) {
        const int h = frame.dim(1), w = frame.dim(2);
        auto fid = tape.input(frame, false);
        auto f_rgb = encode_frame(tape, pids, fid);
        typename Tape<S>::Id fused = f_rgb;
        if (cfg.with_prior) {
            auto f_m = prior_generate(tape, pids, f_rgb);
            out.pm.push_back(tape.conv1x1(f_m, pids.at("pred.w"), pids.at("pred.b")));
            fused = prior_fuse(tape, cfg, pids, f_rgb, f_m);
        }
        out.logits.push_back(decode_frame(tape, pids, fused, h, w));
    }
    return out;
}

template <typename S>
typename Tape<S>::Id batch_loss(Tape<S>& tape, const ModelConfig& cfg,
                                const std::map<std::string, typename Tape<S>::Id>& pids,
                                const std::vector<ClipBatchItem<S>>& batch, LossBreakdown* out) {
    typename Tape<S>::Id l_sem = -1, l_st = -1;
    int n_frames = 0;
    for (const auto& item : batch) {
        auto fwd = forward_clip(tape, cfg, pids, item.frames);
        for (size_t t = 0; t < item.frames.size(); ++t) {
            auto ls = tape.bce_with_logits(fwd.logits[t], item.masks.at(t));
            l_sem = (l_sem < 0) ? ls : tape.scalar_axpy(l_sem, S(1), ls);
            if (cfg.with_prior) {
                auto lst = tape.mse(tape.sigmoid(fwd.pm[t]), item.st_targets.at(t));
                l_st = (l_st < 0) ? lst : tape.scalar_axpy(l_st, S(1), lst);
            }
            ++n_frames;
        }
    }
    l_sem = tape.scalar_scale(l_sem, S(1) / static_cast<S>(n_frames));
    typename Tape<S>::Id total = l_sem;
    if (l_st >= 0) {
        l_st = tape.scalar_scale(l_st, S(1) / static_cast<S>(n_frames));
        total = tape.scalar_axpy(l_sem, static_cast<S>(cfg.lambda_st), l_st);
    }
    if (out) {
        out->l_sem = static_cast<double>(tape.val(l_sem)[0]);
        out->l_st = l_st >= 0 ? static_cast<double>(tape.val(l_st)[0]) : 0.0;
        out->total = static_cast<double>(tape.val(total)[0]);
    }
    return total;
}

template <typename S>
LossBreakdown train_step(const ModelConfig& cfg, ParamSet<S>& params,
                         const std::vector<ClipBatchItem<S>>& batch, const AdamWConfig& opt) {
    Tape<S> tape;
    auto pids = track_params(tape, params);
    LossBreakdown lb;
    auto total = batch_loss(tape, cfg, pids, batch, &lb);
    if (!std::isfinite(lb.total)) throw NumericError("train_step: non-finite loss");
    tape.backward(total);

    params.step += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(opt.beta1), params.step);
    const double bc2 = 1.0 - std::pow(static_cast<double>(opt.beta2), params.step);
    for (const auto& name : params.names) {
        Tensor<S>& p = params.at(name);
        Tensor<S>& m = params.adam_m.at(name);
        Tensor<S>& v = params.adam_v.at(name);
        const Tensor<S>& g = tape.grad(pids.at(name));
        const bool has_grad = g.numel() > 0;
        for (long i = 0; i < p.numel(); ++i) {
            const S gi = has_grad ? g[i] : S(0);
            m[i] = static_cast<S>(opt.beta1) * m[i] + static_cast<S>(1 - opt.beta1) * gi;
            v[i] = static_cast<S>(opt.beta2) * v[i] + static_cast<S>(1 - opt.beta2) * gi * gi;
            const double mh = static_cast<double>(m[i]) / bc1;
            const double vh = static_cast<double>(v[i]) / bc2;
            p[i] -= static_cast<S>(opt.lr * (mh / (std::sqrt(vh) + opt.eps) +
                                             static_cast<double>(opt.weight_decay) * p[i]));
        }
    }
    return lb;
}

Tensor<float> infer_logits(const ModelConfig& cfg, const ParamSet<float>& params,
                           const Tensor<float>& frame, bool multi_scale) {
    const int h = frame.dim(1), w = frame.dim(2);
    std::vector<double> scales = multi_scale ? cfg.scales : std::vector<double>{1.0};
    Tensor<float> avg({1, h, w});
    for (double s : scales) {
        auto round4 = [](double v) {
            int r = static_cast<int>(std::lround(v / 4.0)) * 4;
            return r < 4 ? 4 : r;
        };
        const int hs = round4(h * s), ws = round4(w * s);
        Tensor<float> in = ops::bilinear_resize(frame, hs, ws);
        Tape<float> tape;
        auto pids = track_params(tape, params);
        auto fwd = forward_clip(tape, cfg, pids, std::vector<Tensor<float>>{in});
        Tensor<float> logits = ops::bilinear_resize(tape.val(fwd.logits[0]), h, w);
        for (long i = 0; i < avg.numel(); ++i) avg[i] += logits[i];
    }
    for (auto& v : avg.data) v /= static_cast<float>(scales.size());
    return avg;
}

std::vector<Mask> infer(const ModelConfig& cfg, const ParamSet<float>& params,
                        const std::vector<Tensor<float>>& frames, bool multi_scale) {
    std::vector<Mask> out;
    out.reserve(frames.size());
    for (const auto& frame : frames) {
        Tensor<float> logits = infer_logits(cfg, params, frame, multi_scale);
        Mask m(logits.dim(1), logits.dim(2));
        // sigmoid(z) >= 0.5  <=>  z >= 0
        for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = logits[static_cast<long>(i)] >= 0.f;
        out.push_back(std::move(m));
    }
    return out;
}

// --- checkpoint: magic "EMOC", version byte, length-prefixed key=value config
// block, then (name length, name, EMOT tensor) records ---

namespace {

std::string config_text(const ModelConfig& cfg, long step) {
    std::ostringstream os;
    os << "T=" << cfg.t_frames << "\nH=" << cfg.h << "\nW=" << cfg.w << "\nC=" << cfg.c
       << "\nCexp=" << cfg.expansion() << "\nr=" << cfg.rank() << "\nlambda_st=" << cfg.lambda_st
       << "\nwith_prior=" << (cfg.with_prior ? 1 : 0) << "\nfusion=" << fusion_name(cfg.fusion)
       << "\nseed=" << cfg.seed << "\nscales=";
    for (size_t i = 0; i < cfg.scales.size(); ++i) os << (i ? "," : "") << cfg.scales[i];
    os << "\nstep=" << step << "\n";
    return os.str();
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamSet<float>& params) {
    std::string out = "EMOC";
    out.push_back(1);
    const std::string cfgtext = config_text(cfg, params.step);
    io::detail::put_le(out, cfgtext.size(), 4);
    out += cfgtext;
    auto record = [&](const std::string& name, const Tensor<float>& t) {
        io::detail::put_le(out, name.size(), 4);
        out += name;
        out += io::emot_bytes(t);
    };
    for (const auto& n : params.names) record(n, params.at(n));
    for (const auto& n : params.names) record("opt.m:" + n, params.adam_m.at(n));
    for (const auto& n : params.names) record("opt.v:" + n, params.adam_v.at(n));
    io::detail::write_all(path, out);
}

ParamSet<float> load_checkpoint(const std::string& path, ModelConfig& cfg_out) {
    auto buf = io::detail::read_all(path);
    if (buf.size() < 9 || std::memcmp(buf.data(), "EMOC", 4) != 0)
        throw io::IoError(path + ": bad checkpoint magic");
    if (buf[4] != 1) throw io::IoError(path + ": unsupported checkpoint version");
    const size_t cfglen = io::detail::get_le(buf.data() + 5, 4);
    if (buf.size() < 9 + cfglen) throw io::IoError(path + ": truncated config block");
    std::istringstream cfgs(std::string(buf.begin() + 9, buf.begin() + 9 + static_cast<long>(cfglen)));
    ModelConfig cfg;
    long step = 0;
    std::string line;
    while (std::getline(cfgs, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "T") cfg.t_frames = std::stoi(v);
        else if (k == "H") cfg.h = std::stoi(v);
        else if (k == "W") cfg.w = std::stoi(v);
        else if (k == "C") cfg.c = std::stoi(v);
        else if (k == "Cexp") cfg.c_exp = std::stoi(v);
        else if (k == "r") cfg.r = std::stoi(v);
        else if (k == "lambda_st") cfg.lambda_st = std::stof(v);
        else if (k == "with_prior") cfg.with_prior = v == "1";
        else if (k == "fusion") cfg.fusion = parse_fusion(v);
        else if (k == "seed") cfg.seed = std::stoull(v);
        else if (k == "step") step = std::stol(v);
        else if (k == "scales") {
            cfg.scales.clear();
            std::istringstream ss(v);
            std::string tok;
            while (std::getline(ss, tok, ',')) cfg.scales.push_back(std::stod(tok));
        }
    }
    ParamSet<float> p;
    p.step = step;
    size_t off = 9 + cfglen;
    while (off < buf.size()) {
        if (buf.size() < off + 4) throw io::IoError(path + ": truncated record header");
        const size_t nlen = io::detail::get_le(buf.data() + off, 4);
        off += 4;
        if (buf.size() < off + nlen) throw io::IoError(path + ": truncated record name");
        std::string name(buf.begin() + static_cast<long>(off), buf.begin() + static_cast<long>(off + nlen));
        off += nlen;
        Tensor<float> t = io::parse_emot<float>(buf, off, path + ":" + name);
        if (name.rfind("opt.m:", 0) == 0) p.adam_m[name.substr(6)] = std::move(t);
        else if (name.rfind("opt.v:", 0) == 0) p.adam_v[name.substr(6)] = std::move(t);
        else {
            p.names.push_back(name);
            p.value[name] = std::move(t);
        }
    }
    // cross-check against a freshly shaped parameter set for this config
    ParamSet<float> ref = init_params<float>(cfg, cfg.seed);
    if (ref.names != p.names) throw io::IoError(path + ": parameter set does not match config");
    for (const auto& n : p.names)
        if (p.value.at(n).shape != ref.value.at(n).shape)
            throw io::IoError(path + ": shape mismatch for parameter " + n);
    cfg_out = cfg;
    return p;
}

template ParamSet<float> init_params<float>(const ModelConfig&, uint64_t);
template ParamSet<double> init_params<double>(const ModelConfig&, uint64_t);
template std::map<std::string, Tape<float>::Id> track_params<float>(Tape<float>&, const ParamSet<float>&);
template std::map<std::string, Tape<double>::Id> track_params<double>(Tape<double>&, const ParamSet<double>&);
template ForwardIds<float> forward_clip<float>(Tape<float>&, const ModelConfig&,
                                               const std::map<std::string, Tape<float>::Id>&,
                                               const std::vector<Tensor<float>>&);
template ForwardIds<double> forward_clip<double>(Tape<double>&, const ModelConfig&,
                                                 const std::map<std::string, Tape<double>::Id>&,
                                                 const std::vector<Tensor<double>>&);
template Tape<float>::Id batch_loss<float>(Tape<float>&, const ModelConfig&,
                                           const std::map<std::string, Tape<float>::Id>&,
                                           const std::vector<ClipBatchItem<float>>&, LossBreakdown*);
template Tape<double>::Id batch_loss<double>(Tape<double>&, const ModelConfig&,
                                             const std::map<std::string, Tape<double>::Id>&,
                                             const std::vector<ClipBatchItem<double>>&, LossBreakdown*);
template LossBreakdown train_step<float>(const ModelConfig&, ParamSet<float>&,
                                         const std::vector<ClipBatchItem<float>>&, const AdamWConfig&);
template LossBreakdown train_step<double>(const ModelConfig&, ParamSet<double>&,
                                          const std::vector<ClipBatchItem<double>>&, const AdamWConfig&);

}  // namespace emoseg

#pragma once

#include <map>
#include <string>
#include <vector>

#include "emoseg/autodiff.hpp"
#include "emoseg/rng.hpp"
#include "emoseg/supervision.hpp"

namespace emoseg {

enum class Fusion { lowrank, add, mul };

Fusion parse_fusion(const std::string& s);
std::string fusion_name(Fusion f);

struct ModelConfig {
    int t_frames = 2;
    int h = 64, w = 64;
    int c = 32;       // encoder feature channels
    int c_exp = 0;    // expansion channels in prior generation; 0 means 2*c
    int r = 0;        // low-rank width; 0 means c/4
    float lambda_st = 1.0f;
    bool with_prior = true;
    Fusion fusion = Fusion::lowrank;
    std::vector<double> scales = {0.75, 1.0, 1.25};
    uint64_t seed = 0;

    int expansion() const { return c_exp > 0 ? c_exp : 2 * c; }
    int rank() const { return r > 0 ? r : c / 4; }
    int fh() const { return h / 4; }  // encoder stride 4
    int fw() const { return w / 4; }

    void validate() const;
};

// Named parameter collection with AdamW state. Iteration order is insertion
// order and fixed after initialization.
template <typename S>
struct ParamSet {
    std::vector<std::string> names;
    std::map<std::string, Tensor<S>> value;
    std::map<std::string, Tensor<S>> adam_m, adam_v;
    long step = 0;

    void add(const std::string& name, Tensor<S> t) {
        if (value.count(name)) throw std::invalid_argument("duplicate parameter " + name);
        names.push_back(name);
        adam_m[name] = Tensor<S>(t.shape);
        adam_v[name] = Tensor<S>(t.shape);
        value[name] = std::move(t);
    }
    Tensor<S>& at(const std::string& name) { return value.at(name); }
    const Tensor<S>& at(const std::string& name) const { return value.at(name); }
};

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 1e-4f;
};

// One training clip: frames [3,H,W] each, masks [1,H,W], st targets [1,h,w]
// (empty when training without the prior branch).
template <typename S>
struct ClipBatchItem {
    std::vector<Tensor<S>> frames;
    std::vector<Tensor<S>> masks;
    std::vector<Tensor<S>> st_targets;
};

struct LossBreakdown {
    double l_sem = 0;
    double l_st = 0;
    double total = 0;
};

template <typename S>
struct ForwardIds {
    std::vector<typename Tape<S>::Id> logits;  // per frame, [1,H,W]
    std::vector<typename Tape<S>::Id> pm;      // per frame, [1,h,w]; empty without prior
};

template <typename S>
ParamSet<S> init_params(const ModelConfig& cfg, uint64_t seed);

// Forward one clip through encoder / prior generation / fusion / decoder on
// the given tape. `pids` maps parameter names to tape ids.
template <typename S>
ForwardIds<S> forward_clip(Tape<S>& tape, const ModelConfig& cfg,
                           const std::map<std::string, typename Tape<S>::Id>& pids,
                           const std::vector<Tensor<S>>& frames);

template <typename S>
std::map<std::string, typename Tape<S>::Id> track_params(Tape<S>& tape, const ParamSet<S>& params);

// L_sem + lambda_st * L_ST over a batch of clips; returns the scalar tape id.
template <typename S>
typename Tape<S>::Id batch_loss(Tape<S>& tape, const ModelConfig& cfg,
                                const std::map<std::string, typename Tape<S>::Id>& pids,
                                const std::vector<ClipBatchItem<S>>& batch, LossBreakdown* out);

template <typename S>
LossBreakdown train_step(const ModelConfig& cfg, ParamSet<S>& params,
                         const std::vector<ClipBatchItem<S>>& batch, const AdamWConfig& opt);

// Event-free inference: one binary mask per frame. Multi-scale resizes the
// input to each scale factor (rounded to a multiple of 4), resizes the logits
// back and averages before thresholding.
std::vector<Mask> infer(const ModelConfig& cfg, const ParamSet<float>& params,
                        const std::vector<Tensor<float>>& frames, bool multi_scale);

// Averaged full-resolution logits (the tensor infer() thresholds).
Tensor<float> infer_logits(const ModelConfig& cfg, const ParamSet<float>& params,
                           const Tensor<float>& frame, bool multi_scale);

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::string& path, ModelConfig& cfg_out);

}  // namespace emoseg

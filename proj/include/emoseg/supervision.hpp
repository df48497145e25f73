#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emoseg/tensor.hpp"

namespace emoseg {

// H x W binary map; values are exactly 0 or 1. Used for ground-truth masks,
// binarized event maps and the spatio-temporal supervision target.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    Mask() = default;
    Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

    uint8_t& at(int i, int j) { return v[static_cast<size_t>(i) * w + j]; }
    uint8_t at(int i, int j) const { return v[static_cast<size_t>(i) * w + j]; }
    long count() const {
        long n = 0;
        for (uint8_t x : v) n += x;
        return n;
    }
    bool operator==(const Mask& o) const = default;
};

// 3x3 structuring element; defaults to all-ones.
struct StructuringElement {
    uint8_t d[3][3] = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
};

struct Event {
    int64_t t_us;  // microseconds, non-decreasing within a stream
    int x, y;
    int polarity;  // +1 or -1
};

using EventStream = std::vector<Event>;

enum class SupSource {
    flow,              // normalized flow magnitude
    semantic,          // M
    semantic_dilated,  // M (+) D
    event_raw,         // E
    event_gt,          // M o E
    event_gt_dilated,  // (M (+) D) o E
};

SupSource parse_sup_source(const std::string& s);
std::string sup_source_name(SupSource s);

// Pixel = 1 iff at least one event of either polarity falls in
// [frame_time - window, frame_time). Default window is 50 ms.
Mask binarize_events(const EventStream& stream, int h, int w, int64_t frame_time_us,
                     int64_t window_us = 50000);

Mask dilate(const Mask& m, const StructuringElement& d = {});

// M_ST = (M (+) D) o E
Mask build_st_map(const Mask& m, const Mask& e, const StructuringElement& d = {});

// Supervision target in [0,1]. Binary for all sources except flow, where the
// per-pixel flow magnitude is normalized by the clip maximum (flow tensors are
// [2,H,W], one per frame).
std::vector<Tensor<float>> build_supervision(SupSource source, const std::vector<Mask>& masks,
                                             const std::vector<Mask>& events,
                                             const std::vector<Tensor<float>>* flows = nullptr);

// Max-pool a [0,1] map down to h x w (sizes must divide).
Tensor<float> downsample_target(const Tensor<float>& t, int h, int w);

Tensor<float> mask_to_tensor(const Mask& m);
Mask tensor_to_mask(const Tensor<float>& t, float threshold = 0.5f);

}  // namespace emoseg

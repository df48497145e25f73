#include "emoseg/supervision.hpp"

#include <cmath>
#include <stdexcept>

#include "emoseg/ops.hpp"

namespace emoseg {

SupSource parse_sup_source(const std::string& s) {
    if (s == "flow") return SupSource::flow;
    if (s == "semantic") return SupSource::semantic;
    if (s == "semantic_dilated") return SupSource::semantic_dilated;
    if (s == "event_raw") return SupSource::event_raw;
    if (s == "event_gt") return SupSource::event_gt;
    if (s == "event_gt_dilated") return SupSource::event_gt_dilated;
    throw std::invalid_argument("unknown supervision source: " + s);
}

std::string sup_source_name(SupSource s) {
    switch (s) {
        case SupSource::flow: return "flow";
        case SupSource::semantic: return "semantic";
        case SupSource::semantic_dilated: return "semantic_dilated";
        case SupSource::event_raw: return "event_raw";
        case SupSource::event_gt: return "event_gt";
        case SupSource::event_gt_dilated: return "event_gt_dilated";
    }
    return "?";
}

Mask binarize_events(const EventStream& stream, int h, int w, int64_t frame_time_us,
                     int64_t window_us) {
    if (window_us <= 0) throw std::invalid_argument("binarize_events: window must be positive");
    Mask out(h, w);
    const int64_t t0 = frame_time_us - window_us;
    for (const Event& ev : stream) {
        if (ev.t_us < t0 || ev.t_us >= frame_time_us) continue;
        if (ev.x < 0 || ev.x >= w || ev.y < 0 || ev.y >= h)
            throw std::out_of_range("binarize_events: event coordinates out of bounds");
        out.at(ev.y, ev.x) = 1;
    }
    return out;
}

Mask dilate(const Mask& m, const StructuringElement& d) {
    Mask out(m.h, m.w);
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j) {
            uint8_t v = 0;
            for (int di = -1; di <= 1 && !v; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (!d.d[di + 1][dj + 1]) continue;
                    const int y = i + di, x = j + dj;
                    if (y >= 0 && y < m.h && x >= 0 && x < m.w && m.at(y, x)) {
                        v = 1;
                        break;
                    }
                }
            out.at(i, j) = v;
        }
    return out;
}

Mask build_st_map(const Mask& m, const Mask& e, const StructuringElement& d) {
    if (m.h != e.h || m.w != e.w)
        throw std::invalid_argument("build_st_map: mask and event map sizes differ");
    Mask dil = dilate(m, d);
    Mask out(m.h, m.w);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = dil.v[i] & e.v[i];
    return out;
}

Tensor<float> mask_to_tensor(const Mask& m) {
    Tensor<float> t({1, m.h, m.w});
    for (size_t i = 0; i < m.v.size(); ++i) t[static_cast<long>(i)] = m.v[i] ? 1.f : 0.f;
    return t;
}

Mask tensor_to_mask(const Tensor<float>& t, float threshold) {
    const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
    Mask m(h, w);
    for (size_t i = 0; i < m.v.size(); ++i)
        m.v[i] = t[static_cast<long>(i)] >= threshold ? 1 : 0;
    return m;
}

std::vector<Tensor<float>> build_supervision(SupSource source, const std::vector<Mask>& masks,
                                             const std::vector<Mask>& events,
                                             const std::vector<Tensor<float>>* flows) {
    std::vector<Tensor<float>> out;
    out.reserve(masks.size());
    if (source == SupSource::flow) {
        if (!flows || flows->size() != masks.size())
            throw std::invalid_argument("build_supervision: flow source requires flow fields");
        // normalize by the clip-wide max magnitude
        float max_mag = 0.f;
        std::vector<Tensor<float>> mags;
        for (const auto& f : *flows) {
            const int h = f.dim(1), w = f.dim(2);
            Tensor<float> mag({1, h, w});
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const float dx = f.at3(0, i, j), dy = f.at3(1, i, j);
                    const float m = std::sqrt(dx * dx + dy * dy);
                    mag.at3(0, i, j) = m;
                    max_mag = std::max(max_mag, m);
                }
            mags.push_back(std::move(mag));
        }
        for (auto& mag : mags) {
            if (max_mag > 0.f)
                for (auto& v : mag.data) v /= max_mag;
            out.push_back(std::move(mag));
        }
        return out;
    }
    const bool needs_events = source == SupSource::event_raw || source == SupSource::event_gt ||
                              source == SupSource::event_gt_dilated;
    if (needs_events && events.size() != masks.size())
        throw std::invalid_argument("build_supervision: event source requires one map per frame");
    for (size_t t = 0; t < masks.size(); ++t) {
        const Mask& m = masks[t];
        const Mask& e = needs_events ? events[t] : m;
        switch (source) {
            case SupSource::semantic:
                out.push_back(mask_to_tensor(m));
                break;
            case SupSource::semantic_dilated:
                out.push_back(mask_to_tensor(dilate(m)));
                break;
            case SupSource::event_raw:
                out.push_back(mask_to_tensor(e));
                break;
            case SupSource::event_gt: {
                if (m.h != e.h || m.w != e.w)
                    throw std::invalid_argument("build_supervision: size mismatch");
                Mask g(m.h, m.w);
                for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = m.v[i] & e.v[i];
                out.push_back(mask_to_tensor(g));
                break;
            }
            case SupSource::event_gt_dilated:
                out.push_back(mask_to_tensor(build_st_map(m, e)));
                break;
            default:
                break;
        }
    }
    return out;
}

Tensor<float> downsample_target(const Tensor<float>& t, int h, int w) {
    return ops::maxpool_to(t, h, w);
}

}  // namespace emoseg

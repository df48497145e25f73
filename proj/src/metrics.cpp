#include "emoseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace emoseg {

double jaccard(const Mask& pred, const Mask& gt) {
    if (pred.h != gt.h || pred.w != gt.w) throw std::invalid_argument("jaccard: size mismatch");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        inter += pred.v[i] & gt.v[i];
        uni += pred.v[i] | gt.v[i];
    }
    if (uni == 0) return 1.0;  // agreement on absence
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

Mask boundary_of(const Mask& m) {
    Mask b(m.h, m.w);
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j) {
            if (!m.at(i, j)) continue;
            const bool edge = i == 0 || j == 0 || i == m.h - 1 || j == m.w - 1;
            const bool bg = (i > 0 && !m.at(i - 1, j)) || (i < m.h - 1 && !m.at(i + 1, j)) ||
                            (j > 0 && !m.at(i, j - 1)) || (j < m.w - 1 && !m.at(i, j + 1));
            if (edge || bg) b.at(i, j) = 1;
        }
    return b;
}

// Dilate with a Euclidean disc of the given radius.
Mask disc_dilate(const Mask& m, int radius) {
    Mask out(m.h, m.w);
    const int r2 = radius * radius;
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j) {
            if (!m.at(i, j)) continue;
            for (int di = -radius; di <= radius; ++di)
                for (int dj = -radius; dj <= radius; ++dj) {
                    if (di * di + dj * dj > r2) continue;
                    const int y = i + di, x = j + dj;
                    if (y >= 0 && y < m.h && x >= 0 && x < m.w) out.at(y, x) = 1;
                }
        }
    return out;
}

}  // namespace

double boundary_f(const Mask& pred, const Mask& gt) {
    if (pred.h != gt.h || pred.w != gt.w) throw std::invalid_argument("boundary_f: size mismatch");
    const Mask pb = boundary_of(pred);
    const Mask gb = boundary_of(gt);
    const long np = pb.count(), ng = gb.count();
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;
    const double diag = std::sqrt(static_cast<double>(pred.h) * pred.h +
                                  static_cast<double>(pred.w) * pred.w);
    const int radius = static_cast<int>(std::ceil(0.008 * diag));
    const Mask gb_zone = disc_dilate(gb, radius);
    const Mask pb_zone = disc_dilate(pb, radius);
    long p_hit = 0, g_hit = 0;
    for (size_t i = 0; i < pb.v.size(); ++i) {
        p_hit += pb.v[i] & gb_zone.v[i];
        g_hit += gb.v[i] & pb_zone.v[i];
    }
    const double precision = static_cast<double>(p_hit) / static_cast<double>(np);
    const double recall = static_cast<double>(g_hit) / static_cast<double>(ng);
    if (precision + recall == 0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

Report aggregate(const std::vector<FrameScore>& scores) {
    if (scores.empty()) throw std::invalid_argument("aggregate: empty score list");
    Report r;
    long jr = 0, fr = 0;
    for (const FrameScore& s : scores) {
        r.j_mean += s.j;
        r.f_mean += s.f;
        if (s.j > 0.5) ++jr;
        if (s.f > 0.5) ++fr;
    }
    const double n = static_cast<double>(scores.size());
    r.j_mean = 100.0 * r.j_mean / n;
    r.f_mean = 100.0 * r.f_mean / n;
    r.j_recall = 100.0 * static_cast<double>(jr) / n;
    r.f_recall = 100.0 * static_cast<double>(fr) / n;
    r.j_and_f = (r.j_mean + r.f_mean) / 2.0;
    return r;
}

std::string format_report(const Report& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "J_mean %.1f\nJ_recall %.1f\nF_mean %.1f\nF_recall %.1f\nJandF %.1f\n",
                  r.j_mean, r.j_recall, r.f_mean, r.f_recall, r.j_and_f);
    return buf;
}

}  // namespace emoseg

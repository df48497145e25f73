#pragma once

#include <vector>

#include "emoseg/supervision.hpp"

namespace emoseg {

struct FrameScore {
    double j = 0;  // region similarity, [0,1]
    double f = 0;  // contour accuracy, [0,1]
};

// Aggregated statistics, all in percent.
struct Report {
    double j_mean = 0, j_recall = 0;
    double f_mean = 0, f_recall = 0;
    double j_and_f = 0;
};

// |pred & gt| / |pred | gt|; 1 when both masks are empty.
double jaccard(const Mask& pred, const Mask& gt);

// DAVIS-style boundary F-measure. Boundary pixels are foreground pixels with a
// 4-neighbor background pixel or on the image edge; matching tolerance is a
// Euclidean disc of radius ceil(0.008 * image diagonal).
double boundary_f(const Mask& pred, const Mask& gt);

// Means x100; recall = percent of frames with score strictly above 0.5;
// j_and_f = (j_mean + f_mean) / 2.
Report aggregate(const std::vector<FrameScore>& scores);

std::string format_report(const Report& r);

}  // namespace emoseg

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoseg/supervision.hpp"
#include "emoseg/tensor.hpp"

namespace emoseg {

// Synthetic ego-motion scenes: a textured background translating under camera
// motion, static distractor objects riding the background, and movers with
// their own scene-relative velocity. Events come from a log-intensity
// contrast-threshold camera model evaluated at substeps between frames.
struct SceneConfig {
    int h = 64, w = 64;
    int t_frames = 2;
    int n_moving = 1;
    int n_static = 2;
    double ego_min_speed = 0.6;   // px/frame, image translation of the background
    double ego_max_speed = 2.0;
    double obj_min_speed = 0.8;   // scene-relative, movers only; must be >= 0.5
    double obj_max_speed = 2.5;
    double theta_e = 0.2;         // contrast threshold on |delta log intensity|
    int substeps = 8;
    int bg_smooth = 3;            // box-blur passes over the background texture
    double bg_contrast = 0.6;     // 0 gives a flat background

    void validate() const;
};

struct SceneSample {
    std::vector<Tensor<float>> frames;  // [3,H,W] each, values in [0,1]
    std::vector<Mask> events;
    std::vector<Tensor<float>> flow;    // [2,H,W]: (dx, dy) per pixel, px/frame
    std::vector<Mask> masks;            // movers only
    double ego_vx = 0, ego_vy = 0;
};

SceneSample generate(const SceneConfig& cfg, uint64_t seed);

// seq dir layout: frames/%06d.ppm, events/%06d.pgm, masks/%06d.pgm,
// flow/%06d.emot, meta.txt
void write_sample(const std::string& dir, const SceneSample& sample);
SceneSample read_sample(const std::string& dir, bool require_events = true,
                        bool require_flow = true);

void write_mask_pgm(const std::string& path, const Mask& m);
Mask read_mask_pgm(const std::string& path);

}  // namespace emoseg

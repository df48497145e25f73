#pragma once

#include <string>

#include "emoseg/model.hpp"
#include "emoseg/scene.hpp"

namespace emoseg {

// Flat key=value run configuration covering scene generation, the model and
// the training hyperparameters. Unknown keys are rejected so a typo cannot
// silently fall back to a default.
struct RunConfig {
    SceneConfig scene;
    ModelConfig model;
    AdamWConfig optim;
    int steps = 2000;
    int batch = 2;
    SupSource sup_source = SupSource::event_gt_dilated;
    uint64_t seed = 0;

    void apply(const std::string& key, const std::string& value);
    std::string echo() const;  // fully-resolved key=value text
};

RunConfig load_run_config(const std::string& path);  // "" gives defaults
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace emoseg

#include "emoseg/runconfig.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace emoseg {

void RunConfig::apply(const std::string& key, const std::string& value) {
    // scene
    if (key == "H") { scene.h = std::stoi(value); model.h = scene.h; }
    else if (key == "W") { scene.w = std::stoi(value); model.w = scene.w; }
    else if (key == "T") { scene.t_frames = std::stoi(value); model.t_frames = scene.t_frames; }
    else if (key == "n_moving") scene.n_moving = std::stoi(value);
    else if (key == "n_static") scene.n_static = std::stoi(value);
    else if (key == "ego_min") scene.ego_min_speed = std::stod(value);
    else if (key == "ego_max") scene.ego_max_speed = std::stod(value);
    else if (key == "obj_min_speed") scene.obj_min_speed = std::stod(value);
    else if (key == "obj_max_speed") scene.obj_max_speed = std::stod(value);
    else if (key == "theta_e") scene.theta_e = std::stod(value);
    else if (key == "substeps") scene.substeps = std::stoi(value);
    else if (key == "bg_smooth") scene.bg_smooth = std::stoi(value);
    else if (key == "bg_contrast") scene.bg_contrast = std::stod(value);
    // model
    else if (key == "C") model.c = std::stoi(value);
    else if (key == "Cexp") model.c_exp = std::stoi(value);
    else if (key == "r") model.r = std::stoi(value);
    else if (key == "lambda_st") model.lambda_st = std::stof(value);
    else if (key == "with_prior") model.with_prior = value == "1" || value == "true";
    else if (key == "fusion") model.fusion = parse_fusion(value);
    else if (key == "scales") {
        model.scales.clear();
        std::istringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ',')) model.scales.push_back(std::stod(tok));
    }
    // training
    else if (key == "lr") optim.lr = std::stof(value);
    else if (key == "weight_decay") optim.weight_decay = std::stof(value);
    else if (key == "steps") steps = std::stoi(value);
    else if (key == "batch") batch = std::stoi(value);
    else if (key == "sup_source") sup_source = parse_sup_source(value);
    else if (key == "seed") { seed = std::stoull(value); model.seed = seed; }
    else throw std::invalid_argument("unknown config key: " + key);
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    os << "H=" << scene.h << "\nW=" << scene.w << "\nT=" << scene.t_frames
       << "\nn_moving=" << scene.n_moving << "\nn_static=" << scene.n_static
       << "\nego_min=" << scene.ego_min_speed << "\nego_max=" << scene.ego_max_speed
       << "\nobj_min_speed=" << scene.obj_min_speed << "\nobj_max_speed=" << scene.obj_max_speed
       << "\ntheta_e=" << scene.theta_e << "\nsubsteps=" << scene.substeps
       << "\nbg_smooth=" << scene.bg_smooth << "\nbg_contrast=" << scene.bg_contrast
       << "\nC=" << model.c << "\nCexp=" << model.expansion() << "\nr=" << model.rank()
       << "\nlambda_st=" << model.lambda_st << "\nwith_prior=" << (model.with_prior ? 1 : 0)
       << "\nfusion=" << fusion_name(model.fusion) << "\nscales=";
    for (size_t i = 0; i < model.scales.size(); ++i) os << (i ? "," : "") << model.scales[i];
    os << "\nlr=" << optim.lr << "\nweight_decay=" << optim.weight_decay << "\nsteps=" << steps
       << "\nbatch=" << batch << "\nsup_source=" << sup_source_name(sup_source)
       << "\nseed=" << seed << "\n";
    return os.str();
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        while (!line.empty() && std::isspace(line.back())) line.pop_back();
        size_t start = 0;
        while (start < line.size() && std::isspace(line[start])) ++start;
        line = line.substr(start);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
        cfg.apply(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        f << text;
    }
    fs::rename(tmp, path);
}

}  // namespace emoseg

#include "emoseg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "emoseg/io.hpp"
#include "emoseg/rng.hpp"

namespace fs = std::filesystem;

namespace emoseg {

void SceneConfig::validate() const {
    if (h < 8 || w < 8 || t_frames < 1) throw std::invalid_argument("scene: bad dimensions");
    if (n_moving < 0 || n_static < 0) throw std::invalid_argument("scene: bad object counts");
    if (n_moving > 0 && obj_min_speed < 0.5)
        throw std::invalid_argument("scene: mover speed must be at least 0.5 px/frame");
    if (substeps < 1) throw std::invalid_argument("scene: substeps must be >= 1");
    if (theta_e <= 0) throw std::invalid_argument("scene: contrast threshold must be positive");
}

namespace {

struct SceneObject {
    bool ellipse = false;
    bool moving = false;
    double cx = 0, cy = 0;  // canvas center at tau = 0
    double ax = 0, ay = 0;  // half extents
    double vx = 0, vy = 0;  // canvas (scene-relative) velocity
    float color[3] = {0, 0, 0};

    bool contains(double px, double py, double tau) const {
        const double dx = px - (cx + vx * tau);
        const double dy = py - (cy + vy * tau);
        if (ellipse) return (dx * dx) / (ax * ax) + (dy * dy) / (ay * ay) <= 1.0;
        return std::abs(dx) <= ax && std::abs(dy) <= ay;
    }
};

struct Canvas {
    int h = 0, w = 0;
    std::vector<float> v;
    float sample(double y, double x) const {  // bilinear, clamped
        y = std::clamp(y, 0.0, static_cast<double>(h - 1));
        x = std::clamp(x, 0.0, static_cast<double>(w - 1));
        const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
        const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = y - y0, fx = x - x0;
        const double a = v[static_cast<size_t>(y0) * w + x0] * (1 - fx) +
                         v[static_cast<size_t>(y0) * w + x1] * fx;
        const double b = v[static_cast<size_t>(y1) * w + x0] * (1 - fx) +
                         v[static_cast<size_t>(y1) * w + x1] * fx;
        return static_cast<float>(a * (1 - fy) + b * fy);
    }
};

Canvas make_background(const SceneConfig& cfg, int ch, int cw, Rng& rng) {
    Canvas bg{ch, cw, std::vector<float>(static_cast<size_t>(ch) * cw)};
    for (auto& p : bg.v) p = static_cast<float>(rng.uniform());
    std::vector<float> tmp(bg.v.size());
    for (int pass = 0; pass < cfg.bg_smooth; ++pass) {
        for (int i = 0; i < ch; ++i)
            for (int j = 0; j < cw; ++j) {
                float acc = 0;
                int n = 0;
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        const int y = i + di, x = j + dj;
                        if (y < 0 || y >= ch || x < 0 || x >= cw) continue;
                        acc += bg.v[static_cast<size_t>(y) * cw + x];
                        ++n;
                    }
                tmp[static_cast<size_t>(i) * cw + j] = acc / static_cast<float>(n);
            }
        bg.v.swap(tmp);
    }
    // recentre around mid-grey and apply the requested contrast, amplified so
    // smoothing does not wash the texture out
    float mean = 0;
    for (float p : bg.v) mean += p;
    mean /= static_cast<float>(bg.v.size());
    for (auto& p : bg.v)
        p = std::clamp(0.5f + static_cast<float>(cfg.bg_contrast) * (p - mean) * 4.0f, 0.f, 1.f);
    return bg;
}

// Render the viewport at continuous time tau; returns [3,H,W].
Tensor<float> render(const SceneConfig& cfg, const Canvas& bg, const std::vector<SceneObject>& objs,
                     double ox, double oy, double tau) {
    Tensor<float> img({3, cfg.h, cfg.w});
    for (int i = 0; i < cfg.h; ++i)
        for (int j = 0; j < cfg.w; ++j) {
            const double py = oy + i, px = ox + j;
            const SceneObject* top = nullptr;
            for (const auto& o : objs)  // later objects occlude earlier ones
                if (o.contains(px, py, tau)) top = &o;
            if (top) {
                for (int c = 0; c < 3; ++c) img.at3(c, i, j) = top->color[c];
            } else {
                const float g = bg.sample(py, px);
                for (int c = 0; c < 3; ++c) img.at3(c, i, j) = g;
            }
        }
    return img;
}

double luminance(const Tensor<float>& img, int i, int j) {
    return (img.at3(0, i, j) + img.at3(1, i, j) + img.at3(2, i, j)) / 3.0;
}

}  // namespace

SceneSample generate(const SceneConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng = Rng::substream(seed, 0x5CE11E);

    const int margin = static_cast<int>(std::ceil(cfg.ego_max_speed * (cfg.t_frames + 1))) + 4;
    const int ch = cfg.h + 2 * margin, cw = cfg.w + 2 * margin;
    Canvas bg = make_background(cfg, ch, cw, rng);

    const double ego_speed = rng.uniform(cfg.ego_min_speed, cfg.ego_max_speed);
    const double ego_dir = rng.uniform(0, 2 * M_PI);
    const double ego_vx = ego_speed * std::cos(ego_dir);
    const double ego_vy = ego_speed * std::sin(ego_dir);

    std::vector<SceneObject> objs;
    const int n_total = cfg.n_moving + cfg.n_static;
    for (int k = 0; k < n_total; ++k) {
        SceneObject o;
        o.moving = k < cfg.n_moving;
        o.ellipse = rng.uniform() < 0.5;
        o.ax = rng.uniform(4.0, 9.0);
        o.ay = rng.uniform(4.0, 9.0);
        if (2 * o.ax >= cfg.w || 2 * o.ay >= cfg.h)
            throw std::invalid_argument("scene: object larger than viewport");
        // canvas position chosen so the object starts inside the viewport
        o.cx = margin + rng.uniform(o.ax + 1, cfg.w - o.ax - 1);
        o.cy = margin + rng.uniform(o.ay + 1, cfg.h - o.ay - 1);
        if (o.moving) {
            const double sp = rng.uniform(cfg.obj_min_speed, cfg.obj_max_speed);
            const double dir = rng.uniform(0, 2 * M_PI);
            o.vx = sp * std::cos(dir);
            o.vy = sp * std::sin(dir);
            // movers draw from a bright band, distractors from a dark one, so a
            // per-frame model has an appearance cue to latch onto
            for (float& c : o.color) c = static_cast<float>(rng.uniform(0.60, 0.95));
        } else {
            for (float& c : o.color) c = static_cast<float>(rng.uniform(0.05, 0.40));
        }
        objs.push_back(o);
    }

    // Viewport origin: static canvas content translates by (ego_vx, ego_vy) in
    // image coordinates each frame interval.
    auto origin_x = [&](double tau) { return margin - ego_vx * tau; };
    auto origin_y = [&](double tau) { return margin - ego_vy * tau; };

    SceneSample out;
    out.ego_vx = ego_vx;
    out.ego_vy = ego_vy;

    // Event camera state: per-pixel log intensity at the last event (or at the
    // start of the simulation, one frame interval before frame 0).
    const double eps = 1.0 / 255.0;
    std::vector<double> ref(static_cast<size_t>(cfg.h) * cfg.w);
    std::vector<Mask> frame_events(static_cast<size_t>(cfg.t_frames), Mask(cfg.h, cfg.w));
    const int total_steps = cfg.t_frames * cfg.substeps;
    for (int k = 0; k <= total_steps; ++k) {
        const double tau = -1.0 + static_cast<double>(k) / cfg.substeps;
        Tensor<float> img = render(cfg, bg, objs, origin_x(tau), origin_y(tau), tau);
        for (int i = 0; i < cfg.h; ++i)
            for (int j = 0; j < cfg.w; ++j) {
                const double logi = std::log(luminance(img, i, j) + eps);
                const size_t p = static_cast<size_t>(i) * cfg.w + j;
                if (k == 0) {
                    ref[p] = logi;
                } else if (std::abs(logi - ref[p]) >= cfg.theta_e) {
                    frame_events[static_cast<size_t>((k - 1) / cfg.substeps)].at(i, j) = 1;
                    ref[p] = logi;
                }
            }
        if (k > 0 && k % cfg.substeps == 0) {
            const int t = k / cfg.substeps - 1;
            out.frames.push_back(std::move(img));
            // ground-truth mask: pixels whose topmost object is a mover
            Mask m(cfg.h, cfg.w);
            Tensor<float> fl({2, cfg.h, cfg.w});
            for (int i = 0; i < cfg.h; ++i)
                for (int j = 0; j < cfg.w; ++j) {
                    const double py = origin_y(tau) + i, px = origin_x(tau) + j;
                    const SceneObject* top = nullptr;
                    for (const auto& o : objs)
                        if (o.contains(px, py, tau)) top = &o;
                    if (top && top->moving) m.at(i, j) = 1;
                    // image-plane velocity: background ego translation plus the
                    // object's own scene-relative velocity
                    fl.at3(0, i, j) = static_cast<float>(ego_vx + (top ? top->vx : 0.0));
                    fl.at3(1, i, j) = static_cast<float>(ego_vy + (top ? top->vy : 0.0));
                }
            out.masks.push_back(std::move(m));
            out.flow.push_back(std::move(fl));
            out.events.push_back(std::move(frame_events[static_cast<size_t>(t)]));
        }
    }
    return out;
}

void write_mask_pgm(const std::string& path, const Mask& m) {
    std::vector<uint8_t> pix(m.v.size());
    for (size_t i = 0; i < m.v.size(); ++i) pix[i] = m.v[i] ? 255 : 0;
    io::write_pgm(path, m.h, m.w, pix);
}

Mask read_mask_pgm(const std::string& path) {
    int h = 0, w = 0;
    auto pix = io::read_pgm(path, h, w);
    Mask m(h, w);
    for (size_t i = 0; i < pix.size(); ++i) m.v[i] = pix[i] >= 128 ? 1 : 0;
    return m;
}

namespace {

std::string frame_name(int t, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.%s", t, ext);
    return buf;
}

}  // namespace

void write_sample(const std::string& dir, const SceneSample& sample) {
    for (const char* sub : {"frames", "events", "masks", "flow"})
        fs::create_directories(fs::path(dir) / sub);
    for (size_t t = 0; t < sample.frames.size(); ++t) {
        const int ti = static_cast<int>(t);
        io::write_ppm((fs::path(dir) / "frames" / frame_name(ti, "ppm")).string(), sample.frames[t]);
        write_mask_pgm((fs::path(dir) / "events" / frame_name(ti, "pgm")).string(), sample.events[t]);
        write_mask_pgm((fs::path(dir) / "masks" / frame_name(ti, "pgm")).string(), sample.masks[t]);
        io::write_emot((fs::path(dir) / "flow" / frame_name(ti, "emot")).string(), sample.flow[t]);
    }
    std::ofstream meta(fs::path(dir) / "meta.txt");
    meta << "frames=" << sample.frames.size() << "\nego_vx=" << sample.ego_vx
         << "\nego_vy=" << sample.ego_vy << "\n";
}

SceneSample read_sample(const std::string& dir, bool require_events, bool require_flow) {
    SceneSample s;
    std::ifstream meta(fs::path(dir) / "meta.txt");
    if (!meta) throw io::IoError(dir + ": missing meta.txt");
    int n = 0;
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "frames") n = std::stoi(v);
        else if (k == "ego_vx") s.ego_vx = std::stod(v);
        else if (k == "ego_vy") s.ego_vy = std::stod(v);
    }
    for (int t = 0; t < n; ++t) {
        const std::string fp = (fs::path(dir) / "frames" / frame_name(t, "ppm")).string();
        const std::string mp = (fs::path(dir) / "masks" / frame_name(t, "pgm")).string();
        if (!fs::exists(fp)) throw io::IoError(dir + ": missing frame " + frame_name(t, "ppm"));
        if (!fs::exists(mp)) throw io::IoError(dir + ": missing mask " + frame_name(t, "pgm"));
        s.frames.push_back(io::read_ppm(fp));
        s.masks.push_back(read_mask_pgm(mp));
        if (require_events) {
            const std::string ep = (fs::path(dir) / "events" / frame_name(t, "pgm")).string();
            if (!fs::exists(ep)) throw io::IoError(dir + ": missing event map " + frame_name(t, "pgm"));
            s.events.push_back(read_mask_pgm(ep));
        }
        if (require_flow) {
            const std::string lp = (fs::path(dir) / "flow" / frame_name(t, "emot")).string();
            if (!fs::exists(lp)) throw io::IoError(dir + ": missing flow " + frame_name(t, "emot"));
            s.flow.push_back(io::read_emot<float>(lp));
        }
        if (s.frames.back().dim(1) != s.masks.back().h || s.frames.back().dim(2) != s.masks.back().w)
            throw io::IoError(dir + ": size mismatch across streams at frame " + std::to_string(t));
    }
    return s;
}

}  // namespace emoseg

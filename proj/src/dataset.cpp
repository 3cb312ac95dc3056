#include "segen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seg {

std::array<float, 3> color_rgb(const std::string& name) {
    if (name == "red") return {0.88f, 0.10f, 0.10f};
    if (name == "green") return {0.10f, 0.75f, 0.18f};
    if (name == "blue") return {0.15f, 0.25f, 0.90f};
    if (name == "yellow") return {0.95f, 0.85f, 0.10f};
    throw std::invalid_argument("unknown color: " + name);
}

bool is_known_color(const std::string& name) {
    return name == "red" || name == "green" || name == "blue" || name == "yellow";
}

bool is_known_shape(const std::string& name) {
    return name == "circle" || name == "square" || name == "triangle" || name == "cross" || name == "pinwheel";
}

bool point_in_shape(const std::string& shape, float px, float py, float cx, float cy, float half) {
    float dx = px - cx, dy = py - cy;
    if (shape == "circle") return dx * dx + dy * dy <= half * half;
    if (shape == "square") {
        float s = half * 0.88f;
        return std::fabs(dx) <= s && std::fabs(dy) <= s;
    }
    if (shape == "triangle") {
        // point-up isoceles: apex (0,-half), base at y = +0.8*half
        float base_y = 0.8f * half;
        if (dy > base_y || dy < -half) return false;
        float frac = (dy + half) / (base_y + half);  // 0 at apex, 1 at base
        return std::fabs(dx) <= frac * half;
    }
    if (shape == "cross") {
        float arm = 0.34f * half;
        return (std::fabs(dx) <= arm && std::fabs(dy) <= half) || (std::fabs(dy) <= arm && std::fabs(dx) <= half);
    }
    if (shape == "pinwheel") {
        // cross rotated 45 degrees
        const float r = 0.70710678f;
        float rx = r * (dx + dy), ry = r * (dy - dx);
        float arm = 0.34f * half;
        return (std::fabs(rx) <= arm && std::fabs(ry) <= half) || (std::fabs(ry) <= arm && std::fabs(rx) <= half);
    }
    throw std::invalid_argument("unknown shape: " + shape);
}

std::array<int, 4> shape_box(const std::string& shape, float cx, float cy, float half, int canvas) {
    float s = half;
    if (shape == "square") s = half * 0.88f;
    float y0 = cy - s, y1 = cy + s;
    if (shape == "triangle") {
        y0 = cy - half;
        y1 = cy + 0.8f * half;
    }
    auto clampi = [canvas](float v) { return std::clamp(static_cast<int>(v), 0, canvas); };
    return {clampi(std::floor(cx - s)), clampi(std::floor(y0)), clampi(std::ceil(cx + s)), clampi(std::ceil(y1))};
}

Tensor render_objects(const std::vector<SceneObject>& objects, int canvas, float background,
                      const std::array<float, 3>* color_jitter) {
    Tensor img({3, canvas, canvas}, background);
    const int ss = 4;  // supersampling grid per pixel side
    for (const auto& obj : objects) {
        auto rgb = color_rgb(obj.color);
        if (color_jitter)
            for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(rgb[c] + (*color_jitter)[c], 0.0f, 1.0f);
        int x0 = std::max(0, static_cast<int>(obj.cx - obj.half - 2));
        int x1 = std::min(canvas, static_cast<int>(obj.cx + obj.half + 3));
        int y0 = std::max(0, static_cast<int>(obj.cy - obj.half - 2));
        int y1 = std::min(canvas, static_cast<int>(obj.cy + obj.half + 3));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                int hit = 0;
                for (int sy = 0; sy < ss; ++sy)
                    for (int sx = 0; sx < ss; ++sx)
                        if (point_in_shape(obj.shape, x + (sx + 0.5f) / ss, y + (sy + 0.5f) / ss, obj.cx, obj.cy, obj.half))
                            ++hit;
                if (!hit) continue;
                float a = static_cast<float>(hit) / (ss * ss);
                for (int c = 0; c < 3; ++c) {
                    float& px = img.data[(static_cast<size_t>(c) * canvas + y) * canvas + x];
                    px = (1.0f - a) * px + a * rgb[c];
                }
            }
    }
    return img;
}

std::string caption_for(const std::vector<SceneObject>& objects) {
    std::string cap;
    for (size_t i = 0; i < objects.size(); ++i) {
        if (i) cap += " and ";
        cap += "a " + objects[i].color + " " + objects[i].shape;
    }
    return cap;
}

namespace {
bool boxes_overlap(const std::array<int, 4>& a, const std::array<int, 4>& b, int margin) {
    return a[0] - margin < b[2] && b[0] - margin < a[2] && a[1] - margin < b[3] && b[1] - margin < a[3];
}
}  // namespace

std::vector<SyntheticScene> synth_dataset(const DatasetSpec& spec, uint64_t seed) {
    if (spec.shapes.size() < 2 || spec.colors.size() < 2)
        throw std::invalid_argument("synth_dataset: need at least 2 shape classes and 2 colors");
    for (const auto& s : spec.shapes)
        if (!is_known_shape(s)) throw std::invalid_argument("synth_dataset: unknown shape " + s);
    for (const auto& c : spec.colors)
        if (!is_known_color(c)) throw std::invalid_argument("synth_dataset: unknown color " + c);
    if (spec.canvas < static_cast<int>(4 * spec.min_half + 8))
        throw std::invalid_argument("synth_dataset: canvas too small for requested subjects");

    RandomStream root(seed);
    std::vector<SyntheticScene> scenes;
    scenes.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        RandomStream rng(root.derive(static_cast<uint64_t>(i)));
        int n_subjects = rng.u01() < spec.two_subject_fraction ? 2 : 1;

        SyntheticScene scene;
        for (int attempt = 0; attempt < 200 && static_cast<int>(scene.objects.size()) < n_subjects; ++attempt) {
            SceneObject obj;
            obj.shape = spec.shapes[rng.uniform_int(static_cast<int>(spec.shapes.size()))];
            obj.color = spec.colors[rng.uniform_int(static_cast<int>(spec.colors.size()))];
            bool clash = false;
            for (const auto& prev : scene.objects)
                if (prev.shape == obj.shape || prev.color == obj.color) clash = true;
            if (clash) continue;
            obj.half = rng.uniform(spec.min_half, spec.max_half);
            float m = obj.half + 2.0f;
            obj.cx = rng.uniform(m, spec.canvas - m);
            obj.cy = rng.uniform(m, spec.canvas - m);
            obj.box = shape_box(obj.shape, obj.cx, obj.cy, obj.half, spec.canvas);
            bool overlaps = false;
            for (const auto& prev : scene.objects)
                if (boxes_overlap(prev.box, obj.box, 4)) overlaps = true;
            if (!overlaps) scene.objects.push_back(std::move(obj));
        }
        if (static_cast<int>(scene.objects.size()) < n_subjects)
            throw std::runtime_error("synth_dataset: could not place subjects (canvas too crowded)");

        float bg = rng.uniform(0.78f, 0.88f);
        std::array<float, 3> jitter = {rng.uniform(-0.03f, 0.03f), rng.uniform(-0.03f, 0.03f), rng.uniform(-0.03f, 0.03f)};
        scene.image = render_objects(scene.objects, spec.canvas, bg, &jitter);
        scene.caption = caption_for(scene.objects);
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

Vocabulary build_vocabulary(const DatasetSpec& spec) {
    std::vector<std::string> toks = {"<sot>", "a", "and"};
    for (const auto& c : spec.colors) toks.push_back(c);
    for (const auto& s : spec.shapes) {
        if (s == "pinwheel") {  // multi-token subject word: splits to pin + wheel
            toks.push_back("pin");
            toks.push_back("wheel");
        } else {
            toks.push_back(s);
        }
    }
    return Vocabulary::from_tokens(std::move(toks));
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    if (img.ndim() != 3) throw std::invalid_argument("resize_bilinear: expected [C,H,W]");
    int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out_h; ++y) {
            float fy = (y + 0.5f) * h / out_h - 0.5f;
            int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
            int y1 = std::min(y0 + 1, h - 1);
            float wy = std::clamp(fy - y0, 0.0f, 1.0f);
            for (int x = 0; x < out_w; ++x) {
                float fx = (x + 0.5f) * w / out_w - 0.5f;
                int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
                int x1 = std::min(x0 + 1, w - 1);
                float wx = std::clamp(fx - x0, 0.0f, 1.0f);
                auto px = [&](int yy, int xx) { return img.data[(static_cast<size_t>(ch) * h + yy) * w + xx]; };
                out.data[(static_cast<size_t>(ch) * out_h + y) * out_w + x] =
                    (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) + wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
            }
        }
    return out;
}

Tensor crop_resize_pad(const Tensor& image, const std::array<int, 4>& box, int out_size, float pad_value) {
    if (image.ndim() != 3) throw std::invalid_argument("crop_resize_pad: expected [C,H,W]");
    int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    int x0 = std::clamp(box[0], 0, w), y0 = std::clamp(box[1], 0, h);
    int x1 = std::clamp(box[2], 0, w), y1 = std::clamp(box[3], 0, h);
    if (x1 <= x0 || y1 <= y0) throw std::invalid_argument("crop_resize_pad: empty box");
    int bw = x1 - x0, bh = y1 - y0;
    int side = std::max(bw, bh);
    Tensor square({c, side, side}, pad_value);
    int ox = (side - bw) / 2, oy = (side - bh) / 2;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < bh; ++y)
            for (int x = 0; x < bw; ++x)
                square.data[(static_cast<size_t>(ch) * side + y + oy) * side + x + ox] =
                    image.data[(static_cast<size_t>(ch) * h + y0 + y) * w + x0 + x];
    return side == out_size ? square : resize_bilinear(square, out_size, out_size);
}

}  // namespace seg

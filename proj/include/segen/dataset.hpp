#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "segen/tensor.hpp"
#include "segen/text.hpp"

namespace seg {

struct DatasetSpec {
    std::vector<std::string> shapes = {"circle", "square", "triangle", "cross", "pinwheel"};
    std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
    int canvas = 64;
    int count = 2000;
    float two_subject_fraction = 0.25f;
    float min_half = 8.0f, max_half = 13.0f;  // shape half-extent in pixels
};

struct SceneObject {
    std::string color, shape;
    float cx = 0, cy = 0, half = 0;
    std::array<int, 4> box{};  // x0,y0,x1,y1 (exclusive end), pixel units
};

struct SyntheticScene {
    Tensor image;  // [3,canvas,canvas]
    std::string caption;
    std::vector<SceneObject> objects;
};

std::array<float, 3> color_rgb(const std::string& name);
bool is_known_color(const std::string& name);
bool is_known_shape(const std::string& name);

// Signed coverage test used by both the renderer and the oracle detector's
// shape templates: is (px,py) inside the shape centered at (cx,cy)?
bool point_in_shape(const std::string& shape, float px, float py, float cx, float cy, float half);

// Antialiased render (4x4 coverage supersampling) over a flat background.
Tensor render_objects(const std::vector<SceneObject>& objects, int canvas, float background,
                      const std::array<float, 3>* color_jitter = nullptr);

std::array<int, 4> shape_box(const std::string& shape, float cx, float cy, float half, int canvas);

std::vector<SyntheticScene> synth_dataset(const DatasetSpec& spec, uint64_t seed);

Vocabulary build_vocabulary(const DatasetSpec& spec);

std::string caption_for(const std::vector<SceneObject>& objects);

// Crop a box, pad to square (aspect preserving) and resize to out_size.
Tensor crop_resize_pad(const Tensor& image, const std::array<int, 4>& box, int out_size, float pad_value = 0.0f);

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

}  // namespace seg

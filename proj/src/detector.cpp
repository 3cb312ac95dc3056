#include "segen/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "segen/dataset.hpp"

namespace seg {

namespace {

const std::vector<std::string>& palette() {
    static const std::vector<std::string> kColors = {"red", "green", "blue", "yellow"};
    return kColors;
}

const std::vector<std::string>& shape_classes() {
    static const std::vector<std::string> kShapes = {"circle", "square", "triangle", "cross", "pinwheel"};
    return kShapes;
}

struct Blob {
    int color = -1;
    std::vector<int> pixels;  // y*w + x
    std::array<int, 4> box{1 << 20, 1 << 20, 0, 0};
    float purity = 0.0f;
};

float color_closeness(const Tensor& img, int idx, int hw_w, const std::array<float, 3>& rgb) {
    int h = img.shape[1];
    (void)h;
    float d2 = 0.0f;
    for (int c = 0; c < 3; ++c) {
        float v = img.data[static_cast<size_t>(c) * img.shape[1] * img.shape[2] + idx] - rgb[c];
        d2 += v * v;
    }
    (void)hw_w;
    return std::max(0.0f, 1.0f - std::sqrt(d2) / 0.75f);
}

// phrase := [color] shape
struct ParsedPhrase {
    int color = -1;  // palette index or -1 for any
    std::string shape;
};

ParsedPhrase parse_phrase(const std::string& phrase) {
    std::istringstream is(phrase);
    std::vector<std::string> words;
    std::string w;
    while (is >> w) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
        if (w == "a" || w == "an" || w == "the") continue;
        words.push_back(w);
    }
    ParsedPhrase p;
    for (const auto& word : words) {
        if (is_known_color(word)) {
            for (size_t i = 0; i < palette().size(); ++i)
                if (palette()[i] == word) p.color = static_cast<int>(i);
        } else if (is_known_shape(word)) {
            p.shape = word;
        } else {
            throw std::invalid_argument("oracle detector: unknown phrase word '" + word + "'");
        }
    }
    if (p.shape.empty()) throw std::invalid_argument("oracle detector: phrase has no shape: '" + phrase + "'");
    return p;
}

// Template parameters that would have produced this bounding box.
void template_params(const std::string& shape, const std::array<int, 4>& box, float& cx, float& cy, float& half) {
    float bw = static_cast<float>(box[2] - box[0]);
    float bh = static_cast<float>(box[3] - box[1]);
    cx = (box[0] + box[2]) / 2.0f;
    if (shape == "square") {
        half = (bw + bh) / 4.0f / 0.88f;
        cy = (box[1] + box[3]) / 2.0f;
    } else if (shape == "triangle") {
        half = bh / 1.8f;
        cy = box[1] + half;
    } else {
        half = std::max(bw, bh) / 4.0f + std::min(bw, bh) / 4.0f;
        cy = (box[1] + box[3]) / 2.0f;
    }
}

float template_iou(const std::string& shape, const Blob& blob, int w) {
    float cx, cy, half;
    template_params(shape, blob.box, cx, cy, half);
    std::vector<uint8_t> in_blob(static_cast<size_t>(blob.box[3] - blob.box[1]) * (blob.box[2] - blob.box[0]), 0);
    int bw = blob.box[2] - blob.box[0];
    for (int idx : blob.pixels) {
        int y = idx / w, x = idx % w;
        in_blob[static_cast<size_t>(y - blob.box[1]) * bw + (x - blob.box[0])] = 1;
    }
    int inter = 0, uni = 0;
    for (int y = blob.box[1]; y < blob.box[3]; ++y)
        for (int x = blob.box[0]; x < blob.box[2]; ++x) {
            bool a = in_blob[static_cast<size_t>(y - blob.box[1]) * bw + (x - blob.box[0])] != 0;
            bool b = point_in_shape(shape, x + 0.5f, y + 0.5f, cx, cy, half);
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
    return uni > 0 ? static_cast<float>(inter) / static_cast<float>(uni) : 0.0f;
}

}  // namespace

std::vector<Detection> OracleDetector::detect(const Tensor& image, const std::vector<std::string>& phrases,
                                              float box_threshold, float text_threshold) const {
    if (image.ndim() != 3 || image.shape[0] != 3) throw std::invalid_argument("oracle detector: expected [3,H,W]");
    int h = image.shape[1], w = image.shape[2];

    std::vector<ParsedPhrase> parsed;
    parsed.reserve(phrases.size());
    for (const auto& p : phrases) parsed.push_back(parse_phrase(p));

    // per-pixel color assignment
    const float kAssignMin = 0.35f;
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<float> closeness(static_cast<size_t>(h) * w, 0.0f);
    for (int i = 0; i < h * w; ++i) {
        float best = kAssignMin;
        for (size_t k = 0; k < palette().size(); ++k) {
            float c = color_closeness(image, i, w, color_rgb(palette()[k]));
            if (c > best) {
                best = c;
                label[i] = static_cast<int>(k);
            }
        }
        closeness[i] = best;
    }

    // 4-connected components per color
    std::vector<Blob> blobs;
    std::vector<int> visited(static_cast<size_t>(h) * w, 0);
    std::vector<int> stack;
    for (int start = 0; start < h * w; ++start) {
        if (label[start] < 0 || visited[start]) continue;
        Blob blob;
        blob.color = label[start];
        stack.assign(1, start);
        visited[start] = 1;
        double purity_sum = 0.0;
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            blob.pixels.push_back(i);
            purity_sum += closeness[i];
            int y = i / w, x = i % w;
            blob.box[0] = std::min(blob.box[0], x);
            blob.box[1] = std::min(blob.box[1], y);
            blob.box[2] = std::max(blob.box[2], x + 1);
            blob.box[3] = std::max(blob.box[3], y + 1);
            const int nb[4] = {i - w, i + w, x > 0 ? i - 1 : -1, x + 1 < w ? i + 1 : -1};
            for (int j : nb) {
                if (j < 0 || j >= h * w || visited[j] || label[j] != blob.color) continue;
                visited[j] = 1;
                stack.push_back(j);
            }
        }
        if (static_cast<int>(blob.pixels.size()) < 12) continue;
        blob.purity = static_cast<float>(purity_sum / blob.pixels.size());
        blobs.push_back(std::move(blob));
    }

    std::vector<Detection> out;
    for (size_t pi = 0; pi < parsed.size(); ++pi) {
        const auto& q = parsed[pi];
        for (const auto& blob : blobs) {
            if (q.color >= 0 && blob.color != q.color) continue;
            float conf = blob.purity * std::min(1.0f, static_cast<float>(blob.pixels.size()) / 30.0f);
            if (conf < box_threshold) continue;
            float text_score = template_iou(q.shape, blob, w);
            // the queried shape must also be the best explanation of the blob
            for (const auto& other : shape_classes())
                if (other != q.shape && template_iou(other, blob, w) > text_score + 0.10f) {
                    text_score = 0.0f;
                    break;
                }
            if (text_score < text_threshold) continue;
            out.push_back({phrases[pi], blob.box, std::min(1.0f, conf)});
        }
    }
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    return out;
}

}  // namespace seg

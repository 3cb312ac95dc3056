#pragma once

#include <array>
#include <string>
#include <vector>

#include "segen/tensor.hpp"

namespace seg {

struct Detection {
    std::string phrase;
    std::array<int, 4> box{};  // x0,y0,x1,y1, exclusive end
    float confidence = 0.0f;
};

// Open-vocabulary grounding interface: a real detector can be slotted in
// behind this without touching the scoring code.
class Detector {
public:
    virtual ~Detector() = default;
    virtual std::vector<Detection> detect(const Tensor& image, const std::vector<std::string>& phrases,
                                          float box_threshold, float text_threshold) const = 0;
};

// Desk-scale detector for the synthetic shape world: pixels are classified to
// canonical colors, connected components become candidate boxes, and shape
// identity is scored by template IoU against the renderer's own geometry.
class OracleDetector : public Detector {
public:
    std::vector<Detection> detect(const Tensor& image, const std::vector<std::string>& phrases,
                                  float box_threshold, float text_threshold) const override;
};

}  // namespace seg

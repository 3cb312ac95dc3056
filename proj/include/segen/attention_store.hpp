#pragma once

#include <map>
#include <string>
#include <vector>

#include "segen/autodiff.hpp"
#include "segen/text.hpp"

namespace seg {

enum class LayerGroup { Down, Mid, Up };

std::string layer_group_name(LayerGroup g);
LayerGroup layer_group_from_string(const std::string& s);

struct LayerId {
    LayerGroup group = LayerGroup::Down;
    int index = 0;  // DOWN_k / UP_k; always 0 for MID
    std::string str() const;
    bool operator==(const LayerId& o) const { return group == o.group && index == o.index; }
};

struct LayerInfo {
    LayerId id;
    int resolution = 0;  // patch grid side P
    int heads = 1;
};

// One cross-attention probability map, captured before the value product.
struct AttentionRecord {
    LayerId layer;
    int resolution = 0;
    Var probs;  // [heads, P*P, N]
};

// A^t per resolution: layer- and head-averaged patch-to-token probabilities.
struct AggregatedAttention {
    std::map<int, Var> per_resolution;  // P -> [P*P, N]
    int timestep = 0;
};

// Records one denoiser pass worth of attention maps. One instance per
// generation; reset() between passes.
class AttentionStore {
public:
    AttentionStore() = default;
    explicit AttentionStore(std::vector<LayerInfo> layout) : layout_(std::move(layout)) {}

    void reset() { records_.clear(); }
    void record(AttentionRecord rec);
    AggregatedAttention aggregate(int timestep) const;

    const std::vector<LayerInfo>& layout() const { return layout_; }
    size_t recorded() const { return records_.size(); }

private:
    std::vector<LayerInfo> layout_;
    std::vector<AttentionRecord> records_;
};

// Zeroes the <SoT> column and renormalizes each patch row over the remaining
// tokens. Idempotent.
AggregatedAttention reweight_excluding_sot(const AggregatedAttention& agg, int sot_index);

struct GaussianSpec {
    int kernel_size = 3;  // odd; 1 disables smoothing
    float sigma = 0.5f;
};

Tensor gaussian_kernel(const GaussianSpec& spec);  // normalized [k,k]

struct SubjectMaps {
    std::vector<std::pair<std::string, Var>> maps;  // subject id -> [P,P], smoothed
    int resolution = 0;
    const Var* find(const std::string& id) const;
};

// Gathers each subject's token columns (averaging multi-token spans),
// reshapes to P x P and smooths with a reflect-padded Gaussian.
SubjectMaps subject_maps(const AggregatedAttention& agg,
                         const std::vector<std::pair<std::string, std::vector<int>>>& subject_spans,
                         int resolution, const GaussianSpec& smoothing);

}  // namespace seg

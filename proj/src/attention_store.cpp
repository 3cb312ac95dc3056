#include "segen/attention_store.hpp"

#include <cmath>
#include <stdexcept>

namespace seg {

std::string layer_group_name(LayerGroup g) {
    switch (g) {
        case LayerGroup::Down: return "down";
        case LayerGroup::Mid: return "mid";
        case LayerGroup::Up: return "up";
    }
    return "?";
}

LayerGroup layer_group_from_string(const std::string& s) {
    if (s == "down") return LayerGroup::Down;
    if (s == "mid") return LayerGroup::Mid;
    if (s == "up") return LayerGroup::Up;
    throw std::invalid_argument("unknown layer group: " + s);
}

std::string LayerId::str() const {
    if (group == LayerGroup::Mid) return "mid";
    return layer_group_name(group) + std::to_string(index);
}

void AttentionStore::record(AttentionRecord rec) {
    if (rec.probs->value.ndim() != 3) throw std::invalid_argument("attention record: probs must be [heads,P*P,N]");
    if (rec.probs->value.shape[1] != rec.resolution * rec.resolution)
        throw std::invalid_argument("attention record: patch count does not match resolution");
    for (const auto& r : records_)
        if (r.layer == rec.layer)
            throw std::runtime_error("attention store: duplicate record for layer " + rec.layer.str());
    records_.push_back(std::move(rec));
}

AggregatedAttention AttentionStore::aggregate(int timestep) const {
    AggregatedAttention out;
    out.timestep = timestep;
    std::map<int, std::vector<Var>> by_res;  // P -> head-means per layer
    for (const auto& info : layout_) {
        const AttentionRecord* found = nullptr;
        for (const auto& r : records_)
            if (r.layer == info.id) { found = &r; break; }
        if (!found) throw std::runtime_error("attention store: missing record for layer " + info.id.str());
        by_res[info.resolution].push_back(mean_axis0(found->probs));
    }
    for (auto& [res, maps] : by_res) {
        Var acc = maps[0];
        for (size_t i = 1; i < maps.size(); ++i) acc = add(acc, maps[i]);
        out.per_resolution[res] = maps.size() > 1 ? scale(acc, 1.0f / static_cast<float>(maps.size())) : acc;
    }
    return out;
}

AggregatedAttention reweight_excluding_sot(const AggregatedAttention& agg, int sot_index) {
    AggregatedAttention out;
    out.timestep = agg.timestep;
    for (const auto& [res, a] : agg.per_resolution) {
        if (a->value.cols() < 2)
            throw std::invalid_argument("reweight_excluding_sot: prompt has no tokens besides <SoT>");
        out.per_resolution[res] = exclude_col_renorm_rows(a, sot_index);
    }
    return out;
}

Tensor gaussian_kernel(const GaussianSpec& spec) {
    int k = spec.kernel_size;
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("gaussian_kernel: kernel size must be odd and >= 1");
    Tensor kern({k, k});
    if (k == 1) {
        kern[0] = 1.0f;
        return kern;
    }
    if (spec.sigma <= 0.0f) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    int c = k / 2;
    double sum = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            double d2 = static_cast<double>((y - c) * (y - c) + (x - c) * (x - c));
            double v = std::exp(-d2 / (2.0 * spec.sigma * spec.sigma));
            kern.at(y, x) = static_cast<float>(v);
            sum += v;
        }
    for (auto& v : kern.data) v = static_cast<float>(v / sum);
    return kern;
}

const Var* SubjectMaps::find(const std::string& id) const {
    for (const auto& [sid, m] : maps)
        if (sid == id) return &m;
    return nullptr;
}

SubjectMaps subject_maps(const AggregatedAttention& agg,
                         const std::vector<std::pair<std::string, std::vector<int>>>& subject_spans,
                         int resolution, const GaussianSpec& smoothing) {
    auto it = agg.per_resolution.find(resolution);
    if (it == agg.per_resolution.end())
        throw std::invalid_argument("subject_maps: resolution " + std::to_string(resolution) + " not aggregated");
    const Var& a = it->second;
    int n = a->value.cols();
    int p = resolution;

    Tensor kern = gaussian_kernel(smoothing);
    int k = kern.shape[0];
    Var kernel_var;
    if (k > 1) kernel_var = constant(Tensor({1, 1, k, k}, kern.data));

    SubjectMaps out;
    out.resolution = p;
    for (const auto& [sid, span] : subject_spans) {
        if (span.empty()) throw std::invalid_argument("subject_maps: empty token span for " + sid);
        for (int idx : span)
            if (idx < 1 || idx >= n) throw std::out_of_range("subject_maps: span index out of range for " + sid);
        Var col = select_cols_mean(a, span);          // [P*P]
        Var map = reshape(col, {1, p, p});
        if (k > 1) map = conv2d(pad_reflect(map, k / 2), kernel_var, nullptr, 1, 0);
        out.maps.emplace_back(sid, reshape(map, {p, p}));
    }
    return out;
}

}  // namespace seg

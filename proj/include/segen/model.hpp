#pragma once

#include <memory>
#include <string>

#include "segen/codec.hpp"
#include "segen/denoiser.hpp"
#include "segen/encoders.hpp"
#include "segen/text.hpp"

namespace seg {

// The full trainable bundle: denoiser, text/image encoders, latent codec and
// the learned null-text embedding. One parameter store, one checkpoint file.
struct GenerationModel {
    DenoiserConfig cfg;
    int vocab_size = 0;
    ParamStore params;
    LatentCodec codec;
    TextEncoder text_encoder;
    ImageEncoder image_encoder;
    Denoiser unet;
    Var null_text;  // [2, d]

    GenerationModel(const DenoiserConfig& cfg_, int vocab_size_, uint64_t init_seed);

    uint64_t arch_hash() const;
    std::vector<LayerInfo> layer_infos() const { return unet.layer_infos(); }
    int64_t parameter_count() const { return params.count(); }

    void save(const std::string& path) const;
    static std::unique_ptr<GenerationModel> load(const std::string& path);
};

}  // namespace seg

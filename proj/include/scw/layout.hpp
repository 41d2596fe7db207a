#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scw/layers.hpp"
#include "scw/optim.hpp"
#include "scw/text_encoder.hpp"
#include "scw/video.hpp"

namespace scw::model {

struct LayoutConfig {
    int frames = 8;
    int height = 64, width = 64;
    int c1 = 16, c2 = 32, c3 = 64;   // backbone conv channels
    int loc_hidden = 64;
    int scale_hidden = 64;
    double sigma2 = 0.005;           // frozen isotropic scale covariance
    int dilation = 1;
    TextEncoderConfig text;
    bool use_text = true;            // ablations zero the respective channels
    bool use_scene = true;
    bool use_coords = true;
    uint64_t seed = 1;
};

// Location maps over pixels plus a Gaussian over normalized (w,h) per frame.
struct LayoutModel {
    LayoutConfig cfg;
    TokenLexicon tokens;
    nn::ParamSet ps;
    TextEncoder text;
    nn::Conv2d conv1, conv2, conv3;
    nn::Conv2d loc_hid, loc_out;     // 1x1 convs on the feature grid
    nn::Linear scale_hid, scale_out;
    int gh = 0, gw = 0;              // backbone grid (three stride-2 convs)
    int feat_dim = 0;

    static LayoutModel create(LayoutConfig cfg, TokenLexicon tokens);

    // prev: partial video, F frames [3,H,W] in [0,1]
    ad::Value backbone(const vid::Video& prev, const std::vector<int>& token_ids,
                       int e_pos) const;

    struct LocMaps {
        std::vector<ad::Value> pixel;  // F maps [H,W], each a distribution
        std::vector<ad::Value> grid;   // F maps [gh,gw] feeding scale attention
    };
    LocMaps predict_location(ad::Value features) const;

    // attention = renormalized elementwise max of the grid maps
    ad::Value predict_scale(ad::Value features, const LocMaps& maps) const;  // [2F]

    struct Nll {
        ad::Value total, loc, scale;  // each summed over frames
    };
    Nll nll(const LocMaps& maps, const ad::Value& mu,
            const std::vector<data::Box>& gt) const;

    // greedy decode: per-frame argmax center (ties to the smallest row-major
    // index) and mu clamped to (0,1]
    std::vector<data::Box> infer(const vid::Video& prev, const std::vector<int>& token_ids,
                                 int e_pos) const;
};

void save_layout(const LayoutModel& m, const std::string& prefix);  // .ckpt + .json
LayoutModel load_layout(const std::string& prefix);

struct LayoutTrainConfig {
    int epochs = 30;
    int batch = 32;
    nn::AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-4, .decay_factor = 0.5,
                        .decay_period = 1};
    uint64_t seed = 1;
    bool verbose = true;
};

struct LayoutEpochStats {
    double train_nll_loc = 0, train_nll_scale = 0;  // per-frame means
    double val_nll_loc = 0, val_nll_scale = 0;
};

std::vector<LayoutEpochStats> train_layout(LayoutModel& m, const data::Dataset& ds,
                                           const LayoutTrainConfig& tc);

struct LayoutEvalRecord {
    uint32_t clip = 0;
    int entity = 0, frame = 0;
    double nll_loc = 0, nll_scale = 0, pixel_dist = 0;
};

// teacher-forced previous entities by default; predicted_prev fuses each
// entity at its own predicted boxes before conditioning the next one
std::vector<LayoutEvalRecord> eval_layout(const LayoutModel& m, const data::Dataset& ds,
                                          const std::vector<uint32_t>& ids,
                                          bool predicted_prev = false);

}  // namespace scw::model

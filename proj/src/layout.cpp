#include "scw/layout.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "scw/checkpoint.hpp"

namespace scw::model {

using ad::Value;
using nlohmann::json;

namespace {

constexpr double kLn2Pi = 1.8378770664093453;

int thrice_halved(int n) {
    for (int i = 0; i < 3; ++i) n = (n + 1) / 2;
    return n;
}

Tensor coord_channels(int gh, int gw) {
    Tensor t({2, gh, gw});
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            t.at(0, y, x) = gw > 1 ? static_cast<double>(x) / (gw - 1) : 0.0;
            t.at(1, y, x) = gh > 1 ? static_cast<double>(y) / (gh - 1) : 0.0;
        }
    return t;
}

// row-major scan; strict > keeps the smallest index on ties
std::pair<int, int> argmax_yx(const Tensor& map) {
    int by = 0, bx = 0;
    double best = map.at(0, 0);
    for (int y = 0; y < map.dim(0); ++y)
        for (int x = 0; x < map.dim(1); ++x)
            if (map.at(y, x) > best) {
                best = map.at(y, x);
                by = y;
                bx = x;
            }
    return {by, bx};
}

std::vector<data::Box> decode_boxes(const LayoutModel::LocMaps& maps, const Tensor& mu) {
    std::vector<data::Box> out;
    out.reserve(maps.pixel.size());
    for (size_t f = 0; f < maps.pixel.size(); ++f) {
        auto [y, x] = argmax_yx(maps.pixel[f]->val);
        data::Box b;
        b.x = x;
        b.y = y;
        b.w = std::min(std::max(mu[2 * static_cast<int>(f)], 1e-9), 1.0);
        b.h = std::min(std::max(mu[2 * static_cast<int>(f) + 1], 1e-9), 1.0);
        out.push_back(b);
    }
    return out;
}

}  // namespace

LayoutModel LayoutModel::create(LayoutConfig cfg, TokenLexicon tokens) {
    LayoutModel m;
    m.cfg = cfg;
    m.tokens = std::move(tokens);
    m.gh = thrice_halved(cfg.height);
    m.gw = thrice_halved(cfg.width);
    Rng rng(cfg.seed);
    m.text = TextEncoder::create(m.ps, rng, "layout.text", m.tokens.size(), cfg.text);
    m.conv1 = nn::Conv2d::create(m.ps, rng, "layout.conv1", 3 * cfg.frames, cfg.c1, 3, 2,
                                 cfg.dilation);
    m.conv2 = nn::Conv2d::create(m.ps, rng, "layout.conv2", cfg.c1, cfg.c2, 3, 2, cfg.dilation);
    m.conv3 = nn::Conv2d::create(m.ps, rng, "layout.conv3", cfg.c2, cfg.c3, 3, 2, cfg.dilation);
    m.feat_dim = cfg.c3 + m.text.out_dim() + 2;
    m.loc_hid = nn::Conv2d::create(m.ps, rng, "layout.loc_hidden", m.feat_dim, cfg.loc_hidden,
                                   1, 1, 1);
    // zero head makes the initial maps exactly uniform and mu exactly zero
    m.loc_out = nn::Conv2d::create(m.ps, rng, "layout.loc_out", cfg.loc_hidden, cfg.frames, 1, 1,
                                   1, nn::Init::zero);
    m.scale_hid = nn::Linear::create(m.ps, rng, "layout.scale_hidden", m.feat_dim,
                                     cfg.scale_hidden);
    m.scale_out = nn::Linear::create(m.ps, rng, "layout.scale_out", cfg.scale_hidden,
                                     2 * cfg.frames, nn::Init::zero);
    return m;
}

Value LayoutModel::backbone(const vid::Video& prev, const std::vector<int>& token_ids,
                            int e_pos) const {
    const int F = cfg.frames, H = cfg.height, W = cfg.width;
    if (static_cast<int>(prev.size()) != F)
        throw std::invalid_argument("layout backbone: partial video must hold " +
                                    std::to_string(F) + " frames");
    if (e_pos < 0 || e_pos >= static_cast<int>(token_ids.size()))
        throw std::invalid_argument("layout backbone: entity position " + std::to_string(e_pos) +
                                    " outside a caption of " + std::to_string(token_ids.size()) +
                                    " tokens");
    Tensor vin({3 * F, H, W});
    if (cfg.use_scene)
        for (int f = 0; f < F; ++f) {
            if (prev[f].rank() != 3 || prev[f].dim(0) != 3 || prev[f].dim(1) != H ||
                prev[f].dim(2) != W)
                throw std::invalid_argument("layout backbone: frame " + std::to_string(f) +
                                            " has shape " + prev[f].shape_str());
            std::memcpy(vin.data.data() + static_cast<size_t>(f) * prev[f].numel(),
                        prev[f].data.data(), sizeof(double) * prev[f].numel());
        }
    Value x = ad::constant(std::move(vin));
    x = ad::relu(conv1(x));
    x = ad::relu(conv2(x));
    x = ad::relu(conv3(x));
    if (x->val.dim(1) != gh || x->val.dim(2) != gw)
        throw std::logic_error("layout backbone grid came out " + x->val.shape_str());
    Value txt;
    if (cfg.use_text)
        txt = text(token_ids)[e_pos];
    else
        txt = ad::constant(Tensor({text.out_dim()}));
    Value coords = ad::constant(cfg.use_coords ? coord_channels(gh, gw) : Tensor({2, gh, gw}));
    return ad::concat_channels({x, ad::tile_spatial(txt, gh, gw), coords});
}

LayoutModel::LocMaps LayoutModel::predict_location(Value features) const {
    Value h = ad::relu(loc_hid(features));
    Value scores = loc_out(h);  // [F,gh,gw]
    Value up = ad::upsample_bilinear(scores, cfg.height, cfg.width);
    LocMaps maps;
    for (int f = 0; f < cfg.frames; ++f) {
        maps.pixel.push_back(ad::softmax2d(ad::slice_channel(up, f)));
        maps.grid.push_back(ad::softmax2d(ad::slice_channel(scores, f)));
    }
    return maps;
}

Value LayoutModel::predict_scale(Value features, const LocMaps& maps) const {
    Value att = maps.grid[0];
    for (size_t f = 1; f < maps.grid.size(); ++f) att = ad::emax(att, maps.grid[f]);
    att = ad::mul(att, ad::recip(ad::reduce_sum(att)));
    Value pooled = ad::spatial_weighted_sum(features, att);
    return scale_out(ad::relu(scale_hid(pooled)));
}

LayoutModel::Nll LayoutModel::nll(const LocMaps& maps, const Value& mu,
                                  const std::vector<data::Box>& gt) const {
    const int F = cfg.frames;
    if (static_cast<int>(gt.size()) != F)
        throw std::invalid_argument("layout nll: need one box per frame");
    Value loc, scale;
    for (int f = 0; f < F; ++f) {
        if (gt[f].x < 0 || gt[f].x >= cfg.width || gt[f].y < 0 || gt[f].y >= cfg.height)
            throw std::invalid_argument("layout nll: box center (" + std::to_string(gt[f].x) +
                                        "," + std::to_string(gt[f].y) + ") outside the grid");
        Value lf = ad::neg(ad::log_(ad::gather_pixel(maps.pixel[f], gt[f].y, gt[f].x)));
        Tensor z({2});
        z[0] = gt[f].w;
        z[1] = gt[f].h;
        Value d = ad::sub(ad::slice_vec(mu, 2 * f, 2), ad::constant(std::move(z)));
        Value sf = ad::sadd(ad::smul(ad::dot(d, d), 0.5 / cfg.sigma2),
                            kLn2Pi + std::log(cfg.sigma2));
        loc = f == 0 ? lf : ad::add(loc, lf);
        scale = f == 0 ? sf : ad::add(scale, sf);
    }
    return {ad::add(loc, scale), loc, scale};
}

std::vector<data::Box> LayoutModel::infer(const vid::Video& prev,
                                          const std::vector<int>& token_ids, int e_pos) const {
    Value feats = backbone(prev, token_ids, e_pos);
    LocMaps maps = predict_location(feats);
    Value mu = predict_scale(feats, maps);
    return decode_boxes(maps, mu->val);
}

namespace {

json config_to_json(const LayoutConfig& c) {
    return json{{"frames", c.frames},
                {"height", c.height},
                {"width", c.width},
                {"c1", c.c1},
                {"c2", c.c2},
                {"c3", c.c3},
                {"loc_hidden", c.loc_hidden},
                {"scale_hidden", c.scale_hidden},
                {"sigma2", c.sigma2},
                {"dilation", c.dilation},
                {"text_embed", c.text.embed_dim},
                {"text_hidden", c.text.hidden},
                {"text_bidirectional", c.text.bidirectional},
                {"use_text", c.use_text},
                {"use_scene", c.use_scene},
                {"use_coords", c.use_coords},
                {"seed", c.seed}};
}

LayoutConfig config_from_json(const json& j) {
    LayoutConfig c;
    c.frames = j.at("frames").get<int>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.c1 = j.at("c1").get<int>();
    c.c2 = j.at("c2").get<int>();
    c.c3 = j.at("c3").get<int>();
    c.loc_hidden = j.at("loc_hidden").get<int>();
    c.scale_hidden = j.at("scale_hidden").get<int>();
    c.sigma2 = j.at("sigma2").get<double>();
    c.dilation = j.at("dilation").get<int>();
    c.text.embed_dim = j.at("text_embed").get<int>();
    c.text.hidden = j.at("text_hidden").get<int>();
    c.text.bidirectional = j.at("text_bidirectional").get<bool>();
    c.use_text = j.at("use_text").get<bool>();
    c.use_scene = j.at("use_scene").get<bool>();
    c.use_coords = j.at("use_coords").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace

void save_layout(const LayoutModel& m, const std::string& prefix) {
    const json j{{"kind", "layout"},
                 {"config", config_to_json(m.cfg)},
                 {"tokens", m.tokens.tokens}};
    std::ofstream out(prefix + ".json");
    if (!out) throw std::runtime_error("cannot open " + prefix + ".json for writing");
    out << j.dump(2) << "\n";
    nn::save_checkpoint(m.ps, prefix + ".ckpt");
}

LayoutModel load_layout(const std::string& prefix) {
    std::ifstream in(prefix + ".json");
    if (!in) throw std::runtime_error("cannot open " + prefix + ".json");
    json j;
    in >> j;
    if (j.at("kind").get<std::string>() != "layout")
        throw std::runtime_error(prefix + ".json is not a layout model");
    TokenLexicon tokens;
    tokens.tokens = j.at("tokens").get<std::vector<std::string>>();
    LayoutModel m = LayoutModel::create(config_from_json(j.at("config")), std::move(tokens));
    nn::load_checkpoint(m.ps, prefix + ".ckpt");
    return m;
}

namespace {

struct Example {
    uint32_t clip;
    int entity;
};

std::vector<Example> collect_examples(const data::Dataset& ds,
                                      const std::vector<uint32_t>& ids,
                                      std::unordered_map<uint32_t, data::Clip>& cache) {
    std::vector<Example> out;
    for (uint32_t id : ids) {
        auto it = cache.find(id);
        if (it == cache.end()) it = cache.emplace(id, ds.load_clip(id)).first;
        for (size_t e = 0; e < it->second.entities.size(); ++e)
            out.push_back({id, static_cast<int>(e)});
    }
    return out;
}

}  // namespace

std::vector<LayoutEpochStats> train_layout(LayoutModel& m, const data::Dataset& ds,
                                           const LayoutTrainConfig& tc) {
    if (ds.train.empty()) throw std::invalid_argument("train_layout: empty train split");
    std::unordered_map<uint32_t, data::Clip> cache;
    std::vector<Example> train_ex = collect_examples(ds, ds.train, cache);
    std::vector<Example> val_ex = collect_examples(ds, ds.val, cache);

    auto forward = [&](const Example& ex) {
        const data::Clip& clip = cache.at(ex.clip);
        const vid::Video prev = vid::partial_video(clip, static_cast<size_t>(ex.entity));
        const std::vector<int> token_ids = m.tokens.encode(clip.tokens);
        const auto& ent = clip.entities[ex.entity];
        Value feats = m.backbone(prev, token_ids, static_cast<int>(ent.noun_pos));
        LayoutModel::LocMaps maps = m.predict_location(feats);
        Value mu = m.predict_scale(feats, maps);
        return m.nll(maps, mu, ent.boxes);
    };

    nn::Adam adam(m.ps.params, tc.adam);
    Rng order_rng(Rng::mix(tc.seed, 71));
    std::vector<LayoutEpochStats> stats;
    const double per_frame = 1.0 / m.cfg.frames;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        adam.set_epoch(epoch);
        order_rng.shuffle(train_ex);
        double tl = 0, tsc = 0;
        for (size_t start = 0; start < train_ex.size(); start += tc.batch) {
            const size_t stop = std::min(train_ex.size(), start + tc.batch);
            adam.zero_grad();
            Value total;
            for (size_t i = start; i < stop; ++i) {
                LayoutModel::Nll nll = forward(train_ex[i]);
                tl += nll.loc->val[0];
                tsc += nll.scale->val[0];
                total = i == start ? nll.total : ad::add(total, nll.total);
            }
            ad::backward(ad::smul(total, 1.0 / static_cast<double>(stop - start)));
            adam.step();
        }
        LayoutEpochStats s;
        s.train_nll_loc = tl * per_frame / train_ex.size();
        s.train_nll_scale = tsc * per_frame / train_ex.size();
        double vl = 0, vs = 0;
        for (const Example& ex : val_ex) {
            LayoutModel::Nll nll = forward(ex);
            vl += nll.loc->val[0];
            vs += nll.scale->val[0];
        }
        if (!val_ex.empty()) {
            s.val_nll_loc = vl * per_frame / val_ex.size();
            s.val_nll_scale = vs * per_frame / val_ex.size();
        }
        stats.push_back(s);
        if (tc.verbose)
            std::printf("layout epoch %3d  lr %.2e  train nll/frame loc %.4f scale %.4f"
                        "  val loc %.4f scale %.4f\n",
                        epoch, adam.effective_lr(), s.train_nll_loc, s.train_nll_scale,
                        s.val_nll_loc, s.val_nll_scale);
    }
    return stats;
}

std::vector<LayoutEvalRecord> eval_layout(const LayoutModel& m, const data::Dataset& ds,
                                          const std::vector<uint32_t>& ids,
                                          bool predicted_prev) {
    std::vector<LayoutEvalRecord> records;
    for (uint32_t id : ids) {
        const data::Clip clip = ds.load_clip(id);
        const std::vector<int> token_ids = m.tokens.encode(clip.tokens);
        vid::Video v = vid::partial_video(clip, 0);
        for (size_t e = 0; e < clip.entities.size(); ++e) {
            const auto& ent = clip.entities[e];
            Value feats = m.backbone(v, token_ids, static_cast<int>(ent.noun_pos));
            LayoutModel::LocMaps maps = m.predict_location(feats);
            Value mu = m.predict_scale(feats, maps);
            for (int f = 0; f < clip.F; ++f) {
                LayoutEvalRecord r;
                r.clip = id;
                r.entity = static_cast<int>(e);
                r.frame = f;
                r.nll_loc = -std::log(maps.pixel[f]->val.at(ent.boxes[f].y, ent.boxes[f].x));
                const double dw = mu->val[2 * f] - ent.boxes[f].w;
                const double dh = mu->val[2 * f + 1] - ent.boxes[f].h;
                r.nll_scale = 0.5 * (dw * dw + dh * dh) / m.cfg.sigma2 + kLn2Pi +
                              std::log(m.cfg.sigma2);
                auto [ay, ax] = argmax_yx(maps.pixel[f]->val);
                r.pixel_dist = std::hypot(double(ax - ent.boxes[f].x) / clip.W,
                                          double(ay - ent.boxes[f].y) / clip.H);
                records.push_back(r);
            }
            if (e + 1 < clip.entities.size()) {
                if (predicted_prev)
                    vid::fuse_entity(v, clip, static_cast<int>(e), decode_boxes(maps, mu->val));
                else
                    v = vid::partial_video(clip, e + 1);
            }
        }
    }
    return records;
}

}  // namespace scw::model

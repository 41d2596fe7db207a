#include "scw/gradsuite.hpp"

#include <cmath>
#include <filesystem>

#include "scw/gradcheck.hpp"
#include "scw/layout.hpp"
#include "scw/retriever.hpp"
#include "scw/video.hpp"

namespace scw::nn {

namespace {

using ad::Value;

Tensor randt(const std::vector<int>& dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(dims);
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

struct Battery {
    uint64_t seed;
    std::vector<GradSuiteEntry> out;

    void run(const std::string& name, const std::function<Value()>& fn,
             const std::vector<Value>& params) {
        const GradCheckResult res = finite_diff_check(fn, params, 1e-4, 0, 1);
        out.push_back({name, res.max_rel_err, res.coords_checked});
    }
};

}  // namespace

std::vector<GradSuiteEntry> gradient_battery(uint64_t seed) {
    Battery bat{seed, {}};
    Rng rng(Rng::mix(seed, 17));

    {
        Value x = ad::param(randt({4}, rng), "x");
        Value W = ad::param(randt({3, 4}, rng), "W");
        Value b = ad::param(randt({3}, rng), "b");
        Value sw = ad::constant(randt({3}, rng));
        bat.run("linear", [&] { return ad::dot(ad::linear(x, W, b), sw); }, {x, W, b});
    }
    {
        Value x = ad::param(randt({2, 6, 5}, rng), "x");
        Value W = ad::param(randt({3, 2, 3, 3}, rng), "W");
        Value b = ad::param(randt({3}, rng), "b");
        bat.run(
            "conv2d_stride1",
            [&] { return ad::reduce_sum(ad::tanh_(ad::conv2d(x, W, b, 1, 1, 1))); }, {x, W, b});
    }
    {
        Value x = ad::param(randt({2, 8, 8}, rng), "x");
        Value W = ad::param(randt({3, 2, 3, 3}, rng), "W");
        Value b = ad::param(randt({3}, rng), "b");
        bat.run(
            "conv2d_stride2_dilated",
            [&] { return ad::reduce_sum(ad::tanh_(ad::conv2d(x, W, b, 2, 2, 2))); }, {x, W, b});
    }
    {
        Value E = ad::param(randt({5, 3}, rng), "E");
        bat.run("embedding", [&] { return ad::reduce_sum(ad::tanh_(ad::embedding_row(E, 2))); },
                {E});
    }
    {
        ParamSet ps;
        auto cell = LstmCell::create(ps, rng, "cell", 3, 4);
        std::vector<Value> xs;
        for (int t = 0; t < 3; ++t) xs.push_back(ad::param(randt({3}, rng), "x"));
        std::vector<Value> all = ps.params;
        all.insert(all.end(), xs.begin(), xs.end());
        bat.run(
            "lstm",
            [&] {
                auto hs = lstm_run(cell, xs);
                Value acc = ad::reduce_sum(hs[0]);
                for (size_t t = 1; t < hs.size(); ++t) acc = ad::add(acc, ad::reduce_sum(hs[t]));
                return acc;
            },
            all);
    }
    {
        ParamSet ps;
        auto bi = BiLstm::create(ps, rng, "bi", 3, 3);
        std::vector<Value> xs;
        for (int t = 0; t < 3; ++t) xs.push_back(ad::param(randt({3}, rng), "x"));
        std::vector<Value> all = ps.params;
        all.insert(all.end(), xs.begin(), xs.end());
        bat.run(
            "bilstm",
            [&] {
                auto hs = bi(xs);
                Value acc = ad::reduce_sum(hs[0]);
                for (size_t t = 1; t < hs.size(); ++t) acc = ad::add(acc, ad::reduce_sum(hs[t]));
                return acc;
            },
            all);
    }
    {
        Value x = ad::param(randt({2, 5, 5}, rng), "x");
        Value sw = ad::constant(randt({2}, rng));
        bat.run(
            "roi_align_l2norm",
            [&] {
                Value roi = ad::roi_align7(x, ad::GridRect{1, 1, 3, 3});
                return ad::dot(ad::l2_normalize(ad::spatial_mean(roi)), sw);
            },
            {x});
    }
    {
        Value x = ad::param(randt({3, 4}, rng, -2, 2), "x");
        bat.run(
            "softmax_pick",
            [&] {
                Value p = ad::softmax2d(x);
                return ad::add(ad::gather_pixel(p, 1, 2), ad::log_(ad::gather_pixel(p, 2, 3)));
            },
            {x});
    }
    {
        Value x = ad::param(randt({1, 3, 3}, rng), "x");
        bat.run(
            "upsample_bilinear",
            [&] { return ad::reduce_sum(ad::tanh_(ad::upsample_bilinear(x, 5, 5))); }, {x});
    }

    // layout likelihood through the whole model on one tiny clip
    {
        data::SpriteWorldConfig wcfg;
        wcfg.seed = Rng::mix(seed, 31);
        wcfg.frames = 2;
        wcfg.height = 16;
        wcfg.width = 16;
        wcfg.clips = 6;
        const data::Vocab lex = data::generator_lexicon(wcfg);
        const data::Clip clip = data::gen_clip(wcfg, 4, lex);
        model::LayoutConfig cfg;
        cfg.frames = 2;
        cfg.height = 16;
        cfg.width = 16;
        cfg.c1 = 2;
        cfg.c2 = 3;
        cfg.c3 = 4;
        cfg.loc_hidden = 4;
        cfg.scale_hidden = 4;
        cfg.text.embed_dim = 4;
        cfg.text.hidden = 3;
        cfg.seed = Rng::mix(seed, 32);
        model::TokenLexicon toks;
        toks.tokens.push_back("<unk>");
        for (const std::string& w : lex.words) toks.tokens.push_back(w);
        for (const std::string& w : {"the", "is", "in"}) toks.tokens.push_back(w);
        model::LayoutModel m = model::LayoutModel::create(cfg, toks);
        // zero-initialized heads sit on a plateau where every derivative
        // vanishes; move off it before differencing
        auto nudge = [&](Value p) {
            for (int i = 0; i < p->val.numel(); ++i) p->val[i] = rng.uniform(-0.3, 0.3);
        };
        nudge(m.loc_out.W);
        nudge(m.loc_out.b);
        nudge(m.scale_out.W);
        nudge(m.scale_out.b);

        const vid::Video prev = vid::partial_video(clip, 0);
        const std::vector<int> ids = m.tokens.encode(clip.tokens);
        const int e_pos = static_cast<int>(clip.entities[0].noun_pos);
        bat.run(
            "layout_nll",
            [&] {
                Value feats = m.backbone(prev, ids, e_pos);
                auto maps = m.predict_location(feats);
                return m.nll(maps, m.predict_scale(feats, maps), clip.entities[0].boxes).total;
            },
            m.ps.params);
    }

    // triplet and word losses through both retriever networks
    {
        auto dir = std::filesystem::temp_directory_path() /
                   ("scw_gradsuite_" + std::to_string(seed));
        std::filesystem::remove_all(dir);
        data::SpriteWorldConfig wcfg;
        wcfg.seed = Rng::mix(seed, 41);
        wcfg.frames = 2;
        wcfg.height = 16;
        wcfg.width = 16;
        wcfg.clips = 8;
        data::gen_dataset(wcfg, dir.string());
        const data::Dataset ds = data::Dataset::open(dir.string());

        model::RetrieverConfig cfg;
        cfg.frames = 2;
        cfg.height = 16;
        cfg.width = 16;
        cfg.c1 = 2;
        cfg.c2 = 3;
        cfg.c3 = 4;
        cfg.embed_dim = 6;
        cfg.aux_hidden = 4;
        cfg.text.embed_dim = 4;
        cfg.text.hidden = 3;
        cfg.seed = Rng::mix(seed, 42);
        model::TokenLexicon toks;
        toks.tokens.push_back("<unk>");
        for (const std::string& w : ds.lexicon.words) toks.tokens.push_back(w);
        for (const std::string& w : {"the", "is", "in"}) toks.tokens.push_back(w);
        model::EntityRetriever m = model::EntityRetriever::create(cfg, toks, build_vocab(ds));
        // masked inputs make conv pre-activations equal the bias over whole
        // regions; push biases off the relu kink so differencing stays valid
        for (auto& p : m.ps.params)
            if (p->name.find("conv") != std::string::npos &&
                p->name.rfind(".bias") == p->name.size() - 5)
                for (double& v : p->val.data) v += v >= 0 ? 0.1 : -0.1;

        std::vector<data::Clip> clips;
        for (size_t i = 0; i < 2; ++i) clips.push_back(ds.load_clip(ds.train[i]));
        auto states = [&] {
            std::vector<std::vector<Value>> q, r;
            std::vector<std::vector<int>> words;
            for (const auto& clip : clips) {
                const auto& ent = clip.entities[0];
                q.push_back(m.query_states(vid::partial_video(clip, 0),
                                           m.tokens.encode(clip.tokens),
                                           static_cast<int>(ent.noun_pos), ent.boxes));
                r.push_back(m.target_states(
                    vid::video_from_bytes(clip.frames, clip.F, clip.H, clip.W), ent.boxes,
                    model::entity_masks(clip, 0)));
                words.push_back(model::entity_word_ids(clip, ds.lexicon, 0, m.words));
            }
            return std::tuple{q, r, words};
        };
        bat.run(
            "triplet_all_pairs",
            [&] {
                auto [q, r, words] = states();
                return model::triplet_all_pairs(model::pair_scores(q, r), m.cfg.gamma);
            },
            m.ps.params);
        bat.run(
            "triplet_ohem",
            [&] {
                auto [q, r, words] = states();
                return model::triplet_ohem(model::pair_scores(q, r), m.cfg.gamma);
            },
            m.ps.params);
        bat.run(
            "aux_word_loss",
            [&] {
                auto [q, r, words] = states();
                return model::aux_word_loss(m, q, r, words, false);
            },
            m.ps.params);
        std::filesystem::remove_all(dir);
    }

    return bat.out;
}

bool gradient_battery_passes(const std::vector<GradSuiteEntry>& entries, double tol) {
    if (entries.empty()) return false;
    for (const auto& e : entries)
        if (!(e.max_rel_err < tol)) return false;
    return true;
}

}  // namespace scw::nn

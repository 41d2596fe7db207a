#include "scw/background.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "scw/checkpoint.hpp"
#include "scw/ops.hpp"

namespace scw::model {

using ad::Value;

namespace {

int thrice_halved(int n) {
    for (int i = 0; i < 3; ++i) n = (n + 1) / 2;
    return n;
}

EmbeddingSeq to_seq(const std::vector<Value>& hs) {
    EmbeddingSeq e;
    for (const auto& h : hs) e.vectors.push_back(h->val.data);
    return e;
}

}  // namespace

BackgroundRetriever BackgroundRetriever::create(BackgroundConfig cfg, TokenLexicon tokens) {
    if (cfg.frames < 1 || cfg.height < 16 || cfg.width < 16)
        throw std::invalid_argument("background config: bad frame geometry");
    if (cfg.c1 < 1 || cfg.c2 < 1 || cfg.c3 < 1 || cfg.hidden < 1)
        throw std::invalid_argument("background config: bad channel sizes");
    if (!cfg.text.bidirectional)
        throw std::invalid_argument("background config: text encoder must be bidirectional");
    if (cfg.text.hidden != cfg.hidden)
        throw std::invalid_argument(
            "background config: text hidden must match the temporal hidden size so query "
            "and target dimensions agree");
    if (cfg.gamma <= 0) throw std::invalid_argument("background config: margin must be positive");
    if (tokens.size() < 1) throw std::invalid_argument("background config: empty token table");

    BackgroundRetriever m;
    m.cfg = std::move(cfg);
    m.tokens = std::move(tokens);
    Rng rng(Rng::mix(m.cfg.seed, 0xb6ULL));
    m.gh = thrice_halved(m.cfg.height);
    m.gw = thrice_halved(m.cfg.width);
    m.text = TextEncoder::create(m.ps, rng, "background.text", m.tokens.size(), m.cfg.text);
    m.conv1 = nn::Conv2d::create(m.ps, rng, "background.conv1", 3, m.cfg.c1, 3, 2, 1);
    m.conv2 = nn::Conv2d::create(m.ps, rng, "background.conv2", m.cfg.c1, m.cfg.c2, 3, 2, 1);
    m.conv3 = nn::Conv2d::create(m.ps, rng, "background.conv3", m.cfg.c2, m.cfg.c3, 3, 2, 1);
    m.temporal = nn::BiLstm::create(m.ps, rng, "background.temporal", m.cfg.c3, m.cfg.hidden);
    return m;
}

std::vector<Value> BackgroundRetriever::query_states(const std::vector<int>& token_ids,
                                                     int setting_pos) const {
    if (setting_pos < 0 || setting_pos >= static_cast<int>(token_ids.size()))
        throw std::invalid_argument("background query: setting position " +
                                    std::to_string(setting_pos) + " outside a caption of " +
                                    std::to_string(token_ids.size()) + " tokens");
    Value v = ad::l2_normalize(text(token_ids)[setting_pos]);
    return std::vector<Value>(cfg.frames, v);
}

std::vector<Value> BackgroundRetriever::target_states(const vid::Video& video) const {
    if (static_cast<int>(video.size()) != cfg.frames)
        throw std::invalid_argument("background target: expected " +
                                    std::to_string(cfg.frames) + " frames, got " +
                                    std::to_string(video.size()));
    std::vector<Value> xs;
    for (const auto& frame : video) {
        if (frame.rank() != 3 || frame.dim(0) != 3 || frame.dim(1) != cfg.height ||
            frame.dim(2) != cfg.width)
            throw std::invalid_argument("background target: frame shape mismatch");
        Value h = ad::relu(conv1(ad::constant(frame)));
        h = ad::relu(conv2(h));
        h = ad::relu(conv3(h));
        xs.push_back(ad::spatial_mean(h));  // global average pooling
    }
    auto hs = temporal(xs);
    for (auto& h : hs) h = ad::l2_normalize(h);
    return hs;
}

EmbeddingSeq BackgroundRetriever::query_embed(const std::vector<int>& token_ids,
                                              int setting_pos) const {
    return to_seq(query_states(token_ids, setting_pos));
}

EmbeddingSeq BackgroundRetriever::target_embed(const vid::Video& video) const {
    return to_seq(target_states(video));
}

int setting_position(const std::vector<std::string>& tokens, const std::string& setting) {
    for (int i = static_cast<int>(tokens.size()) - 1; i >= 0; --i)
        if (tokens[i] == setting) return i;
    throw std::invalid_argument("caption does not mention the setting word '" + setting + "'");
}

void save_background(const BackgroundRetriever& m, const std::string& prefix) {
    nlohmann::json j;
    j["kind"] = "background-retriever";
    nlohmann::json c;
    c["frames"] = m.cfg.frames;
    c["height"] = m.cfg.height;
    c["width"] = m.cfg.width;
    c["c1"] = m.cfg.c1;
    c["c2"] = m.cfg.c2;
    c["c3"] = m.cfg.c3;
    c["hidden"] = m.cfg.hidden;
    c["text_embed_dim"] = m.cfg.text.embed_dim;
    c["gamma"] = m.cfg.gamma;
    c["seed"] = m.cfg.seed;
    j["config"] = c;
    j["tokens"] = m.tokens.tokens;
    std::ofstream out(prefix + ".json");
    out << j.dump(2) << "\n";
    if (!out.good()) throw std::runtime_error("cannot write " + prefix + ".json");
    nn::save_checkpoint(m.ps, prefix + ".ckpt");
}

BackgroundRetriever load_background(const std::string& prefix) {
    std::ifstream in(prefix + ".json");
    if (!in) throw std::runtime_error("cannot open " + prefix + ".json");
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("kind", "") != "background-retriever")
        throw std::runtime_error(prefix + ".json: not a background retriever");
    const auto& c = j.at("config");
    BackgroundConfig cfg;
    cfg.frames = c.at("frames");
    cfg.height = c.at("height");
    cfg.width = c.at("width");
    cfg.c1 = c.at("c1");
    cfg.c2 = c.at("c2");
    cfg.c3 = c.at("c3");
    cfg.hidden = c.at("hidden");
    cfg.text.embed_dim = c.at("text_embed_dim");
    cfg.text.hidden = cfg.hidden;
    cfg.text.bidirectional = true;
    cfg.gamma = c.at("gamma");
    cfg.seed = c.at("seed");
    TokenLexicon tokens;
    tokens.tokens = j.at("tokens").get<std::vector<std::string>>();
    BackgroundRetriever m = BackgroundRetriever::create(cfg, std::move(tokens));
    nn::load_checkpoint(m.ps, prefix + ".ckpt");
    return m;
}

namespace {

struct BgExample {
    uint32_t clip_id = 0;
    std::vector<int> token_ids;
    int setting_pos = 0;
    vid::Video background;
};

std::vector<BgExample> collect_backgrounds(const BackgroundRetriever& m,
                                           const data::Dataset& ds,
                                           const std::vector<uint32_t>& ids) {
    std::vector<BgExample> out;
    for (uint32_t id : ids) {
        const data::Clip clip = ds.load_clip(id);
        BgExample ex;
        ex.clip_id = id;
        ex.token_ids = m.tokens.encode(clip.tokens);
        ex.setting_pos =
            setting_position(clip.tokens, ds.lexicon.words.at(clip.setting));
        ex.background = vid::video_from_bytes(clip.background, clip.F, clip.H, clip.W);
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

EmbedIndex build_background_index(const BackgroundRetriever& m, const data::Dataset& ds,
                                  const std::vector<uint32_t>& ids) {
    EmbedIndex idx;
    idx.dataset_dir = ds.dir;
    for (uint32_t id : ids) {
        const data::Clip clip = ds.load_clip(id);
        IndexRecord rec;
        rec.clip_id = id;
        rec.entity_id = 0;
        rec.emb =
            m.target_embed(vid::video_from_bytes(clip.background, clip.F, clip.H, clip.W));
        idx.records.push_back(std::move(rec));
        idx.record_files.push_back(ds.files.at(id));
    }
    idx.validate();
    return idx;
}

double background_self_recall_at_1(const BackgroundRetriever& m, const data::Dataset& ds,
                                   const std::vector<uint32_t>& ids, const EmbedIndex& idx) {
    long hit = 0, total = 0;
    for (uint32_t id : ids) {
        const data::Clip clip = ds.load_clip(id);
        const EmbeddingSeq q = m.query_embed(
            m.tokens.encode(clip.tokens),
            setting_position(clip.tokens, ds.lexicon.words.at(clip.setting)));
        const auto hits = retrieve(idx, q, 1);
        hit += hits[0].clip_id == id;
        ++total;
    }
    return total ? double(hit) / double(total) : 0.0;
}

std::vector<BackgroundEpochStats> train_background(BackgroundRetriever& m,
                                                   const data::Dataset& ds,
                                                   const BackgroundTrainConfig& tc) {
    std::vector<BgExample> examples = collect_backgrounds(m, ds, ds.train);
    if (examples.size() < 2) throw std::runtime_error("train_background: need at least 2 clips");
    int batch = tc.batch;
    if (batch > static_cast<int>(examples.size())) {
        std::fprintf(stderr, "train_background: batch %d clamped to %zu clips\n", batch,
                     examples.size());
        batch = static_cast<int>(examples.size());
    }
    if (batch < 2) batch = 2;

    nn::Adam opt(m.ps.params, tc.adam);
    Rng order(Rng::mix(tc.seed, 0x0b9eULL));
    std::vector<size_t> perm(examples.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    std::vector<BackgroundEpochStats> stats;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        opt.set_epoch(epoch);
        order.shuffle(perm);
        BackgroundEpochStats es;
        int batches = 0;
        for (size_t at = 0; at < perm.size(); at += batch) {
            const size_t n = std::min(perm.size() - at, static_cast<size_t>(batch));
            if (n < 2) continue;
            std::vector<std::vector<Value>> q, r;
            for (size_t i = 0; i < n; ++i) {
                const BgExample& ex = examples[perm[at + i]];
                q.push_back(m.query_states(ex.token_ids, ex.setting_pos));
                r.push_back(m.target_states(ex.background));
            }
            auto s = pair_scores(q, r);
            Value loss =
                tc.ohem ? triplet_ohem(s, m.cfg.gamma) : triplet_all_pairs(s, m.cfg.gamma);
            es.triplet += loss->val[0];
            m.ps.zero_grad();
            ad::backward(loss);
            opt.step();
            ++batches;
        }
        if (batches) es.triplet /= batches;
        const bool probe = tc.eval_every > 0 && (epoch + 1) % tc.eval_every == 0;
        if (probe) {
            EmbedIndex idx = build_background_index(m, ds, ds.train);
            es.recall1 = background_self_recall_at_1(m, ds, ds.train, idx);
        }
        if (tc.verbose) {
            std::printf("background epoch %3d lr %.2e triplet %.4f", epoch,
                        opt.effective_lr(), es.triplet);
            if (es.recall1 >= 0) std::printf(" recall@1 %.3f", es.recall1);
            std::printf("\n");
            std::fflush(stdout);
        }
        stats.push_back(es);
        if (probe && tc.stop_recall > 0 && es.recall1 >= tc.stop_recall) break;
    }
    return stats;
}

}  // namespace scw::model

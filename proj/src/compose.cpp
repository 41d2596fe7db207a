#include "scw/compose.hpp"

#include <json.hpp>

#include <cstdio>
#include <stdexcept>

namespace scw::model {

ParsedCaption parse_caption(const std::vector<std::string>& tokens, const data::Vocab& lexicon) {
    if (tokens.empty()) throw std::invalid_argument("parse_caption: empty caption");
    std::vector<int> nouns;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const int id = lexicon.find(tokens[i]);
        if (id >= 0 && lexicon.roles[id] == data::Role::noun) nouns.push_back(static_cast<int>(i));
    }
    if (nouns.empty())
        throw std::invalid_argument("parse_caption: caption mentions no noun, so no setting");
    ParsedCaption out;
    out.setting_pos = nouns.back();
    out.setting = tokens[out.setting_pos];
    for (int pos : nouns)
        if (tokens[pos] != out.setting) out.entity_positions.push_back(pos);
    return out;
}

CompositionState compose_video(const std::vector<std::string>& caption, const LayoutModel& layout,
                               const EntityRetriever& entity,
                               const BackgroundRetriever& background,
                               const EmbedIndex& entity_index, const EmbedIndex& background_index,
                               const data::Dataset& ds, const ComposeOptions& opt,
                               const std::vector<std::vector<data::Box>>* gt_boxes) {
    if (layout.cfg.frames != entity.cfg.frames || layout.cfg.frames != background.cfg.frames ||
        layout.cfg.height != entity.cfg.height || layout.cfg.width != entity.cfg.width ||
        layout.cfg.height != background.cfg.height || layout.cfg.width != background.cfg.width)
        throw std::invalid_argument("compose: models disagree on frame count or resolution");
    if (opt.top_k < 1) throw std::invalid_argument("compose: top_k must be at least 1");

    const ParsedCaption parsed = parse_caption(caption, ds.lexicon);
    if (opt.gt_layout) {
        if (!gt_boxes || gt_boxes->size() != parsed.entity_positions.size())
            throw std::invalid_argument("compose: ground-truth layout needs one box list per entity");
    }

    CompositionState st;
    st.caption = caption;

    // background first, independently of the entities
    const std::vector<int> bg_ids = background.tokens.encode(caption);
    const EmbeddingSeq bg_q = background.query_embed(bg_ids, parsed.setting_pos);
    const auto bg_hits = retrieve(background_index, bg_q, 1);
    st.background_clip = bg_hits[0].clip_id;
    const data::Clip bg_clip = ds.load_clip(st.background_clip);
    if (bg_clip.F != layout.cfg.frames || bg_clip.H != layout.cfg.height ||
        bg_clip.W != layout.cfg.width)
        throw std::invalid_argument("compose: background clip shape does not match the models");
    st.video = vid::video_from_bytes(bg_clip.background, bg_clip.F, bg_clip.H, bg_clip.W);

    const std::vector<int> layout_ids = layout.tokens.encode(caption);
    const std::vector<int> entity_ids = entity.tokens.encode(caption);
    for (size_t i = 0; i < parsed.entity_positions.size(); ++i) {
        const int e_pos = parsed.entity_positions[i];
        try {
            PlacedEntity placed;
            placed.entity = static_cast<int>(i);
            placed.noun_pos = e_pos;
            placed.boxes = opt.gt_layout ? (*gt_boxes)[i]
                                         : layout.infer(st.video, layout_ids, e_pos);

            const EmbeddingSeq q = entity.query_embed(st.video, entity_ids, e_pos, placed.boxes);
            placed.hits = retrieve(entity_index, q, opt.top_k);
            placed.source_clip = placed.hits[0].clip_id;
            placed.source_entity = placed.hits[0].entity_id;

            const data::Clip source = ds.load_clip(placed.source_clip);
            const vid::FuseStats fs = vid::fuse_entity(
                st.video, source, static_cast<int>(placed.source_entity), placed.boxes);
            placed.frames_fused = fs.frames_written;
            if (fs.frames_skipped > 0)
                std::fprintf(stderr,
                             "compose: entity %zu resized mask vanished in %d of %d frames\n", i,
                             fs.frames_skipped, layout.cfg.frames);
            st.entities.push_back(std::move(placed));
        } catch (const std::exception& e) {
            throw std::runtime_error("compose: entity " + std::to_string(i) + ": " + e.what());
        }
    }
    return st;
}

std::string composition_json(const CompositionState& st) {
    nlohmann::json j;
    j["caption"] = st.caption;
    j["background_clip"] = st.background_clip;
    j["entities"] = nlohmann::json::array();
    for (const PlacedEntity& p : st.entities) {
        nlohmann::json e;
        e["entity"] = p.entity;
        e["noun_pos"] = p.noun_pos;
        e["source_clip"] = p.source_clip;
        e["source_entity"] = p.source_entity;
        e["frames_fused"] = p.frames_fused;
        e["boxes"] = nlohmann::json::array();
        for (const data::Box& b : p.boxes)
            e["boxes"].push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
        e["scores"] = nlohmann::json::array();
        for (const RetrievalHit& h : p.hits)
            e["scores"].push_back(
                {{"clip", h.clip_id}, {"entity", h.entity_id}, {"score", h.score}});
        j["entities"].push_back(std::move(e));
    }
    return j.dump(2);
}

}  // namespace scw::model

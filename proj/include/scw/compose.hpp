#pragma once

#include <string>
#include <vector>

#include "scw/background.hpp"
#include "scw/layout.hpp"
#include "scw/retriever.hpp"

namespace scw::model {

// noun-role caption positions in mention order; the last noun-role token
// names the setting, and every occurrence of that word is excluded from the
// entity list
struct ParsedCaption {
    std::vector<int> entity_positions;
    int setting_pos = -1;
    std::string setting;
};
ParsedCaption parse_caption(const std::vector<std::string>& tokens, const data::Vocab& lexicon);

struct PlacedEntity {
    int entity = 0;  // mention order
    int noun_pos = 0;
    std::vector<data::Box> boxes;  // one per frame
    uint32_t source_clip = 0;
    uint32_t source_entity = 0;
    std::vector<RetrievalHit> hits;  // top-k, best first
    int frames_fused = 0;            // frames whose resized mask survived
};

struct CompositionState {
    std::vector<std::string> caption;
    vid::Video video;  // V_n
    uint32_t background_clip = 0;
    std::vector<PlacedEntity> entities;
};

struct ComposeOptions {
    int top_k = 5;
    bool gt_layout = false;  // bypass location/scale inference with given boxes
};

// empty video -> retrieved background -> per entity: layout, retrieval at the
// predicted boxes, crop/scale/fuse; deterministic given models and indexes
CompositionState compose_video(const std::vector<std::string>& caption, const LayoutModel& layout,
                               const EntityRetriever& entity,
                               const BackgroundRetriever& background,
                               const EmbedIndex& entity_index, const EmbedIndex& background_index,
                               const data::Dataset& ds, const ComposeOptions& opt = {},
                               const std::vector<std::vector<data::Box>>* gt_boxes = nullptr);

// {caption, background clip, per-entity box trajectory, source, top-k scores}
std::string composition_json(const CompositionState& st);

}  // namespace scw::model

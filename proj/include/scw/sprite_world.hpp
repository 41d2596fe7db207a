#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scw/rng.hpp"

namespace scw::data {

enum class Role : uint8_t { noun = 0, adjective = 1, verb = 2 };

// Role-tagged word list. The generator's lexicon spans all splits; the model
// vocabulary from build_vocab covers train-split words only.
struct Vocab {
    std::vector<std::string> words;
    std::vector<Role> roles;
    int find(const std::string& w) const;
    int size() const { return static_cast<int>(words.size()); }
    void validate() const;  // unique words, matching role list
};

// Inclusive pixel rectangle.
struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int pw() const { return x1 - x0 + 1; }
    int ph() const { return y1 - y0 + 1; }
};

// Entity box: integer center pixel plus extents normalized by frame size.
struct Box {
    int x = 0, y = 0;
    double w = 0.0, h = 0.0;
};

// center = corner + floor(extent/2); exact round trip with rect_from_box
Box box_from_rect(const Rect& r, int W, int H);
Rect rect_from_box(const Box& b, int W, int H);

struct EntityAnno {
    uint32_t noun_pos = 0;           // caption token index of the noun
    std::vector<uint32_t> words;     // lexicon ids, sorted (the entity word set)
    std::vector<Box> boxes;          // one per frame
    std::vector<uint8_t> mask;       // F*H*W visibility bytes, 0 or 1
};

struct Clip {
    uint32_t id = 0;
    int F = 0, H = 0, W = 0;
    std::vector<uint8_t> frames;      // F*H*W*3, RGB
    std::vector<uint8_t> background;  // same layout, no entities
    std::vector<EntityAnno> entities;
    std::vector<std::string> tokens;  // caption
    uint32_t setting = 0;             // lexicon id of the setting noun

    size_t frame_bytes() const { return static_cast<size_t>(H) * W * 3; }
    size_t mask_bytes() const { return static_cast<size_t>(H) * W; }
};

struct SpriteWorldConfig {
    uint64_t seed = 1;
    int frames = 8;
    int height = 64;
    int width = 64;
    int shapes = 6;    // prefix of the built-in shape list
    int colors = 6;
    int motions = 4;
    int settings = 4;
    int clips = 100;
    double split_train = 0.8, split_val = 0.1, split_test = 0.1;

    void validate() const;  // throws on zero counts / bad fractions
};

// Word lists the generator draws from, as a lexicon (settings are nouns).
Vocab generator_lexicon(const SpriteWorldConfig& cfg);

Clip gen_clip(const SpriteWorldConfig& cfg, uint32_t clip_id, const Vocab& lexicon);

// Writes manifest.json plus clip_<id>.scw files; byte-identical per seed.
void gen_dataset(const SpriteWorldConfig& cfg, const std::string& out_dir);

void encode_clip(const Clip& clip, const std::string& path);
Clip decode_clip(const std::string& path, const Vocab& lexicon);  // validates
void validate_clip(const Clip& clip, const Vocab& lexicon);

struct Dataset {
    std::string dir;
    SpriteWorldConfig config;
    Vocab lexicon;
    std::vector<uint32_t> train, val, test;
    std::vector<std::string> files;  // clip id -> file name

    static Dataset open(const std::string& dir);
    std::string clip_path(uint32_t id) const;
    Clip load_clip(uint32_t id) const;
};

// Train-split model vocabulary: dense ids, ordered by role then word.
Vocab build_vocab(const Dataset& ds);

// Person-upper band for the hat placement rule, in recorded-box terms.
bool hat_in_band(const Box& hat, const Box& person, int W, int H);

struct BandStats {
    long frames_total = 0;
    long frames_in_band = 0;
};
// Scans clips containing both person and hat; uses recorded boxes per frame.
BandStats hat_band_stats(const Dataset& ds, const std::vector<uint32_t>& ids);

}  // namespace scw::data

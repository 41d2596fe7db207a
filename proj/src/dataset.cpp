#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "scw/sprite_world.hpp"

#include <json.hpp>

namespace scw::data {

using nlohmann::json;

namespace {

json config_to_json(const SpriteWorldConfig& c) {
    return json{{"seed", c.seed},
                {"frames", c.frames},
                {"height", c.height},
                {"width", c.width},
                {"shapes", c.shapes},
                {"colors", c.colors},
                {"motions", c.motions},
                {"settings", c.settings},
                {"clips", c.clips},
                {"split_train", c.split_train},
                {"split_val", c.split_val},
                {"split_test", c.split_test}};
}

SpriteWorldConfig config_from_json(const json& j) {
    SpriteWorldConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.frames = j.at("frames").get<int>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.shapes = j.at("shapes").get<int>();
    c.colors = j.at("colors").get<int>();
    c.motions = j.at("motions").get<int>();
    c.settings = j.at("settings").get<int>();
    c.clips = j.at("clips").get<int>();
    c.split_train = j.at("split_train").get<double>();
    c.split_val = j.at("split_val").get<double>();
    c.split_test = j.at("split_test").get<double>();
    return c;
}

}  // namespace

void gen_dataset(const SpriteWorldConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const Vocab lexicon = generator_lexicon(cfg);
    std::filesystem::create_directories(out_dir);

    std::vector<std::string> files;
    for (int id = 0; id < cfg.clips; ++id) {
        const Clip clip = gen_clip(cfg, static_cast<uint32_t>(id), lexicon);
        const std::string name = "clip_" + std::to_string(id) + ".scw";
        encode_clip(clip, out_dir + "/" + name);
        files.push_back(name);
    }

    // split by shuffled clip id; rounding goes train, val, remainder test
    std::vector<uint32_t> ids(cfg.clips);
    for (int i = 0; i < cfg.clips; ++i) ids[i] = static_cast<uint32_t>(i);
    Rng split_rng(Rng::mix(cfg.seed, 999999937ull));
    split_rng.shuffle(ids);
    size_t n_train = static_cast<size_t>(std::lround(cfg.split_train * cfg.clips));
    size_t n_val = static_cast<size_t>(std::lround(cfg.split_val * cfg.clips));
    n_train = std::min(n_train, ids.size());
    n_val = std::min(n_val, ids.size() - n_train);
    std::vector<uint32_t> train(ids.begin(), ids.begin() + n_train);
    std::vector<uint32_t> val(ids.begin() + n_train, ids.begin() + n_train + n_val);
    std::vector<uint32_t> test(ids.begin() + n_train + n_val, ids.end());

    std::vector<int> role_tags(lexicon.roles.size());
    for (size_t i = 0; i < lexicon.roles.size(); ++i)
        role_tags[i] = static_cast<int>(lexicon.roles[i]);

    const json manifest{
        {"config", config_to_json(cfg)},
        {"lexicon", json{{"words", lexicon.words}, {"roles", role_tags}}},
        {"splits", json{{"train", train}, {"val", val}, {"test", test}}},
        {"files", files}};
    std::ofstream out(out_dir + "/manifest.json");
    if (!out) throw std::runtime_error("cannot open " + out_dir + "/manifest.json for writing");
    out << manifest.dump(2) << "\n";
    out.close();
    if (!out.good()) throw std::runtime_error("write to " + out_dir + "/manifest.json failed");
}

Dataset Dataset::open(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest_path + ": " + e.what());
    }

    Dataset ds;
    ds.dir = dir;
    ds.config = config_from_json(j.at("config"));
    ds.config.validate();
    ds.lexicon.words = j.at("lexicon").at("words").get<std::vector<std::string>>();
    for (int t : j.at("lexicon").at("roles").get<std::vector<int>>()) {
        if (t < 0 || t > 2)
            throw std::runtime_error(manifest_path + ": role tag outside 0..2");
        ds.lexicon.roles.push_back(static_cast<Role>(t));
    }
    ds.lexicon.validate();
    ds.train = j.at("splits").at("train").get<std::vector<uint32_t>>();
    ds.val = j.at("splits").at("val").get<std::vector<uint32_t>>();
    ds.test = j.at("splits").at("test").get<std::vector<uint32_t>>();
    ds.files = j.at("files").get<std::vector<std::string>>();

    if (ds.files.size() != static_cast<size_t>(ds.config.clips))
        throw std::runtime_error(manifest_path + ": file list does not match clip count");
    std::set<uint32_t> seen;
    for (const auto* split : {&ds.train, &ds.val, &ds.test})
        for (uint32_t id : *split) {
            if (id >= ds.files.size())
                throw std::runtime_error(manifest_path + ": split references unknown clip id " +
                                         std::to_string(id));
            if (!seen.insert(id).second)
                throw std::runtime_error(manifest_path + ": clip id " + std::to_string(id) +
                                         " appears in two splits");
        }
    if (seen.size() != ds.files.size())
        throw std::runtime_error(manifest_path + ": splits do not cover every clip");
    return ds;
}

std::string Dataset::clip_path(uint32_t id) const {
    if (id >= files.size())
        throw std::out_of_range("clip id " + std::to_string(id) + " outside dataset");
    return dir + "/" + files[id];
}

Clip Dataset::load_clip(uint32_t id) const {
    Clip clip = decode_clip(clip_path(id), lexicon);
    clip.id = id;
    return clip;
}

Vocab build_vocab(const Dataset& ds) {
    // model vocabulary: every lexicon word observed in a train-split word set
    // or as a train-split setting, re-indexed densely, ordered role then word
    std::set<uint32_t> used;
    for (uint32_t id : ds.train) {
        const Clip clip = ds.load_clip(id);
        used.insert(clip.setting);
        for (const auto& e : clip.entities)
            for (uint32_t w : e.words) used.insert(w);
    }
    std::vector<uint32_t> order(used.begin(), used.end());
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (ds.lexicon.roles[a] != ds.lexicon.roles[b])
            return ds.lexicon.roles[a] < ds.lexicon.roles[b];
        return ds.lexicon.words[a] < ds.lexicon.words[b];
    });
    Vocab v;
    for (uint32_t id : order) {
        v.words.push_back(ds.lexicon.words[id]);
        v.roles.push_back(ds.lexicon.roles[id]);
    }
    v.validate();
    return v;
}

}  // namespace scw::data

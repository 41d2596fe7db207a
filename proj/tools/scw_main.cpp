#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "scw/background.hpp"
#include "scw/compose.hpp"
#include "scw/gradsuite.hpp"
#include "scw/layout.hpp"
#include "scw/metrics.hpp"
#include "scw/retriever.hpp"
#include "scw/run_record.hpp"
#include "scw/video.hpp"

using nlohmann::json;
using namespace scw;

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::string& default_out) {
    cmd->add_option("--config", args.config, "JSON config file");
    cmd->add_option("--seed", args.seed, "run seed")->default_val(1);
    cmd->add_option("--out", args.out, "output directory")->default_val(default_out);
}

json config_or_empty(const CommonArgs& args) {
    if (args.config.empty()) return json::object();
    return run::load_config(args.config);
}

json required_config(const CommonArgs& args, const std::string& name) {
    if (args.config.empty()) throw std::runtime_error(name + ": --config is required");
    return run::load_config(args.config);
}

std::vector<uint32_t> split_ids(const data::Dataset& ds, const std::string& name,
                                const std::string& context) {
    if (name == "train") return ds.train;
    if (name == "val") return ds.val;
    if (name == "test") return ds.test;
    throw std::runtime_error(context + ": unknown split \"" + name + "\"");
}

void write_csv(const std::string& path, const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "metric,value\n";
    for (const auto& [k, v] : rows) out << k << "," << v << "\n";
}

nn::AdamConfig adam_from(const json& cfg, double lr, int decay_period) {
    nn::AdamConfig a;
    a.lr = cfg.value("lr", lr);
    a.weight_decay = cfg.value("weight_decay", 1e-4);
    a.decay_factor = cfg.value("decay_factor", 0.5);
    a.decay_period = cfg.value("decay_period", decay_period);
    return a;
}

int cmd_gen_data(const CommonArgs& args) {
    const json cfg = config_or_empty(args);
    run::require_keys(cfg, "gen-data",
                      {},
                      {"frames", "height", "width", "shapes", "colors", "motions", "settings",
                       "clips", "split_train", "split_val", "split_test"});
    data::SpriteWorldConfig wcfg;
    wcfg.seed = args.seed;
    wcfg.frames = cfg.value("frames", 8);
    wcfg.height = cfg.value("height", 64);
    wcfg.width = cfg.value("width", 64);
    wcfg.shapes = cfg.value("shapes", 6);
    wcfg.colors = cfg.value("colors", 6);
    wcfg.motions = cfg.value("motions", 4);
    wcfg.settings = cfg.value("settings", 4);
    wcfg.clips = cfg.value("clips", 100);
    wcfg.split_train = cfg.value("split_train", 0.8);
    wcfg.split_val = cfg.value("split_val", 0.1);
    wcfg.split_test = cfg.value("split_test", 0.1);

    const std::string ds_dir = args.out + "/dataset";
    std::filesystem::create_directories(args.out);
    data::gen_dataset(wcfg, ds_dir);
    const data::Dataset ds = data::Dataset::open(ds_dir);

    json metrics;
    metrics["clips"] = wcfg.clips;
    metrics["train"] = ds.train.size();
    metrics["val"] = ds.val.size();
    metrics["test"] = ds.test.size();
    metrics["lexicon_words"] = ds.lexicon.words.size();
    run::write_run_record(args.out, "gen-data", cfg, args.seed, metrics);
    std::printf("dataset: %s (%zu train / %zu val / %zu test)\n", ds_dir.c_str(),
                ds.train.size(), ds.val.size(), ds.test.size());
    return 0;
}

int cmd_train_layout(const CommonArgs& args) {
    const json cfg = required_config(args, "train-layout");
    run::require_keys(cfg, "train-layout", {"dataset"},
                      {"epochs", "batch", "lr", "weight_decay", "decay_factor", "decay_period",
                       "c1", "c2", "c3", "loc_hidden", "scale_hidden", "sigma2", "dilation",
                       "embed_dim", "text_hidden", "use_text", "use_scene", "use_coords",
                       "verbose"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());

    model::LayoutConfig lc;
    lc.frames = ds.config.frames;
    lc.height = ds.config.height;
    lc.width = ds.config.width;
    lc.c1 = cfg.value("c1", 16);
    lc.c2 = cfg.value("c2", 32);
    lc.c3 = cfg.value("c3", 64);
    lc.loc_hidden = cfg.value("loc_hidden", 64);
    lc.scale_hidden = cfg.value("scale_hidden", 64);
    lc.sigma2 = cfg.value("sigma2", 0.005);
    lc.dilation = cfg.value("dilation", 1);
    lc.text.embed_dim = cfg.value("embed_dim", 32);
    lc.text.hidden = cfg.value("text_hidden", 32);
    lc.use_text = cfg.value("use_text", true);
    lc.use_scene = cfg.value("use_scene", true);
    lc.use_coords = cfg.value("use_coords", true);
    lc.seed = Rng::mix(args.seed, 1);

    model::LayoutModel m = model::LayoutModel::create(lc, model::build_token_lexicon(ds));
    model::LayoutTrainConfig tc;
    tc.epochs = cfg.value("epochs", 30);
    tc.batch = cfg.value("batch", 32);
    tc.adam = adam_from(cfg, 1e-3, 1);
    tc.seed = Rng::mix(args.seed, 2);
    tc.verbose = cfg.value("verbose", true);
    const auto stats = model::train_layout(m, ds, tc);

    std::filesystem::create_directories(args.out);
    model::save_layout(m, args.out + "/layout");
    json metrics;
    if (!stats.empty()) {
        const auto& last = stats.back();
        metrics["train_nll_loc"] = last.train_nll_loc;
        metrics["train_nll_scale"] = last.train_nll_scale;
        metrics["val_nll_loc"] = last.val_nll_loc;
        metrics["val_nll_scale"] = last.val_nll_scale;
    }
    metrics["uniform_nll_loc"] = std::log(double(lc.height) * lc.width);
    metrics["epochs"] = tc.epochs;
    run::write_run_record(args.out, "train-layout", cfg, args.seed, metrics);
    if (!stats.empty())
        std::printf("train nll %.4f+%.4f  val nll %.4f+%.4f  uniform loc %.4f\n",
                    stats.back().train_nll_loc, stats.back().train_nll_scale,
                    stats.back().val_nll_loc, stats.back().val_nll_scale,
                    std::log(double(lc.height) * lc.width));
    std::printf("model: %s/layout\n", args.out.c_str());
    return 0;
}

int cmd_train_entity(const CommonArgs& args) {
    const json cfg = required_config(args, "train-entity");
    run::require_keys(cfg, "train-entity", {"dataset"},
                      {"epochs", "batch", "lr", "weight_decay", "decay_factor", "decay_period",
                       "c1", "c2", "c3", "embed_dim", "aux_hidden", "text_embed_dim",
                       "text_hidden", "use_coords", "mask_target", "gamma", "ohem", "use_aux",
                       "stop_recall", "eval_every", "final_recall", "verbose"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());

    model::RetrieverConfig rc;
    rc.frames = ds.config.frames;
    rc.height = ds.config.height;
    rc.width = ds.config.width;
    rc.c1 = cfg.value("c1", 16);
    rc.c2 = cfg.value("c2", 32);
    rc.c3 = cfg.value("c3", 64);
    rc.embed_dim = cfg.value("embed_dim", 64);
    rc.aux_hidden = cfg.value("aux_hidden", 64);
    rc.text.embed_dim = cfg.value("text_embed_dim", 32);
    rc.text.hidden = cfg.value("text_hidden", 32);
    rc.use_coords = cfg.value("use_coords", true);
    rc.mask_target = cfg.value("mask_target", true);
    rc.gamma = cfg.value("gamma", 0.1);
    rc.seed = Rng::mix(args.seed, 1);

    model::EntityRetriever m =
        model::EntityRetriever::create(rc, model::build_token_lexicon(ds), data::build_vocab(ds));
    model::RetrieverTrainConfig tc;
    tc.epochs = cfg.value("epochs", 50);
    tc.batch = cfg.value("batch", 30);
    tc.ohem = cfg.value("ohem", false);
    tc.use_aux = cfg.value("use_aux", true);
    tc.adam = adam_from(cfg, 1e-3, 10);
    tc.seed = Rng::mix(args.seed, 2);
    tc.verbose = cfg.value("verbose", true);
    tc.stop_recall = cfg.value("stop_recall", 0.0);
    tc.eval_every = cfg.value("eval_every", 0);
    const auto stats = model::train_retriever(m, ds, tc);

    std::filesystem::create_directories(args.out);
    model::save_retriever(m, args.out + "/entity");
    json metrics;
    if (!stats.empty()) {
        metrics["triplet"] = stats.back().triplet;
        metrics["aux"] = stats.back().aux;
    }
    if (cfg.value("final_recall", true)) {
        const model::EmbedIndex idx = model::build_entity_index(m, ds, ds.train);
        metrics["train_recall_at_1"] = model::self_recall_at_1(m, ds, ds.train, idx);
    }
    run::write_run_record(args.out, "train-entity", cfg, args.seed, metrics);
    if (metrics.contains("train_recall_at_1"))
        std::printf("train recall@1 %.3f\n", metrics["train_recall_at_1"].get<double>());
    std::printf("model: %s/entity\n", args.out.c_str());
    return 0;
}

int cmd_train_background(const CommonArgs& args) {
    const json cfg = required_config(args, "train-background");
    run::require_keys(cfg, "train-background", {"dataset"},
                      {"epochs", "batch", "lr", "weight_decay", "decay_factor", "decay_period",
                       "c1", "c2", "c3", "hidden", "text_embed_dim", "gamma", "ohem",
                       "stop_recall", "eval_every", "final_recall", "verbose"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());

    model::BackgroundConfig bc;
    bc.frames = ds.config.frames;
    bc.height = ds.config.height;
    bc.width = ds.config.width;
    bc.c1 = cfg.value("c1", 16);
    bc.c2 = cfg.value("c2", 32);
    bc.c3 = cfg.value("c3", 64);
    bc.hidden = cfg.value("hidden", 32);
    bc.text.embed_dim = cfg.value("text_embed_dim", 32);
    bc.text.hidden = bc.hidden;  // query and target embeddings share one width
    bc.gamma = cfg.value("gamma", 0.1);
    bc.seed = Rng::mix(args.seed, 1);

    model::BackgroundRetriever m =
        model::BackgroundRetriever::create(bc, model::build_token_lexicon(ds));
    model::BackgroundTrainConfig tc;
    tc.epochs = cfg.value("epochs", 50);
    tc.batch = cfg.value("batch", 30);
    tc.ohem = cfg.value("ohem", false);
    tc.adam = adam_from(cfg, 1e-3, 10);
    tc.seed = Rng::mix(args.seed, 2);
    tc.verbose = cfg.value("verbose", true);
    tc.stop_recall = cfg.value("stop_recall", 0.0);
    tc.eval_every = cfg.value("eval_every", 0);
    const auto stats = model::train_background(m, ds, tc);

    std::filesystem::create_directories(args.out);
    model::save_background(m, args.out + "/background");
    json metrics;
    if (!stats.empty()) metrics["triplet"] = stats.back().triplet;
    if (cfg.value("final_recall", true)) {
        const model::EmbedIndex idx = model::build_background_index(m, ds, ds.train);
        metrics["train_recall_at_1"] = model::background_self_recall_at_1(m, ds, ds.train, idx);
    }
    run::write_run_record(args.out, "train-background", cfg, args.seed, metrics);
    if (metrics.contains("train_recall_at_1"))
        std::printf("train recall@1 %.3f\n", metrics["train_recall_at_1"].get<double>());
    std::printf("model: %s/background\n", args.out.c_str());
    return 0;
}

int cmd_build_index(const CommonArgs& args) {
    const json cfg = required_config(args, "build-index");
    run::require_keys(cfg, "build-index", {"dataset", "model", "kind"}, {"split"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());
    const std::string kind = cfg.at("kind").get<std::string>();
    const auto ids = split_ids(ds, cfg.value("split", "train"), "build-index");

    model::EmbedIndex idx;
    if (kind == "entity") {
        const model::EntityRetriever m =
            model::load_retriever(cfg.at("model").get<std::string>());
        idx = model::build_entity_index(m, ds, ids);
    } else if (kind == "background") {
        const model::BackgroundRetriever m =
            model::load_background(cfg.at("model").get<std::string>());
        idx = model::build_background_index(m, ds, ids);
    } else {
        throw std::runtime_error("build-index: kind must be \"entity\" or \"background\"");
    }
    std::filesystem::create_directories(args.out);
    model::save_index(idx, args.out + "/index.bin");
    json metrics;
    metrics["records"] = idx.records.size();
    metrics["kind"] = kind;
    run::write_run_record(args.out, "build-index", cfg, args.seed, metrics);
    std::printf("index: %s/index.bin (%zu records)\n", args.out.c_str(), idx.records.size());
    return 0;
}

int cmd_compose(const CommonArgs& args) {
    const json cfg = required_config(args, "compose");
    run::require_keys(cfg, "compose",
                      {"dataset", "layout", "entity", "background", "entity_index",
                       "background_index", "caption"},
                      {"top_k", "gt_layout", "gt_clip"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());
    const model::LayoutModel layout = model::load_layout(cfg.at("layout").get<std::string>());
    const model::EntityRetriever entity =
        model::load_retriever(cfg.at("entity").get<std::string>());
    const model::BackgroundRetriever background =
        model::load_background(cfg.at("background").get<std::string>());
    const model::EmbedIndex eidx =
        model::load_index(cfg.at("entity_index").get<std::string>());
    const model::EmbedIndex bidx =
        model::load_index(cfg.at("background_index").get<std::string>());

    std::vector<std::string> caption;
    if (cfg.at("caption").is_string()) {
        std::string word;
        for (char c : cfg.at("caption").get<std::string>() + " ") {
            if (c == ' ') {
                if (!word.empty()) caption.push_back(word);
                word.clear();
            } else {
                word.push_back(c);
            }
        }
    } else {
        caption = cfg.at("caption").get<std::vector<std::string>>();
    }

    model::ComposeOptions opt;
    opt.top_k = cfg.value("top_k", 5);
    opt.gt_layout = cfg.value("gt_layout", false);
    std::vector<std::vector<data::Box>> gt;
    const std::vector<std::vector<data::Box>>* gt_ptr = nullptr;
    if (opt.gt_layout) {
        if (!cfg.contains("gt_clip"))
            throw std::runtime_error("compose: gt_layout needs gt_clip for the box source");
        const data::Clip src = ds.load_clip(cfg.at("gt_clip").get<uint32_t>());
        for (const auto& e : src.entities) gt.push_back(e.boxes);
        gt_ptr = &gt;
    }

    const model::CompositionState st =
        model::compose_video(caption, layout, entity, background, eidx, bidx, ds, opt, gt_ptr);

    std::filesystem::create_directories(args.out);
    {
        std::ofstream out(args.out + "/composition.json");
        out << model::composition_json(st) << "\n";
    }
    const auto frames = vid::export_frames(st.video, args.out + "/frames", "composed");
    json metrics;
    metrics["background_clip"] = st.background_clip;
    metrics["entities"] = st.entities.size();
    metrics["frames"] = frames;
    int fused = 0;
    for (const auto& p : st.entities) fused += p.frames_fused;
    metrics["frames_fused"] = fused;
    run::write_run_record(args.out, "compose", cfg, args.seed, metrics);
    std::printf("background clip %u, %zu entities, %zu frames -> %s/frames\n",
                st.background_clip, st.entities.size(), frames.size(), args.out.c_str());
    return 0;
}

int cmd_eval_layout(const CommonArgs& args) {
    const json cfg = required_config(args, "eval-layout");
    run::require_keys(cfg, "eval-layout", {"dataset", "model"}, {"split", "predicted_prev"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());
    const model::LayoutModel m = model::load_layout(cfg.at("model").get<std::string>());
    const auto ids = split_ids(ds, cfg.value("split", "val"), "eval-layout");
    const bool predicted_prev = cfg.value("predicted_prev", false);

    const auto records = model::eval_layout(m, ds, ids, predicted_prev);
    if (records.empty()) throw std::runtime_error("eval-layout: empty split");
    double nll_loc = 0, nll_scale = 0, pix = 0;
    for (const auto& r : records) {
        nll_loc += r.nll_loc;
        nll_scale += r.nll_scale;
        pix += r.pixel_dist;
    }
    const double n = static_cast<double>(records.size());
    nll_loc /= n;
    nll_scale /= n;
    pix /= n;
    const model::UniformBaselines ub = model::uniform_baselines(m.cfg.height, m.cfg.width);

    std::filesystem::create_directories(args.out);
    {
        std::ofstream csv(args.out + "/layout_eval.csv");
        csv << "clip,entity,frame,nll_loc,nll_scale,pixel_dist\n";
        for (const auto& r : records)
            csv << r.clip << "," << r.entity << "," << r.frame << "," << r.nll_loc << ","
                << r.nll_scale << "," << r.pixel_dist << "\n";
    }
    json metrics;
    metrics["nll_loc"] = nll_loc;
    metrics["nll_scale"] = nll_scale;
    metrics["nll"] = nll_loc + nll_scale;
    metrics["pixel_distance"] = pix;
    metrics["uniform_nll_loc"] = ub.nll;
    metrics["uniform_pixel_distance"] = ub.pixel;
    metrics["records"] = records.size();
    run::write_run_record(args.out, "eval-layout", cfg, args.seed, metrics);
    std::printf("nll %.4f (loc %.4f vs uniform %.4f)  pixel distance %.4f (uniform %.4f)\n",
                nll_loc + nll_scale, nll_loc, ub.nll, pix, ub.pixel);
    return 0;
}

int cmd_eval_retrieval(const CommonArgs& args) {
    const json cfg = required_config(args, "eval-retrieval");
    run::require_keys(cfg, "eval-retrieval", {"dataset", "entity_model"},
                      {"background_model", "split", "db_split", "ks"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());
    const model::EntityRetriever m =
        model::load_retriever(cfg.at("entity_model").get<std::string>());
    const auto query_ids = split_ids(ds, cfg.value("split", "test"), "eval-retrieval");
    const auto db_ids = split_ids(ds, cfg.value("db_split", "train"), "eval-retrieval");
    std::vector<int> ks = cfg.value("ks", std::vector<int>{1, 10});

    const model::EmbedIndex idx = model::build_entity_index(m, ds, db_ids);
    const auto rec_words = model::index_word_sets(idx, ds);

    // teacher-forced queries: ground-truth boxes on the partially built video
    std::vector<model::EmbeddingSeq> queries;
    std::vector<std::string> noun, adj, verb;
    for (uint32_t id : query_ids) {
        const data::Clip clip = ds.load_clip(id);
        const auto ids_tok = m.tokens.encode(clip.tokens);
        for (size_t e = 0; e < clip.entities.size(); ++e) {
            const auto& ent = clip.entities[e];
            queries.push_back(m.query_embed(vid::partial_video(clip, e), ids_tok,
                                            static_cast<int>(ent.noun_pos), ent.boxes));
            noun.push_back(model::entity_role_word(clip, static_cast<int>(e), ds.lexicon,
                                                   data::Role::noun));
            adj.push_back(model::entity_role_word(clip, static_cast<int>(e), ds.lexicon,
                                                  data::Role::adjective));
            verb.push_back(model::entity_role_word(clip, static_cast<int>(e), ds.lexicon,
                                                   data::Role::verb));
        }
    }
    if (queries.empty()) throw std::runtime_error("eval-retrieval: empty query split");

    json metrics;
    std::vector<std::pair<std::string, double>> rows;
    for (int k : ks) {
        const double rn = model::recall_at_k(idx, rec_words, queries, noun, k);
        const double ra = model::recall_at_k(idx, rec_words, queries, adj, k);
        const double rv = model::recall_at_k(idx, rec_words, queries, verb, k);
        metrics["noun_recall_at_" + std::to_string(k)] = rn;
        metrics["adjective_recall_at_" + std::to_string(k)] = ra;
        metrics["verb_recall_at_" + std::to_string(k)] = rv;
        rows.push_back({"noun_recall_at_" + std::to_string(k), rn});
        rows.push_back({"adjective_recall_at_" + std::to_string(k), ra});
        rows.push_back({"verb_recall_at_" + std::to_string(k), rv});
        std::printf("k=%d  noun %.3f  adjective %.3f  verb %.3f\n", k, rn, ra, rv);
    }
    metrics["queries"] = queries.size();
    metrics["records"] = idx.records.size();

    if (cfg.contains("background_model")) {
        const model::BackgroundRetriever bg =
            model::load_background(cfg.at("background_model").get<std::string>());
        const model::EmbedIndex bidx = model::build_background_index(bg, ds, db_ids);
        int hits = 0, total = 0;
        for (uint32_t id : query_ids) {
            const data::Clip clip = ds.load_clip(id);
            const std::string setting = ds.lexicon.words[clip.setting];
            const auto q = bg.query_embed(bg.tokens.encode(clip.tokens),
                                          model::setting_position(clip.tokens, setting));
            const auto top = model::retrieve(bidx, q, 1);
            const data::Clip got = ds.load_clip(top[0].clip_id);
            hits += got.setting == clip.setting ? 1 : 0;
            ++total;
        }
        const double r = total ? static_cast<double>(hits) / total : 0.0;
        metrics["background_setting_recall_at_1"] = r;
        rows.push_back({"background_setting_recall_at_1", r});
        std::printf("background setting recall@1 %.3f\n", r);
    }

    std::filesystem::create_directories(args.out);
    write_csv(args.out + "/retrieval_eval.csv", rows);
    run::write_run_record(args.out, "eval-retrieval", cfg, args.seed, metrics);
    return 0;
}

int cmd_baseline_uniform(const CommonArgs& args, int height, int width) {
    const model::UniformBaselines b = model::uniform_baselines(height, width);
    std::printf("uniform location nll: %.4f\n", b.nll);
    std::printf("uniform pixel distance: %.4f\n", b.pixel);
    json cfg;
    cfg["height"] = height;
    cfg["width"] = width;
    json metrics;
    metrics["nll"] = b.nll;
    metrics["pixel_distance"] = b.pixel;
    metrics["pixel_distance_closed_form"] = model::uniform_distance_closed_form();
    run::write_run_record(args.out, "baseline-uniform", cfg, args.seed, metrics);
    return 0;
}

int cmd_baseline_bleu(const CommonArgs& args) {
    const json cfg = required_config(args, "baseline-bleu");
    run::require_keys(cfg, "baseline-bleu", {"dataset"}, {"split", "db_split"});
    const data::Dataset ds = data::Dataset::open(cfg.at("dataset").get<std::string>());
    const auto test_ids = split_ids(ds, cfg.value("split", "test"), "baseline-bleu");
    const auto db_ids = split_ids(ds, cfg.value("db_split", "train"), "baseline-bleu");
    const model::Bleu1Recalls r = model::bleu1_baseline(ds, test_ids, db_ids);
    std::printf("bleu-1 retrieval recall: noun %.3f  adjective %.3f  verb %.3f (%d entities)\n",
                r.noun, r.adjective, r.verb, r.entities);
    json metrics;
    metrics["noun_recall"] = r.noun;
    metrics["adjective_recall"] = r.adjective;
    metrics["verb_recall"] = r.verb;
    metrics["entities"] = r.entities;
    std::filesystem::create_directories(args.out);
    write_csv(args.out + "/bleu_eval.csv", {{"noun_recall", r.noun},
                                            {"adjective_recall", r.adjective},
                                            {"verb_recall", r.verb}});
    run::write_run_record(args.out, "baseline-bleu", cfg, args.seed, metrics);
    return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
    const auto entries = nn::gradient_battery(args.seed);
    json metrics;
    for (const auto& e : entries) {
        std::printf("%-24s max relative error %.3e\n", e.name.c_str(), e.max_rel_err);
        metrics[e.name] = e.max_rel_err;
    }
    const bool pass = nn::gradient_battery_passes(entries);
    metrics["pass"] = pass;
    run::write_run_record(args.out, "gradcheck", json::object(), args.seed, metrics);
    std::printf("gradcheck: %s\n", pass ? "pass" : "FAIL");
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sprite-world composition workbench"};
    app.set_version_flag("--version", run::kVersion);
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd;
        CommonArgs args;
    };
    std::map<std::string, Sub> subs;
    for (const char* name :
         {"gen-data", "train-layout", "train-entity", "train-background", "build-index",
          "compose", "eval-layout", "eval-retrieval", "baseline-uniform", "baseline-bleu",
          "gradcheck"}) {
        Sub s;
        s.cmd = app.add_subcommand(name, "");
        subs.emplace(name, s);
    }
    subs["gen-data"].cmd->description("generate a sprite-world dataset");
    subs["train-layout"].cmd->description("train the layout composer");
    subs["train-entity"].cmd->description("train the entity retriever");
    subs["train-background"].cmd->description("train the background retriever");
    subs["build-index"].cmd->description("embed a split into a retrieval index");
    subs["compose"].cmd->description("compose a video from a caption");
    subs["eval-layout"].cmd->description("layout likelihood and pixel distance");
    subs["eval-retrieval"].cmd->description("retrieval recalls against a database split");
    subs["baseline-uniform"].cmd->description("uninformed location predictor bounds");
    subs["baseline-bleu"].cmd->description("caption-matching whole-video baseline");
    subs["gradcheck"].cmd->description("finite-difference gradient battery");

    for (auto& [name, s] : subs) add_common(s.cmd, s.args, "runs/" + name);

    int height = 128, width = 128;
    subs["baseline-uniform"].cmd->add_option("--height", height)->default_val(128);
    subs["baseline-uniform"].cmd->add_option("--width", width)->default_val(128);

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& [name, s] : subs) {
            if (!s.cmd->parsed()) continue;
            if (name == "gen-data") return cmd_gen_data(s.args);
            if (name == "train-layout") return cmd_train_layout(s.args);
            if (name == "train-entity") return cmd_train_entity(s.args);
            if (name == "train-background") return cmd_train_background(s.args);
            if (name == "build-index") return cmd_build_index(s.args);
            if (name == "compose") return cmd_compose(s.args);
            if (name == "eval-layout") return cmd_eval_layout(s.args);
            if (name == "eval-retrieval") return cmd_eval_retrieval(s.args);
            if (name == "baseline-uniform") return cmd_baseline_uniform(s.args, height, width);
            if (name == "baseline-bleu") return cmd_baseline_bleu(s.args);
            if (name == "gradcheck") return cmd_gradcheck(s.args);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

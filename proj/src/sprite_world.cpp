#include "scw/sprite_world.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "scw/binio.hpp"

namespace scw::data {

int Vocab::find(const std::string& w) const {
    for (size_t i = 0; i < words.size(); ++i)
        if (words[i] == w) return static_cast<int>(i);
    return -1;
}

void Vocab::validate() const {
    if (words.size() != roles.size())
        throw std::runtime_error("vocab word and role lists differ in length");
    std::set<std::string> seen;
    for (const auto& w : words) {
        if (w.empty()) throw std::runtime_error("vocab contains an empty word");
        if (!seen.insert(w).second) throw std::runtime_error("vocab duplicates word " + w);
    }
}

Box box_from_rect(const Rect& r, int W, int H) {
    Box b;
    b.x = r.x0 + r.pw() / 2;
    b.y = r.y0 + r.ph() / 2;
    b.w = static_cast<double>(r.pw()) / W;
    b.h = static_cast<double>(r.ph()) / H;
    return b;
}

Rect rect_from_box(const Box& b, int W, int H) {
    const int pw = static_cast<int>(std::lround(b.w * W));
    const int ph = static_cast<int>(std::lround(b.h * H));
    Rect r;
    r.x0 = b.x - pw / 2;
    r.y0 = b.y - ph / 2;
    r.x1 = r.x0 + pw - 1;
    r.y1 = r.y0 + ph - 1;
    return r;
}

void SpriteWorldConfig::validate() const {
    if (clips <= 0) throw std::invalid_argument("sprite world config: clip count must be positive");
    if (frames <= 0 || height < 16 || width < 16)
        throw std::invalid_argument("sprite world config: frames/height/width too small");
    if (shapes < 1 || colors < 1 || motions < 1 || settings < 1)
        throw std::invalid_argument("sprite world config: every word role needs at least one word");
    const double s = split_train + split_val + split_test;
    if (split_train < 0 || split_val < 0 || split_test < 0 || std::fabs(s - 1.0) > 1e-9)
        throw std::invalid_argument("sprite world config: split fractions must sum to 1");
}

namespace {

struct Palette {
    int r, g, b;
};

constexpr int kMaxShapes = 10, kMaxColors = 8, kMaxMotions = 6, kMaxSettings = 6;
constexpr int kMaxEntities = 4;

const char* kShapes[kMaxShapes] = {"person", "hat",  "ball", "box",  "star",
                                   "rug",    "tree", "ring", "cone", "block"};
const char* kColors[kMaxColors] = {"red",    "blue",   "green", "yellow",
                                   "purple", "orange", "teal",  "pink"};
const Palette kColorRgb[kMaxColors] = {{210, 60, 55},  {55, 105, 210}, {70, 170, 80},
                                       {230, 210, 70}, {150, 80, 190}, {235, 140, 50},
                                       {60, 180, 180}, {235, 130, 180}};
const char* kMotions[kMaxMotions] = {"sliding", "rising",  "growing",
                                     "resting", "falling", "shrinking"};
const char* kSettings[kMaxSettings] = {"meadow", "desert", "night", "sea", "forest", "tundra"};
const Palette kSky[kMaxSettings] = {{140, 200, 235}, {235, 220, 160}, {25, 30, 70},
                                    {150, 210, 230}, {160, 210, 190}, {200, 220, 235}};
const Palette kGround[kMaxSettings] = {{90, 170, 80},  {210, 180, 110}, {40, 45, 60},
                                       {50, 110, 180}, {60, 120, 70},   {225, 230, 240}};

// unit-square membership; (u,v) spans the target rect
bool shape_hit(int shape, double u, double v) {
    auto ell = [](double u, double v, double cu, double cv, double ru, double rv) {
        const double du = (u - cu) / ru, dv = (v - cv) / rv;
        return du * du + dv * dv <= 1.0;
    };
    switch (shape) {
        case 0:  // person: head, torso, legs
            if (ell(u, v, 0.5, 0.16, 0.28, 0.16)) return true;
            if (std::fabs(u - 0.5) <= 0.32 && v >= 0.30 && v <= 0.78) return true;
            return (std::fabs(u - 0.32) <= 0.10 || std::fabs(u - 0.68) <= 0.10) && v > 0.78;
        case 1:  // hat: brim below a crown
            return v >= 0.62 || std::fabs(u - 0.5) <= 0.30;
        case 2:
            return ell(u, v, 0.5, 0.5, 0.5, 0.5);
        case 3:
            return true;
        case 4:
            return std::fabs(2 * u - 1) + std::fabs(2 * v - 1) <= 1.0;
        case 5:
            return true;
        case 6:  // tree: canopy triangle plus trunk
            if (v <= 0.7) return std::fabs(u - 0.5) <= 0.5 * (v / 0.7) + 1e-12;
            return std::fabs(u - 0.5) <= 0.12;
        case 7: {
            const double d = std::sqrt((2 * u - 1) * (2 * u - 1) + (2 * v - 1) * (2 * v - 1));
            return d <= 1.0 && d >= 0.55;
        }
        case 8:
            return std::fabs(u - 0.5) <= 0.5 * v + 1e-12;
        default:  // block: narrow top on a full base
            return v >= 0.5 || std::fabs(u - 0.5) <= 0.25;
    }
}

struct SizeRange {
    double w_lo, w_hi, h_lo, h_hi;  // fractions of frame extent
};

SizeRange size_range(int shape) {
    switch (shape) {
        case 0: return {0.16, 0.22, 0.31, 0.41};
        case 1: return {0.12, 0.19, 0.08, 0.11};
        case 2: return {0.12, 0.19, 0.12, 0.19};
        case 3: return {0.12, 0.22, 0.12, 0.22};
        case 4: return {0.12, 0.22, 0.12, 0.22};
        case 5: return {0.28, 0.41, 0.06, 0.09};
        case 6: return {0.16, 0.22, 0.25, 0.34};
        case 7: return {0.14, 0.20, 0.14, 0.20};
        case 8: return {0.16, 0.22, 0.19, 0.28};
        default: return {0.12, 0.19, 0.14, 0.22};
    }
}

struct MotionPlan {
    std::vector<int> dx, dy;      // integer translation per frame
    std::vector<double> scale;    // size factor per frame
};

bool motion_scales(int m) { return m == 2 || m == 5; }

MotionPlan plan_motion(int motion, int F, Rng& rng) {
    MotionPlan p;
    p.dx.assign(F, 0);
    p.dy.assign(F, 0);
    p.scale.assign(F, 1.0);
    const double amp = rng.uniform(8.0, 14.0);
    const bool flip = rng.uniform() < 0.5;
    for (int f = 0; f < F; ++f) {
        const double t = F > 1 ? static_cast<double>(f) / (F - 1) : 0.0;
        switch (motion) {
            case 0: p.dx[f] = static_cast<int>(std::lround((flip ? -amp : amp) * t)); break;
            case 1: p.dy[f] = -static_cast<int>(std::lround(amp * t)); break;
            case 2: p.scale[f] = 1.0 + 0.35 * t; break;
            case 3: break;
            case 4: p.dy[f] = static_cast<int>(std::lround(amp * t)); break;
            default: p.scale[f] = 1.0 - 0.30 * t; break;
        }
    }
    return p;
}

std::vector<Rect> trajectory(const Rect& base, const MotionPlan& p) {
    std::vector<Rect> out;
    out.reserve(p.dx.size());
    const int cx = base.x0 + base.pw() / 2, cy = base.y0 + base.ph() / 2;
    for (size_t f = 0; f < p.dx.size(); ++f) {
        const int pw = std::max(3, static_cast<int>(std::lround(base.pw() * p.scale[f])));
        const int ph = std::max(3, static_cast<int>(std::lround(base.ph() * p.scale[f])));
        Rect r;
        r.x0 = cx - pw / 2 + p.dx[f];
        r.y0 = cy - ph / 2 + p.dy[f];
        r.x1 = r.x0 + pw - 1;
        r.y1 = r.y0 + ph - 1;
        out.push_back(r);
    }
    return out;
}

bool in_frame(const Rect& r, int W, int H) {
    return r.x0 >= 1 && r.y0 >= 1 && r.x1 <= W - 2 && r.y1 <= H - 2;
}

bool rects_touch(const Rect& a, const Rect& b, int pad) {
    return !(a.x1 + pad < b.x0 || b.x1 + pad < a.x0 || a.y1 + pad < b.y0 || b.y1 + pad < a.y0);
}

bool trajectories_clear(const std::vector<Rect>& a,
                        const std::vector<std::vector<Rect>>& placed) {
    for (const auto& other : placed)
        for (size_t f = 0; f < a.size(); ++f)
            if (rects_touch(a[f], other[f], 1)) return false;
    return true;
}

struct Sprite {
    int shape = 0, color = 0, motion = 3;  // list indices
    std::vector<Rect> rects;
};

Rect sample_rect(int shape, const SpriteWorldConfig& cfg, Rng& rng) {
    const SizeRange sr = size_range(shape);
    const int pw = std::max(3, static_cast<int>(std::lround(rng.uniform(sr.w_lo, sr.w_hi) * cfg.width)));
    const int ph = std::max(3, static_cast<int>(std::lround(rng.uniform(sr.h_lo, sr.h_hi) * cfg.height)));
    double lo = 0.15, hi = 0.85;  // vertical center band
    if (shape == 0) { lo = 0.62; hi = 0.82; }
    if (shape == 5) { lo = 0.72; hi = 0.88; }  // floor shapes sit in the lower third
    const int cy_lo = std::max(1 + ph / 2, static_cast<int>(std::lround(lo * cfg.height)));
    const int cy_hi = std::min(cfg.height - 2 - (ph - 1) + ph / 2,
                               static_cast<int>(std::lround(hi * cfg.height)));
    const int cx_lo = 1 + pw / 2;
    const int cx_hi = cfg.width - 2 - (pw - 1) + pw / 2;
    Rect r;
    const int cy = cy_hi >= cy_lo ? static_cast<int>(rng.uniform_int(cy_lo, cy_hi)) : cy_lo;
    const int cx = cx_hi >= cx_lo ? static_cast<int>(rng.uniform_int(cx_lo, cx_hi)) : cx_lo;
    r.x0 = cx - pw / 2;
    r.y0 = cy - ph / 2;
    r.x1 = r.x0 + pw - 1;
    r.y1 = r.y0 + ph - 1;
    return r;
}

void raster(int shape, const Rect& r, const Palette& col, uint8_t* frame, uint8_t* mask, int W,
            int H) {
    const int pw = r.pw(), ph = r.ph();
    for (int y = std::max(0, r.y0); y <= std::min(H - 1, r.y1); ++y) {
        const double v = ph > 1 ? static_cast<double>(y - r.y0) / (ph - 1) : 0.5;
        for (int x = std::max(0, r.x0); x <= std::min(W - 1, r.x1); ++x) {
            const double u = pw > 1 ? static_cast<double>(x - r.x0) / (pw - 1) : 0.5;
            if (!shape_hit(shape, u, v)) continue;
            uint8_t* px = frame + (static_cast<size_t>(y) * W + x) * 3;
            px[0] = static_cast<uint8_t>(col.r);
            px[1] = static_cast<uint8_t>(col.g);
            px[2] = static_cast<uint8_t>(col.b);
            mask[static_cast<size_t>(y) * W + x] = 1;
        }
    }
}

uint8_t clamp_u8(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

std::vector<uint8_t> render_background(const SpriteWorldConfig& cfg, int setting, Rng& rng) {
    const int H = cfg.height, W = cfg.width;
    std::vector<uint8_t> img(static_cast<size_t>(H) * W * 3);
    // per-clip signature: palette tints, band position, and stripe phase keep
    // records of one setting distinguishable by a pooled feature, while the
    // setting palette stays dominant
    Palette sky = kSky[setting], ground = kGround[setting];
    for (int* ch : {&sky.r, &sky.g, &sky.b, &ground.r, &ground.g, &ground.b})
        *ch += static_cast<int>(rng.uniform_int(-12, 12));
    // per-clip horizon height: the sky/ground area ratio is a pooled-feature
    // signal that a global average cannot erase
    const int horizon =
        static_cast<int>(H * 0.55) +
        static_cast<int>(rng.uniform_int(0, std::max(1, static_cast<int>(H * 0.25))));
    const int band_shift = static_cast<int>(rng.uniform_int(0, std::max(1, H / 5)));
    const int band_lo = static_cast<int>(0.15 * H) + band_shift;
    const int band_hi = band_lo + std::max(1, static_cast<int>(0.08 * H));
    const int stripe_phase = static_cast<int>(rng.uniform_int(0, 1));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            Palette c = y < horizon ? sky : ground;
            if (y >= band_lo && y < band_hi) c = {c.r + 14, c.g + 14, c.b + 14};
            if (y >= horizon) {
                const int stripe = ((((x >> 2) + (y >> 2) + stripe_phase) & 1) ? 5 : -5);
                c = {c.r + stripe, c.g + stripe, c.b + stripe};
            }
            uint8_t* px = img.data() + (static_cast<size_t>(y) * W + x) * 3;
            px[0] = clamp_u8(c.r);
            px[1] = clamp_u8(c.g);
            px[2] = clamp_u8(c.b);
        }
    // per-clip landmarks at random positions: a sun disc and clouds in the
    // sky, rocks on the ground; position changes move the pooled feature
    // direction, unlike a pure brightness shift, and the contrast adapts to
    // the palette so no setting renders them invisibly
    auto splash = [&](int x0, int y0, int w, int h, int dv, bool disc) {
        const double cx = x0 + 0.5 * (w - 1), cy = y0 + 0.5 * (h - 1);
        for (int y = std::max(0, y0); y < std::min(H, y0 + h); ++y)
            for (int x = std::max(0, x0); x < std::min(W, x0 + w); ++x) {
                if (disc) {
                    const double u = (x - cx) / (0.5 * w), v = (y - cy) / (0.5 * h);
                    if (u * u + v * v > 1.0) continue;
                }
                uint8_t* px = img.data() + (static_cast<size_t>(y) * W + x) * 3;
                for (int ch = 0; ch < 3; ++ch)
                    px[ch] = clamp_u8(px[ch] > 127 ? px[ch] - dv : px[ch] + dv);
            }
    };
    const int sun = std::max(3, H / 6);
    splash(static_cast<int>(rng.uniform_int(0, W - sun)),
           static_cast<int>(rng.uniform_int(0, std::max(1, horizon / 2))), sun, sun, 45, true);
    for (int i = 0; i < 2; ++i)
        splash(static_cast<int>(rng.uniform_int(0, std::max(1, W - W / 4))),
               static_cast<int>(rng.uniform_int(0, std::max(1, horizon - H / 8))), W / 4,
               std::max(1, H / 10), 22, false);
    for (int i = 0; i < 2; ++i)
        splash(static_cast<int>(rng.uniform_int(0, std::max(1, W - W / 5))),
               static_cast<int>(rng.uniform_int(horizon, H - std::max(1, H / 12))), W / 5,
               std::max(1, H / 12), 20, false);
    // speckle texture below the horizon
    for (int i = 0; i < 30; ++i) {
        const int x = static_cast<int>(rng.uniform_int(0, W - 2));
        const int y = static_cast<int>(rng.uniform_int(horizon, H - 2));
        const int dv = static_cast<int>(rng.uniform_int(0, 1)) ? 8 : -8;
        for (int oy = 0; oy < 2; ++oy)
            for (int ox = 0; ox < 2; ++ox) {
                uint8_t* px = img.data() + (static_cast<size_t>(y + oy) * W + x + ox) * 3;
                for (int ch = 0; ch < 3; ++ch) px[ch] = clamp_u8(px[ch] + dv);
            }
    }
    return img;
}

}  // namespace

Vocab generator_lexicon(const SpriteWorldConfig& cfg) {
    cfg.validate();
    if (cfg.shapes > kMaxShapes || cfg.colors > kMaxColors || cfg.motions > kMaxMotions ||
        cfg.settings > kMaxSettings)
        throw std::invalid_argument("sprite world config: word counts exceed the built-in lists");
    Vocab v;
    for (int i = 0; i < cfg.shapes; ++i) {
        v.words.emplace_back(kShapes[i]);
        v.roles.push_back(Role::noun);
    }
    for (int i = 0; i < cfg.settings; ++i) {
        v.words.emplace_back(kSettings[i]);
        v.roles.push_back(Role::noun);
    }
    for (int i = 0; i < cfg.colors; ++i) {
        v.words.emplace_back(kColors[i]);
        v.roles.push_back(Role::adjective);
    }
    for (int i = 0; i < cfg.motions; ++i) {
        v.words.emplace_back(kMotions[i]);
        v.roles.push_back(Role::verb);
    }
    v.validate();
    return v;
}

Clip gen_clip(const SpriteWorldConfig& cfg, uint32_t clip_id, const Vocab& lexicon) {
    const int F = cfg.frames, H = cfg.height, W = cfg.width;
    Rng rng(Rng::mix(cfg.seed, 1000003ull + clip_id));

    const int setting = static_cast<int>(rng.uniform_int(0, cfg.settings - 1));

    // entity shape selection; a hat only ever spawns paired with a person
    std::vector<int> shapes_chosen;
    const bool hat_possible = cfg.shapes >= 2;
    const double r = rng.uniform();
    bool pair = false;
    if (hat_possible && r < 0.45) {
        shapes_chosen = {0, 1};
        pair = true;
    } else if (r < 0.70) {
        shapes_chosen = {0};
    }
    const double cu = rng.uniform();
    int want = cu < 0.35 ? 1 : cu < 0.75 ? 2 : cu < 0.93 ? 3 : 4;
    want = std::max(want, static_cast<int>(shapes_chosen.size()));
    std::vector<int> pool;
    for (int s = 2; s < cfg.shapes; ++s) pool.push_back(s);
    rng.shuffle(pool);
    for (int s : pool)
        if (static_cast<int>(shapes_chosen.size()) < want) shapes_chosen.push_back(s);
    if (shapes_chosen.empty()) shapes_chosen = {0};
    if (static_cast<int>(shapes_chosen.size()) > kMaxEntities) shapes_chosen.resize(kMaxEntities);

    // colors, motions, placements
    std::vector<Sprite> sprites;
    std::vector<std::vector<Rect>> placed;
    size_t start = 0;
    if (pair) {
        // person and hat share one translation-only motion plan
        int motion;
        do {
            motion = static_cast<int>(rng.uniform_int(0, cfg.motions - 1));
        } while (motion_scales(motion));
        Sprite person, hat;
        person.shape = 0;
        hat.shape = 1;
        person.color = static_cast<int>(rng.uniform_int(0, cfg.colors - 1));
        hat.color = static_cast<int>(rng.uniform_int(0, cfg.colors - 1));
        person.motion = hat.motion = motion;
        bool ok = false;
        for (int attempt = 0; attempt < 120 && !ok; ++attempt) {
            const MotionPlan plan = plan_motion(motion, F, rng);
            const Rect pr = sample_rect(0, cfg, rng);
            const SizeRange hs = size_range(1);
            const int hw = std::max(3, static_cast<int>(std::lround(rng.uniform(hs.w_lo, hs.w_hi) * W)));
            const int hh = std::max(3, static_cast<int>(std::lround(rng.uniform(hs.h_lo, hs.h_hi) * H)));
            const int jitter = static_cast<int>(rng.uniform_int(-2, 2));
            const int gap = static_cast<int>(rng.uniform_int(0, 3));
            Rect hr;
            const int pcx = pr.x0 + pr.pw() / 2;
            hr.x0 = pcx + jitter - hw / 2;
            hr.x1 = hr.x0 + hw - 1;
            hr.y1 = pr.y0 - 1 - gap;
            hr.y0 = hr.y1 - hh + 1;
            auto ptr = trajectory(pr, plan);
            auto htr = trajectory(hr, plan);
            bool good = true;
            for (int f = 0; f < F && good; ++f)
                good = in_frame(ptr[f], W, H) && in_frame(htr[f], W, H);
            if (!good) continue;
            person.rects = ptr;
            hat.rects = htr;
            ok = true;
        }
        if (ok) {
            placed.push_back(person.rects);
            placed.push_back(hat.rects);
            sprites.push_back(person);
            sprites.push_back(hat);
        } else {
            shapes_chosen.erase(shapes_chosen.begin() + 1);  // give up on the hat
            pair = false;
        }
        start = pair ? 2 : 0;
    }
    for (size_t i = start; i < shapes_chosen.size(); ++i) {
        Sprite s;
        s.shape = shapes_chosen[i];
        s.color = static_cast<int>(rng.uniform_int(0, cfg.colors - 1));
        s.motion = static_cast<int>(rng.uniform_int(0, cfg.motions - 1));
        bool ok = false;
        for (int attempt = 0; attempt < 80 && !ok; ++attempt) {
            const MotionPlan plan = plan_motion(s.motion, F, rng);
            const Rect base = sample_rect(s.shape, cfg, rng);
            auto tr = trajectory(base, plan);
            bool good = true;
            for (int f = 0; f < F && good; ++f) good = in_frame(tr[f], W, H);
            if (!good || !trajectories_clear(tr, placed)) continue;
            s.rects = tr;
            ok = true;
        }
        if (!ok) continue;  // crowded frame, drop the sprite
        placed.push_back(s.rects);
        sprites.push_back(s);
    }
    if (sprites.empty()) {
        Sprite s;
        s.shape = 0;
        s.color = static_cast<int>(rng.uniform_int(0, cfg.colors - 1));
        s.motion = 3 % cfg.motions;
        MotionPlan plan = plan_motion(3, F, rng);
        Rect base = sample_rect(0, cfg, rng);
        s.rects = trajectory(base, plan);
        sprites.push_back(s);
    }

    Clip clip;
    clip.id = clip_id;
    clip.F = F;
    clip.H = H;
    clip.W = W;
    clip.setting = static_cast<uint32_t>(lexicon.find(kSettings[setting]));

    const std::vector<uint8_t> bg = render_background(cfg, setting, rng);
    clip.background.reserve(static_cast<size_t>(F) * bg.size());
    clip.frames.reserve(static_cast<size_t>(F) * bg.size());
    for (int f = 0; f < F; ++f)
        clip.background.insert(clip.background.end(), bg.begin(), bg.end());
    clip.frames = clip.background;

    // caption: one sentence per sprite in mention order
    for (const auto& s : sprites) {
        EntityAnno e;
        e.noun_pos = static_cast<uint32_t>(clip.tokens.size() + 2);
        clip.tokens.emplace_back("the");
        clip.tokens.emplace_back(kColors[s.color]);
        clip.tokens.emplace_back(kShapes[s.shape]);
        clip.tokens.emplace_back("is");
        clip.tokens.emplace_back(kMotions[s.motion]);
        clip.tokens.emplace_back("in");
        clip.tokens.emplace_back("the");
        clip.tokens.emplace_back(kSettings[setting]);
        std::set<uint32_t> ws = {static_cast<uint32_t>(lexicon.find(kShapes[s.shape])),
                                 static_cast<uint32_t>(lexicon.find(kColors[s.color])),
                                 static_cast<uint32_t>(lexicon.find(kMotions[s.motion]))};
        e.words.assign(ws.begin(), ws.end());
        e.mask.assign(static_cast<size_t>(F) * H * W, 0);
        e.boxes.resize(F);
        clip.entities.push_back(std::move(e));
    }

    // render frames in z-order; later sprites occlude earlier visibility
    for (int f = 0; f < F; ++f) {
        uint8_t* frame = clip.frames.data() + static_cast<size_t>(f) * clip.frame_bytes();
        for (size_t i = 0; i < sprites.size(); ++i) {
            uint8_t* mask = clip.entities[i].mask.data() + static_cast<size_t>(f) * clip.mask_bytes();
            raster(sprites[i].shape, sprites[i].rects[f], kColorRgb[sprites[i].color], frame, mask,
                   W, H);
            for (size_t j = 0; j < i; ++j) {
                uint8_t* pm =
                    clip.entities[j].mask.data() + static_cast<size_t>(f) * clip.mask_bytes();
                for (size_t p = 0; p < clip.mask_bytes(); ++p)
                    if (mask[p]) pm[p] = 0;
            }
        }
        // boxes come from the rendered visibility masks
        for (size_t i = 0; i < sprites.size(); ++i) {
            const uint8_t* mask =
                clip.entities[i].mask.data() + static_cast<size_t>(f) * clip.mask_bytes();
            int x0 = W, y0 = H, x1 = -1, y1 = -1;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    if (mask[static_cast<size_t>(y) * W + x]) {
                        x0 = std::min(x0, x);
                        y0 = std::min(y0, y);
                        x1 = std::max(x1, x);
                        y1 = std::max(y1, y);
                    }
            if (x1 < 0)
                throw std::runtime_error("sprite generator produced an empty visibility mask");
            clip.entities[i].boxes[f] = box_from_rect(Rect{x0, y0, x1, y1}, W, H);
        }
    }
    validate_clip(clip, lexicon);
    return clip;
}

static const char kClipMagic[4] = {'S', 'C', 'W', 'C'};

void encode_clip(const Clip& clip, const std::string& path) {
    io::Writer w(path);
    w.bytes(reinterpret_cast<const uint8_t*>(kClipMagic), 4);
    w.u32(1);
    w.u32(static_cast<uint32_t>(clip.F));
    w.u32(static_cast<uint32_t>(clip.H));
    w.u32(static_cast<uint32_t>(clip.W));
    w.u32(static_cast<uint32_t>(clip.entities.size()));
    w.bytes(clip.frames.data(), clip.frames.size());
    w.bytes(clip.background.data(), clip.background.size());
    for (const auto& e : clip.entities) {
        w.u32(e.noun_pos);
        w.u32(static_cast<uint32_t>(e.words.size()));
        for (uint32_t id : e.words) w.u32(id);
        for (const auto& b : e.boxes) {
            w.i32(b.x);
            w.i32(b.y);
            w.f64(b.w);
            w.f64(b.h);
        }
        w.bytes(e.mask.data(), e.mask.size());
    }
    w.u32(static_cast<uint32_t>(clip.tokens.size()));
    for (const auto& t : clip.tokens) w.str(t);
    w.u32(clip.setting);
    w.close();
}

Clip decode_clip(const std::string& path, const Vocab& lexicon) {
    io::Reader r(path);
    char magic[4];
    r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
    if (std::memcmp(magic, kClipMagic, 4) != 0) r.fail("bad clip magic");
    const uint32_t version = r.u32();
    if (version != 1) r.fail("unsupported clip version " + std::to_string(version));
    Clip clip;
    clip.F = static_cast<int>(r.u32());
    clip.H = static_cast<int>(r.u32());
    clip.W = static_cast<int>(r.u32());
    const uint32_t E = r.u32();
    if (clip.F <= 0 || clip.F > 256 || clip.H <= 0 || clip.H > 4096 || clip.W <= 0 ||
        clip.W > 4096)
        r.fail("implausible clip dimensions");
    if (E < 1 || E > kMaxEntities) r.fail("entity count " + std::to_string(E) + " outside 1..4");
    const size_t video_bytes = static_cast<size_t>(clip.F) * clip.frame_bytes();
    clip.frames.resize(video_bytes);
    r.bytes(clip.frames.data(), video_bytes);
    clip.background.resize(video_bytes);
    r.bytes(clip.background.data(), video_bytes);
    for (uint32_t i = 0; i < E; ++i) {
        EntityAnno e;
        e.noun_pos = r.u32();
        const uint32_t nw = r.u32();
        if (nw == 0 || nw > 64) r.fail("implausible entity word count");
        e.words.resize(nw);
        for (auto& id : e.words) id = r.u32();
        e.boxes.resize(clip.F);
        for (auto& b : e.boxes) {
            b.x = r.i32();
            b.y = r.i32();
            b.w = r.f64();
            b.h = r.f64();
        }
        const size_t mask_off = r.offset();
        e.mask.resize(static_cast<size_t>(clip.F) * clip.mask_bytes());
        r.bytes(e.mask.data(), e.mask.size());
        for (size_t m = 0; m < e.mask.size(); ++m)
            if (e.mask[m] > 1)
                throw std::runtime_error(path + ": mask byte not 0/1 at byte offset " +
                                         std::to_string(mask_off + m));
        clip.entities.push_back(std::move(e));
    }
    const uint32_t ntok = r.u32();
    if (ntok == 0 || ntok > 4096) r.fail("implausible caption token count");
    clip.tokens.resize(ntok);
    for (auto& t : clip.tokens) t = r.str();
    clip.setting = r.u32();
    if (!r.eof()) r.fail("trailing bytes after clip payload");
    validate_clip(clip, lexicon);
    return clip;
}

void validate_clip(const Clip& clip, const Vocab& lexicon) {
    const int F = clip.F, H = clip.H, W = clip.W;
    if (F <= 0 || H <= 0 || W <= 0) throw std::runtime_error("clip has non-positive dimensions");
    if (clip.frames.size() != static_cast<size_t>(F) * clip.frame_bytes() ||
        clip.background.size() != clip.frames.size())
        throw std::runtime_error("clip pixel buffers do not match dimensions");
    if (clip.entities.empty() || clip.entities.size() > kMaxEntities)
        throw std::runtime_error("clip must hold between 1 and 4 entities");
    if (clip.tokens.empty()) throw std::runtime_error("clip caption is empty");
    if (clip.setting >= static_cast<uint32_t>(lexicon.size()) ||
        lexicon.roles[clip.setting] != Role::noun)
        throw std::runtime_error("clip setting is not a noun in the lexicon");
    for (size_t i = 0; i < clip.entities.size(); ++i) {
        const EntityAnno& e = clip.entities[i];
        const std::string tag = "entity " + std::to_string(i);
        if (e.noun_pos >= clip.tokens.size())
            throw std::runtime_error(tag + ": noun position outside the caption");
        const int noun_id = lexicon.find(clip.tokens[e.noun_pos]);
        if (noun_id < 0 || lexicon.roles[noun_id] != Role::noun)
            throw std::runtime_error(tag + ": caption token at the noun position is not a noun");
        if (e.words.empty()) throw std::runtime_error(tag + ": empty word set");
        for (size_t k = 0; k < e.words.size(); ++k) {
            if (e.words[k] >= static_cast<uint32_t>(lexicon.size()))
                throw std::runtime_error(tag + ": word id outside the lexicon");
            if (k > 0 && e.words[k] <= e.words[k - 1])
                throw std::runtime_error(tag + ": word set must be sorted and unique");
        }
        if (!std::binary_search(e.words.begin(), e.words.end(), static_cast<uint32_t>(noun_id)))
            throw std::runtime_error(tag + ": word set is missing the mentioned noun");
        if (e.boxes.size() != static_cast<size_t>(F) ||
            e.mask.size() != static_cast<size_t>(F) * clip.mask_bytes())
            throw std::runtime_error(tag + ": box or mask count does not match frames");
        for (int f = 0; f < F; ++f) {
            const Box& b = e.boxes[f];
            if (!(b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0))
                throw std::runtime_error(tag + ": box extents outside (0,1] at frame " +
                                         std::to_string(f));
            const Rect r = rect_from_box(b, W, H);
            if (r.x1 < 0 || r.y1 < 0 || r.x0 >= W || r.y0 >= H)
                throw std::runtime_error(tag + ": box does not intersect frame " +
                                         std::to_string(f));
            const uint8_t* mask = e.mask.data() + static_cast<size_t>(f) * clip.mask_bytes();
            int x0 = W, y0 = H, x1 = -1, y1 = -1;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const uint8_t m = mask[static_cast<size_t>(y) * W + x];
                    if (m > 1)
                        throw std::runtime_error(tag + ": mask byte not 0/1 in frame " +
                                                 std::to_string(f));
                    if (m) {
                        x0 = std::min(x0, x);
                        y0 = std::min(y0, y);
                        x1 = std::max(x1, x);
                        y1 = std::max(y1, y);
                    }
                }
            if (x1 < 0)
                throw std::runtime_error(tag + ": empty mask at frame " + std::to_string(f));
            const Box from_mask = box_from_rect(Rect{x0, y0, x1, y1}, W, H);
            if (from_mask.x != b.x || from_mask.y != b.y ||
                std::fabs(from_mask.w - b.w) > 1e-12 || std::fabs(from_mask.h - b.h) > 1e-12)
                throw std::runtime_error(tag + ": mask bounding rect disagrees with the box at frame " +
                                         std::to_string(f));
        }
    }
}

bool hat_in_band(const Box& hat, const Box& person, int W, int H) {
    const Rect pr = rect_from_box(person, W, H);
    const int xmargin = std::max(6, W / 8);
    const int band_top = pr.y0 - H / 4;
    return std::abs(hat.x - person.x) <= xmargin && hat.y >= band_top && hat.y <= pr.y0 - 1;
}

BandStats hat_band_stats(const Dataset& ds, const std::vector<uint32_t>& ids) {
    BandStats st;
    const int hat_id = ds.lexicon.find("hat");
    const int person_id = ds.lexicon.find("person");
    if (hat_id < 0 || person_id < 0) return st;
    for (uint32_t id : ids) {
        const Clip clip = ds.load_clip(id);
        int hat_e = -1, person_e = -1;
        for (size_t i = 0; i < clip.entities.size(); ++i) {
            const auto& w = clip.entities[i].words;
            if (std::binary_search(w.begin(), w.end(), static_cast<uint32_t>(hat_id))) hat_e = static_cast<int>(i);
            if (std::binary_search(w.begin(), w.end(), static_cast<uint32_t>(person_id)))
                person_e = static_cast<int>(i);
        }
        if (hat_e < 0 || person_e < 0) continue;
        for (int f = 0; f < clip.F; ++f) {
            ++st.frames_total;
            if (hat_in_band(clip.entities[hat_e].boxes[f], clip.entities[person_e].boxes[f],
                            clip.W, clip.H))
                ++st.frames_in_band;
        }
    }
    return st;
}

}  // namespace scw::data

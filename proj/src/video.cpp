#include "scw/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "scw/ops.hpp"

namespace scw::vid {

Video video_from_bytes(const std::vector<uint8_t>& bytes, int F, int H, int W) {
    const size_t frame_bytes = static_cast<size_t>(H) * W * 3;
    if (bytes.size() != static_cast<size_t>(F) * frame_bytes)
        throw std::invalid_argument("video byte buffer does not match F*H*W*3");
    Video v;
    v.reserve(F);
    for (int f = 0; f < F; ++f) {
        Tensor t({3, H, W});
        const uint8_t* src = bytes.data() + f * frame_bytes;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c)
                    t.at(c, y, x) = src[(static_cast<size_t>(y) * W + x) * 3 + c] / 255.0;
        v.push_back(std::move(t));
    }
    return v;
}

std::vector<uint8_t> video_to_bytes(const Video& v) {
    if (v.empty()) throw std::invalid_argument("empty video");
    const int H = v[0].dim(1), W = v[0].dim(2);
    std::vector<uint8_t> bytes;
    bytes.reserve(v.size() * static_cast<size_t>(H) * W * 3);
    for (const Tensor& t : v)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double p = std::clamp(t.at(c, y, x), 0.0, 1.0);
                    bytes.push_back(static_cast<uint8_t>(std::lround(p * 255.0)));
                }
    return bytes;
}

Video partial_video(const data::Clip& clip, size_t upto) {
    if (upto > clip.entities.size())
        throw std::invalid_argument("partial video: entity index beyond the clip");
    Video v = video_from_bytes(clip.background, clip.F, clip.H, clip.W);
    for (size_t e = 0; e < upto; ++e) {
        const auto& ent = clip.entities[e];
        for (int f = 0; f < clip.F; ++f) {
            const uint8_t* mask = ent.mask.data() + static_cast<size_t>(f) * clip.mask_bytes();
            const uint8_t* pix = clip.frames.data() + static_cast<size_t>(f) * clip.frame_bytes();
            for (int y = 0; y < clip.H; ++y)
                for (int x = 0; x < clip.W; ++x)
                    if (mask[static_cast<size_t>(y) * clip.W + x])
                        for (int c = 0; c < 3; ++c)
                            v[f].at(c, y, x) =
                                pix[(static_cast<size_t>(y) * clip.W + x) * 3 + c] / 255.0;
        }
    }
    return v;
}

FuseStats fuse_entity(Video& dest, const data::Clip& source, int entity,
                      const std::vector<data::Box>& dest_boxes) {
    if (entity < 0 || entity >= static_cast<int>(source.entities.size()))
        throw std::invalid_argument("fuse: entity index outside the source clip");
    if (dest.empty() || dest_boxes.size() != dest.size() ||
        static_cast<int>(dest.size()) != source.F)
        throw std::invalid_argument("fuse: frame counts disagree");
    const int H = dest[0].dim(1), W = dest[0].dim(2);
    const auto& ent = source.entities[entity];
    FuseStats stats;
    for (int f = 0; f < source.F; ++f) {
        const data::Rect sr = data::rect_from_box(ent.boxes[f], source.W, source.H);
        const int sw = sr.pw(), sh = sr.ph();
        // crop pixels and mask; boxes are mask bounding rects, always in frame
        Tensor pix({3, sh, sw});
        Tensor msk({1, sh, sw});
        const uint8_t* mbytes = ent.mask.data() + static_cast<size_t>(f) * source.mask_bytes();
        const uint8_t* fbytes = source.frames.data() + static_cast<size_t>(f) * source.frame_bytes();
        for (int y = 0; y < sh; ++y)
            for (int x = 0; x < sw; ++x) {
                const size_t p = static_cast<size_t>(sr.y0 + y) * source.W + (sr.x0 + x);
                msk.at(0, y, x) = mbytes[p];
                for (int c = 0; c < 3; ++c) pix.at(c, y, x) = fbytes[p * 3 + c] / 255.0;
            }
        data::Rect dr = data::rect_from_box(dest_boxes[f], W, H);
        if (dr.x1 < dr.x0) dr.x1 = dr.x0;  // degenerate scale, keep one pixel
        if (dr.y1 < dr.y0) dr.y1 = dr.y0;
        const int dw = dr.pw(), dh = dr.ph();
        const Tensor rpix = ad::bilinear_resize(pix, dh, dw);
        const Tensor rmsk = ad::bilinear_resize(msk, dh, dw);
        int written = 0;
        for (int y = 0; y < dh; ++y) {
            const int dy = dr.y0 + y;
            if (dy < 0 || dy >= H) continue;
            for (int x = 0; x < dw; ++x) {
                const int dx = dr.x0 + x;
                if (dx < 0 || dx >= W) continue;
                if (rmsk.at(0, y, x) < 0.5) continue;
                for (int c = 0; c < 3; ++c) dest[f].at(c, dy, dx) = rpix.at(c, y, x);
                ++written;
            }
        }
        if (written > 0)
            ++stats.frames_written;
        else
            ++stats.frames_skipped;
    }
    return stats;
}

void write_ppm(const Tensor& frame, const std::string& path) {
    if (frame.rank() != 3 || frame.dim(0) != 3)
        throw std::invalid_argument("write_ppm: frame must be [3,H,W]");
    const int H = frame.dim(1), W = frame.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P6\n" << W << " " << H << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] = static_cast<uint8_t>(
                    std::lround(std::clamp(frame.at(c, y, x), 0.0, 1.0) * 255.0));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    out.close();
    if (!out.good()) throw std::runtime_error("write to " + path + " failed");
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int W = 0, H = 0, maxval = 0;
    in >> magic >> W >> H >> maxval;
    if (magic != "P6" || W <= 0 || H <= 0 || maxval != 255)
        throw std::runtime_error(path + ": not an 8-bit P6 ppm");
    in.get();  // single whitespace after the header
    std::vector<uint8_t> bytes(static_cast<size_t>(H) * W * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw std::runtime_error(path + ": truncated pixel data");
    Tensor t({3, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(c, y, x) = bytes[(static_cast<size_t>(y) * W + x) * 3 + c] / 255.0;
    return t;
}

std::vector<std::string> export_frames(const Video& v, const std::string& dir,
                                       const std::string& stem) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (size_t f = 0; f < v.size(); ++f) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "_%03zu.ppm", f);
        const std::string name = stem + buf;
        write_ppm(v[f], dir + "/" + name);
        names.push_back(name);
    }
    return names;
}

}  // namespace scw::vid

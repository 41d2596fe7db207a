#pragma once

#include <string>
#include <vector>

#include "scw/sprite_world.hpp"
#include "scw/tensor.hpp"

namespace scw::vid {

// F frames, each [3,H,W] with values in [0,1].
using Video = std::vector<Tensor>;

Video video_from_bytes(const std::vector<uint8_t>& bytes, int F, int H, int W);
std::vector<uint8_t> video_to_bytes(const Video& v);  // round(255*x), clamped

// Background plus the first `upto` entities pasted through their masks.
// upto = 0 is the bare background; entity pixels come from the clip's frames.
Video partial_video(const data::Clip& clip, size_t upto);

struct FuseStats {
    int frames_written = 0;
    int frames_skipped = 0;  // post-threshold mask empty
};

// Per frame: crop pixels and mask at the source box, bilinear-resize both to
// the destination box, write pixels where the resized mask >= 0.5. Out-of-
// frame parts are clipped; identity when dest equals source (scale 1).
FuseStats fuse_entity(Video& dest, const data::Clip& source, int entity,
                      const std::vector<data::Box>& dest_boxes);

void write_ppm(const Tensor& frame, const std::string& path);
Tensor read_ppm(const std::string& path);

// frames as <stem>_<frame>.ppm inside dir; returns the file names
std::vector<std::string> export_frames(const Video& v, const std::string& dir,
                                       const std::string& stem);

}  // namespace scw::vid

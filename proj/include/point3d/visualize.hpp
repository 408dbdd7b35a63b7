#pragma once

#include <span>
#include <string>

#include "point3d/decode.hpp"
#include "point3d/synth.hpp"

namespace point3d {

// Static overlay renderings: predicted boxes/knots in red/green, ground
// truth in blue. PPM draws on top of the video frame; SVG embeds the frame
// as one rect per pixel plus vector overlays.
void write_frame_ppm(const std::string& path, const Tensor& video, int frame,
                     std::span<const Detection> dets, std::span<const ActorAnnotation> gt);
void write_frame_svg(const std::string& path, const Tensor& video, int frame,
                     std::span<const Detection> dets, std::span<const ActorAnnotation> gt);

// One file per frame: <dir>/frame_NN.<ext>
void visualize_clip(const std::string& dir, const ClipData& clip,
                    const std::vector<std::vector<Detection>>& dets_per_frame, bool draw_gt,
                    const std::string& format);

} // namespace point3d

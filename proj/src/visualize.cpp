#include "point3d/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "point3d/error.hpp"

namespace point3d {

namespace fs = std::filesystem;

namespace {

struct Rgb {
    unsigned char r, g, b;
};

constexpr Rgb kPred{220, 40, 40};
constexpr Rgb kKnot{40, 200, 60};
constexpr Rgb kGt{50, 90, 230};

unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

class Raster {
public:
    Raster(const Tensor& video, int frame) : h_(video.dim(2)), w_(video.dim(3)) {
        px_.resize(static_cast<size_t>(h_) * w_ * 3);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                for (int c = 0; c < 3; ++c) {
                    px_[(static_cast<size_t>(y) * w_ + x) * 3 + static_cast<size_t>(c)] =
                        to_byte(video.at(frame, c, y, x));
                }
            }
        }
    }

    void set(int x, int y, Rgb c) {
        if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
        size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
        px_[i] = c.r;
        px_[i + 1] = c.g;
        px_[i + 2] = c.b;
    }

    void draw_box(const Box& b, Rgb c) {
        int x1 = static_cast<int>(std::lround(b.x1)), x2 = static_cast<int>(std::lround(b.x2)) - 1;
        int y1 = static_cast<int>(std::lround(b.y1)), y2 = static_cast<int>(std::lround(b.y2)) - 1;
        for (int x = x1; x <= x2; ++x) {
            set(x, y1, c);
            set(x, y2, c);
        }
        for (int y = y1; y <= y2; ++y) {
            set(x1, y, c);
            set(x2, y, c);
        }
    }

    void draw_dot(const Point2& p, Rgb c) {
        int cx = static_cast<int>(std::lround(p.x)), cy = static_cast<int>(std::lround(p.y));
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                set(cx + dx, cy + dy, c);
            }
        }
    }

    void write_ppm(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError("visualize: cannot open " + path);
        os << "P6\n" << w_ << " " << h_ << "\n255\n";
        os.write(reinterpret_cast<const char*>(px_.data()), static_cast<std::streamsize>(px_.size()));
    }

private:
    int h_, w_;
    std::vector<unsigned char> px_;
};

void overlay(Raster& img, std::span<const Detection> dets, std::span<const ActorAnnotation> gt) {
    for (const ActorAnnotation& a : gt) img.draw_box(a.box, kGt);
    for (const Detection& d : dets) {
        img.draw_box(d.box, kPred);
        for (const Point2& p : d.knots) img.draw_dot(p, kKnot);
    }
}

} // namespace

void write_frame_ppm(const std::string& path, const Tensor& video, int frame,
                     std::span<const Detection> dets, std::span<const ActorAnnotation> gt) {
    Raster img(video, frame);
    overlay(img, dets, gt);
    img.write_ppm(path);
}

void write_frame_svg(const std::string& path, const Tensor& video, int frame,
                     std::span<const Detection> dets, std::span<const ActorAnnotation> gt) {
    const int h = video.dim(2), w = video.dim(3);
    std::ofstream os(path);
    if (!os) throw DataError("visualize: cannot open " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * 8 << "\" height=\""
       << h * 8 << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"1\" height=\"1\" fill=\"rgb("
               << static_cast<int>(to_byte(video.at(frame, 0, y, x))) << ","
               << static_cast<int>(to_byte(video.at(frame, 1, y, x))) << ","
               << static_cast<int>(to_byte(video.at(frame, 2, y, x))) << ")\"/>\n";
        }
    }
    auto rect = [&](const Box& b, const char* color) {
        os << "<rect x=\"" << b.x1 << "\" y=\"" << b.y1 << "\" width=\"" << b.width()
           << "\" height=\"" << b.height() << "\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"0.6\"/>\n";
    };
    for (const ActorAnnotation& a : gt) rect(a.box, "#325ae6");
    for (const Detection& d : dets) {
        rect(d.box, "#dc2828");
        for (const Point2& p : d.knots) {
            os << "<circle cx=\"" << p.x << "\" cy=\"" << p.y
               << "\" r=\"0.8\" fill=\"#28c83c\"/>\n";
        }
    }
    os << "</svg>\n";
}

void visualize_clip(const std::string& dir, const ClipData& clip,
                    const std::vector<std::vector<Detection>>& dets_per_frame, bool draw_gt,
                    const std::string& format) {
    if (format != "ppm" && format != "svg") {
        throw ConfigError("visualize: format must be ppm or svg, got '" + format + "'");
    }
    if (clip.video.empty()) {
        throw DataError("visualize: clip " + std::to_string(clip.id) + " has no video tensor");
    }
    fs::create_directories(dir);
    const int t_count = clip.video.dim(0);
    static const std::vector<Detection> no_dets;
    static const std::vector<ActorAnnotation> no_gt;
    for (int t = 0; t < t_count; ++t) {
        const auto& dets =
            t < static_cast<int>(dets_per_frame.size()) ? dets_per_frame[static_cast<size_t>(t)] : no_dets;
        const auto& gt =
            draw_gt && t < static_cast<int>(clip.frames.size()) ? clip.frames[static_cast<size_t>(t)] : no_gt;
        std::ostringstream name;
        name << "frame_" << std::setw(2) << std::setfill('0') << t << "." << format;
        std::string path = (fs::path(dir) / name.str()).string();
        if (format == "ppm") {
            write_frame_ppm(path, clip.video, t, dets, gt);
        } else {
            write_frame_svg(path, clip.video, t, dets, gt);
        }
    }
}

} // namespace point3d

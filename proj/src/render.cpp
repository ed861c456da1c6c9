#include <rearrange/render.hpp>

#include "font_6x11.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace rearrange {

std::size_t RenderOutput::pixel_count(int id) const
{
    return static_cast<std::size_t>((object_id.array() == id).count());
}

namespace {

struct ScreenVertex {
    double u;
    double v;
    double z;
};

struct Target {
    RenderOutput& out;
    int id;
    Rgb color;
};

void write_fragment(Target& t, int x, int y, double z)
{
    const float zf = static_cast<float>(z);
    if (zf < t.out.depth(y, x)) {
        t.out.depth(y, x) = zf;
        t.out.object_id(y, x) = t.id;
        t.out.rgb.set(x, y, t.color);
    }
}

double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py)
{
    return (b.u - a.u) * (py - a.v) - (b.v - a.v) * (px - a.u);
}

void rasterize_triangle(Target& t, const ScreenVertex& a, const ScreenVertex& b, const ScreenVertex& c)
{
    const double area = edge(a, b, c.u, c.v);
    if (!(std::abs(area) > 1e-12) || !std::isfinite(area)) return;

    const int w = t.out.width();
    const int h = t.out.height();
    // Pixel x is covered when its centre x + 0.5 lies inside.
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.u, b.u, c.u}) - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({a.u, b.u, c.u}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.v, b.v, c.v}) - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({a.v, b.v, c.v}) - 0.5)));

    for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
            const double px = x + 0.5;
            const double l0 = edge(b, c, px, py) / area;
            const double l1 = edge(c, a, px, py) / area;
            const double l2 = edge(a, b, px, py) / area;
            if (l0 < 0 || l1 < 0 || l2 < 0) continue;
            const double inv_z = l0 / a.z + l1 / b.z + l2 / c.z;
            write_fragment(t, x, y, 1.0 / inv_z);
        }
    }
}

// Sutherland-Hodgman against z >= near.
std::vector<Vec3> clip_near(const std::array<Vec3, 3>& tri, double near_plane)
{
    std::vector<Vec3> out;
    out.reserve(4);
    for (int i = 0; i < 3; ++i) {
        const Vec3& p = tri[i];
        const Vec3& q = tri[(i + 1) % 3];
        const bool p_in = p.z() >= near_plane;
        const bool q_in = q.z() >= near_plane;
        if (p_in) out.push_back(p);
        if (p_in != q_in) {
            const double s = (near_plane - p.z()) / (q.z() - p.z());
            Vec3 r = p + s * (q - p);
            r.z() = near_plane;
            out.push_back(r);
        }
    }
    return out;
}

Rgb shade(const Rgb& base, const std::array<Vec3, 3>& tri_cam)
{
    const Vec3 normal = (tri_cam[1] - tri_cam[0]).cross(tri_cam[2] - tri_cam[0]);
    const Vec3 centroid = (tri_cam[0] + tri_cam[1] + tri_cam[2]) / 3.0;
    const double n = normal.norm() * centroid.norm();
    const double facing = n > 0 ? std::abs(normal.dot(centroid)) / n : 0.0;
    const double intensity = 0.3 + 0.7 * facing;
    Rgb out;
    for (int c = 0; c < 3; ++c) {
        out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(base[c] * intensity), 0L, 255L));
    }
    return out;
}

}  // namespace

RenderOutput render(const SceneState& scene, const Camera& camera, const RenderOptions& options)
{
    const auto& k = camera.intrinsics;
    k.validate();
    RenderOutput out;
    out.rgb = Image(k.width, k.height, options.background);
    out.depth = DepthBuffer::Constant(k.height, k.width, std::numeric_limits<float>::infinity());
    out.object_id = IdBuffer::Constant(k.height, k.width, kBackgroundId);

    const RotMat3 rot = camera.pose.world_to_camera_rotation();
    const Vec3 pos = camera.pose.position;

    for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
        const auto& obj = scene.objects[oi];
        const Points cam = rot * (obj.vertices.colwise() - pos);
        Target target{out, static_cast<int>(oi), obj.color};

        if (obj.is_point_cloud()) {
            // Square of the pixel holding the projection plus `r` pixels on each side.
            const int r = options.splat_radius_px;
            for (Eigen::Index i = 0; i < cam.cols(); ++i) {
                const Vec3 p = cam.col(i);
                if (p.z() < options.near_plane) continue;
                const auto proj = project_camera_point(p, k);
                if (!std::isfinite(proj.u) || !std::isfinite(proj.v)) continue;
                const double px = std::floor(proj.u), py = std::floor(proj.v);
                if (px + r < 0 || py + r < 0 || px - r >= k.width || py - r >= k.height) continue;
                const int xa = std::max(0, static_cast<int>(px) - r);
                const int xb = std::min(k.width - 1, static_cast<int>(px) + r);
                const int ya = std::max(0, static_cast<int>(py) - r);
                const int yb = std::min(k.height - 1, static_cast<int>(py) + r);
                for (int y = ya; y <= yb; ++y) {
                    for (int x = xa; x <= xb; ++x) write_fragment(target, x, y, p.z());
                }
            }
            continue;
        }

        for (Eigen::Index f = 0; f < obj.faces.cols(); ++f) {
            const std::array<Vec3, 3> tri{cam.col(obj.faces(0, f)), cam.col(obj.faces(1, f)), cam.col(obj.faces(2, f))};
            if (tri[0].z() < options.near_plane && tri[1].z() < options.near_plane && tri[2].z() < options.near_plane) {
                continue;
            }
            target.color = shade(obj.color, tri);
            const auto poly = clip_near(tri, options.near_plane);
            if (poly.size() < 3) continue;
            std::vector<ScreenVertex> screen;
            screen.reserve(poly.size());
            for (const auto& p : poly) {
                const auto proj = project_camera_point(p, k);
                screen.push_back({proj.u, proj.v, p.z()});
            }
            for (std::size_t i = 1; i + 1 < screen.size(); ++i) {
                rasterize_triangle(target, screen[0], screen[i], screen[i + 1]);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2D drawing

namespace {

// Liang-Barsky clip of a segment to a rectangle; false when fully outside.
bool clip_segment(Eigen::Vector2d& a, Eigen::Vector2d& b, double xmin, double ymin, double xmax, double ymax)
{
    const Eigen::Vector2d d = b - a;
    double t0 = 0, t1 = 1;
    const std::array<double, 4> p{-d.x(), d.x(), -d.y(), d.y()};
    const std::array<double, 4> q{a.x() - xmin, xmax - a.x(), a.y() - ymin, ymax - a.y()};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0) {
            if (q[i] < 0) return false;
            continue;
        }
        const double t = q[i] / p[i];
        if (p[i] < 0) {
            t0 = std::max(t0, t);
        } else {
            t1 = std::min(t1, t);
        }
        if (t0 > t1) return false;
    }
    const Eigen::Vector2d start = a + t0 * d;
    b = a + t1 * d;
    a = start;
    return true;
}

void stamp(Image& img, int cx, int cy, int half, Rgb color)
{
    for (int y = cy - half; y <= cy + half; ++y) {
        for (int x = cx - half; x <= cx + half; ++x) {
            if (img.in_bounds(x, y)) img.set(x, y, color);
        }
    }
}

}  // namespace

void draw_line(Image& img, Eigen::Vector2d a, Eigen::Vector2d b, Rgb color, int half_width)
{
    const double pad = half_width + 1.0;
    if (!clip_segment(a, b, -pad, -pad, img.width + pad, img.height + pad)) return;
    const Eigen::Vector2d d = b - a;
    const int steps = std::max(1, static_cast<int>(std::ceil(d.cwiseAbs().maxCoeff())));
    for (int i = 0; i <= steps; ++i) {
        const Eigen::Vector2d p = a + d * (static_cast<double>(i) / steps);
        stamp(img, static_cast<int>(std::floor(p.x())), static_cast<int>(std::floor(p.y())), half_width, color);
    }
}

void draw_rect(Image& img, const PixelBox& box, Rgb color)
{
    for (int x = box.x0; x <= box.x1; ++x) {
        if (img.in_bounds(x, box.y0)) img.set(x, box.y0, color);
        if (img.in_bounds(x, box.y1)) img.set(x, box.y1, color);
    }
    for (int y = box.y0; y <= box.y1; ++y) {
        if (img.in_bounds(box.x0, y)) img.set(box.x0, y, color);
        if (img.in_bounds(box.x1, y)) img.set(box.x1, y, color);
    }
}

namespace {

void fill_rect(Image& img, const PixelBox& box, Rgb color)
{
    for (int y = std::max(0, box.y0); y <= std::min(img.height - 1, box.y1); ++y) {
        for (int x = std::max(0, box.x0); x <= std::min(img.width - 1, box.x1); ++x) img.set(x, y, color);
    }
}

}  // namespace

PixelBox text_box(int x, int y, std::string_view text, int scale)
{
    const int w = static_cast<int>(text.size()) * font::kGlyphWidth * scale;
    const int h = font::kGlyphHeight * scale;
    return {x, y, x + std::max(w, 1) - 1, y + h - 1};
}

void draw_text(Image& img, int x, int y, std::string_view text, Rgb color, int scale)
{
    int pen = x;
    for (const char ch : text) {
        const int code = (ch >= 32 && ch < 127) ? ch - 32 : '?' - 32;
        const auto& glyph = font::kGlyphs[static_cast<std::size_t>(code)];
        for (int row = 0; row < font::kGlyphHeight; ++row) {
            for (int col = 0; col < font::kGlyphWidth; ++col) {
                if (!(glyph[row] & (1 << (font::kGlyphWidth - 1 - col)))) continue;
                for (int sy = 0; sy < scale; ++sy) {
                    for (int sx = 0; sx < scale; ++sx) {
                        const int px = pen + col * scale + sx;
                        const int py = y + row * scale + sy;
                        if (img.in_bounds(px, py)) img.set(px, py, color);
                    }
                }
            }
        }
        pen += font::kGlyphWidth * scale;
    }
}

// ---------------------------------------------------------------------------
// Axes overlay

namespace {

constexpr std::array<Rgb, 3> kAxisColors{{{220, 30, 30}, {30, 170, 30}, {30, 60, 220}}};
constexpr std::array<std::string_view, 3> kAxisLabels{"+x", "+y", "+z"};
constexpr int kLabelScale = 2;
constexpr double kArrowLength = 8.0;
constexpr double kArrowAngleDeg = 25.0;

Eigen::Vector2d rotate2(const Eigen::Vector2d& v, double deg)
{
    const double r = deg * std::numbers::pi / 180.0;
    return {std::cos(r) * v.x() - std::sin(r) * v.y(), std::sin(r) * v.x() + std::cos(r) * v.y()};
}

}  // namespace

std::vector<AxisGlyph> axes_overlay_geometry(const Camera& camera, const AxesOverlaySpec& spec, const Aabb& target_box)
{
    if (!(spec.length > 0)) throw Error(ErrorCode::InvalidArgument, "axis overlay length must be positive");
    constexpr double near_plane = 1e-3;
    std::vector<AxisGlyph> glyphs;
    for (int a = 0; a < 3; ++a) {
        AxisGlyph g;
        g.axis = static_cast<RotationAxis>(a);
        g.start_world = spec.origin;
        if (spec.face_anchored) g.start_world(a) = target_box.max(a);
        g.end_world = g.start_world;
        g.end_world(a) += spec.length;

        Vec3 p = camera.pose.to_camera(g.start_world);
        Vec3 q = camera.pose.to_camera(g.end_world);
        if (p.z() < near_plane && q.z() < near_plane) continue;
        if (p.z() < near_plane) p = p + (near_plane - p.z()) / (q.z() - p.z()) * (q - p);
        if (q.z() < near_plane) q = q + (near_plane - q.z()) / (p.z() - q.z()) * (p - q);
        const auto pa = project_camera_point(p, camera.intrinsics);
        const auto pb = project_camera_point(q, camera.intrinsics);
        g.shaft = {{pa.u, pa.v}, {pb.u, pb.v}};

        const Eigen::Vector2d d = g.shaft.b - g.shaft.a;
        const double len = d.norm();
        Eigen::Vector2d dir = len > 1e-9 ? Eigen::Vector2d(d / len) : Eigen::Vector2d(0, -1);
        if (len >= 2.0) {
            const double h = std::min(kArrowLength, 0.4 * len);
            g.arrowhead.push_back({g.shaft.b, g.shaft.b - h * rotate2(dir, kArrowAngleDeg)});
            g.arrowhead.push_back({g.shaft.b, g.shaft.b - h * rotate2(dir, -kArrowAngleDeg)});
        }
        const PixelBox size = text_box(0, 0, kAxisLabels[a], kLabelScale);
        const Eigen::Vector2d anchor = g.shaft.b + dir * 14.0;
        const int w = size.x1 + 1;
        const int h = size.y1 + 1;
        g.label = text_box(static_cast<int>(std::lround(anchor.x() - w / 2.0)),
                           static_cast<int>(std::lround(anchor.y() - h / 2.0)), kAxisLabels[a], kLabelScale);
        glyphs.push_back(std::move(g));
    }
    return glyphs;
}

Image overlay_axes(const Image& rgb, const Camera& camera, const AxesOverlaySpec& spec, const Aabb& target_box)
{
    Image out = rgb;
    for (const auto& g : axes_overlay_geometry(camera, spec, target_box)) {
        const Rgb color = kAxisColors[static_cast<int>(g.axis)];
        draw_line(out, g.shaft.a, g.shaft.b, color, 1);
        for (const auto& s : g.arrowhead) draw_line(out, s.a, s.b, color, 1);
        draw_text(out, g.label.x0, g.label.y0, kAxisLabels[static_cast<int>(g.axis)], color, kLabelScale);
    }
    return out;
}

Image overlay_axes(const RenderOutput& img, const Camera& camera, const AxesOverlaySpec& spec, const Aabb& target_box)
{
    return overlay_axes(img.rgb, camera, spec, target_box);
}

// ---------------------------------------------------------------------------
// Object annotation

std::map<int, PixelBox> mask_bboxes(const RenderOutput& img)
{
    std::map<int, PixelBox> boxes;
    for (int y = 0; y < img.object_id.rows(); ++y) {
        for (int x = 0; x < img.object_id.cols(); ++x) {
            const int id = img.object_id(y, x);
            if (id == kBackgroundId) continue;
            auto [it, inserted] = boxes.try_emplace(id, PixelBox{x, y, x, y});
            if (!inserted) {
                auto& b = it->second;
                b.x0 = std::min(b.x0, x), b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x), b.y1 = std::max(b.y1, y);
            }
        }
    }
    return boxes;
}

Rgb annotation_color(int id)
{
    static constexpr std::array<Rgb, 10> palette{{{230, 25, 75},
                                                  {60, 180, 75},
                                                  {0, 130, 200},
                                                  {245, 130, 48},
                                                  {145, 30, 180},
                                                  {70, 240, 240},
                                                  {240, 50, 230},
                                                  {128, 128, 0},
                                                  {0, 128, 128},
                                                  {170, 110, 40}}};
    return palette[static_cast<std::size_t>(std::abs(id)) % palette.size()];
}

Image annotate_objects(const RenderOutput& img, const std::map<int, std::string>& labels)
{
    Image out = img.rgb;
    for (const auto& [id, box] : mask_bboxes(img)) {
        const Rgb color = annotation_color(id);
        draw_rect(out, box, color);
        const auto found = labels.find(id);
        const std::string text = found != labels.end() ? found->second : std::to_string(id);
        const int th = font::kGlyphHeight + 2;
        const int ty = box.y0 - th >= 0 ? box.y0 - th : box.y0 + 1;
        const PixelBox tag = text_box(box.x0, ty, text);
        fill_rect(out, {tag.x0, tag.y0, tag.x1 + 2, tag.y1 + 1}, color);
        draw_text(out, tag.x0 + 1, tag.y0 + 1, text, {255, 255, 255});
    }
    return out;
}

std::vector<std::uint8_t> id_mask_indices(const RenderOutput& img)
{
    std::vector<std::uint8_t> out(static_cast<std::size_t>(img.width()) * img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const int id = img.object_id(y, x);
            out[static_cast<std::size_t>(y) * img.width() + x] = static_cast<std::uint8_t>(id < 0 ? 0 : std::min(id + 1, 255));
        }
    }
    return out;
}

std::vector<Rgb> id_mask_palette(std::size_t object_count)
{
    std::vector<Rgb> palette{{0, 0, 0}};
    for (std::size_t i = 0; i < std::min<std::size_t>(object_count, 255); ++i) {
        palette.push_back(annotation_color(static_cast<int>(i)));
    }
    return palette;
}

}  // namespace rearrange

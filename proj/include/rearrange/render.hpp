#pragma once

#include <rearrange/camera.hpp>
#include <rearrange/image.hpp>
#include <rearrange/scene.hpp>

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rearrange {

inline constexpr int kBackgroundId = -1;

using DepthBuffer = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IdBuffer = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Observation for one camera. Buffers are indexed (row y, column x);
/// object ids are indices into SceneState::objects, background is
/// kBackgroundId with infinite depth.
struct RenderOutput {
    Image rgb;
    DepthBuffer depth;
    IdBuffer object_id;

    int width() const { return rgb.width; }
    int height() const { return rgb.height; }
    std::size_t pixel_count(int id) const;
};

struct RenderOptions {
    int splat_radius_px = 2;
    double near_plane = 1e-3;
    Rgb background{235, 235, 235};
};

/// Z-buffered flat-shaded rasterisation under a headlight. Pixels are
/// sampled at their centres; ties in depth keep the earlier-drawn surface.
RenderOutput render(const SceneState& scene, const Camera& camera, const RenderOptions& options = {});

struct AxesOverlaySpec {
    Vec3 origin = Vec3::Zero();
    double length = 1.0;
    bool face_anchored = true;
};

struct Segment2 {
    Eigen::Vector2d a;
    Eigen::Vector2d b;
};

struct PixelBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;  ///< inclusive
    int y1 = 0;  ///< inclusive

    bool operator==(const PixelBox&) const = default;
};

/// Projected geometry of one axis as drawn by overlay_axes.
struct AxisGlyph {
    RotationAxis axis = RotationAxis::X;
    Vec3 start_world = Vec3::Zero();
    Vec3 end_world = Vec3::Zero();
    Segment2 shaft;
    std::vector<Segment2> arrowhead;
    PixelBox label;
};

/// Start/end points in world space for each axis, then clipped and projected.
/// Axes entirely behind the camera are absent from the result.
std::vector<AxisGlyph> axes_overlay_geometry(const Camera& camera, const AxesOverlaySpec& spec, const Aabb& target_box);

/// Draws +x (red), +y (green), +z (blue) with arrowheads and labels, always on top.
Image overlay_axes(const RenderOutput& img, const Camera& camera, const AxesOverlaySpec& spec, const Aabb& target_box);
Image overlay_axes(const Image& rgb, const Camera& camera, const AxesOverlaySpec& spec, const Aabb& target_box);

/// Tight bounding box of each id present in the id buffer.
std::map<int, PixelBox> mask_bboxes(const RenderOutput& img);

Rgb annotation_color(int id);

/// Outlines each visible object's mask bbox and writes its label above it.
Image annotate_objects(const RenderOutput& img, const std::map<int, std::string>& labels);

/// Text drawing helpers shared by the overlays.
PixelBox text_box(int x, int y, std::string_view text, int scale = 1);
void draw_text(Image& img, int x, int y, std::string_view text, Rgb color, int scale = 1);
void draw_line(Image& img, Eigen::Vector2d a, Eigen::Vector2d b, Rgb color, int half_width = 1);
void draw_rect(Image& img, const PixelBox& box, Rgb color);

/// Palette index image of the id buffer (0 = background, id + 1 otherwise).
std::vector<std::uint8_t> id_mask_indices(const RenderOutput& img);
std::vector<Rgb> id_mask_palette(std::size_t object_count);

}  // namespace rearrange

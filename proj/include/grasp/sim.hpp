#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grasp/augment.hpp"
#include "grasp/image.hpp"
#include "grasp/rng.hpp"

namespace grasp {

// Top-down orthographic workspace at 1 px = 1 mm; the camera hovers at a
// fixed height, so a pose is planar position + yaw.
using CameraPose = CapturePose;

inline constexpr float kWorkspaceWidthMm = 640.0f;
inline constexpr float kWorkspaceHeightMm = 480.0f;

enum class BlockShape { kSquare, kRectangle, kCircle, kTriangle, kLShape };

BlockShape parse_shape(const std::string& name);
std::string shape_name(BlockShape shape);

// Smallest angle (degrees) that maps the shape onto itself; 0 for circles
// (any yaw grasps) and 360 for shapes with no rotational symmetry.
float shape_symmetry_deg(BlockShape shape);

struct Block {
  int id = 0;
  BlockShape shape = BlockShape::kSquare;
  float r = 0.5f, g = 0.5f, b = 0.5f;
  float size_mm = 40.0f;  // characteristic dimension, [20, 80]
  float x_mm = 0.0f, y_mm = 0.0f, yaw_rad = 0.0f;
};

// Radius of the bounding circle used for overlap and bounds checks.
float block_bounding_radius(const Block& block);

// Point-in-block test in block-local millimetre coordinates.
bool block_contains(const Block& block, float local_x, float local_y);

struct WorkspaceState {
  std::vector<Block> blocks;
  std::uint64_t seed = 0;  // background noise seed
};

// Unique ids in 0..9, sizes in [20,80], bounding circles inside the
// workspace and pairwise disjoint. Raises ConfigError.
void validate_workspace(const WorkspaceState& ws);

const Block& find_block(const WorkspaceState& ws, int target_id);

// Pixel <-> world maps for a camera pose. Pixel (320,240) is the camera
// position; pixel offsets rotate into world offsets by R(-yaw), i.e. a
// camera with increased yaw sees the scene rotated like rotate_image.
void pixel_to_world(const CameraPose& cam, float px, float py, float* wx,
                    float* wy);
void world_to_pixel(const CameraPose& cam, float wx, float wy, float* px,
                    float* py);

// Orthographic 640x480 render with 2x2 supersampled edges and a seeded
// light-gray background (hash noise anchored to integer world millimetres,
// so renders are deterministic and camera-independent).
Image render(const WorkspaceState& ws, const CameraPose& cam);

// Frame captured with the camera on the target's grasp point, yaw aligned
// to the block. Raises NotFoundError for unknown ids.
Demonstration capture_demonstration(const WorkspaceState& ws, int target_id);

// New state with the target translated by a uniform draw from the disc of
// radius max_offset_mm and rotated by U(-max_yaw, max_yaw) degrees; other
// blocks unchanged. Draws (radius, direction, yaw) each attempt; retries up
// to 100 times while the pose is out of bounds or overlapping, then raises
// PlacementError.
WorkspaceState perturb(const WorkspaceState& ws, int target_id, Rng& rng,
                       float max_offset_mm = 80.0f, float max_yaw_deg = 0.0f);

// Success iff the gripper is within pos_tol_mm of the target's grasp point
// and within yaw_tol_deg of its yaw modulo the shape's symmetry.
bool check_grasp(const WorkspaceState& ws, int target_id,
                 const CameraPose& gripper, float pos_tol_mm = 10.0f,
                 float yaw_tol_deg = 15.0f);

// Ten blocks, all yaw 0: two red squares differing only in size (0,1), a
// blue square and blue triangle (2,3), three distinctly colored easy blocks
// (4 green circle, 5 yellow square, 6 magenta rectangle), a cyan L with no
// rotational symmetry (7), and fillers (8,9).
WorkspaceState default_scenario();

// Plain text: `# comment`, `seed=<u64>`, one block per line
// `id shape r g b size_mm x_mm y_mm yaw_rad`. Loader validates the result.
void save_scenario(const WorkspaceState& ws, const std::string& path);
WorkspaceState load_scenario(const std::string& path);

}  // namespace grasp

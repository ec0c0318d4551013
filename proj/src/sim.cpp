#include "grasp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "grasp/errors.hpp"

namespace grasp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kBackgroundGray = 0.80f;
constexpr float kNoiseAmplitude = 0.02f;
constexpr int kPerturbAttempts = 100;

// Background shade for one integer world millimetre cell.
float background_shade(std::uint64_t seed, double wx, double wy) {
  const auto ix = static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(wx)));
  const auto iy = static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(wy)));
  const std::uint64_t h = mix64(mix64(seed, ix), iy);
  const float u = static_cast<float>(h >> 40) * 0x1.0p-24f;
  return kBackgroundGray + (u - 0.5f) * (2.0f * kNoiseAmplitude);
}

struct BlockFrame {
  const Block* block;
  double cos_yaw, sin_yaw;
  double radius2;
};

}  // namespace

BlockShape parse_shape(const std::string& name) {
  if (name == "square") return BlockShape::kSquare;
  if (name == "rectangle") return BlockShape::kRectangle;
  if (name == "circle") return BlockShape::kCircle;
  if (name == "triangle") return BlockShape::kTriangle;
  if (name == "lshape") return BlockShape::kLShape;
  throw ConfigError("unknown shape '" + name +
                    "' (square|rectangle|circle|triangle|lshape)");
}

std::string shape_name(BlockShape shape) {
  switch (shape) {
    case BlockShape::kSquare: return "square";
    case BlockShape::kRectangle: return "rectangle";
    case BlockShape::kCircle: return "circle";
    case BlockShape::kTriangle: return "triangle";
    case BlockShape::kLShape: return "lshape";
  }
  throw ConfigError("invalid shape enum value");
}

float shape_symmetry_deg(BlockShape shape) {
  switch (shape) {
    case BlockShape::kSquare: return 90.0f;
    case BlockShape::kRectangle: return 180.0f;
    case BlockShape::kCircle: return 0.0f;
    case BlockShape::kTriangle: return 360.0f;  // isosceles, no rotational symmetry
    case BlockShape::kLShape: return 360.0f;
  }
  throw ConfigError("invalid shape enum value");
}

float block_bounding_radius(const Block& block) {
  const float s = block.size_mm;
  switch (block.shape) {
    case BlockShape::kSquare: return s * 0.7071068f;
    case BlockShape::kRectangle: return s * 0.5590170f;  // s/2 x s/4 half-extents
    case BlockShape::kCircle: return s * 0.5f;
    case BlockShape::kTriangle: return s * 0.6403125f;   // farthest base corner
    case BlockShape::kLShape: return s * 0.7071068f;
  }
  throw ConfigError("invalid shape enum value");
}

bool block_contains(const Block& block, float qx, float qy) {
  const float s = block.size_mm;
  switch (block.shape) {
    case BlockShape::kSquare:
      return std::abs(qx) <= 0.5f * s && std::abs(qy) <= 0.5f * s;
    case BlockShape::kRectangle:
      return std::abs(qx) <= 0.5f * s && std::abs(qy) <= 0.25f * s;
    case BlockShape::kCircle:
      return qx * qx + qy * qy <= 0.25f * s * s;
    case BlockShape::kTriangle: {
      // isosceles: apex (0.6s, 0), base corners (-0.4s, +-0.5s), CCW edges
      const float ax = 0.6f * s, bx = -0.4f * s, by = 0.5f * s;
      const float e1 = (bx - ax) * qy - by * (qx - ax);          // A->B
      const float e2 = (2.0f * by) * (qx - bx);                  // B->C (vertical)
      const float e3 = (ax - bx) * (qy + by) - by * (qx - bx);   // C->A
      return e1 >= 0.0f && e2 >= 0.0f && e3 >= 0.0f;
    }
    case BlockShape::kLShape: {
      const bool bar = qx >= -0.5f * s && qx <= -0.1f * s && std::abs(qy) <= 0.5f * s;
      const bool foot = qx >= -0.1f * s && qx <= 0.5f * s && qy >= 0.1f * s && qy <= 0.5f * s;
      return bar || foot;
    }
  }
  throw ConfigError("invalid shape enum value");
}

void validate_workspace(const WorkspaceState& ws) {
  if (ws.blocks.empty()) throw ConfigError("workspace has no blocks");
  std::set<int> ids;
  for (const Block& b : ws.blocks) {
    if (b.id < 0 || b.id > kMaxBlockId)
      throw ConfigError("block id " + std::to_string(b.id) + " outside 0..9");
    if (!ids.insert(b.id).second)
      throw ConfigError("duplicate block id " + std::to_string(b.id));
    if (b.size_mm < 20.0f || b.size_mm > 80.0f)
      throw ConfigError("block " + std::to_string(b.id) + " size " +
                        std::to_string(b.size_mm) + " outside [20,80] mm");
    const float r = block_bounding_radius(b);
    if (b.x_mm < r || b.x_mm > kWorkspaceWidthMm - r || b.y_mm < r ||
        b.y_mm > kWorkspaceHeightMm - r)
      throw ConfigError("block " + std::to_string(b.id) +
                        " leaves the workspace");
  }
  for (std::size_t i = 0; i < ws.blocks.size(); ++i)
    for (std::size_t j = i + 1; j < ws.blocks.size(); ++j) {
      const Block& a = ws.blocks[i];
      const Block& b = ws.blocks[j];
      const float dx = a.x_mm - b.x_mm, dy = a.y_mm - b.y_mm;
      const float lim = block_bounding_radius(a) + block_bounding_radius(b);
      if (dx * dx + dy * dy < lim * lim)
        throw ConfigError("blocks " + std::to_string(a.id) + " and " +
                          std::to_string(b.id) + " overlap");
    }
}

const Block& find_block(const WorkspaceState& ws, int target_id) {
  for (const Block& b : ws.blocks)
    if (b.id == target_id) return b;
  throw NotFoundError("no block with id " + std::to_string(target_id));
}

void pixel_to_world(const CameraPose& cam, float px, float py, float* wx,
                    float* wy) {
  const double dx = static_cast<double>(px) - 320.0;
  const double dy = static_cast<double>(py) - 240.0;
  const double c = std::cos(static_cast<double>(cam.yaw_rad));
  const double s = std::sin(static_cast<double>(cam.yaw_rad));
  *wx = static_cast<float>(cam.x_mm + dx * c + dy * s);
  *wy = static_cast<float>(cam.y_mm - dx * s + dy * c);
}

void world_to_pixel(const CameraPose& cam, float wx, float wy, float* px,
                    float* py) {
  const double dx = static_cast<double>(wx) - cam.x_mm;
  const double dy = static_cast<double>(wy) - cam.y_mm;
  const double c = std::cos(static_cast<double>(cam.yaw_rad));
  const double s = std::sin(static_cast<double>(cam.yaw_rad));
  *px = static_cast<float>(320.0 + dx * c - dy * s);
  *py = static_cast<float>(240.0 + dx * s + dy * c);
}

Image render(const WorkspaceState& ws, const CameraPose& cam) {
  Image frame(kFrameWidth, kFrameHeight);
  std::vector<BlockFrame> bf;
  bf.reserve(ws.blocks.size());
  for (const Block& b : ws.blocks) {
    const double r = block_bounding_radius(b);
    bf.push_back({&b, std::cos(static_cast<double>(b.yaw_rad)),
                  std::sin(static_cast<double>(b.yaw_rad)), r * r});
  }
  const double cy = std::cos(static_cast<double>(cam.yaw_rad));
  const double sy = std::sin(static_cast<double>(cam.yaw_rad));
  // 2x2 subsamples per pixel; pixel centers sit on integer coordinates
  static constexpr double kSub[2] = {-0.25, 0.25};
#pragma omp parallel for schedule(static)
  for (int y = 0; y < kFrameHeight; ++y) {
    for (int x = 0; x < kFrameWidth; ++x) {
      float acc[3] = {0.0f, 0.0f, 0.0f};
      for (double oy : kSub) {
        for (double ox : kSub) {
          const double dx = static_cast<double>(x) + ox - 320.0;
          const double dy = static_cast<double>(y) + oy - 240.0;
          const double wx = cam.x_mm + dx * cy + dy * sy;
          const double wy = cam.y_mm - dx * sy + dy * cy;
          const BlockFrame* hit = nullptr;
          for (const BlockFrame& f : bf) {
            const double bx = wx - f.block->x_mm;
            const double by = wy - f.block->y_mm;
            if (bx * bx + by * by > f.radius2) continue;
            const auto qx = static_cast<float>(bx * f.cos_yaw - by * f.sin_yaw);
            const auto qy = static_cast<float>(bx * f.sin_yaw + by * f.cos_yaw);
            if (block_contains(*f.block, qx, qy)) {
              hit = &f;
              break;
            }
          }
          if (hit != nullptr) {
            acc[0] += hit->block->r;
            acc[1] += hit->block->g;
            acc[2] += hit->block->b;
          } else {
            const float shade = background_shade(ws.seed, wx, wy);
            acc[0] += shade;
            acc[1] += shade;
            acc[2] += shade;
          }
        }
      }
      for (int c = 0; c < 3; ++c) frame.at(x, y, c) = acc[c] * 0.25f;
    }
  }
  return frame;
}

Demonstration capture_demonstration(const WorkspaceState& ws, int target_id) {
  const Block& b = find_block(ws, target_id);
  Demonstration demo;
  demo.capture_pose = {b.x_mm, b.y_mm, b.yaw_rad};
  demo.frame = render(ws, demo.capture_pose);
  demo.target_id = target_id;
  return demo;
}

namespace {

bool placement_valid(const WorkspaceState& ws, std::size_t target_index,
                     float x, float y) {
  const Block& t = ws.blocks[target_index];
  const float r = block_bounding_radius(t);
  if (x < r || x > kWorkspaceWidthMm - r || y < r ||
      y > kWorkspaceHeightMm - r)
    return false;
  for (std::size_t i = 0; i < ws.blocks.size(); ++i) {
    if (i == target_index) continue;
    const Block& o = ws.blocks[i];
    const float dx = x - o.x_mm, dy = y - o.y_mm;
    const float lim = r + block_bounding_radius(o);
    if (dx * dx + dy * dy < lim * lim) return false;
  }
  return true;
}

}  // namespace

WorkspaceState perturb(const WorkspaceState& ws, int target_id, Rng& rng,
                       float max_offset_mm, float max_yaw_deg) {
  if (max_offset_mm < 0.0f || max_yaw_deg < 0.0f)
    throw ConfigError("perturbation bounds must be non-negative");
  std::size_t target_index = ws.blocks.size();
  for (std::size_t i = 0; i < ws.blocks.size(); ++i)
    if (ws.blocks[i].id == target_id) target_index = i;
  if (target_index == ws.blocks.size())
    throw NotFoundError("no block with id " + std::to_string(target_id));

  WorkspaceState out = ws;
  Block& t = out.blocks[target_index];
  for (int attempt = 0; attempt < kPerturbAttempts; ++attempt) {
    // disc-uniform offset: radius max_offset * sqrt(u), uniform direction
    const double radius = max_offset_mm * std::sqrt(static_cast<double>(rng.uniform()));
    const double phi = static_cast<double>(rng.uniform()) * 2.0 * kPi;
    const float dyaw = rng.uniform(-max_yaw_deg, max_yaw_deg);
    const auto nx = static_cast<float>(ws.blocks[target_index].x_mm +
                                       radius * std::cos(phi));
    const auto ny = static_cast<float>(ws.blocks[target_index].y_mm +
                                       radius * std::sin(phi));
    if (!placement_valid(out, target_index, nx, ny)) continue;
    t.x_mm = nx;
    t.y_mm = ny;
    t.yaw_rad = ws.blocks[target_index].yaw_rad +
                dyaw * static_cast<float>(kPi / 180.0);
    return out;
  }
  throw PlacementError("no valid pose for block " + std::to_string(target_id) +
                       " after " + std::to_string(kPerturbAttempts) +
                       " attempts (max offset " +
                       std::to_string(max_offset_mm) + " mm)");
}

bool check_grasp(const WorkspaceState& ws, int target_id,
                 const CameraPose& gripper, float pos_tol_mm,
                 float yaw_tol_deg) {
  const Block& b = find_block(ws, target_id);
  const float dx = gripper.x_mm - b.x_mm;
  const float dy = gripper.y_mm - b.y_mm;
  if (dx * dx + dy * dy > pos_tol_mm * pos_tol_mm) return false;
  const float sym = shape_symmetry_deg(b.shape);
  if (sym == 0.0f) return true;  // circle: any yaw grasps
  const double dyaw_deg =
      (static_cast<double>(gripper.yaw_rad) - b.yaw_rad) * 180.0 / kPi;
  // fold into [-sym/2, sym/2]: the nearest symmetric alignment
  const double err = std::remainder(dyaw_deg, static_cast<double>(sym));
  return std::abs(err) <= static_cast<double>(yaw_tol_deg);
}

WorkspaceState default_scenario() {
  WorkspaceState ws;
  ws.seed = 12345;
  const auto add = [&ws](int id, BlockShape shape, float r, float g, float b,
                         float size, float x, float y) {
    ws.blocks.push_back({id, shape, r, g, b, size, x, y, 0.0f});
  };
  // confusable pair: same red squares, sizes differ
  add(0, BlockShape::kSquare, 0.85f, 0.10f, 0.10f, 60.0f, 240.0f, 160.0f);
  add(1, BlockShape::kSquare, 0.85f, 0.10f, 0.10f, 40.0f, 400.0f, 160.0f);
  // confusable pair: same blue, shapes differ
  add(2, BlockShape::kSquare, 0.10f, 0.15f, 0.85f, 50.0f, 240.0f, 320.0f);
  add(3, BlockShape::kTriangle, 0.10f, 0.15f, 0.85f, 50.0f, 400.0f, 320.0f);
  // easy blocks: unique colors
  add(4, BlockShape::kCircle, 0.10f, 0.80f, 0.15f, 46.0f, 320.0f, 240.0f);
  add(5, BlockShape::kSquare, 0.90f, 0.85f, 0.10f, 44.0f, 160.0f, 240.0f);
  add(6, BlockShape::kRectangle, 0.85f, 0.10f, 0.80f, 56.0f, 480.0f, 240.0f);
  // asymmetric block for rotation servoing
  add(7, BlockShape::kLShape, 0.10f, 0.80f, 0.85f, 54.0f, 160.0f, 80.0f);
  add(8, BlockShape::kTriangle, 0.95f, 0.55f, 0.10f, 48.0f, 480.0f, 400.0f);
  add(9, BlockShape::kRectangle, 0.45f, 0.10f, 0.75f, 50.0f, 160.0f, 400.0f);
  validate_workspace(ws);
  return ws;
}

void save_scenario(const WorkspaceState& ws, const std::string& path) {
  validate_workspace(ws);
  std::ostringstream out;
  out << "# id shape r g b size_mm x_mm y_mm yaw_rad\n";
  out << "seed=" << ws.seed << "\n";
  out.precision(9);
  for (const Block& b : ws.blocks) {
    out << b.id << " " << shape_name(b.shape) << " " << b.r << " " << b.g
        << " " << b.b << " " << b.size_mm << " " << b.x_mm << " " << b.y_mm
        << " " << b.yaw_rad << "\n";
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw NotFoundError("cannot open " + tmp + " for writing");
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

WorkspaceState load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  WorkspaceState ws;
  bool seed_seen = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string at = path + ":" + std::to_string(lineno);
    if (line.compare(first, 5, "seed=") == 0) {
      try {
        ws.seed = std::stoull(line.substr(first + 5));
      } catch (const std::exception&) {
        throw ConfigError(at + ": bad seed value");
      }
      seed_seen = true;
      continue;
    }
    std::istringstream fields(line);
    Block b;
    std::string shape;
    if (!(fields >> b.id >> shape >> b.r >> b.g >> b.b >> b.size_mm >>
          b.x_mm >> b.y_mm >> b.yaw_rad)) {
      throw ConfigError(at + ": expected 'id shape r g b size x y yaw'");
    }
    std::string extra;
    if (fields >> extra) throw ConfigError(at + ": trailing fields");
    try {
      b.shape = parse_shape(shape);
    } catch (const ConfigError& e) {
      throw ConfigError(at + ": " + e.what());
    }
    ws.blocks.push_back(b);
  }
  if (!seed_seen) throw ConfigError(path + ": missing seed= line");
  try {
    validate_workspace(ws);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return ws;
}

}  // namespace grasp

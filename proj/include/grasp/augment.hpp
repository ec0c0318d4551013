#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "grasp/image.hpp"
#include "grasp/rng.hpp"
#include "grasp/tensor.hpp"

namespace grasp {

inline constexpr int kFrameWidth = 640;
inline constexpr int kFrameHeight = 480;
inline constexpr int kMaxBlockId = 9;

// Planar camera pose over the table, millimetres and radians.
struct CapturePose {
  float x_mm = 0.0f, y_mm = 0.0f, yaw_rad = 0.0f;
};

// One recorded grasp: a frame taken with the target block's grasp point at
// the image center, plus the pose the frame was captured from.
struct Demonstration {
  Image frame;  // 640x480
  int target_id = 0;
  CapturePose capture_pose;
};

// Frame geometry and block id range.
void validate_demo(const Demonstration& demo);

// Immutable collection of demonstrations, one per block id. Frame reads are
// counted per block so callers can audit that a held-out task was never
// touched; views created by without_target share the same counters.
class DemonstrationSet {
 public:
  DemonstrationSet();

  // Takes ownership. Duplicate target ids raise IntegrityError.
  void add(Demonstration demo);

  int size() const { return static_cast<int>(demos_.size()); }
  bool has_target(int target_id) const;
  std::vector<int> target_ids() const;

  // Counted accessors: every call increments the demo's access counter.
  const Demonstration& at(int index) const;
  const Demonstration& by_target(int target_id) const;

  // View of the same demos minus one block. Shares access counters.
  DemonstrationSet without_target(int target_id) const;

  // Counted frame reads for a block since the counters were created.
  long long access_count(int target_id) const;

 private:
  std::vector<std::shared_ptr<const Demonstration>> demos_;
  std::shared_ptr<std::array<std::atomic<long long>, kMaxBlockId + 1>> counts_;
};

// How a patch was produced; enough to regenerate it.
struct Provenance {
  int source_demo_id = -1;  // target_id of the demo the patch came from
  int crop_cx = 0, crop_cy = 0;
  float angle_deg = 0.0f;
  float brightness = 1.0f, contrast = 1.0f;
};

struct LabeledSample {
  Image patch;  // 128x128
  int label = 0;  // 1 grasp point centered, 0 otherwise
  Provenance provenance;
};

struct AugmentationConfig {
  float pos_rotation_range = 3.0f;             // degrees, symmetric about 0
  float neg_rotation_range = 180.0f;           // degrees, symmetric about 0
  float neg_center_exclusion_radius = 16.0f;   // px from frame center, strict
  float brightness_lo = 0.5f, brightness_hi = 1.5f;
  float contrast_lo = 0.5f, contrast_hi = 1.5f;
  float cross_negative_fraction = 0.5f;  // multi scheme in-demo/cross mixture
};

// Bounds ordered, factors positive, radius and ranges non-negative,
// fraction in [0,1]. Raises ConfigError.
void validate_config(const AugmentationConfig& cfg);

// Center crop of the frame rotated about its center by U(-range, range),
// then brightness/contrast, each factor ~ U(lo, hi). Label 1.
// Draw order: angle, brightness, contrast.
LabeledSample sample_positive(const Demonstration& demo,
                              const AugmentationConfig& cfg, Rng& rng);

// Off-center crop: integer crop center uniform over all in-frame 128x128
// positions strictly farther than the exclusion radius from the frame
// center, rotation ~ U(-range, range), brightness/contrast as positives.
// Label 0. Draw order per attempt: cx, cy; then angle, brightness, contrast.
// Raises PlacementError if no admissible center is found in 100 attempts.
LabeledSample sample_negative(const Demonstration& demo,
                              const AugmentationConfig& cfg, Rng& rng);

// Positive sample of a uniformly chosen non-target demo, relabeled 0.
// Raises NotFoundError when no non-target demo exists.
LabeledSample sample_negative_cross(const DemonstrationSet& demos,
                                    int target_id,
                                    const AugmentationConfig& cfg, Rng& rng);

enum class Scheme { kSingle, kMulti };

Scheme parse_scheme(const std::string& name);  // "single" | "multi"
std::string scheme_name(Scheme scheme);

struct Batch {
  std::vector<LabeledSample> samples;
  // Multi scheme requested but only the target demo exists.
  bool fell_back_to_single = false;
};

// ceil(pos_fraction * batch_size) positives from the target demo, the rest
// negatives: single scheme from the target demo only; multi scheme picks
// in-demo vs cross-demo negatives with probability cross_negative_fraction.
// Each sample runs on its own rng stream derived from one 64-bit draw off
// `rng`, so the batch is reproducible and order-independent.
Batch generate_batch(const DemonstrationSet& demos, int target_id,
                     Scheme scheme, int batch_size, float pos_fraction,
                     const AugmentationConfig& cfg, Rng& rng);

// Fixed evaluation set: n_pos positives then n_neg negatives, multi scheme
// (single when only the target demo exists), fully determined by `seed`.
// Sample streams live in a different derivation domain than batch streams.
Batch generate_eval_set(const DemonstrationSet& demos, int target_id,
                        int n_pos, int n_neg, std::uint64_t seed,
                        const AugmentationConfig& cfg);

// [N,3,128,128] network input and [N] float {0,1} labels.
Tensor stack_patches(const std::vector<LabeledSample>& samples);
Tensor stack_labels(const std::vector<LabeledSample>& samples);

// Demo directory: frame.ppm (binary P6) + meta.txt (key=value lines
// target_id, pose_x_mm, pose_y_mm, yaw_rad).
void save_demo(const Demonstration& demo, const std::string& dir);
Demonstration load_demo(const std::string& dir);

}  // namespace grasp

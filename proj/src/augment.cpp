#include "grasp/augment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "grasp/errors.hpp"

namespace grasp {

namespace {

constexpr int kPatch = 128;
constexpr int kPlacementAttempts = 100;

// k2 domain tags for derive_rng so training batches and eval sets can never
// collide on a sample stream.
constexpr std::uint64_t kStreamBatch = 0x42;
constexpr std::uint64_t kStreamEval = 0x45;

}  // namespace

void validate_demo(const Demonstration& demo) {
  if (demo.frame.width != kFrameWidth || demo.frame.height != kFrameHeight ||
      demo.frame.data.size() !=
          static_cast<std::size_t>(kFrameWidth) * kFrameHeight * 3) {
    throw ShapeError("demonstration frame must be 640x480, got " +
                     std::to_string(demo.frame.width) + "x" +
                     std::to_string(demo.frame.height));
  }
  if (demo.target_id < 0 || demo.target_id > kMaxBlockId) {
    throw ConfigError("target_id " + std::to_string(demo.target_id) +
                      " outside 0.." + std::to_string(kMaxBlockId));
  }
}

DemonstrationSet::DemonstrationSet()
    : counts_(std::make_shared<
              std::array<std::atomic<long long>, kMaxBlockId + 1>>()) {
  for (auto& c : *counts_) c.store(0);
}

void DemonstrationSet::add(Demonstration demo) {
  validate_demo(demo);
  if (has_target(demo.target_id)) {
    throw IntegrityError("duplicate demonstration for block " +
                         std::to_string(demo.target_id));
  }
  demos_.push_back(std::make_shared<const Demonstration>(std::move(demo)));
}

bool DemonstrationSet::has_target(int target_id) const {
  for (const auto& d : demos_)
    if (d->target_id == target_id) return true;
  return false;
}

std::vector<int> DemonstrationSet::target_ids() const {
  std::vector<int> ids;
  ids.reserve(demos_.size());
  for (const auto& d : demos_) ids.push_back(d->target_id);
  return ids;
}

const Demonstration& DemonstrationSet::at(int index) const {
  if (index < 0 || index >= size()) {
    throw NotFoundError("demo index " + std::to_string(index) +
                        " out of range (" + std::to_string(size()) + " demos)");
  }
  (*counts_)[demos_[index]->target_id].fetch_add(1);
  return *demos_[index];
}

const Demonstration& DemonstrationSet::by_target(int target_id) const {
  for (const auto& d : demos_) {
    if (d->target_id == target_id) {
      (*counts_)[target_id].fetch_add(1);
      return *d;
    }
  }
  throw NotFoundError("no demonstration for block " +
                      std::to_string(target_id));
}

DemonstrationSet DemonstrationSet::without_target(int target_id) const {
  DemonstrationSet view;
  view.counts_ = counts_;
  for (const auto& d : demos_)
    if (d->target_id != target_id) view.demos_.push_back(d);
  return view;
}

long long DemonstrationSet::access_count(int target_id) const {
  if (target_id < 0 || target_id > kMaxBlockId) {
    throw NotFoundError("block id " + std::to_string(target_id) +
                        " outside 0.." + std::to_string(kMaxBlockId));
  }
  return (*counts_)[target_id].load();
}

void validate_config(const AugmentationConfig& cfg) {
  if (!(cfg.pos_rotation_range >= 0.0f) || !(cfg.neg_rotation_range >= 0.0f))
    throw ConfigError("rotation ranges must be non-negative");
  if (!(cfg.neg_center_exclusion_radius >= 0.0f))
    throw ConfigError("exclusion radius must be non-negative");
  if (!(cfg.brightness_lo > 0.0f) || !(cfg.brightness_hi >= cfg.brightness_lo))
    throw ConfigError("brightness range must satisfy 0 < lo <= hi");
  if (!(cfg.contrast_lo > 0.0f) || !(cfg.contrast_hi >= cfg.contrast_lo))
    throw ConfigError("contrast range must satisfy 0 < lo <= hi");
  if (!(cfg.cross_negative_fraction >= 0.0f) ||
      !(cfg.cross_negative_fraction <= 1.0f))
    throw ConfigError("cross_negative_fraction must lie in [0,1]");
}

namespace {

LabeledSample make_sample(const Demonstration& demo, int cx, int cy,
                          float angle, float b, float c, int label) {
  LabeledSample s;
  s.patch = apply_brightness_contrast(
      extract_patch(demo.frame, cx, cy, kPatch, angle), b, c);
  s.label = label;
  s.provenance = {demo.target_id, cx, cy, angle, b, c};
  return s;
}

}  // namespace

LabeledSample sample_positive(const Demonstration& demo,
                              const AugmentationConfig& cfg, Rng& rng) {
  validate_demo(demo);
  const float angle =
      rng.uniform(-cfg.pos_rotation_range, cfg.pos_rotation_range);
  const float b = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
  const float c = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  return make_sample(demo, demo.frame.width / 2, demo.frame.height / 2, angle,
                     b, c, 1);
}

LabeledSample sample_negative(const Demonstration& demo,
                              const AugmentationConfig& cfg, Rng& rng) {
  validate_demo(demo);
  const int half = kPatch / 2;
  const int ccx = demo.frame.width / 2, ccy = demo.frame.height / 2;
  const std::uint32_t nx = demo.frame.width - kPatch + 1;
  const std::uint32_t ny = demo.frame.height - kPatch + 1;
  const float r2 =
      cfg.neg_center_exclusion_radius * cfg.neg_center_exclusion_radius;
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    const int cx = half + static_cast<int>(rng.uniform_u32(nx));
    const int cy = half + static_cast<int>(rng.uniform_u32(ny));
    const float dx = static_cast<float>(cx - ccx);
    const float dy = static_cast<float>(cy - ccy);
    if (dx * dx + dy * dy <= r2) continue;
    const float angle =
        rng.uniform(-cfg.neg_rotation_range, cfg.neg_rotation_range);
    const float b = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
    const float c = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
    return make_sample(demo, cx, cy, angle, b, c, 0);
  }
  throw PlacementError(
      "no crop center outside exclusion radius " +
      std::to_string(cfg.neg_center_exclusion_radius) + " after " +
      std::to_string(kPlacementAttempts) + " attempts");
}

LabeledSample sample_negative_cross(const DemonstrationSet& demos,
                                    int target_id,
                                    const AugmentationConfig& cfg, Rng& rng) {
  // ids only; frame access is charged to the one demo actually sampled
  const std::vector<int> ids = demos.target_ids();
  std::vector<int> others;
  for (int i = 0; i < demos.size(); ++i)
    if (ids[static_cast<std::size_t>(i)] != target_id) others.push_back(i);
  if (others.empty()) {
    throw NotFoundError("cross-demo negative needs a non-target demo");
  }
  const int pick = others[rng.uniform_u32(
      static_cast<std::uint32_t>(others.size()))];
  LabeledSample s = sample_positive(demos.at(pick), cfg, rng);
  s.label = 0;
  return s;
}

Scheme parse_scheme(const std::string& name) {
  if (name == "single") return Scheme::kSingle;
  if (name == "multi") return Scheme::kMulti;
  throw ConfigError("unknown scheme '" + name + "' (single|multi)");
}

std::string scheme_name(Scheme scheme) {
  return scheme == Scheme::kSingle ? "single" : "multi";
}

namespace {

// One sample on its own derived stream; shared by batch and eval paths.
LabeledSample derived_sample(const DemonstrationSet& demos, int target_id,
                             Scheme scheme, bool positive,
                             const AugmentationConfig& cfg,
                             std::uint64_t base, std::uint64_t index,
                             std::uint64_t domain) {
  Rng rng = derive_rng(base, index, domain);
  if (positive) return sample_positive(demos.by_target(target_id), cfg, rng);
  if (scheme == Scheme::kMulti && rng.uniform() < cfg.cross_negative_fraction)
    return sample_negative_cross(demos, target_id, cfg, rng);
  return sample_negative(demos.by_target(target_id), cfg, rng);
}

Batch generate_samples(const DemonstrationSet& demos, int target_id,
                       Scheme scheme, int n_pos, int n_total,
                       const AugmentationConfig& cfg, std::uint64_t base,
                       std::uint64_t domain) {
  validate_config(cfg);
  if (!demos.has_target(target_id)) {
    throw NotFoundError("no demonstration for block " +
                        std::to_string(target_id));
  }
  Batch batch;
  if (scheme == Scheme::kMulti && demos.size() < 2) {
    scheme = Scheme::kSingle;
    batch.fell_back_to_single = true;
  }
  batch.samples.reserve(static_cast<std::size_t>(n_total));
  for (int i = 0; i < n_total; ++i) {
    batch.samples.push_back(derived_sample(
        demos, target_id, scheme, i < n_pos, cfg, base,
        static_cast<std::uint64_t>(i), domain));
  }
  return batch;
}

}  // namespace

Batch generate_batch(const DemonstrationSet& demos, int target_id,
                     Scheme scheme, int batch_size, float pos_fraction,
                     const AugmentationConfig& cfg, Rng& rng) {
  if (batch_size < 2) {
    throw ConfigError("batch_size must be at least 2, got " +
                      std::to_string(batch_size));
  }
  if (!(pos_fraction >= 0.0f) || !(pos_fraction <= 1.0f)) {
    throw ConfigError("pos_fraction must lie in [0,1]");
  }
  const int n_pos = static_cast<int>(
      std::ceil(static_cast<double>(pos_fraction) * batch_size));
  const std::uint64_t base = rng.next_u64();
  return generate_samples(demos, target_id, scheme, n_pos, batch_size, cfg,
                          base, kStreamBatch);
}

Batch generate_eval_set(const DemonstrationSet& demos, int target_id,
                        int n_pos, int n_neg, std::uint64_t seed,
                        const AugmentationConfig& cfg) {
  if (n_pos < 0 || n_neg < 0 || n_pos + n_neg < 1) {
    throw ConfigError("evaluation set needs at least one sample");
  }
  return generate_samples(demos, target_id, Scheme::kMulti, n_pos,
                          n_pos + n_neg, cfg, seed, kStreamEval);
}

Tensor stack_patches(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw ShapeError("cannot stack an empty sample list");
  const int n = static_cast<int>(samples.size());
  Tensor batch({n, 3, kPatch, kPatch});
  const std::size_t stride = static_cast<std::size_t>(3) * kPatch * kPatch;
  for (int i = 0; i < n; ++i) {
    const Image& p = samples[static_cast<std::size_t>(i)].patch;
    if (p.width != kPatch || p.height != kPatch) {
      throw ShapeError("sample patch must be 128x128, got " +
                       std::to_string(p.width) + "x" + std::to_string(p.height));
    }
    const Tensor chw = image_to_chw(p);
    std::copy(chw.data.begin(), chw.data.end(),
              batch.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return batch;
}

Tensor stack_labels(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw ShapeError("cannot stack an empty sample list");
  Tensor labels({static_cast<int>(samples.size())});
  for (std::size_t i = 0; i < samples.size(); ++i)
    labels.data[i] = static_cast<float>(samples[i].label);
  return labels;
}

void save_demo(const Demonstration& demo, const std::string& dir) {
  validate_demo(demo);
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_ppm(demo.frame, (base / "frame.ppm").string());
  std::ostringstream meta;
  meta << "target_id=" << demo.target_id << "\n";
  meta << "pose_x_mm=" << demo.capture_pose.x_mm << "\n";
  meta << "pose_y_mm=" << demo.capture_pose.y_mm << "\n";
  meta << "yaw_rad=" << demo.capture_pose.yaw_rad << "\n";
  const std::string tmp = (base / "meta.txt.tmp").string();
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw NotFoundError("cannot open " + tmp + " for writing");
    out << meta.str();
  }
  std::filesystem::rename(tmp, (base / "meta.txt").string());
}

Demonstration load_demo(const std::string& dir) {
  const std::filesystem::path base(dir);
  Demonstration demo;
  demo.frame = load_ppm((base / "frame.ppm").string());

  const std::string meta_path = (base / "meta.txt").string();
  std::ifstream in(meta_path);
  if (!in) throw NotFoundError("cannot open " + meta_path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CorruptFileError(meta_path + ":" + std::to_string(lineno) +
                             ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const auto& [key, value] : kv) {
    try {
      if (key == "target_id") demo.target_id = std::stoi(value);
      else if (key == "pose_x_mm") demo.capture_pose.x_mm = std::stof(value);
      else if (key == "pose_y_mm") demo.capture_pose.y_mm = std::stof(value);
      else if (key == "yaw_rad") demo.capture_pose.yaw_rad = std::stof(value);
      else throw CorruptFileError(meta_path + ": unknown key '" + key + "'");
    } catch (const CorruptFileError&) {
      throw;
    } catch (const std::exception&) {
      throw CorruptFileError(meta_path + ": bad value for '" + key + "'");
    }
  }
  for (const char* key : {"target_id", "pose_x_mm", "pose_y_mm", "yaw_rad"}) {
    if (!kv.count(key))
      throw CorruptFileError(meta_path + ": missing key '" + std::string(key) +
                             "'");
  }
  try {
    validate_demo(demo);
  } catch (const std::exception& e) {
    throw CorruptFileError(dir + ": " + e.what());
  }
  return demo;
}

}  // namespace grasp

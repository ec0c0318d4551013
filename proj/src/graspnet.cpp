#include "grasp/graspnet.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "grasp/errors.hpp"
#include "grasp/ops.hpp"

namespace grasp {

std::vector<Tensor*> GraspNetParams::tensors() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b,
          &conv4_w, &conv4_b, &fc1_w,   &fc1_b,   &fc2_w,   &fc2_b,
          &out_w,   &out_b};
}

std::vector<const Tensor*> GraspNetParams::tensors() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b,
          &conv4_w, &conv4_b, &fc1_w,   &fc1_b,   &fc2_w,   &fc2_b,
          &out_w,   &out_b};
}

namespace {

const std::vector<std::vector<int>> kParamShapes = {
    {8, 3, 5, 5},   {8},  {8, 8, 5, 5},   {8},  {16, 8, 5, 5},  {16},
    {16, 16, 5, 5}, {16}, {16, 16, 1, 1}, {16}, {16, 16, 1, 1}, {16},
    {1, 16, 1, 1},  {1},
};

}  // namespace

void validate_params(const GraspNetParams& params) {
  const auto ts = params.tensors();
  std::size_t total = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i]->shape != kParamShapes[i]) {
      throw ShapeError("param tensor " + std::to_string(i) + " has shape " +
                       shape_str(ts[i]->shape) + ", expected " +
                       shape_str(kParamShapes[i]));
    }
    total += ts[i]->size();
  }
  if (total != kParamCount) {
    throw ShapeError("parameter count " + std::to_string(total) +
                     ", expected " + std::to_string(kParamCount));
  }
}

GraspNetParams init_params(Rng& rng) {
  GraspNetParams p;
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    *ts[i] = Tensor(kParamShapes[i], 0.0f);
    if (kParamShapes[i].size() == 4) {
      const auto& s = kParamShapes[i];
      const float stddev = std::sqrt(2.0f / static_cast<float>(s[1] * s[2] * s[3]));
      for (auto& v : ts[i]->data) v = rng.normal(0.0f, stddev);
    }
  }
  validate_params(p);
  return p;
}

Tensor net_forward(const GraspNetParams& params, const Tensor& batch,
                   int pool_window, ForwardCache* cache) {
  require_ndim(batch, 4, "net input");
  if (batch.dim(1) != 3) {
    throw ShapeError("net input must have 3 channels, got " + shape_str(batch.shape));
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.pool_window = pool_window;
  c.input = batch;
  c.z1 = conv2d_forward(c.input, params.conv1_w, params.conv1_b, 2, 2);
  c.a1 = relu(c.z1);
  c.z2 = conv2d_forward(c.a1, params.conv2_w, params.conv2_b, 2, 2);
  c.a2 = relu(c.z2);
  c.z3 = conv2d_forward(c.a2, params.conv3_w, params.conv3_b, 2, 2);
  c.a3 = relu(c.z3);
  c.z4 = conv2d_forward(c.a3, params.conv4_w, params.conv4_b, 2, 2);
  c.a4 = relu(c.z4);
  c.pooled = avgpool_forward(c.a4, pool_window, 1);
  c.hz1 = conv2d_forward(c.pooled, params.fc1_w, params.fc1_b, 1, 0);
  c.ha1 = relu(c.hz1);
  c.hz2 = conv2d_forward(c.ha1, params.fc2_w, params.fc2_b, 1, 0);
  c.ha2 = relu(c.hz2);
  c.zout = conv2d_forward(c.ha2, params.out_w, params.out_b, 1, 0);
  c.y = sigmoid(c.zout);
  return c.y;
}

GraspNetParams net_backward(const GraspNetParams& params,
                            const ForwardCache& cache, const Tensor& grad_y) {
  GraspNetParams g;
  Tensor dz = sigmoid_backward(grad_y, cache.y);
  ConvGrads cg = conv2d_backward(dz, cache.ha2, params.out_w, 1, 0);
  g.out_w = std::move(cg.kernel);
  g.out_b = std::move(cg.bias);
  dz = relu_backward(cg.input, cache.hz2);
  cg = conv2d_backward(dz, cache.ha1, params.fc2_w, 1, 0);
  g.fc2_w = std::move(cg.kernel);
  g.fc2_b = std::move(cg.bias);
  dz = relu_backward(cg.input, cache.hz1);
  cg = conv2d_backward(dz, cache.pooled, params.fc1_w, 1, 0);
  g.fc1_w = std::move(cg.kernel);
  g.fc1_b = std::move(cg.bias);
  dz = avgpool_backward(cg.input, cache.a4.shape, cache.pool_window, 1);
  dz = relu_backward(dz, cache.z4);
  cg = conv2d_backward(dz, cache.a3, params.conv4_w, 2, 2);
  g.conv4_w = std::move(cg.kernel);
  g.conv4_b = std::move(cg.bias);
  dz = relu_backward(cg.input, cache.z3);
  cg = conv2d_backward(dz, cache.a2, params.conv3_w, 2, 2);
  g.conv3_w = std::move(cg.kernel);
  g.conv3_b = std::move(cg.bias);
  dz = relu_backward(cg.input, cache.z2);
  cg = conv2d_backward(dz, cache.a1, params.conv2_w, 2, 2);
  g.conv2_w = std::move(cg.kernel);
  g.conv2_b = std::move(cg.bias);
  dz = relu_backward(cg.input, cache.z1);
  cg = conv2d_backward(dz, cache.input, params.conv1_w, 2, 2, false);
  g.conv1_w = std::move(cg.kernel);
  g.conv1_b = std::move(cg.bias);
  return g;
}

float forward_patch(const GraspNetParams& params, const Tensor& patch) {
  require_shape(patch, {3, kPatchSize, kPatchSize}, "patch");
  Tensor batch({1, 3, kPatchSize, kPatchSize});
  batch.data = patch.data;
  const Tensor y = net_forward(params, batch);
  return y.data[0];
}

Tensor forward_batch(const GraspNetParams& params, const Tensor& batch,
                     ForwardCache* cache) {
  require_ndim(batch, 4, "batch");
  if (batch.dim(1) != 3 || batch.dim(2) != kPatchSize || batch.dim(3) != kPatchSize) {
    throw ShapeError("batch must be [N,3,128,128], got " + shape_str(batch.shape));
  }
  const Tensor y = net_forward(params, batch, kPoolWindow, cache);
  Tensor probs({batch.dim(0)});
  probs.data = y.data;
  return probs;
}

ActivationMap forward_full(const GraspNetParams& params, const Tensor& image) {
  require_ndim(image, 3, "image");
  if (image.dim(0) != 3) {
    throw ShapeError("image must be [3,H,W], got " + shape_str(image.shape));
  }
  const int h = image.dim(1), w = image.dim(2);
  if (h < kPatchSize || w < kPatchSize) {
    throw ShapeError("image " + std::to_string(w) + "x" + std::to_string(h) +
                     " is smaller than the 128x128 receptive field");
  }
  Tensor batch({1, 3, h, w});
  batch.data = image.data;
  const Tensor y = net_forward(params, batch);
  ActivationMap map;
  map.rows = y.dim(2);
  map.cols = y.dim(3);
  map.input_h = h;
  map.input_w = w;
  map.values = y.data;
  return map;
}

Tensor upsample_map(const ActivationMap& map, int target_h, int target_w) {
  if (map.rows < 1 || map.cols < 1) throw ShapeError("empty activation map");
  Tensor out({target_h, target_w});
  for (int y = 0; y < target_h; ++y) {
    // cell-space coordinate, clamped so edges replicate
    float v = (static_cast<float>(y) - kCellOffset) / kCellStride;
    v = std::min(std::max(v, 0.0f), static_cast<float>(map.rows - 1));
    const int i0 = std::min(static_cast<int>(v), map.rows > 1 ? map.rows - 2 : 0);
    const float fv = v - static_cast<float>(i0);
    for (int x = 0; x < target_w; ++x) {
      float u = (static_cast<float>(x) - kCellOffset) / kCellStride;
      u = std::min(std::max(u, 0.0f), static_cast<float>(map.cols - 1));
      const int j0 = std::min(static_cast<int>(u), map.cols > 1 ? map.cols - 2 : 0);
      const float fu = u - static_cast<float>(j0);
      const float v00 = map.at(i0, j0);
      const float v01 = map.cols > 1 ? map.at(i0, j0 + 1) : v00;
      const float v10 = map.rows > 1 ? map.at(i0 + 1, j0) : v00;
      const float v11 = (map.rows > 1 && map.cols > 1) ? map.at(i0 + 1, j0 + 1) : v01;
      const float top = v00 + (v01 - v00) * fu;
      const float bot = v10 + (v11 - v10) * fu;
      out.data[static_cast<std::size_t>(y) * target_w + x] = top + (bot - top) * fv;
    }
  }
  return out;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 3])) << 24);
}

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kTensorCount = 14;

std::vector<int> padded_shape(const std::vector<int>& s) {
  std::vector<int> p = s;
  while (p.size() < 4) p.push_back(1);
  return p;
}

}  // namespace

void save_params(const GraspNetParams& params, const std::string& path) {
  validate_params(params);
  std::string buf;
  buf += "GNW1";
  put_u32(buf, kFormatVersion);
  put_u32(buf, kTensorCount);
  put_u32(buf, 0);  // reserved
  const auto ts = params.tensors();
  for (const Tensor* t : ts) {
    for (int d : padded_shape(t->shape)) put_u32(buf, static_cast<std::uint32_t>(d));
  }
  for (const Tensor* t : ts) {
    for (float f : t->data) put_u32(buf, std::bit_cast<std::uint32_t>(f));
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot open " + tmp + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CorruptFileError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

GraspNetParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const std::size_t header = 16 + kTensorCount * 16;
  if (buf.size() < header || buf.compare(0, 4, "GNW1") != 0) {
    throw CorruptFileError(path + ": not a GNW1 weight file");
  }
  if (get_u32(buf, 4) != kFormatVersion) {
    throw CorruptFileError(path + ": unsupported format version " +
                           std::to_string(get_u32(buf, 4)));
  }
  if (get_u32(buf, 8) != kTensorCount) {
    throw CorruptFileError(path + ": expected 14 tensors, file declares " +
                           std::to_string(get_u32(buf, 8)));
  }
  GraspNetParams p;
  const auto ts = p.tensors();
  std::size_t payload = 0;
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    const std::vector<int> expect = padded_shape(kParamShapes[i]);
    for (int d = 0; d < 4; ++d) {
      const std::uint32_t got = get_u32(buf, 16 + i * 16 + d * 4);
      if (got != static_cast<std::uint32_t>(expect[d])) {
        throw CorruptFileError(path + ": tensor " + std::to_string(i) +
                               " shape mismatch in table");
      }
    }
    *ts[i] = Tensor(kParamShapes[i]);
    payload += ts[i]->size();
  }
  if (buf.size() != header + payload * 4) {
    throw CorruptFileError(path + ": file size " + std::to_string(buf.size()) +
                           ", expected " + std::to_string(header + payload * 4));
  }
  std::size_t off = header;
  for (Tensor* t : ts) {
    for (auto& f : t->data) {
      f = std::bit_cast<float>(get_u32(buf, off));
      off += 4;
    }
  }
  validate_params(p);
  return p;
}

}  // namespace grasp

// Times the OpenMP kernels against the serial reference on the real model
// shapes and verifies both produce bit-identical outputs.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "grasp/graspnet.hpp"
#include "grasp/ops.hpp"
#include "grasp/rng.hpp"
#include "grasp/tensor.hpp"

using namespace grasp;

namespace {

double time_call(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto dt = std::chrono::steady_clock::now() - start;
  return std::chrono::duration<double>(dt).count() / reps;
}

Tensor rand_tensor(const std::vector<int>& shape, Rng& rng) {
  Tensor t(shape);
  for (float& v : t.data) v = rng.uniform(-1.0f, 1.0f);
  return t;
}

struct ConvCase {
  const char* name;
  std::vector<int> x, k;
  int stride, pad;
};

void bench_conv(const ConvCase& c, Rng& rng, int reps) {
  const Tensor x = rand_tensor(c.x, rng);
  const Tensor k = rand_tensor(c.k, rng);
  const Tensor b = rand_tensor({c.k[0]}, rng);

  const Tensor ref = serial::conv2d_forward(x, k, b, c.stride, c.pad);
  const Tensor par = conv2d_forward(x, k, b, c.stride, c.pad);
  const bool match = ref.data == par.data;

  const double oh = ref.dim(2), ow = ref.dim(3);
  const double flop =
      2.0 * c.x[0] * oh * ow * c.k[0] * c.k[1] * c.k[2] * c.k[3];

  const double t_par =
      time_call([&] { conv2d_forward(x, k, b, c.stride, c.pad); }, reps);
  const double t_ser = time_call(
      [&] { serial::conv2d_forward(x, k, b, c.stride, c.pad); }, reps);
  std::printf("%-12s openmp %8.2f ms %7.2f GFLOP/s | serial %8.2f ms %7.2f GFLOP/s | %s\n",
              c.name, t_par * 1e3, flop / t_par * 1e-9, t_ser * 1e3,
              flop / t_ser * 1e-9, match ? "bit-exact" : "MISMATCH");
}

void bench_backward(const ConvCase& c, Rng& rng, int reps) {
  const Tensor x = rand_tensor(c.x, rng);
  const Tensor k = rand_tensor(c.k, rng);
  const Tensor b = rand_tensor({c.k[0]}, rng);
  const Tensor y = conv2d_forward(x, k, b, c.stride, c.pad);
  const Tensor gy = rand_tensor(y.shape, rng);

  const ConvGrads ref = serial::conv2d_backward(gy, x, k, c.stride, c.pad);
  const ConvGrads par = conv2d_backward(gy, x, k, c.stride, c.pad);
  const bool match = ref.input.data == par.input.data &&
                     ref.kernel.data == par.kernel.data &&
                     ref.bias.data == par.bias.data;

  const double t_par =
      time_call([&] { conv2d_backward(gy, x, k, c.stride, c.pad); }, reps);
  const double t_ser = time_call(
      [&] { serial::conv2d_backward(gy, x, k, c.stride, c.pad); }, reps);
  const double t_nogi = time_call(
      [&] { conv2d_backward(gy, x, k, c.stride, c.pad, false); }, reps);
  std::printf("%-12s openmp %8.2f ms (gk+gb %6.2f) | serial %8.2f ms                | %s\n",
              (std::string(c.name) + " bwd").c_str(), t_par * 1e3,
              t_nogi * 1e3, t_ser * 1e3, match ? "bit-exact" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  Rng rng(42, 1);

  const ConvCase cases[] = {
      {"conv1 64x", {64, 3, 128, 128}, {8, 3, 5, 5}, 2, 2},
      {"conv2 64x", {64, 8, 64, 64}, {8, 8, 5, 5}, 2, 2},
      {"conv3 64x", {64, 8, 32, 32}, {16, 8, 5, 5}, 2, 2},
      {"conv4 64x", {64, 16, 16, 16}, {16, 16, 5, 5}, 2, 2},
      {"full 1x480p", {1, 3, 480, 640}, {8, 3, 5, 5}, 2, 2},
  };
  for (const ConvCase& c : cases) bench_conv(c, rng, reps);
  for (const ConvCase& c : cases) bench_backward(c, rng, reps);

  // end-to-end training step on the real model, batch 64
  GraspNetParams params = init_params(rng);
  const Tensor batch = rand_tensor({64, 3, 128, 128}, rng);
  const double step = time_call(
      [&] {
        ForwardCache cache;
        net_forward(params, batch, kPoolWindow, &cache);
        Tensor gy(cache.y.shape, 1.0f / 64.0f);
        net_backward(params, cache, gy);
      },
      reps);
  // ~10.7 MFLOP forward + ~2x backward per sample
  std::printf("%-12s %8.2f ms/step (batch 64) ~%5.2f GFLOP/s\n", "train step",
              step * 1e3, 64 * 3 * 10.7e-3 / step);
  return 0;
}

#include <benchmark/benchmark.h>

#include <random>

#include "fedrlr/airlink.hpp"
#include "fedrlr/federation.hpp"
#include "fedrlr/manifold.hpp"

using namespace fedrlr;

namespace {

Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

// Layer shape (out, in, rank) from the benchmark arguments.
struct Layer {
  manifold::RankRPoint x;
  Matrix g;
  explicit Layer(const benchmark::State& s) : x(make(s)), g(gaussian(s.range(0), s.range(1), rng())) {}
  static Rng& rng() {
    static Rng r(1);
    return r;
  }
  static manifold::RankRPoint make(const benchmark::State& s) {
    return manifold::svd_truncate(gaussian(s.range(0), s.range(1), rng()), s.range(2));
  }
};

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({256, 784, 4})->Args({256, 256, 4})->Args({256, 784, 16})->Args({1000, 2000, 40});
}

void BM_TangentProject(benchmark::State& s) {
  Layer l(s);
  for (auto _ : s) benchmark::DoNotOptimize(manifold::tangent_project(l.x, l.g));
}
BENCHMARK(BM_TangentProject)->Apply(shapes)->Unit(benchmark::kMicrosecond);

void BM_RiemannianGradient(benchmark::State& s) {
  Layer l(s);
  for (auto _ : s) benchmark::DoNotOptimize(manifold::riemannian_gradient(l.x, l.g));
}
BENCHMARK(BM_RiemannianGradient)->Apply(shapes)->Unit(benchmark::kMicrosecond);

void BM_RetractTangent(benchmark::State& s) {
  Layer l(s);
  const Matrix xi = manifold::tangent_project(l.x, l.g);
  for (auto _ : s) benchmark::DoNotOptimize(manifold::retract(l.x, xi, 1e-3));
}
BENCHMARK(BM_RetractTangent)->Apply(shapes)->Unit(benchmark::kMicrosecond);

void BM_SvdTruncateDense(benchmark::State& s) {
  Layer l(s);
  const Matrix a = l.x.ambient() + 1e-3 * l.g;
  for (auto _ : s) benchmark::DoNotOptimize(manifold::svd_truncate(a, s.range(2)));
}
BENCHMARK(BM_SvdTruncateDense)->Args({256, 784, 4})->Args({256, 256, 4})->Unit(benchmark::kMillisecond);

void BM_Precode(benchmark::State& s) {
  Layer l(s);
  const auto f = airlink::draw_precoder(s.range(2), 0, 0, Layer::rng());
  const Matrix left = l.x.balanced_left(), right = l.x.balanced_right();
  for (auto _ : s) benchmark::DoNotOptimize(airlink::precode(left, right, f));
}
BENCHMARK(BM_Precode)->Apply(shapes)->Unit(benchmark::kMicrosecond);

void BM_MnistShapedRound(benchmark::State& s) {
  const int k_dev = static_cast<int>(s.range(0));
  Rng rng(2);
  federation::Task task;
  task.kind = LossKind::kCrossEntropy;
  task.arch = Architecture{{784, 256, 256, 10}, {4, 4, 4}, Activation::kReLU, true};
  std::uniform_int_distribution<int> label(0, 9);
  for (int k = 0; k < k_dev; ++k) {
    Dataset d;
    d.features = gaussian(784, 60, rng).cwiseAbs() * 0.3;
    for (int i = 0; i < 60; ++i) d.labels.push_back(label(rng));
    d.device_id = k;
    task.shards.push_back(std::move(d));
  }
  task.test = task.shards.front();
  federation::FedConfig cfg;
  cfg.num_devices = k_dev;
  auto [devices, server] = federation::initialize(task, cfg);
  long t = 0;
  for (auto _ : s) federation::run_round(devices, server, task, cfg, t++);
}
BENCHMARK(BM_MnistShapedRound)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

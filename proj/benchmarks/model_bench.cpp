#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "msw/complexity.hpp"
#include "msw/model.hpp"
#include "msw/ops.hpp"
#include "msw/train.hpp"

using namespace msw;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = normal(rng);
  return Tensor::from_data(shape, std::move(values), requires_grad);
}

MswConfig synthetic_config(std::vector<std::size_t> windows = {5, 10, 20}) {
  MswConfig c;
  c.seq_len = 200;
  c.n_leads = 4;
  c.patch = 5;
  c.embed_dim = 32;
  c.heads = 4;
  c.windows = std::move(windows);
  c.classes = 3;
  return c;
}

std::vector<EcgRecord> random_records(const MswConfig& cfg, std::size_t count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<EcgRecord> out(count);
  for (std::size_t r = 0; r < count; ++r) {
    out[r].id = "r" + std::to_string(r);
    out[r].fold = 1;
    out[r].signal.resize(cfg.n_leads * cfg.seq_len);
    for (auto& v : out[r].signal) v = normal(rng);
    out[r].labels.assign(cfg.classes, static_cast<std::uint8_t>(r % 2));
  }
  return out;
}

std::vector<const EcgRecord*> pointers(const std::vector<EcgRecord>& records) {
  std::vector<const EcgRecord*> out;
  for (const auto& r : records) out.push_back(&r);
  return out;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_WindowAttention(benchmark::State& state) {
  const auto scale = static_cast<std::size_t>(state.range(0));
  const MswConfig cfg = synthetic_config({scale});
  Rng rng(2);
  const ParamStore params = init_params(cfg, rng);
  const Tensor x = random_tensor({16, cfg.tokens(), cfg.embed_dim}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(window_attention(x, params, "branch0.", cfg, scale, false, rng).out);
  }
}
BENCHMARK(BM_WindowAttention)->Arg(5)->Arg(10)->Arg(20)->Arg(40);

static void BM_ForwardEval(benchmark::State& state) {
  const MswConfig cfg = synthetic_config();
  Rng rng(3);
  const ParamStore params = init_params(cfg, rng);
  const auto records = random_records(cfg, 16, rng);
  const auto batch = pointers(records);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(forward(batch, cfg, params, false, rng).probs);
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ForwardEval)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  const MswConfig cfg = synthetic_config();
  Rng rng(4);
  ParamStore params = init_params(cfg, rng);
  const auto records = random_records(cfg, 16, rng);
  const auto batch = pointers(records);
  const Tensor labels = label_tensor(batch, cfg.classes);
  AdamState adam;
  for (auto _ : state) {
    params.zero_grad();
    const auto out = forward(batch, cfg, params, true, rng);
    backward(bce_loss(out.probs, labels));
    adam_step(params, adam, 1e-4);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_MeasureMacs(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(measure_macs(200, 32, {5, 10, 20}, 4));
}
BENCHMARK(BM_MeasureMacs)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msw/config.hpp"
#include "msw/data.hpp"
#include "msw/metrics.hpp"
#include "msw/model.hpp"
#include "msw/tensor.hpp"

namespace msw {

inline constexpr double kProbClip = 1e-12;

// Mean per-label binary cross-entropy over B*K entries. Probabilities are
// clipped to [1e-12, 1 - 1e-12]; clipped entries pass no gradient.
Tensor bce_loss(const Tensor& probs, const Tensor& labels);

// Multi-hot labels of the given records as a [B, K] tensor.
Tensor label_tensor(std::span<const EcgRecord* const> records, std::size_t classes);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

// Bias-corrected Adam. Every parameter must carry a gradient.
void adam_step(ParamStore& params, AdamState& state, double lr);

// lr0 * factor^-(floor(epoch / every)), epochs counted from 0.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct Predictions {
  EvalBatch batch;
  double loss = 0.0;
};

// Evaluation-mode scores for the given record indices.
Predictions predict(const MswConfig& cfg, const ParamStore& params, const Dataset& ds,
                    std::span<const std::size_t> indices, std::size_t batch_size = 64);

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  MetricReport metrics;
  double lr = 0.0;
};

struct TrainResult {
  ParamStore best;  // highest validation macro-F1 (earliest on ties)
  ParamStore last;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = 0.0;
};

// Seeded mini-batch training on split.train with per-epoch validation on
// split.val. `ds` is expected to be standardized already. Throws
// NumericError on a non-finite loss.
TrainResult train_loop(const MswConfig& cfg, ParamStore params, const Dataset& ds,
                       const FoldSplit& split, const TrainConfig& train,
                       std::ostream* progress = nullptr);

inline constexpr const char* kLogHeader =
    "epoch,split,loss,accuracy,macro_f1,samples_f1,auc_macro,auc_samples,lr";

std::string format_log_csv(const std::vector<EpochLog>& log);

}  // namespace msw

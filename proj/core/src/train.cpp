#include "msw/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "msw/errors.hpp"
#include "msw/ops.hpp"

namespace msw {
namespace {

std::vector<const EcgRecord*> gather_records(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<const EcgRecord*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&ds.records.at(i));
  return out;
}

void append(EvalBatch& batch, const Tensor& probs, std::span<const EcgRecord* const> records) {
  batch.scores.insert(batch.scores.end(), probs.data().begin(), probs.data().end());
  for (const auto* rec : records) batch.labels.insert(batch.labels.end(), rec->labels.begin(), rec->labels.end());
  batch.rows += records.size();
}

void check_dataset(const MswConfig& cfg, const Dataset& ds) {
  const auto& h = ds.header;
  if (h.n_leads != cfg.n_leads || h.seq_len != cfg.seq_len || h.classes != cfg.classes) {
    throw AdmissibilityError("dataset shape (n_leads=" + std::to_string(h.n_leads) +
                             ", L=" + std::to_string(h.seq_len) + ", K=" + std::to_string(h.classes) +
                             ") does not match the model configuration (n_leads=" +
                             std::to_string(cfg.n_leads) + ", L=" + std::to_string(cfg.seq_len) +
                             ", K=" + std::to_string(cfg.classes) + ")");
  }
}

std::string number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Tensor bce_loss(const Tensor& probs, const Tensor& labels) {
  if (probs.shape() != labels.shape()) {
    throw DimensionError("bce_loss: probabilities " + shape_str(probs.shape()) + " vs labels " +
                         shape_str(labels.shape()));
  }
  const auto n = probs.numel();
  if (n == 0) throw DimensionError("bce_loss on an empty batch");
  const auto pd = probs.data();
  const auto yd = labels.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pd[i], kProbClip, 1.0 - kProbClip);
    total -= yd[i] * std::log(p) + (1.0 - yd[i]) * std::log(1.0 - p);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::make_result({}, {total * inv_n}, {probs, labels}, [inv_n](detail::Node& self) {
    double* gp = detail::input_grad(self, 0);
    if (!gp) return;
    const auto& pd = self.parents[0]->data;
    const auto& yd = self.parents[1]->data;
    const double g = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double p = pd[i];
      if (p < kProbClip || p > 1.0 - kProbClip) continue;
      gp[i] += g * (p - yd[i]) / (p * (1.0 - p));
    }
  });
}

Tensor label_tensor(std::span<const EcgRecord* const> records, std::size_t classes) {
  std::vector<double> out;
  out.reserve(records.size() * classes);
  for (const auto* rec : records) {
    if (rec->labels.size() != classes) {
      throw DimensionError("record " + rec->id + " has " + std::to_string(rec->labels.size()) +
                           " labels, expected " + std::to_string(classes));
    }
    for (auto l : rec->labels) out.push_back(static_cast<double>(l));
  }
  return Tensor::from_data({records.size(), classes}, std::move(out));
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw GraphError("parameter " + name + " has no gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, param] : params) {
    Tensor handle = param;
    auto values = handle.mutable_data();
    const auto grad = param.grad();
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  const auto drops = static_cast<double>(epoch / cfg.lr_decay_every);
  return cfg.lr0 / std::pow(cfg.lr_decay_factor, drops);
}

Predictions predict(const MswConfig& cfg, const ParamStore& params, const Dataset& ds,
                    std::span<const std::size_t> indices, std::size_t batch_size) {
  NoGradGuard no_grad;
  Rng unused(0);
  Predictions out;
  out.batch.classes = cfg.classes;
  double loss_sum = 0.0;
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto count = std::min(batch_size, indices.size() - start);
    const auto records = gather_records(ds, indices.subspan(start, count));
    auto result = forward(records, cfg, params, /*train=*/false, unused);
    loss_sum += bce_loss(result.probs, label_tensor(records, cfg.classes)).item() *
                static_cast<double>(count);
    append(out.batch, result.probs, records);
  }
  out.loss = indices.empty() ? 0.0 : loss_sum / static_cast<double>(indices.size());
  return out;
}

TrainResult train_loop(const MswConfig& cfg, ParamStore params, const Dataset& ds,
                       const FoldSplit& split, const TrainConfig& train, std::ostream* progress) {
  cfg.validate();
  train.validate();
  check_dataset(cfg, ds);
  check_params(cfg, params);
  if (split.train.empty()) throw DataError("no training records in folds 1-8");

  Rng shuffle_rng(train.seed);
  Rng dropout_rng(train.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState adam;
  TrainResult result;
  bool have_best = false;
  std::vector<std::size_t> order(split.train.begin(), split.train.end());

  for (std::size_t epoch = 0; epoch < train.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, train);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EvalBatch seen;
    seen.classes = cfg.classes;
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size, ++batch_index) {
      const auto count = std::min(train.batch_size, order.size() - start);
      const auto records =
          gather_records(ds, std::span<const std::size_t>(order).subspan(start, count));
      auto out = forward(records, cfg, params, /*train=*/true, dropout_rng);
      auto loss = bce_loss(out.probs, label_tensor(records, cfg.classes));
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      params.zero_grad();
      backward(loss);
      adam_step(params, adam, lr);
      loss_sum += loss.item() * static_cast<double>(count);
      append(seen, out.probs, records);
    }
    EpochLog train_row{epoch, "train", loss_sum / static_cast<double>(order.size()),
                       evaluate_metrics(seen), lr};
    train_row.metrics.loss = train_row.loss;
    result.log.push_back(train_row);

    if (!split.val.empty()) {
      auto val = predict(cfg, params, ds, split.val);
      EpochLog val_row{epoch, "val", val.loss, evaluate_metrics(val.batch), lr};
      val_row.metrics.loss = val.loss;
      if (!have_best || val_row.metrics.macro_f1 > result.best_val_macro_f1) {
        have_best = true;
        result.best = params.clone();
        result.best_epoch = epoch;
        result.best_val_macro_f1 = val_row.metrics.macro_f1;
      }
      result.log.push_back(val_row);
    }
    if (progress && train.report_every && (epoch + 1) % train.report_every == 0) {
      *progress << "epoch " << epoch << " lr " << lr << " train_loss " << train_row.loss
                << " train_macro_f1 " << train_row.metrics.macro_f1;
      if (!split.val.empty()) {
        const auto& v = result.log.back();
        *progress << " val_loss " << v.loss << " val_macro_f1 " << v.metrics.macro_f1;
      }
      *progress << "\n";
      progress->flush();
    }
  }
  result.last = params.clone();
  if (!have_best) {
    result.best = params.clone();
    result.best_epoch = train.max_epochs == 0 ? 0 : train.max_epochs - 1;
  }
  return result;
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::string out = std::string(kLogHeader) + "\n";
  for (const auto& row : log) {
    const auto& m = row.metrics;
    out += std::to_string(row.epoch) + "," + row.split + "," + number(row.loss) + "," +
           number(m.accuracy) + "," + number(m.macro_f1) + "," + number(m.samples_f1) + "," +
           number(m.auc_macro.value_or(NAN)) + "," + number(m.auc_samples.value_or(NAN)) + "," +
           number(row.lr) + "\n";
  }
  return out;
}

}  // namespace msw

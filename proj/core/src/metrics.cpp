#include "msw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "msw/errors.hpp"

namespace msw {
namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_rows(const EvalBatch& batch) {
  batch.validate();
  if (batch.rows == 0 || batch.classes == 0) throw UndefinedMetricError("metric on an empty batch");
}

// AUC of one unit given (score, is_positive) pairs, via average ranks.
// Returns nullopt when positives or negatives are missing.
std::optional<double> unit_auc(std::vector<std::pair<double, bool>>& items) {
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t positives = 0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    // ranks i+1 .. j averaged
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (items[t].second) {
        ++positives;
        rank_sum += avg_rank;
      }
    }
    i = j;
  }
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  return (rank_sum - 0.5 * p * (p + 1.0)) / (p * static_cast<double>(negatives));
}

}  // namespace

void EvalBatch::validate() const {
  if (scores.size() != rows * classes || labels.size() != rows * classes) {
    throw DimensionError("evaluation batch of " + std::to_string(rows) + "x" +
                         std::to_string(classes) + " holds " + std::to_string(scores.size()) +
                         " scores and " + std::to_string(labels.size()) + " labels");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("score outside [0, 1]: " + std::to_string(s));
  }
  for (auto l : labels) {
    if (l > 1) throw DataError("labels must be 0 or 1");
  }
}

std::vector<Confusion> threshold_confusion(const EvalBatch& batch) {
  batch.validate();
  std::vector<Confusion> out(batch.classes);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    for (std::size_t k = 0; k < batch.classes; ++k) {
      const bool truth = batch.label(r, k);
      const bool pred = batch.predicted(r, k);
      auto& c = out[k];
      if (truth && pred) ++c.tp;
      else if (!truth && pred) ++c.fp;
      else if (truth && !pred) ++c.fn;
      else ++c.tn;
    }
  }
  return out;
}

double accuracy(const EvalBatch& batch) {
  require_rows(batch);
  std::uint64_t correct = 0;
  for (const auto& c : threshold_confusion(batch)) correct += c.tp + c.tn;
  return ratio(correct, batch.rows * batch.classes);
}

double precision(const Confusion& c) { return ratio(c.tp, c.tp + c.fp); }
double recall(const Confusion& c) { return ratio(c.tp, c.tp + c.fn); }

double f1_score(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

double macro_f1(const EvalBatch& batch) {
  require_rows(batch);
  double total = 0.0;
  for (const auto& c : threshold_confusion(batch)) total += f1_score(precision(c), recall(c));
  return total / static_cast<double>(batch.classes);
}

double samples_f1(const EvalBatch& batch) {
  require_rows(batch);
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    Confusion c;
    for (std::size_t k = 0; k < batch.classes; ++k) {
      const bool truth = batch.label(r, k), pred = batch.predicted(r, k);
      c.tp += truth && pred;
      c.fp += !truth && pred;
      c.fn += truth && !pred;
    }
    total += (c.tp + c.fp + c.fn == 0) ? 1.0 : f1_score(precision(c), recall(c));
  }
  return total / static_cast<double>(batch.rows);
}

AucResult roc_auc(const EvalBatch& batch, AucMode mode) {
  require_rows(batch);
  AucResult result;
  double total = 0.0;
  const bool by_class = mode == AucMode::Macro;
  const std::size_t units = by_class ? batch.classes : batch.rows;
  const std::size_t members = by_class ? batch.rows : batch.classes;
  std::vector<std::pair<double, bool>> items(members);
  for (std::size_t u = 0; u < units; ++u) {
    for (std::size_t m = 0; m < members; ++m) {
      const auto r = by_class ? m : u;
      const auto k = by_class ? u : m;
      items[m] = {batch.score(r, k), batch.label(r, k)};
    }
    if (auto auc = unit_auc(items)) {
      total += *auc;
      ++result.used;
    } else {
      ++result.skipped;
    }
  }
  if (result.used == 0) {
    throw UndefinedMetricError(std::string("ROC-AUC (") + (by_class ? "macro" : "samples") +
                               ") undefined: no unit has both positive and negative labels");
  }
  result.value = total / static_cast<double>(result.used);
  return result;
}

MetricReport evaluate_metrics(const EvalBatch& batch) {
  require_rows(batch);
  MetricReport report;
  report.threshold = batch.threshold;
  report.accuracy = accuracy(batch);
  for (const auto& c : threshold_confusion(batch)) {
    const double p = precision(c), r = recall(c);
    report.precision.push_back(p);
    report.recall.push_back(r);
    report.f1.push_back(f1_score(p, r));
    if (p + r == 0.0) ++report.zero_division_classes;
  }
  report.macro_f1 = macro_f1(batch);
  report.samples_f1 = samples_f1(batch);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < batch.classes; ++k) {
      const bool truth = batch.label(r, k), pred = batch.predicted(r, k);
      tp += truth && pred;
      fp += !truth && pred;
      fn += truth && !pred;
    }
    if (tp + fp + fn == 0) ++report.empty_samples;
    else if (tp == 0) ++report.zero_division_samples;
  }
  try {
    auto auc = roc_auc(batch, AucMode::Macro);
    report.auc_macro = auc.value;
    report.auc_skipped_classes = auc.skipped;
  } catch (const UndefinedMetricError&) {
    report.auc_skipped_classes = batch.classes;
  }
  try {
    auto auc = roc_auc(batch, AucMode::Samples);
    report.auc_samples = auc.value;
    report.auc_skipped_samples = auc.skipped;
  } catch (const UndefinedMetricError&) {
    report.auc_skipped_samples = batch.rows;
  }
  return report;
}

std::string report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["threshold"] = r.threshold;
  j["accuracy_variant"] = "per-label";
  j["loss"] = r.loss ? nlohmann::ordered_json(*r.loss) : nlohmann::ordered_json(nullptr);
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["samples_f1"] = r.samples_f1;
  j["auc_macro"] = r.auc_macro ? nlohmann::ordered_json(*r.auc_macro) : nlohmann::ordered_json(nullptr);
  j["auc_samples"] =
      r.auc_samples ? nlohmann::ordered_json(*r.auc_samples) : nlohmann::ordered_json(nullptr);
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["zero_division_classes"] = r.zero_division_classes;
  j["empty_samples"] = r.empty_samples;
  j["zero_division_samples"] = r.zero_division_samples;
  j["auc_skipped_classes"] = r.auc_skipped_classes;
  j["auc_skipped_samples"] = r.auc_skipped_samples;
  return j.dump(2);
}

}  // namespace msw

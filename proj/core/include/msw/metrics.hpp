#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace msw {

/// Scores and multi-hot labels for B samples and K classes, row-major.
struct EvalBatch {
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  double threshold = 0.5;

  double score(std::size_t r, std::size_t k) const { return scores[r * classes + k]; }
  bool label(std::size_t r, std::size_t k) const { return labels[r * classes + k] != 0; }
  bool predicted(std::size_t r, std::size_t k) const { return score(r, k) >= threshold; }

  // Throws DimensionError / DataError when sizes or ranges are off.
  void validate() const;
};

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
};

std::vector<Confusion> threshold_confusion(const EvalBatch& batch);

// Fraction of correct label decisions over all B*K entries.
double accuracy(const EvalBatch& batch);

double precision(const Confusion& c);  // 0/0 -> 0
double recall(const Confusion& c);     // 0/0 -> 0
double f1_score(double precision, double recall);  // 0/0 -> 0

// Unweighted mean of per-class F1.
double macro_f1(const EvalBatch& batch);
// Mean of per-sample F1. A sample with no true and no predicted positives
// scores 1.
double samples_f1(const EvalBatch& batch);

enum class AucMode { Macro, Samples };

struct AucResult {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // units with only positives or only negatives
};

// Mann-Whitney AUC with ties counted 1/2, averaged over classes (Macro) or
// samples (Samples). Throws UndefinedMetricError with no valid unit.
AucResult roc_auc(const EvalBatch& batch, AucMode mode);

struct MetricReport {
  double threshold = 0.5;
  std::optional<double> loss;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_f1 = 0.0;
  double samples_f1 = 0.0;
  std::optional<double> auc_macro;
  std::optional<double> auc_samples;
  std::size_t zero_division_classes = 0;  // F1 taken as 0 by the 0/0 rule
  std::size_t empty_samples = 0;          // no true, no predicted positives
  std::size_t zero_division_samples = 0;  // F1 taken as 0 by the 0/0 rule
  std::size_t auc_skipped_classes = 0;
  std::size_t auc_skipped_samples = 0;
};

MetricReport evaluate_metrics(const EvalBatch& batch);

// Keys match the training-log columns: loss, accuracy, macro_f1,
// samples_f1, auc_macro, auc_samples. Undefined AUCs are null.
std::string report_to_json(const MetricReport& report);

}  // namespace msw

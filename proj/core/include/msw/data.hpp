#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msw {

/// One recording: n_leads x L samples stored lead-major, plus its labels.
struct EcgRecord {
  std::string id;
  std::vector<double> signal;
  std::vector<std::uint8_t> labels;  // multi-hot, length K
  int fold = 1;                      // 1..10

  std::span<const double> lead(std::size_t index, std::size_t seq_len) const {
    return std::span<const double>(signal).subspan(index * seq_len, seq_len);
  }
};

struct DatasetHeader {
  std::size_t n_leads = 12;
  std::size_t seq_len = 1000;
  std::size_t classes = 0;
  double sample_rate = 100.0;
  std::vector<std::string> class_names;
};

// Per-lead mean and standard deviation taken from the training folds.
struct LeadStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Dataset {
  DatasetHeader header;
  std::vector<EcgRecord> records;
  std::optional<LeadStats> stats;  // set once standardized
};

inline constexpr double kStdFloor = 1e-8;

// Signal file: one text line "n_leads L K sample_rate\n", then
// little-endian float64 samples, record-major then lead-major.
// Label file: CSV with header "id,fold,<class>,..." and one 0/1 row per
// record in the same order as the signal file. Lines starting with '#'
// before the header are comments.
DatasetHeader read_signal_header(const std::string& signal_path);

// When `expected_classes` is non-empty the label header must only use
// those names.
Dataset load_dataset(const std::string& signal_path, const std::string& label_path,
                     const std::vector<std::string>& expected_classes = {});
// `comment` lines are written as '#' lines at the top of the label file.
void save_dataset(const Dataset& ds, const std::string& signal_path,
                  const std::string& label_path, const std::string& comment = {});
std::string signal_header_line(const DatasetHeader& header);

bool is_training_fold(int fold);
LeadStats compute_lead_stats(const Dataset& ds);
void apply_standardization(Dataset& ds, const LeadStats& stats);
// Statistics come from folds 1-8 only; every record is transformed.
Dataset standardize(const Dataset& ds);

struct FoldSplit {
  std::vector<std::size_t> train;  // folds 1-8
  std::vector<std::size_t> val;    // fold 9
  std::vector<std::size_t> test;   // fold 10
  std::vector<std::string> warnings;
};

FoldSplit fold_split(const Dataset& ds);

/// Parameters of the synthetic quasi-periodic pulse generator. Each class
/// injects one motif when its label is set:
///   0: pulses widened by `width_factor`
///   1: amplitude multiplied by `amplitude_factor` on the first half of leads
///   2: inter-pulse interval lengthened by `interval_factor`
struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t records = 750;
  std::size_t n_leads = 4;
  std::size_t seq_len = 200;
  std::size_t classes = 3;
  double sample_rate = 100.0;

  double pulse_width = 1.5;      // gaussian sigma, samples
  double pulse_amplitude = 1.0;
  double interval = 40.0;        // samples between pulses
  double noise_std = 0.05;

  double width_factor = 2.5;
  double amplitude_factor = 2.0;
  double interval_factor = 2.0;
  double label_prob = 0.5;       // marginal of every class

  // Per-record variability. All zero (with noise_std 0) makes every
  // unlabelled record the same baseline.
  double amplitude_jitter = 0.1;  // relative, uniform
  double interval_jitter = 0.05;  // relative, uniform
  bool random_phase = true;
};

// Classes WIDE, AMP, SLOW (the first `classes` of them). Every lead carries
// the same pulse train (gaussian pulse plus a smaller trailing wave) with a
// per-lead gain. With n leads:
//   AMP  scales leads [0, max(1, n/2)) by amplitude_factor
//   WIDE widens pulse and trailing wave by width_factor on leads
//        [n/2, n-1) (for n > 2; lead n-1 stays unwidened as a rhythm reference)
//   SLOW stretches the interval by interval_factor on every lead
// Folds are assigned round-robin, record r in fold r % 10 + 1.
Dataset synth_generate(const SynthSpec& spec);

}  // namespace msw

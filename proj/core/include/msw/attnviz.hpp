#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msw/config.hpp"
#include "msw/data.hpp"
#include "msw/model.hpp"

namespace msw {

struct WindowAttention {
  std::size_t start_patch = 0;  // original index of the window's first token
  std::size_t heads = 0;
  std::size_t size = 0;         // M
  std::vector<double> attn;     // heads x M x M, row = query

  double at(std::size_t h, std::size_t i, std::size_t j) const {
    return attn[(h * size + i) * size + j];
  }
};

struct BranchDump {
  std::size_t scale = 0;
  std::size_t shift = 0;
  std::vector<WindowAttention> windows;  // in partition order
  std::vector<double> token_scores;      // length T, original order
};

struct AttentionDump {
  std::string record_id;
  std::size_t patch = 1;
  std::vector<double> beta;
  std::vector<BranchDump> branches;
  std::vector<double> fused_token_scores;   // length T, in [0, 1]
  std::vector<double> fused_sample_scores;  // length L, in [0, 1]
  ConfigMap config;                         // settings of the producing run
};

// Per-token attention received: for each token, the mean over heads of the
// mean of its column within its window, in original token order.
std::vector<double> token_scores(const BranchDump& branch);

// Maps onto [0, 1]; a constant vector maps to all 0.5.
std::vector<double> minmax_normalize(std::span<const double> values);

// sum_i beta_i * minmax(branch_i), then min-max normalized again.
std::vector<double> fuse_scores(const std::vector<std::vector<double>>& branch_scores,
                                std::span<const double> beta);

// Repeats each token score across its P samples.
std::vector<double> expand_to_samples(std::span<const double> token_scores, std::size_t patch);

// Builds the dump for record `index` of a forward pass.
AttentionDump extract_dump(const ForwardOutput& out, std::size_t index, const MswConfig& cfg,
                           const std::string& record_id);

// JSON: {record_id, beta, branches: [{M, windows: [{start_patch, heads, attn}],
// token_scores}], fused_sample_scores, config}.
std::string dump_to_json(const AttentionDump& dump);
AttentionDump dump_from_json(const std::string& text);

// Blue (low) to red (high) in RGB, linear in the normalized score.
std::string score_color(double score);

// 1200x200 viewBox; runs of equal colour share one polyline.
std::string render_lead_svg(std::span<const double> waveform, std::span<const double> scores,
                            const std::string& title, const std::string& description = {});

struct ExportPaths {
  std::string json;
  std::string svg_prefix;      // files are <prefix>lead<N>.svg
  std::vector<std::size_t> leads;
};

// Writes the JSON and one SVG per requested lead. Returns written paths.
std::vector<std::string> export_dump(const AttentionDump& dump, const EcgRecord& record,
                                     std::size_t seq_len, const ExportPaths& paths);

}  // namespace msw

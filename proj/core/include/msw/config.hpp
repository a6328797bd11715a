#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace msw {

/// Shape hyperparameters of the network. Defaults are the full-size
/// PTB-XL setting (12 leads, 10 s at 100 Hz, 5-sample patches, C=512).
struct MswConfig {
  std::size_t seq_len = 1000;      // L, samples per lead
  std::size_t n_leads = 12;
  std::size_t patch = 5;           // P, samples per token
  std::size_t embed_dim = 512;     // C
  std::size_t heads = 8;
  std::vector<std::size_t> windows{5, 10, 20};  // scales in tokens
  std::size_t classes = 5;         // K
  std::size_t shift = 0;           // cyclic token offset before partitioning
  double attn_dropout = 0.2;
  std::size_t mlp_ratio = 4;

  std::size_t tokens() const { return patch == 0 ? 0 : seq_len / patch; }
  std::size_t head_dim() const { return heads == 0 ? 0 : embed_dim / heads; }
  std::size_t patch_width() const { return n_leads * patch; }
  std::size_t branches() const { return windows.size(); }

  // Throws AdmissibilityError on the first violated constraint.
  void validate() const;
};

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 16;
  double lr0 = 1e-4;
  double lr_decay_factor = 10.0;
  std::size_t lr_decay_every = 10;
  std::uint64_t seed = 0;
  std::size_t report_every = 1;  // epochs between progress lines; 0 = silent

  void validate() const;
};

// Flat `key = value` text; '#' starts a comment. Keys mirror the field
// names: L n_leads P C heads windows K shift attn_dropout mlp_ratio
// max_epochs batch_size lr0 lr_decay_factor lr_decay_every seed report_every.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::string& path);

// Applies every entry; unknown keys or unparsable values raise
// AdmissibilityError.
void apply_config(const ConfigMap& entries, MswConfig& model, TrainConfig& train);
void apply_config(const ConfigMap& entries, MswConfig& model);

ConfigMap to_config_map(const MswConfig& model);
ConfigMap to_config_map(const MswConfig& model, const TrainConfig& train);
std::string format_config(const ConfigMap& entries);

}  // namespace msw

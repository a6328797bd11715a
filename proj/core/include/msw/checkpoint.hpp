#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msw/config.hpp"
#include "msw/data.hpp"
#include "msw/model.hpp"

namespace msw {

struct CheckpointMeta {
  ConfigMap config;  // fully resolved model (and training) settings
  std::vector<std::string> class_names;
  std::optional<LeadStats> standardization;
};

struct Checkpoint {
  ParamStore params;
  CheckpointMeta meta;
};

// `<base>.json` is the manifest (name -> shape, dtype, byte offset plus
// metadata); `<base>.bin` is the little-endian float64 blob. Values
// round-trip bitwise.
std::string manifest_path(const std::string& base);
std::string blob_path(const std::string& base);

void save_checkpoint(const std::string& base, const ParamStore& params,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& base);

}  // namespace msw

#include "msw/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "msw/errors.hpp"

namespace msw {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw AdmissibilityError("config key '" + key + "': expected a non-negative integer, got '" +
                             value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw AdmissibilityError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw AdmissibilityError("config key '" + key + "': empty list");
  return out;
}

// shortest text that parses back to the same double
std::string to_text(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

bool apply_model_key(const std::string& key, const std::string& value, MswConfig& m) {
  if (key == "L") m.seq_len = parse_size(key, value);
  else if (key == "n_leads") m.n_leads = parse_size(key, value);
  else if (key == "P") m.patch = parse_size(key, value);
  else if (key == "C") m.embed_dim = parse_size(key, value);
  else if (key == "heads") m.heads = parse_size(key, value);
  else if (key == "windows") m.windows = parse_list(key, value);
  else if (key == "K") m.classes = parse_size(key, value);
  else if (key == "shift") m.shift = parse_size(key, value);
  else if (key == "attn_dropout") m.attn_dropout = parse_double(key, value);
  else if (key == "mlp_ratio") m.mlp_ratio = parse_size(key, value);
  else return false;
  return true;
}

bool apply_train_key(const std::string& key, const std::string& value, TrainConfig& t) {
  if (key == "max_epochs") t.max_epochs = parse_size(key, value);
  else if (key == "batch_size") t.batch_size = parse_size(key, value);
  else if (key == "lr0") t.lr0 = parse_double(key, value);
  else if (key == "lr_decay_factor") t.lr_decay_factor = parse_double(key, value);
  else if (key == "lr_decay_every") t.lr_decay_every = parse_size(key, value);
  else if (key == "seed") t.seed = parse_size(key, value);
  else if (key == "report_every") t.report_every = parse_size(key, value);
  else return false;
  return true;
}

}  // namespace

void MswConfig::validate() const {
  auto fail = [](const std::string& msg) { throw AdmissibilityError(msg); };
  if (seq_len == 0 || n_leads == 0) fail("L and n_leads must be positive");
  if (patch == 0) fail("patch size P must be positive");
  if (seq_len % patch != 0) {
    fail("patch size " + std::to_string(patch) + " does not divide signal length " +
         std::to_string(seq_len) + "; P must divide L");
  }
  if (embed_dim == 0 || heads == 0) fail("C and heads must be positive");
  if (embed_dim % heads != 0) {
    fail("head count " + std::to_string(heads) + " does not divide embedding dim " +
         std::to_string(embed_dim));
  }
  if (classes == 0) fail("class count K must be positive");
  if (windows.empty()) fail("at least one window scale is required");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  const auto t = tokens();
  std::size_t smallest = windows.front();
  for (auto m : windows) {
    if (m == 0 || t % m != 0) {
      fail("window scale " + std::to_string(m) + " does not divide the token count " +
           std::to_string(t) + " (L/P = " + std::to_string(seq_len) + "/" +
           std::to_string(patch) + "); every window scale M must divide L/P");
    }
    smallest = std::min(smallest, m);
  }
  if (shift >= smallest) {
    fail("shift " + std::to_string(shift) + " must be smaller than the smallest window scale " +
         std::to_string(smallest));
  }
  if (!(attn_dropout >= 0.0 && attn_dropout < 1.0)) fail("attn_dropout must lie in [0, 1)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw AdmissibilityError("batch_size must be at least 1");
  if (!(lr0 > 0.0)) throw AdmissibilityError("lr0 must be positive");
  if (!(lr_decay_factor > 0.0)) throw AdmissibilityError("lr_decay_factor must be positive");
  if (lr_decay_every == 0) throw AdmissibilityError("lr_decay_every must be at least 1");
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw AdmissibilityError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AdmissibilityError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

void apply_config(const ConfigMap& entries, MswConfig& model, TrainConfig& train) {
  for (const auto& [key, value] : entries) {
    if (!apply_model_key(key, value, model) && !apply_train_key(key, value, train)) {
      throw AdmissibilityError("unknown config key '" + key + "'");
    }
  }
}

void apply_config(const ConfigMap& entries, MswConfig& model) {
  for (const auto& [key, value] : entries) {
    if (!apply_model_key(key, value, model)) {
      throw AdmissibilityError("unknown model config key '" + key + "'");
    }
  }
}

ConfigMap to_config_map(const MswConfig& m) {
  std::string windows;
  for (std::size_t i = 0; i < m.windows.size(); ++i) {
    if (i) windows += ",";
    windows += std::to_string(m.windows[i]);
  }
  return {
      {"L", std::to_string(m.seq_len)},      {"n_leads", std::to_string(m.n_leads)},
      {"P", std::to_string(m.patch)},        {"C", std::to_string(m.embed_dim)},
      {"heads", std::to_string(m.heads)},    {"windows", windows},
      {"K", std::to_string(m.classes)},      {"shift", std::to_string(m.shift)},
      {"attn_dropout", to_text(m.attn_dropout)},
      {"mlp_ratio", std::to_string(m.mlp_ratio)},
  };
}

ConfigMap to_config_map(const MswConfig& model, const TrainConfig& t) {
  auto out = to_config_map(model);
  out["max_epochs"] = std::to_string(t.max_epochs);
  out["batch_size"] = std::to_string(t.batch_size);
  out["lr0"] = to_text(t.lr0);
  out["lr_decay_factor"] = to_text(t.lr_decay_factor);
  out["lr_decay_every"] = std::to_string(t.lr_decay_every);
  out["seed"] = std::to_string(t.seed);
  out["report_every"] = std::to_string(t.report_every);
  return out;
}

std::string format_config(const ConfigMap& entries) {
  std::string out;
  for (const auto& [key, value] : entries) out += key + " = " + value + "\n";
  return out;
}

}  // namespace msw

#include "msw/attnviz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "msw/errors.hpp"

namespace msw {
namespace {

using nlohmann::ordered_json;

constexpr double kViewWidth = 1200.0;
constexpr double kViewHeight = 200.0;
constexpr double kMargin = 10.0;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("write failed for " + path);
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<double> token_scores(const BranchDump& branch) {
  if (branch.windows.empty()) throw DataError("attention dump has no windows");
  const auto m = branch.scale;
  const auto tokens = branch.windows.size() * m;
  std::vector<double> out(tokens, 0.0);
  for (const auto& w : branch.windows) {
    if (w.size != m || w.attn.size() != w.heads * m * m || w.heads == 0) {
      throw DataError("attention window does not match scale " + std::to_string(m));
    }
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t h = 0; h < w.heads; ++h) {
        double column = 0.0;
        for (std::size_t i = 0; i < m; ++i) column += w.at(h, i, j);
        acc += column / static_cast<double>(m);
      }
      out[(w.start_patch + j) % tokens] = acc / static_cast<double>(w.heads);
    }
  }
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double low = *lo, range = *hi - *lo;
  std::vector<double> out(values.size(), 0.5);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - low) / range;
  }
  return out;
}

std::vector<double> fuse_scores(const std::vector<std::vector<double>>& branch_scores,
                                std::span<const double> beta) {
  if (branch_scores.empty() || branch_scores.size() != beta.size()) {
    throw DimensionError("fuse_scores: " + std::to_string(branch_scores.size()) +
                         " branches but " + std::to_string(beta.size()) + " weights");
  }
  const auto n = branch_scores.front().size();
  std::vector<double> acc(n, 0.0);
  for (std::size_t b = 0; b < branch_scores.size(); ++b) {
    if (branch_scores[b].size() != n) throw DimensionError("fuse_scores: branch lengths differ");
    const auto normalized = minmax_normalize(branch_scores[b]);
    for (std::size_t i = 0; i < n; ++i) acc[i] += beta[b] * normalized[i];
  }
  return minmax_normalize(acc);
}

std::vector<double> expand_to_samples(std::span<const double> token_scores, std::size_t patch) {
  if (patch == 0) throw DimensionError("patch size must be positive");
  std::vector<double> out;
  out.reserve(token_scores.size() * patch);
  for (double s : token_scores) out.insert(out.end(), patch, s);
  return out;
}

AttentionDump extract_dump(const ForwardOutput& out, std::size_t index, const MswConfig& cfg,
                           const std::string& record_id) {
  const auto batch = out.probs.dim(0);
  if (index >= batch) throw DimensionError("record index out of range for the forward batch");
  const auto tokens = cfg.tokens();
  const auto heads = cfg.heads;
  AttentionDump dump;
  dump.record_id = record_id;
  dump.patch = cfg.patch;
  const auto n = out.branches.size();
  dump.beta.assign(out.beta.data().begin() + static_cast<std::ptrdiff_t>(index * n),
                   out.beta.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  std::vector<std::vector<double>> per_branch;
  for (const auto& branch : out.branches) {
    if (!branch.attention.defined()) throw DataError("forward pass kept no attention matrices");
    const auto m = branch.scale;
    const auto windows = tokens / m;
    BranchDump bd;
    bd.scale = m;
    bd.shift = cfg.shift;
    const auto probs = branch.attention.data();
    for (std::size_t w = 0; w < windows; ++w) {
      WindowAttention wa;
      wa.start_patch = (w * m + cfg.shift) % tokens;
      wa.heads = heads;
      wa.size = m;
      const auto base = ((index * windows + w) * heads) * m * m;
      wa.attn.assign(probs.begin() + static_cast<std::ptrdiff_t>(base),
                     probs.begin() + static_cast<std::ptrdiff_t>(base + heads * m * m));
      bd.windows.push_back(std::move(wa));
    }
    bd.token_scores = token_scores(bd);
    per_branch.push_back(bd.token_scores);
    dump.branches.push_back(std::move(bd));
  }
  dump.fused_token_scores = fuse_scores(per_branch, dump.beta);
  dump.fused_sample_scores = expand_to_samples(dump.fused_token_scores, cfg.patch);
  return dump;
}

std::string dump_to_json(const AttentionDump& dump) {
  ordered_json j;
  j["record_id"] = dump.record_id;
  j["patch"] = dump.patch;
  j["beta"] = dump.beta;
  ordered_json branches = ordered_json::array();
  for (const auto& b : dump.branches) {
    ordered_json jb;
    jb["M"] = b.scale;
    jb["shift"] = b.shift;
    ordered_json windows = ordered_json::array();
    for (const auto& w : b.windows) {
      ordered_json attn = ordered_json::array();
      for (std::size_t h = 0; h < w.heads; ++h) {
        ordered_json rows = ordered_json::array();
        for (std::size_t i = 0; i < w.size; ++i) {
          std::vector<double> row(w.attn.begin() + static_cast<std::ptrdiff_t>((h * w.size + i) * w.size),
                                  w.attn.begin() + static_cast<std::ptrdiff_t>((h * w.size + i + 1) * w.size));
          rows.push_back(row);
        }
        attn.push_back(std::move(rows));
      }
      windows.push_back({{"start_patch", w.start_patch}, {"heads", w.heads}, {"attn", std::move(attn)}});
    }
    jb["windows"] = std::move(windows);
    jb["token_scores"] = b.token_scores;
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);
  j["fused_token_scores"] = dump.fused_token_scores;
  j["fused_sample_scores"] = dump.fused_sample_scores;
  j["config"] = dump.config;
  return j.dump();
}

AttentionDump dump_from_json(const std::string& text) {
  AttentionDump dump;
  try {
    const auto j = nlohmann::json::parse(text);
    dump.record_id = j.at("record_id").get<std::string>();
    dump.patch = j.value("patch", std::size_t{1});
    dump.beta = j.at("beta").get<std::vector<double>>();
    for (const auto& jb : j.at("branches")) {
      BranchDump b;
      b.scale = jb.at("M").get<std::size_t>();
      b.shift = jb.value("shift", std::size_t{0});
      for (const auto& jw : jb.at("windows")) {
        WindowAttention w;
        w.start_patch = jw.at("start_patch").get<std::size_t>();
        w.heads = jw.at("heads").get<std::size_t>();
        w.size = b.scale;
        for (const auto& head : jw.at("attn")) {
          for (const auto& row : head) {
            for (double v : row) w.attn.push_back(v);
          }
        }
        b.windows.push_back(std::move(w));
      }
      b.token_scores = jb.at("token_scores").get<std::vector<double>>();
      dump.branches.push_back(std::move(b));
    }
    dump.fused_token_scores = j.value("fused_token_scores", std::vector<double>{});
    dump.fused_sample_scores = j.at("fused_sample_scores").get<std::vector<double>>();
    if (j.contains("config")) dump.config = j.at("config").get<ConfigMap>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed attention dump: ") + e.what());
  }
  return dump;
}

std::string score_color(double score) {
  const double s = std::clamp(score, 0.0, 1.0);
  const int red = static_cast<int>(std::lround(255.0 * s));
  const int blue = 255 - red;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x00%02x", red, blue);
  return buf;
}

std::string render_lead_svg(std::span<const double> waveform, std::span<const double> scores,
                            const std::string& title, const std::string& description) {
  if (waveform.size() != scores.size()) {
    throw DimensionError("waveform has " + std::to_string(waveform.size()) + " samples, scores " +
                         std::to_string(scores.size()));
  }
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1200 200\" "
                    "width=\"1200\" height=\"200\">\n";
  svg += "<title>" + xml_escape(title) + "</title>\n";
  if (!description.empty()) svg += "<desc>" + xml_escape(description) + "</desc>\n";
  svg += "<rect width=\"1200\" height=\"200\" fill=\"white\"/>\n";
  if (waveform.empty()) return svg + "</svg>\n";

  const auto [lo, hi] = std::minmax_element(waveform.begin(), waveform.end());
  const double range = *hi - *lo > 0.0 ? *hi - *lo : 1.0;
  const double xstep = waveform.size() > 1
                           ? (kViewWidth - 2 * kMargin) / static_cast<double>(waveform.size() - 1)
                           : 0.0;
  auto point = [&](std::size_t i) {
    const double x = kMargin + xstep * static_cast<double>(i);
    const double y = kViewHeight - kMargin - (waveform[i] - *lo) / range * (kViewHeight - 2 * kMargin);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", x, y);
    return std::string(buf);
  };

  // a run covers consecutive samples of one colour and shares its end
  // point with the next run so the trace stays connected
  std::size_t start = 0;
  while (start < waveform.size()) {
    const auto colour = score_color(scores[start]);
    std::size_t end = start + 1;
    while (end < waveform.size() && score_color(scores[end]) == colour) ++end;
    std::string points;
    const auto last = std::min(end, waveform.size() - 1);
    for (std::size_t i = start; i <= last; ++i) {
      if (!points.empty()) points += ' ';
      points += point(i);
    }
    svg += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" +
           points + "\"/>\n";
    start = end;
  }
  return svg + "</svg>\n";
}

std::vector<std::string> export_dump(const AttentionDump& dump, const EcgRecord& record,
                                     std::size_t seq_len, const ExportPaths& paths) {
  std::vector<std::string> written;
  write_file(paths.json, dump_to_json(dump) + "\n");
  written.push_back(paths.json);
  for (auto lead : paths.leads) {
    if ((lead + 1) * seq_len > record.signal.size()) {
      throw DataError("lead " + std::to_string(lead) + " does not exist in record " + record.id);
    }
    const auto path = paths.svg_prefix + "lead" + std::to_string(lead) + ".svg";
    write_file(path, render_lead_svg(record.lead(lead, seq_len), dump.fused_sample_scores,
                                     record.id + " lead " + std::to_string(lead),
                                     format_config(dump.config)));
    written.push_back(path);
  }
  return written;
}

}  // namespace msw

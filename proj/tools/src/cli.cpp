#include "msw/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "msw/attnviz.hpp"
#include "msw/checkpoint.hpp"
#include "msw/complexity.hpp"
#include "msw/config.hpp"
#include "msw/data.hpp"
#include "msw/errors.hpp"
#include "msw/gradcheck.hpp"
#include "msw/metrics.hpp"
#include "msw/model.hpp"
#include "msw/train.hpp"

namespace msw::cli {
namespace {

using nlohmann::ordered_json;

const char* const kModelKeys[] = {"L", "n_leads", "P", "C", "heads", "windows",
                                  "K", "shift", "attn_dropout", "mlp_ratio"};
const char* const kTrainKeys[] = {"max_epochs", "batch_size", "lr0", "lr_decay_factor",
                                  "lr_decay_every", "seed", "report_every"};

// Flags that mirror config keys. Values stay strings until resolution so
// file and flag go through the same parser.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> flags;

  void attach(CLI::App& app, bool model, bool train) {
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    auto add = [&](const char* key) {
      std::string name = "--" + std::string(key);
      std::string alias;
      for (char c : std::string(key)) alias += c == '_' ? '-' : c;
      if (alias != key) name += ",--" + alias;
      app.add_option_function<std::string>(
          name, [this, key](const std::string& v) { flags[key] = v; }, "config override");
    };
    if (model) for (auto k : kModelKeys) add(k);
    if (train) for (auto k : kTrainKeys) add(k);
  }

  // base <- file <- flags
  ConfigMap resolve(const ConfigMap& base) const {
    ConfigMap out = base;
    if (!config_path.empty()) {
      for (const auto& [k, v] : read_config_file(config_path)) out[k] = v;
    }
    for (const auto& [k, v] : flags) out[k] = v;
    return out;
  }
};

struct DataSource {
  std::string signals;
  std::string labels;
  bool synth = false;
  std::uint64_t synth_seed = 7;
  std::size_t synth_records = 750;

  void attach(CLI::App& app) {
    app.add_option("--signals", signals, "signal file");
    app.add_option("--labels", labels, "label CSV");
    app.add_flag("--synth", synth, "generate the synthetic dataset instead of reading files");
    app.add_option("--synth-seed", synth_seed, "synthetic dataset seed");
    app.add_option("--synth-records", synth_records, "synthetic record count");
  }

  void describe(ConfigMap& settings) const {
    if (synth) {
      settings["data"] = "synth";
      settings["synth_seed"] = std::to_string(synth_seed);
      settings["synth_records"] = std::to_string(synth_records);
    } else {
      settings["data"] = signals + " " + labels;
    }
  }

  Dataset load(const MswConfig& cfg) const {
    Dataset ds;
    if (synth) {
      if (!signals.empty() || !labels.empty()) {
        throw AdmissibilityError("--synth cannot be combined with --signals/--labels");
      }
      SynthSpec spec;
      spec.seed = synth_seed;
      spec.records = synth_records;
      spec.n_leads = cfg.n_leads;
      spec.seq_len = cfg.seq_len;
      spec.classes = cfg.classes;
      ds = synth_generate(spec);
    } else {
      if (signals.empty() || labels.empty()) {
        throw AdmissibilityError("a dataset is required: pass --signals and --labels, or --synth");
      }
      ds = load_dataset(signals, labels);
    }
    const auto& h = ds.header;
    if (h.n_leads != cfg.n_leads || h.seq_len != cfg.seq_len || h.classes != cfg.classes) {
      throw DataError("dataset shape (n_leads " + std::to_string(h.n_leads) + ", L " +
                      std::to_string(h.seq_len) + ", K " + std::to_string(h.classes) +
                      ") does not match the config (n_leads " + std::to_string(cfg.n_leads) +
                      ", L " + std::to_string(cfg.seq_len) + ", K " +
                      std::to_string(cfg.classes) + ")");
    }
    return ds;
  }
};

void echo_config(std::ostream& out, const ConfigMap& settings) {
  out << "# resolved config\n";
  std::istringstream lines(format_config(settings));
  std::string line;
  while (std::getline(lines, line)) out << "#   " << line << "\n";
}

std::string comment_block(const ConfigMap& settings) {
  std::string out;
  std::istringstream lines(format_config(settings));
  std::string line;
  while (std::getline(lines, line)) out += "# " + line + "\n";
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << text;
  if (!f) throw DataError("write failed for " + path);
}

std::vector<std::size_t> split_indices(const FoldSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw AdmissibilityError("split must be train, val or test, got '" + name + "'");
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  Overrides overrides;
  DataSource data;
  std::string checkpoint = "msw_model";
  std::string log = "train_log.csv";
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  MswConfig model;
  TrainConfig train;
  apply_config(a.overrides.resolve(to_config_map(model, train)), model, train);
  model.validate();
  train.validate();
  ConfigMap settings = to_config_map(model, train);
  a.data.describe(settings);
  echo_config(out, settings);

  Dataset ds = standardize(a.data.load(model));
  const FoldSplit split = fold_split(ds);
  for (const auto& w : split.warnings) err << "warning: " << w << "\n";
  if (split.train.empty()) throw DataError("no training records in folds 1-8");

  Rng rng(train.seed);
  ParamStore init = init_params(model, rng);
  const TrainResult result = train_loop(model, init, ds, split, train, &out);

  CheckpointMeta meta;
  meta.config = to_config_map(model, train);
  meta.class_names = ds.header.class_names;
  meta.standardization = ds.stats;
  save_checkpoint(a.checkpoint, result.best, meta);
  write_text(a.log, comment_block(settings) + format_log_csv(result.log));

  out << "best epoch " << result.best_epoch << ", val macro_f1 " << result.best_val_macro_f1
      << "\n";
  out << "wrote " << manifest_path(a.checkpoint) << ", " << blob_path(a.checkpoint) << ", "
      << a.log << "\n";
  return kOk;
}

// ---- eval / attn shared --------------------------------------------------

struct Restored {
  MswConfig model;
  Checkpoint checkpoint;
  ConfigMap settings;
};

// The checkpoint defines the model; any config given on the command line
// must agree with it.
Restored restore(const std::string& base, const Overrides& overrides) {
  Restored r;
  r.checkpoint = load_checkpoint(base);
  TrainConfig train;
  apply_config(r.checkpoint.meta.config, r.model, train);
  const ConfigMap stored = to_config_map(r.model);

  MswConfig requested = r.model;
  TrainConfig ignored = train;
  apply_config(overrides.resolve(to_config_map(r.model, train)), requested, ignored);
  for (const auto& [key, value] : to_config_map(requested)) {
    if (stored.at(key) != value) {
      throw DimensionError("checkpoint " + base + " has " + key + " = " + stored.at(key) +
                           ", but the run requests " + key + " = " + value);
    }
  }
  r.model.validate();
  check_params(r.model, r.checkpoint.params);
  r.settings = to_config_map(r.model, train);
  r.settings["checkpoint"] = base;
  return r;
}

Dataset prepared_dataset(const Restored& r, const DataSource& data) {
  Dataset ds = data.load(r.model);
  if (!r.checkpoint.meta.class_names.empty() &&
      ds.header.class_names != r.checkpoint.meta.class_names) {
    throw DataError("dataset class names do not match the checkpoint's");
  }
  if (r.checkpoint.meta.standardization) {
    apply_standardization(ds, *r.checkpoint.meta.standardization);
    return ds;
  }
  return standardize(ds);
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  Overrides overrides;
  DataSource data;
  std::string checkpoint;
  std::string split = "test";
  std::string report;
};

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  Restored r = restore(a.checkpoint, a.overrides);
  a.data.describe(r.settings);
  r.settings["split"] = a.split;
  echo_config(out, r.settings);

  const Dataset ds = prepared_dataset(r, a.data);
  const FoldSplit split = fold_split(ds);
  for (const auto& w : split.warnings) err << "warning: " << w << "\n";
  const auto indices = split_indices(split, a.split);
  if (indices.empty()) throw DataError("split '" + a.split + "' has no records");

  const Predictions pred = predict(r.model, r.checkpoint.params, ds, indices);
  MetricReport report = evaluate_metrics(pred.batch);
  report.loss = pred.loss;

  ordered_json j = ordered_json::parse(report_to_json(report));
  j["split"] = a.split;
  j["records"] = indices.size();
  j["class_names"] = ds.header.class_names;
  j["config"] = r.settings;
  const std::string text = j.dump(2);
  out << text << "\n";
  if (!a.report.empty()) write_text(a.report, text + "\n");
  return kOk;
}

// ---- attn ----------------------------------------------------------------

struct AttnArgs {
  Overrides overrides;
  DataSource data;
  std::string checkpoint;
  std::string record;
  std::optional<std::size_t> index;
  std::string json = "attention.json";
  std::string svg_prefix = "attention_";
  std::vector<std::size_t> leads{0};
};

int run_attn(const AttnArgs& a, std::ostream& out, std::ostream& err) {
  Restored r = restore(a.checkpoint, a.overrides);
  a.data.describe(r.settings);
  const Dataset ds = prepared_dataset(r, a.data);

  std::size_t chosen = 0;
  if (!a.record.empty()) {
    auto it = std::find_if(ds.records.begin(), ds.records.end(),
                           [&](const EcgRecord& rec) { return rec.id == a.record; });
    if (it == ds.records.end()) throw DataError("no record with id '" + a.record + "'");
    chosen = static_cast<std::size_t>(it - ds.records.begin());
  } else if (a.index) {
    if (*a.index >= ds.records.size()) {
      throw DataError("record index " + std::to_string(*a.index) + " out of range (" +
                      std::to_string(ds.records.size()) + " records)");
    }
    chosen = *a.index;
  } else {
    const FoldSplit split = fold_split(ds);
    for (const auto& w : split.warnings) err << "warning: " << w << "\n";
    if (split.test.empty()) throw DataError("no test record to visualise; pass --record");
    chosen = split.test.front();
  }
  const EcgRecord& rec = ds.records[chosen];
  r.settings["record"] = rec.id;
  echo_config(out, r.settings);

  Rng rng(0);
  NoGradGuard no_grad;
  const ForwardOutput fwd = forward(rec, r.model, r.checkpoint.params, false, rng);
  AttentionDump dump = extract_dump(fwd, 0, r.model, rec.id);
  dump.config = r.settings;
  // the waveform drawn is the raw signal, not the standardized one
  const EcgRecord* raw = &rec;
  EcgRecord unstandardized;
  if (ds.stats) {
    unstandardized = rec;
    for (std::size_t l = 0; l < r.model.n_leads; ++l) {
      for (std::size_t t = 0; t < r.model.seq_len; ++t) {
        auto& v = unstandardized.signal[l * r.model.seq_len + t];
        v = v * ds.stats->stddev[l] + ds.stats->mean[l];
      }
    }
    raw = &unstandardized;
  }
  const auto written =
      export_dump(dump, *raw, r.model.seq_len, ExportPaths{a.json, a.svg_prefix, a.leads});
  out << "beta";
  for (double b : dump.beta) out << " " << b;
  out << "\n";
  for (const auto& path : written) out << "wrote " << path << "\n";
  return kOk;
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  Overrides overrides;
  std::string signals;
  std::string labels;
  std::size_t records = 750;
  std::optional<double> noise_std;
};

int run_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  MswConfig model;
  model.seq_len = 200;
  model.n_leads = 4;
  model.classes = 3;
  TrainConfig train;
  train.seed = 7;
  apply_config(a.overrides.resolve({{"L", "200"}, {"n_leads", "4"}, {"K", "3"}, {"seed", "7"}}),
               model, train);

  SynthSpec spec;
  spec.seed = train.seed;
  spec.records = a.records;
  spec.n_leads = model.n_leads;
  spec.seq_len = model.seq_len;
  spec.classes = model.classes;
  if (a.noise_std) spec.noise_std = *a.noise_std;

  ConfigMap settings{{"L", std::to_string(spec.seq_len)},
                     {"n_leads", std::to_string(spec.n_leads)},
                     {"K", std::to_string(spec.classes)},
                     {"seed", std::to_string(spec.seed)},
                     {"records", std::to_string(spec.records)},
                     {"noise_std", [&] { char b[32]; std::snprintf(b, sizeof b, "%g", spec.noise_std); return std::string(b); }()}};
  echo_config(out, settings);

  const Dataset ds = synth_generate(spec);
  save_dataset(ds, a.signals, a.labels, format_config(settings));
  const auto header = signal_header_line(ds.header).size();
  const auto expected = header + spec.records * spec.n_leads * spec.seq_len * 8;
  const auto actual = std::filesystem::file_size(a.signals);
  out << "wrote " << a.signals << " (" << actual << " bytes = " << header << " + "
      << spec.records << "*" << spec.n_leads << "*" << spec.seq_len << "*8), " << a.labels
      << "\n";
  if (actual != expected) throw DataError("signal file size differs from the documented layout");
  return kOk;
}

// ---- flops ---------------------------------------------------------------

struct FlopsArgs {
  Overrides overrides;
  std::uint64_t start = 1000;
  std::uint64_t stop = 10000;
  std::uint64_t step = 1000;
  std::uint64_t channels = 12;
  std::string unit = "tokens";
  std::string out_path;
};

int run_flops(const FlopsArgs& a, std::ostream& out, std::ostream&) {
  MswConfig model;
  apply_config(a.overrides.resolve(to_config_map(model)), model);
  if (model.windows.empty()) throw AdmissibilityError("at least one window scale is required");
  if (a.unit != "tokens" && a.unit != "samples") {
    throw AdmissibilityError("--unit must be tokens or samples, got '" + a.unit + "'");
  }
  const LengthUnit unit = a.unit == "samples" ? LengthUnit::Samples : LengthUnit::Tokens;

  std::string windows;
  for (std::size_t i = 0; i < model.windows.size(); ++i) {
    windows += (i ? "," : "") + std::to_string(model.windows[i]);
  }
  ConfigMap settings{{"start", std::to_string(a.start)},   {"stop", std::to_string(a.stop)},
                     {"step", std::to_string(a.step)},     {"C", std::to_string(a.channels)},
                     {"windows", windows},                 {"unit", a.unit},
                     {"P", std::to_string(model.patch)}};
  echo_config(out, settings);

  if (a.step == 0) throw AdmissibilityError("--step must be positive");
  std::vector<SweepRow> rows;
  for (std::uint64_t length = a.start; length <= a.stop; length += a.step) {
    const auto tokens = to_tokens(length, unit, model.patch);
    auto row = sweep(tokens, tokens, 1, a.channels, model.windows).front();
    row.length = length;
    rows.push_back(row);
  }
  const std::string csv = sweep_csv(rows);
  out << csv;
  if (!a.out_path.empty()) write_text(a.out_path, comment_block(settings) + csv);
  return kOk;
}

// ---- gradcheck -----------------------------------------------------------

struct GradcheckArgs {
  Overrides overrides;
  std::size_t records = 2;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::string report;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  MswConfig model;
  model.seq_len = 40;
  model.n_leads = 2;
  model.patch = 5;
  model.embed_dim = 8;
  model.heads = 2;
  model.windows = {2, 4};
  model.classes = 3;
  TrainConfig train;
  apply_config(a.overrides.resolve(to_config_map(model, train)), model, train);
  model.validate();
  ConfigMap settings = to_config_map(model);
  settings["seed"] = std::to_string(train.seed);
  settings["records"] = std::to_string(a.records);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", a.step);
  settings["step"] = buf;
  echo_config(out, settings);

  const GradAudit audit = gradient_audit(model, train.seed, a.records, a.step);
  ordered_json params = ordered_json::array();
  for (const auto& p : audit.params) {
    std::snprintf(buf, sizeof buf, "%.3e", p.max_rel_error);
    out << "  " << p.name << " (" << p.size << "): " << buf << "\n";
    params.push_back({{"name", p.name},
                      {"size", p.size},
                      {"max_rel_error", p.max_rel_error},
                      {"max_abs_error", p.max_abs_error}});
  }
  std::snprintf(buf, sizeof buf, "%.6e", audit.max_rel_error);
  out << "max relative error: " << buf << " (" << audit.worst << ", " << audit.checked
      << " entries)\n";
  if (!a.report.empty()) {
    ordered_json j{{"max_rel_error", audit.max_rel_error}, {"worst", audit.worst},
                   {"checked", audit.checked},            {"tolerance", a.tolerance},
                   {"params", params},                    {"config", settings}};
    write_text(a.report, j.dump(2) + "\n");
  }
  if (!(audit.max_rel_error < a.tolerance)) {
    err << "gradient audit failed: " << audit.max_rel_error << " >= " << a.tolerance << "\n";
    return kNumericAbort;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale windowed transformer for multilabel 12-lead ECG classification",
               "msw"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + log");
  train.overrides.attach(*train_cmd, true, true);
  train.data.attach(*train_cmd);
  train_cmd->add_option("--checkpoint", train.checkpoint, "checkpoint base path");
  train_cmd->add_option("--log", train.log, "metric log CSV path");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  eval.overrides.attach(*eval_cmd, true, false);
  eval.data.attach(*eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint base path")->required();
  eval_cmd->add_option("--split", eval.split, "train, val or test");
  eval_cmd->add_option("--report", eval.report, "write the report JSON here");

  AttnArgs attn;
  std::size_t attn_index = 0;
  auto* attn_cmd = app.add_subcommand("attn", "export attention scores of one record");
  attn.overrides.attach(*attn_cmd, true, false);
  attn.data.attach(*attn_cmd);
  attn_cmd->add_option("--checkpoint", attn.checkpoint, "checkpoint base path")->required();
  attn_cmd->add_option("--record", attn.record, "record id");
  auto* index_opt = attn_cmd->add_option("--index", attn_index, "record index");
  attn_cmd->add_option("--json", attn.json, "attention dump path");
  attn_cmd->add_option("--svg-prefix", attn.svg_prefix, "SVG path prefix");
  attn_cmd->add_option("--leads", attn.leads, "leads to render")->delimiter(',');

  SynthArgs synth;
  double noise_std = 0.0;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  synth.overrides.attach(*synth_cmd, false, false);
  synth_cmd->add_option_function<std::string>(
      "--L", [&](const std::string& v) { synth.overrides.flags["L"] = v; }, "samples per lead");
  synth_cmd->add_option_function<std::string>(
      "--n_leads,--n-leads", [&](const std::string& v) { synth.overrides.flags["n_leads"] = v; },
      "lead count");
  synth_cmd->add_option_function<std::string>(
      "--K", [&](const std::string& v) { synth.overrides.flags["K"] = v; }, "class count");
  synth_cmd->add_option_function<std::string>(
      "--seed", [&](const std::string& v) { synth.overrides.flags["seed"] = v; }, "seed");
  synth_cmd->add_option("--signals", synth.signals, "signal file to write")->required();
  synth_cmd->add_option("--labels", synth.labels, "label CSV to write")->required();
  synth_cmd->add_option("--records", synth.records, "record count");
  auto* noise_opt = synth_cmd->add_option("--noise-std", noise_std, "noise standard deviation");

  FlopsArgs flops;
  auto* flops_cmd = app.add_subcommand("flops", "MSA vs MSW-SA complexity sweep as CSV");
  flops.overrides.attach(*flops_cmd, true, false);
  flops_cmd->add_option("--start", flops.start, "first length");
  flops_cmd->add_option("--stop", flops.stop, "last length");
  flops_cmd->add_option("--step", flops.step, "length step");
  flops_cmd->add_option("--channels", flops.channels, "channel count C");
  flops_cmd->add_option("--unit", flops.unit, "lengths in tokens or samples");
  flops_cmd->add_option("--out", flops.out_path, "write the CSV here");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit of every parameter");
  grad.overrides.attach(*grad_cmd, true, true);
  grad_cmd->add_option("--records", grad.records, "batch size of the audit");
  grad_cmd->add_option("--step", grad.step, "central-difference step");
  grad_cmd->add_option("--tolerance", grad.tolerance, "maximum relative error");
  grad_cmd->add_option("--report", grad.report, "write the audit JSON here");

  std::vector<std::string> storage{"msw"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) return run_train(train, out, err);
    if (*eval_cmd) return run_eval(eval, out, err);
    if (*attn_cmd) {
      if (index_opt->count()) attn.index = attn_index;
      return run_attn(attn, out, err);
    }
    if (*synth_cmd) {
      if (noise_opt->count()) synth.noise_std = noise_std;
      return run_synth(synth, out, err);
    }
    if (*flops_cmd) return run_flops(flops, out, err);
    if (*grad_cmd) return run_gradcheck(grad, out, err);
  } catch (const AdmissibilityError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace msw::cli

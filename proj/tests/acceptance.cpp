// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only
// when every selected criterion passes.
//
//   acceptance            run criteria 1-9
//   acceptance 1 4 6      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "msw/checkpoint.hpp"
#include "msw/complexity.hpp"
#include "msw/data.hpp"
#include "msw/errors.hpp"
#include "msw/gradcheck.hpp"
#include "msw/mac_counter.hpp"
#include "msw/metrics.hpp"
#include "msw/model.hpp"
#include "msw/train.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace msw;
using msw::test::perturbed_params;
using msw::test::pointers;
using msw::test::random_records;
using msw::test::tiny_config;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// ---- 1: gradient audit ----------------------------------------------------

Outcome gradient_audit_criterion() {
  const auto start = Clock::now();
  const MswConfig cfg = tiny_config();
  const GradAudit audit = gradient_audit(cfg, 0, 2, 1e-5);
  const double elapsed = seconds_since(start);

  Rng rng(0);
  const ParamStore reference = init_params(cfg, rng);
  const bool every_param = audit.params.size() == reference.size() &&
                           audit.checked == reference.scalar_count();
  return {every_param && audit.max_rel_error < 1e-4 && elapsed < 60.0,
          fmt("max rel error %.3e (%s), %zu/%zu entries in %zu tensors, %.1f s",
              audit.max_rel_error, audit.worst.c_str(), audit.checked, reference.scalar_count(),
              audit.params.size(), elapsed)};
}

// ---- 2: full window equals global attention -------------------------------

Outcome window_global_criterion() {
  MswConfig cfg = tiny_config();
  cfg.windows = {cfg.tokens()};
  cfg.shift = 0;
  const std::size_t t_len = cfg.tokens(), c = cfg.embed_dim, p = cfg.patch, l = cfg.seq_len;

  double worst_block = 0.0, worst_logit = 0.0, worst_beta = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const ParamStore params = perturbed_params(cfg, 500 + trial, 0.3);
    Rng data_rng(700 + trial), rng(0);
    const auto records = random_records(cfg, 1, data_rng);
    NoGradGuard no_grad;
    const ForwardOutput fwd = forward(records[0], cfg, params, false, rng);

    oracle::Matrix patches(t_len);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t lead = 0; lead < cfg.n_leads; ++lead)
        for (std::size_t s = 0; s < p; ++s) patches[t].push_back(records[0].signal[lead * l + t * p + s]);
    const auto tokens = oracle::affine(patches, oracle::param_matrix(params, "embed.weight"),
                                       oracle::param_vector(params, "embed.bias"));
    const auto layer = oracle::global_layer(tokens, params, "branch0.", cfg.heads);

    oracle::Matrix pooled(1, std::vector<double>(c, 0.0));
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < c; ++j) pooled[0][j] += layer[t][j] / static_cast<double>(t_len);
    const auto alpha = oracle::affine(pooled, oracle::param_matrix(params, "branch0.head.weight"),
                                      oracle::param_vector(params, "branch0.head.bias"));

    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < c; ++j)
        worst_block = std::max(worst_block, std::abs(fwd.branches[0].tokens.at({0, t, j}) - layer[t][j]));
    for (std::size_t k = 0; k < cfg.classes; ++k)
      worst_logit = std::max(worst_logit, std::abs(fwd.logits.at({0, k}) - alpha[0][k]));
    worst_beta = std::max(worst_beta, std::abs(fwd.beta.at({0, 0}) - 1.0));
  }
  const double worst = std::max({worst_block, worst_logit, worst_beta});
  return {worst < 1e-10, fmt("20 inputs, T = M = %zu: max |d| block %.2e, logits %.2e, beta %.2e",
                             t_len, worst_block, worst_logit, worst_beta)};
}

// ---- 3: complexity reconciliation ------------------------------------------

Outcome complexity_criterion() {
  struct Case {
    std::size_t tokens, channels, heads, scale;
  };
  const std::vector<Case> single{{8, 4, 1, 2},  {20, 8, 2, 5},  {40, 6, 3, 10},
                                 {30, 4, 2, 30}, {24, 12, 4, 1}, {200, 8, 2, 20}};
  std::size_t exact = 0;
  bool ok = true;
  std::uint64_t first_total = 0;
  for (const auto& c : single) {
    const std::vector<std::size_t> windows{c.scale};
    const auto r = measure_macs(c.tokens, c.channels, windows, c.heads);
    bool equal = r.measured.total() == omega_mswsa(c.tokens, c.channels, windows) &&
                 r.measured == mswsa_phases(c.tokens, c.channels, windows);
    if (c.scale == c.tokens) equal = equal && r.measured.total() == omega_msa(c.tokens, c.channels);
    if (&c == &single.front()) first_total = r.measured.total();
    exact += equal ? 1 : 0;
    ok = ok && equal;
  }
  ok = ok && first_total == 640;

  std::size_t multi = 0;
  const std::vector<std::pair<std::size_t, std::vector<std::size_t>>> multi_scale{
      {40, {5, 10, 20}}, {16, {2, 4}}, {30, {1, 3, 5}}};
  for (const auto& [tokens, windows] : multi_scale) {
    const auto r = measure_macs(tokens, 4, windows, 2);
    const bool rec = r.reconciles() && r.measured.qk == r.formula.qk && r.measured.av == r.formula.av;
    multi += rec ? 1 : 0;
    ok = ok && rec;
  }

  const auto row = sweep(1000, 1000, 1, 12, {5, 10, 20}).front();
  const bool sweep_ok = row.omega_msa == 24'576'000u && row.omega_mswsa == 1'416'000u &&
                        std::abs(row.ratio - 17.36) < 0.005;
  return {ok && sweep_ok,
          fmt("%zu/%zu single-scale configs exact (first = %llu MACs), %zu/3 multi-scale reconcile, "
              "L=1000: %llu vs %llu, ratio %.4f",
              exact, single.size(), static_cast<unsigned long long>(first_total), multi,
              static_cast<unsigned long long>(row.omega_msa),
              static_cast<unsigned long long>(row.omega_mswsa), row.ratio)};
}

// ---- 4: admissibility ------------------------------------------------------

Outcome admissibility_criterion() {
  std::size_t accepted = 0, rejected = 0, wrong = 0;
  for (std::size_t t = 1; t <= 64; ++t) {
    for (std::size_t m = 1; m <= 64; ++m) {
      MswConfig cfg;
      cfg.seq_len = 5 * t;
      cfg.patch = 5;
      cfg.windows = {m};
      bool threw = false;
      try {
        cfg.validate();
      } catch (const AdmissibilityError& e) {
        threw = std::string(e.what()).find("every window scale M must divide L/P") != std::string::npos;
        if (!threw) ++wrong;
      }
      if (t % m == 0) {
        accepted += threw ? 0 : 1;
        if (threw) ++wrong;
      } else {
        rejected += threw ? 1 : 0;
        if (!threw) ++wrong;
      }
    }
  }

  // a rejected config never reaches the counted kernels
  MswConfig cfg = tiny_config();
  cfg.windows = {3};
  Rng rng(1);
  MswConfig valid = tiny_config();
  const ParamStore params = init_params(valid, rng);
  const auto records = random_records(valid, 1, rng);
  MacTally tally;
  bool stopped = false;
  try {
    MacCountScope scope(tally);
    NoGradGuard no_grad;
    forward(records[0], cfg, params, false, rng);
  } catch (const AdmissibilityError&) {
    stopped = true;
  }
  const bool before_compute = stopped && tally.total == 0;
  return {wrong == 0 && before_compute,
          fmt("T,M <= 64: %zu divisor pairs accepted, %zu non-divisors rejected, %zu wrong; "
              "forward rejected after %llu MACs",
              accepted, rejected, wrong, static_cast<unsigned long long>(tally.total))};
}

// ---- 5: normalization invariants -------------------------------------------

double worst_row_error(const Tensor& maps) {
  const auto& shape = maps.shape();
  const std::size_t cols = shape.back();
  const auto data = maps.data();
  double worst = 0.0;
  for (std::size_t r = 0; r < data.size() / cols; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += data[r * cols + j];
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

Outcome normalization_criterion() {
  std::vector<MswConfig> configs;
  configs.push_back(tiny_config());
  configs.push_back(tiny_config());
  configs.back().shift = 1;
  configs.push_back(tiny_config());
  configs.back().windows = {1, 8};
  configs.push_back(tiny_config());
  configs.back().windows = {4};
  configs.back().heads = 4;

  double rows = 0.0, beta = 0.0, shifted = 0.0;
  std::size_t passes = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const MswConfig& cfg = configs[i % configs.size()];
    const ParamStore params = perturbed_params(cfg, 10'000 + i, 0.5);
    Rng data_rng(20'000 + i), rng(i);
    const auto records = random_records(cfg, 2, data_rng);
    const auto ptrs = pointers(records);
    NoGradGuard no_grad;
    const ForwardOutput fwd = forward(ptrs, cfg, params, i % 2 == 0, rng);
    ++passes;
    for (const auto& b : fwd.branches) rows = std::max(rows, worst_row_error(b.attention));
    beta = std::max(beta, worst_row_error(fwd.beta));

    if (i % 10 != 0) continue;
    // per-head constants added to every relative-bias table
    ParamStore moved = params.clone();
    std::uniform_real_distribution<double> offset(-3.0, 3.0);
    for (std::size_t b = 0; b < cfg.branches(); ++b) {
      Tensor table = moved.get(branch_prefix(b) + "attn.rel_bias");
      const std::size_t width = table.shape()[1];
      auto values = table.mutable_data();
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const double c = offset(data_rng);
        for (std::size_t j = 0; j < width; ++j) values[h * width + j] += c;
      }
    }
    Rng rng_a(i), rng_b(i);
    const ForwardOutput a = forward(ptrs, cfg, params, false, rng_a);
    const ForwardOutput b = forward(ptrs, cfg, moved, false, rng_b);
    for (std::size_t br = 0; br < a.branches.size(); ++br) {
      const auto x = a.branches[br].attention.data(), y = b.branches[br].attention.data();
      for (std::size_t j = 0; j < x.size(); ++j) shifted = std::max(shifted, std::abs(x[j] - y[j]));
    }
  }
  return {rows <= 1e-12 && beta <= 1e-12 && shifted <= 1e-12,
          fmt("%zu passes: max |row sum - 1| %.2e, max |sum beta - 1| %.2e, bias shift moves "
              "attention by %.2e",
              passes, rows, beta, shifted)};
}

// ---- 6: metric oracles -----------------------------------------------------

EvalBatch random_batch(std::size_t rows, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const bool coarse = seed % 2 == 1;
  EvalBatch b;
  b.rows = rows;
  b.classes = classes;
  for (std::size_t i = 0; i < rows * classes; ++i) {
    double s = unit(rng);
    if (coarse) s = std::round(s * 4.0) / 4.0;
    b.scores.push_back(s);
    b.labels.push_back(coin(rng) ? 1 : 0);
  }
  return b;
}

std::optional<double> library_auc(const EvalBatch& b, AucMode mode) {
  try {
    return roc_auc(b, mode).value;
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

bool auc_agrees(std::optional<double> lib, double oracle_value) {
  if (oracle_value < 0) return !lib.has_value();
  return lib.has_value() && *lib == oracle_value;
}

Outcome metric_criterion() {
  std::size_t mismatches = 0, invariance = 0, auc_units = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const EvalBatch b = random_batch(8, 4, 9'000 + seed);
    if (accuracy(b) != oracle::accuracy(b)) ++mismatches;
    if (macro_f1(b) != oracle::macro_f1(b)) ++mismatches;
    if (samples_f1(b) != oracle::samples_f1(b)) ++mismatches;
    const auto macro = library_auc(b, AucMode::Macro);
    const auto samples = library_auc(b, AucMode::Samples);
    if (!auc_agrees(macro, oracle::mean_auc(b, true))) ++mismatches;
    if (!auc_agrees(samples, oracle::mean_auc(b, false))) ++mismatches;
    auc_units += (macro ? 1 : 0) + (samples ? 1 : 0);

    EvalBatch warped = b;
    for (auto& s : warped.scores) s = std::pow(s, 3.0) * 0.5 + 0.25;
    if (library_auc(warped, AucMode::Macro) != macro) ++invariance;
    if (library_auc(warped, AucMode::Samples) != samples) ++invariance;
  }
  return {mismatches == 0 && invariance == 0,
          fmt("100 batches of 8x4: %zu oracle mismatches, %zu AUC values compared, "
              "%zu monotone-transform changes",
              mismatches, auc_units, invariance)};
}

// ---- 7-9: synthetic experiment ---------------------------------------------

MswConfig experiment_model(std::vector<std::size_t> windows) {
  MswConfig cfg = msw::test::synthetic_config();
  cfg.windows = std::move(windows);
  return cfg;
}

TrainConfig experiment_training(std::uint64_t seed, std::size_t epochs = 30) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 16;
  t.lr0 = 1e-4;
  t.lr_decay_factor = 10.0;
  t.lr_decay_every = 10;
  t.seed = seed;
  t.report_every = 0;
  return t;
}

struct Experiment {
  SynthSpec spec;
  Dataset raw;
  Dataset ds;
  FoldSplit split;

  Experiment() {
    spec.seed = 7;
    spec.records = 750;
    raw = synth_generate(spec);
    ds = standardize(raw);
    split = fold_split(ds);
  }
};

struct Run {
  TrainResult result;
  double test_macro_f1 = 0.0;
  double seconds = 0.0;
};

Run train_and_test(const Experiment& e, const MswConfig& cfg, const TrainConfig& train) {
  const auto start = Clock::now();
  Rng rng(train.seed);
  Run run;
  run.result = train_loop(cfg, init_params(cfg, rng), e.ds, e.split, train);
  run.test_macro_f1 = macro_f1(predict(cfg, run.result.best, e.ds, e.split.test).batch);
  run.seconds = seconds_since(start);
  return run;
}

class Experiments {
 public:
  const Experiment& data() { return data_; }

  const Run& get(const std::vector<std::size_t>& windows, std::uint64_t seed) {
    const auto key = std::make_pair(windows, seed);
    auto it = runs_.find(key);
    if (it == runs_.end()) {
      it = runs_.emplace(key, train_and_test(data_, experiment_model(windows),
                                             experiment_training(seed))).first;
    }
    return it->second;
  }

 private:
  Experiment data_;
  std::map<std::pair<std::vector<std::size_t>, std::uint64_t>, Run> runs_;
};

Experiments& experiments() {
  static Experiments e;
  return e;
}

Outcome learning_criterion() {
  auto& exp = experiments();
  const auto& d = exp.data();
  const auto auc = oracle::matched_filter_auc(d.raw.records, d.spec.n_leads, d.spec.seq_len,
                                              d.spec.classes);
  const double weakest = *std::min_element(auc.begin(), auc.end());
  const bool separable = weakest > 0.95;
  const bool sizes = d.split.train.size() == 600 && d.split.val.size() == 75 && d.split.test.size() == 75;
  if (!separable || !sizes) {
    return {false, fmt("precondition failed: matched-filter AUC %.3f/%.3f/%.3f, split %zu/%zu/%zu",
                       auc[0], auc[1], auc[2], d.split.train.size(), d.split.val.size(),
                       d.split.test.size())};
  }
  const Run& run = exp.get({5, 10, 20}, 0);
  return {run.test_macro_f1 >= 0.90 && run.seconds < 900.0,
          fmt("matched-filter AUC %.3f/%.3f/%.3f; test macro-F1 %.4f (best epoch %zu of 30, "
              "val %.4f), %.0f s",
              auc[0], auc[1], auc[2], run.test_macro_f1, run.result.best_epoch,
              run.result.best_val_macro_f1, run.seconds)};
}

Outcome ablation_criterion() {
  auto& exp = experiments();
  const std::vector<std::vector<std::size_t>> models{{5, 10, 20}, {5}, {10}, {20}};
  std::vector<double> mean(models.size(), 0.0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) mean[m] += exp.get(models[m], seed).test_macro_f1 / 3.0;
  }
  bool ok = true;
  for (std::size_t m = 1; m < models.size(); ++m) ok = ok && mean[0] >= mean[m] - 0.02;
  return {ok, fmt("mean test macro-F1 over seeds 0-2: [5,10,20] %.4f, [5] %.4f, [10] %.4f, [20] %.4f",
                  mean[0], mean[1], mean[2], mean[3])};
}

Outcome determinism_criterion() {
  auto& exp = experiments();
  const auto& d = exp.data();
  const MswConfig cfg = experiment_model({5, 10, 20});
  const TrainConfig train = experiment_training(11, 3);
  Rng rng_a(train.seed), rng_b(train.seed);
  const TrainResult a = train_loop(cfg, init_params(cfg, rng_a), d.ds, d.split, train);
  const TrainResult b = train_loop(cfg, init_params(cfg, rng_b), d.ds, d.split, train);
  const bool same_log = format_log_csv(a.log) == format_log_csv(b.log);

  const msw::test::TempDir dir("acceptance");
  CheckpointMeta meta;
  meta.config = to_config_map(cfg, train);
  meta.class_names = d.ds.header.class_names;
  meta.standardization = d.ds.stats;
  save_checkpoint(dir.file("best"), a.best, meta);
  const Checkpoint loaded = load_checkpoint(dir.file("best"));

  bool params_equal = loaded.params.size() == a.best.size();
  for (const auto& [name, t] : a.best) {
    if (!loaded.params.contains(name)) {
      params_equal = false;
      continue;
    }
    const auto x = t.data(), y = loaded.params.get(name).data();
    params_equal = params_equal && x.size() == y.size() &&
                   std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  }

  const Predictions p = predict(cfg, loaded.params, d.ds, d.split.val);
  const MetricReport r = evaluate_metrics(p.batch);
  const auto logged = std::find_if(a.log.begin(), a.log.end(), [&](const EpochLog& e) {
    return e.epoch == a.best_epoch && e.split == "val";
  });
  bool metrics_equal = logged != a.log.end() && same_bits(p.loss, logged->loss) &&
                       same_bits(r.accuracy, logged->metrics.accuracy) &&
                       same_bits(r.macro_f1, logged->metrics.macro_f1) &&
                       same_bits(r.samples_f1, logged->metrics.samples_f1) &&
                       r.auc_macro.has_value() == logged->metrics.auc_macro.has_value() &&
                       r.auc_samples.has_value() == logged->metrics.auc_samples.has_value();
  if (metrics_equal && r.auc_macro) metrics_equal = same_bits(*r.auc_macro, *logged->metrics.auc_macro);
  if (metrics_equal && r.auc_samples)
    metrics_equal = same_bits(*r.auc_samples, *logged->metrics.auc_samples);

  return {same_log && params_equal && metrics_equal,
          fmt("two seed-11 runs give %s logs; checkpoint blob %s; reloaded val metrics %s "
              "(macro-F1 %.17g)",
              same_log ? "identical" : "different", params_equal ? "bitwise equal" : "differs",
              metrics_equal ? "bitwise equal" : "differ", r.macro_f1)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient audit", gradient_audit_criterion},
      {2, "window-global equivalence", window_global_criterion},
      {3, "complexity reconciliation", complexity_criterion},
      {4, "admissibility", admissibility_criterion},
      {5, "normalization invariants", normalization_criterion},
      {6, "metric oracles", metric_criterion},
      {7, "learning on synthetic task", learning_criterion},
      {8, "ablation direction", ablation_criterion},
      {9, "determinism and persistence", determinism_criterion},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    try {
      selected.insert(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::fprintf(stderr, "usage: %s [criterion ...]\n", argv[0]);
      return 2;
    }
  }

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %d (%s): %s - %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

#include "msw/complexity.hpp"

#include <cstdio>
#include <numeric>

#include "msw/errors.hpp"
#include "msw/mac_counter.hpp"
#include "msw/model.hpp"
#include "msw/ops.hpp"

namespace msw {
namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_mul_overflow(a, b, &out)) throw NumericError("complexity count overflows 64 bits");
  return out;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_add_overflow(a, b, &out)) throw NumericError("complexity count overflows 64 bits");
  return out;
}

std::uint64_t window_sum(std::span<const std::size_t> windows) {
  if (windows.empty()) throw AdmissibilityError("at least one window scale is required");
  std::uint64_t total = 0;
  for (auto m : windows) total = add(total, m);
  return total;
}

}  // namespace

std::uint64_t omega_msa(std::uint64_t length, std::uint64_t channels) {
  return add(mul(4, mul(length, mul(channels, channels))), mul(2, mul(mul(length, length), channels)));
}

std::uint64_t omega_mswsa(std::uint64_t length, std::uint64_t channels,
                          std::span<const std::size_t> windows) {
  const auto sum_m = window_sum(windows);
  return add(mul(4, mul(length, mul(channels, channels))), mul(2, mul(mul(length, channels), sum_m)));
}

std::uint64_t to_tokens(std::uint64_t length, LengthUnit unit, std::size_t patch) {
  if (unit == LengthUnit::Tokens) return length;
  if (patch == 0 || length % patch != 0) {
    throw AdmissibilityError("patch size " + std::to_string(patch) + " does not divide length " +
                             std::to_string(length));
  }
  return length / patch;
}

PhaseCounts mswsa_phases(std::uint64_t tokens, std::uint64_t channels,
                         std::span<const std::size_t> windows) {
  const auto sum_m = window_sum(windows);
  const auto lc2 = mul(tokens, mul(channels, channels));
  const auto lcm = mul(mul(tokens, channels), sum_m);
  return {mul(3, lc2), lcm, lcm, lc2};
}

PhaseCounts model_phases(std::uint64_t tokens, std::uint64_t channels,
                         std::span<const std::size_t> windows) {
  auto p = mswsa_phases(tokens, channels, windows);
  const auto n = static_cast<std::uint64_t>(windows.size());
  p.qkv = mul(p.qkv, n);
  p.out = mul(p.out, n);
  return p;
}

ComplexityReport measure_macs(std::size_t tokens, std::size_t channels,
                              const std::vector<std::size_t>& windows, std::size_t heads) {
  MswConfig cfg;
  cfg.seq_len = tokens;
  cfg.n_leads = 1;
  cfg.patch = 1;
  cfg.embed_dim = channels;
  cfg.heads = heads;
  cfg.windows = windows;
  cfg.classes = 1;
  cfg.shift = 0;
  cfg.attn_dropout = 0.0;
  cfg.mlp_ratio = 1;
  cfg.validate();

  ComplexityReport report;
  report.tokens = tokens;
  report.channels = channels;
  report.windows = windows;
  report.heads = heads;
  report.omega_msa = omega_msa(tokens, channels);
  report.omega_mswsa = omega_mswsa(tokens, channels, windows);
  report.formula = mswsa_phases(tokens, channels, windows);
  report.expected = model_phases(tokens, channels, windows);
  report.ratio = static_cast<double>(report.omega_msa) / static_cast<double>(report.omega_mswsa);

  Rng rng(0x5eed);
  auto params = init_params(cfg, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(tokens * channels);
  for (auto& v : values) v = normal(rng);
  auto x = Tensor::from_data({1, tokens, channels}, std::move(values));

  NoGradGuard no_grad;
  MacTally tally;
  {
    MacCountScope counting(tally);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      window_attention(x, params, branch_prefix(i), cfg, windows[i], false, rng);
    }
  }
  report.measured = {tally.phase("qkv"), tally.phase("qk"), tally.phase("av"), tally.phase("out")};
  return report;
}

std::vector<SweepRow> sweep(std::uint64_t start, std::uint64_t stop, std::uint64_t step,
                            std::uint64_t channels, const std::vector<std::size_t>& windows) {
  if (step == 0) throw AdmissibilityError("sweep step must be positive");
  window_sum(windows);
  std::vector<SweepRow> rows;
  for (std::uint64_t length = start; length <= stop; length += step) {
    for (auto m : windows) {
      if (m == 0 || length % m != 0) {
        throw AdmissibilityError("window scale " + std::to_string(m) + " does not divide length " +
                                 std::to_string(length) + "; every window scale must divide L");
      }
    }
    SweepRow row;
    row.length = length;
    row.omega_msa = omega_msa(length, channels);
    row.omega_mswsa = omega_mswsa(length, channels, windows);
    row.ratio = row.omega_mswsa == 0 ? 0.0
                                     : static_cast<double>(row.omega_msa) /
                                           static_cast<double>(row.omega_mswsa);
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "L,omega_msa,omega_mswsa,ratio\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%llu,%llu,%.6f\n",
                  static_cast<unsigned long long>(r.length),
                  static_cast<unsigned long long>(r.omega_msa),
                  static_cast<unsigned long long>(r.omega_mswsa), r.ratio);
    out += buf;
  }
  return out;
}

}  // namespace msw

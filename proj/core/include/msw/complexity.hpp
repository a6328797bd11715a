#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace msw {

// Analytic multiply-accumulate counts for one attention layer over a
// sequence of length L with C channels. Only the four matrix-product
// phases are counted (projections to Q/K/V, QK^T, AV, output projection);
// softmax, bias adds, LayerNorm and MLP are excluded.
std::uint64_t omega_msa(std::uint64_t length, std::uint64_t channels);  // 4LC^2 + 2L^2C
std::uint64_t omega_mswsa(std::uint64_t length, std::uint64_t channels,
                          std::span<const std::size_t> windows);       // 4LC^2 + 2LC sum(M)

enum class LengthUnit { Tokens, Samples };

// Converts a length given in samples to tokens (L / P) when unit is
// Samples; returns it unchanged for Tokens.
std::uint64_t to_tokens(std::uint64_t length, LengthUnit unit, std::size_t patch);

struct PhaseCounts {
  std::uint64_t qkv = 0;
  std::uint64_t qk = 0;
  std::uint64_t av = 0;
  std::uint64_t out = 0;

  std::uint64_t total() const { return qkv + qk + av + out; }
  bool operator==(const PhaseCounts&) const = default;
};

// Phase terms of the windowed formula: 3LC^2, LC sum(M), LC sum(M), LC^2.
PhaseCounts mswsa_phases(std::uint64_t tokens, std::uint64_t channels,
                         std::span<const std::size_t> windows);

// Phase terms of the implemented block, where every window scale owns its
// own projections: |M| 3LC^2, LC sum(M), LC sum(M), |M| LC^2. Equal to
// mswsa_phases for a single scale.
PhaseCounts model_phases(std::uint64_t tokens, std::uint64_t channels,
                         std::span<const std::size_t> windows);

struct ComplexityReport {
  std::uint64_t tokens = 0;
  std::uint64_t channels = 0;
  std::vector<std::size_t> windows;
  std::size_t heads = 1;
  std::uint64_t omega_msa = 0;
  std::uint64_t omega_mswsa = 0;
  PhaseCounts formula;   // mswsa_phases
  PhaseCounts expected;  // model_phases
  PhaseCounts measured;  // instrumented run
  double ratio = 0.0;    // omega_msa / omega_mswsa

  // measured == expected, phase by phase
  bool reconciles() const { return measured == expected; }
};

// Runs the windowed attention path of every branch on random tokens with
// the MAC counting hook installed and tallies each phase.
ComplexityReport measure_macs(std::size_t tokens, std::size_t channels,
                              const std::vector<std::size_t>& windows, std::size_t heads = 1);

struct SweepRow {
  std::uint64_t length = 0;
  std::uint64_t omega_msa = 0;
  std::uint64_t omega_mswsa = 0;
  double ratio = 0.0;
};

// Rows for length = start, start+step, ... <= stop. Every length must be
// divisible by every window scale.
std::vector<SweepRow> sweep(std::uint64_t start, std::uint64_t stop, std::uint64_t step,
                            std::uint64_t channels, const std::vector<std::size_t>& windows);

// Header "L,omega_msa,omega_mswsa,ratio".
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace msw

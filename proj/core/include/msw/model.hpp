#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msw/config.hpp"
#include "msw/data.hpp"
#include "msw/tensor.hpp"

namespace msw {

/// Named learnable tensors. Names are stable and sorted, which fixes the
/// checkpoint layout.
///
/// Layout for a model with branches 0..n-1:
///   embed.weight [nP, C], embed.bias [C]
///   branch{i}.norm1.{gamma,beta} [C]
///   branch{i}.attn.{q,k,v,proj}.weight [C, C], .bias [C]
///   branch{i}.attn.rel_bias [heads, 2M-1]
///   branch{i}.norm2.{gamma,beta} [C]
///   branch{i}.mlp.fc1.weight [C, rC], .bias [rC]
///   branch{i}.mlp.fc2.weight [rC, C], .bias [C]
///   branch{i}.head.weight [(T/M) C, K], .bias [K]
///   fusion.weight [nK, n]
class ParamStore {
 public:
  void add(const std::string& name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  void zero_grad();
  // Independent copy of every value, as fresh leaves.
  ParamStore clone() const;

 private:
  std::map<std::string, Tensor> tensors_;
};

std::string branch_prefix(std::size_t branch);

// Truncated-normal (std 0.02, cut at 2 sigma) projections; zero biases and
// relative-bias tables; unit LayerNorm gains.
ParamStore init_params(const MswConfig& cfg, Rng& rng);

// Throws DimensionError when a tensor is missing or mis-shaped for cfg.
void check_params(const MswConfig& cfg, const ParamStore& params);

/// Raw patches of one record, [T, n_leads * P]. Token t is
/// lead0[tP, (t+1)P) ++ lead1[tP, (t+1)P) ++ ... (lead-major).
Tensor patch_split(const EcgRecord& record, const MswConfig& cfg);
// Batched: [B, T, n_leads * P].
Tensor patch_split(std::span<const EcgRecord* const> records, const MswConfig& cfg);

Tensor linear_embed(const Tensor& patches, const Tensor& weight, const Tensor& bias = {});

// Token order used by the windowed path: position p of the rotated
// sequence holds the original token (p + shift) mod T.
std::vector<std::size_t> rotated_token_order(std::size_t tokens, std::size_t shift);

// tokens [T, C] -> T/M windows [M, C] after rotating left by `shift`.
std::vector<Tensor> window_partition(const Tensor& tokens, std::size_t scale,
                                     std::size_t shift);
// Exact inverse of window_partition.
Tensor window_merge(const std::vector<Tensor>& windows, std::size_t shift);

// table [heads, 2M-1] -> bias [heads, M, M], B[h,i,j] = table[h, i-j+M-1].
Tensor relative_bias(const Tensor& table, std::size_t scale);

struct AttentionOutput {
  Tensor out;    // [B, T, C]
  Tensor probs;  // [B * T/M * heads, M, M], pre-dropout
};

// Windowed multi-head attention over x [B, T, C] with the parameters under
// `prefix` + "attn.". Windows are independent; the shift is undone before
// returning.
AttentionOutput window_attention(const Tensor& x, const ParamStore& params,
                                 const std::string& prefix, const MswConfig& cfg,
                                 std::size_t scale, bool train, Rng& rng);

// Single window [M, C] convenience form.
AttentionOutput window_attention(const Tensor& window, const ParamStore& params,
                                 const std::string& prefix, const MswConfig& cfg,
                                 bool train, Rng& rng);

struct BranchOutput {
  std::size_t scale = 0;
  Tensor tokens;  // [B, T, C]
  Tensor alpha;   // [B, K]
  Tensor attention;  // [B * T/M * heads, M, M]
};

// One pathway of the block: x + W-MSA(LN(x)), then + MLP(LN(.)).
Tensor branch_block(const Tensor& tokens, const ParamStore& params, const std::string& prefix,
                    const MswConfig& cfg, std::size_t scale, bool train, Rng& rng,
                    Tensor* attention = nullptr);

std::vector<BranchOutput> msw_block(const Tensor& tokens, const MswConfig& cfg,
                                    const ParamStore& params, bool train, Rng& rng);

// Mean-pool each window, concatenate to (T/M) C features, project to K.
Tensor branch_project(const Tensor& tokens, std::size_t scale, const Tensor& weight,
                      const Tensor& bias = {});

struct FusionOutput {
  Tensor probs;   // [B, K]
  Tensor logits;  // [B, K], pre-sigmoid
  Tensor beta;    // [B, n]
};

// alpha = concat(alpha_i); beta = softmax(alpha W_f);
// y = sigmoid(sum_i beta_i alpha_i).
FusionOutput fuse(std::span<const Tensor> alphas, const Tensor& fusion_weight);

struct ForwardOutput {
  Tensor probs;  // [B, K]
  Tensor logits;
  Tensor beta;   // [B, n]
  std::vector<BranchOutput> branches;
};

ForwardOutput forward(std::span<const EcgRecord* const> records, const MswConfig& cfg,
                      const ParamStore& params, bool train, Rng& rng);
ForwardOutput forward(const EcgRecord& record, const MswConfig& cfg,
                      const ParamStore& params, bool train, Rng& rng);

}  // namespace msw

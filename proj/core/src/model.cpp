#include "msw/model.hpp"

#include <cmath>

#include "msw/errors.hpp"
#include "msw/mac_counter.hpp"
#include "msw/ops.hpp"

namespace msw {
namespace {

constexpr double kInitStd = 0.02;

Tensor trunc_normal(Shape shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, kInitStd);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) {
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0 * kInitStd);
  }
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

// Expected [name -> shape] for a configuration, in initialization order.
std::vector<std::pair<std::string, Shape>> param_layout(const MswConfig& cfg) {
  const auto c = cfg.embed_dim;
  const auto hidden = cfg.mlp_ratio * c;
  const auto t = cfg.tokens();
  const auto k = cfg.classes;
  std::vector<std::pair<std::string, Shape>> layout;
  layout.emplace_back("embed.weight", Shape{cfg.patch_width(), c});
  layout.emplace_back("embed.bias", Shape{c});
  for (std::size_t i = 0; i < cfg.branches(); ++i) {
    const auto m = cfg.windows[i];
    const auto p = branch_prefix(i);
    layout.emplace_back(p + "norm1.gamma", Shape{c});
    layout.emplace_back(p + "norm1.beta", Shape{c});
    for (const char* proj : {"q", "k", "v", "proj"}) {
      layout.emplace_back(p + "attn." + proj + ".weight", Shape{c, c});
      layout.emplace_back(p + "attn." + proj + ".bias", Shape{c});
    }
    layout.emplace_back(p + "attn.rel_bias", Shape{cfg.heads, 2 * m - 1});
    layout.emplace_back(p + "norm2.gamma", Shape{c});
    layout.emplace_back(p + "norm2.beta", Shape{c});
    layout.emplace_back(p + "mlp.fc1.weight", Shape{c, hidden});
    layout.emplace_back(p + "mlp.fc1.bias", Shape{hidden});
    layout.emplace_back(p + "mlp.fc2.weight", Shape{hidden, c});
    layout.emplace_back(p + "mlp.fc2.bias", Shape{c});
    layout.emplace_back(p + "head.weight", Shape{(t / m) * c, k});
    layout.emplace_back(p + "head.bias", Shape{k});
  }
  layout.emplace_back("fusion.weight", Shape{cfg.branches() * k, cfg.branches()});
  return layout;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Rolls [B, T, C] so that position p holds token order[p].
Tensor reorder_tokens(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto batch = x.dim(0), tokens = x.dim(1), c = x.dim(2);
  std::vector<std::size_t> index(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < tokens; ++p) {
      const auto src = (b * tokens + order[p]) * c;
      const auto dst = (b * tokens + p) * c;
      for (std::size_t j = 0; j < c; ++j) index[dst + j] = src + j;
    }
  }
  return ops::gather(x, std::move(index), x.shape());
}

std::vector<std::size_t> inverse_order(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> inv(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) inv[order[p]] = p;
  return inv;
}

void require_scale(std::size_t tokens, std::size_t scale) {
  if (scale == 0 || tokens % scale != 0) {
    throw AdmissibilityError("window scale " + std::to_string(scale) +
                             " does not divide the token count " + std::to_string(tokens) +
                             "; every window scale M must divide L/P");
  }
}

}  // namespace

void ParamStore::add(const std::string& name, Tensor tensor) {
  if (!tensors_.emplace(name, std::move(tensor)).second) {
    throw DimensionError("duplicate parameter " + name);
  }
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DimensionError("missing parameter " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : tensors_) {
    out.add(name, Tensor::from_data(t.shape(), {t.data().begin(), t.data().end()}, true));
  }
  return out;
}

std::string branch_prefix(std::size_t branch) { return "branch" + std::to_string(branch) + "."; }

ParamStore init_params(const MswConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore params;
  for (auto& [name, shape] : param_layout(cfg)) {
    if (ends_with(name, ".gamma")) {
      params.add(name, ones_param(shape));
    } else if (ends_with(name, ".bias") || ends_with(name, ".beta") || ends_with(name, "rel_bias")) {
      params.add(name, zeros_param(shape));
    } else {
      params.add(name, trunc_normal(shape, rng));
    }
  }
  return params;
}

void check_params(const MswConfig& cfg, const ParamStore& params) {
  const auto layout = param_layout(cfg);
  for (const auto& [name, shape] : layout) {
    const auto& t = params.get(name);
    if (t.shape() != shape) {
      throw DimensionError("parameter " + name + " has shape " + shape_str(t.shape()) +
                           ", configuration expects " + shape_str(shape));
    }
  }
  if (layout.size() != params.size()) {
    throw DimensionError("parameter store holds " + std::to_string(params.size()) +
                         " tensors, configuration expects " + std::to_string(layout.size()));
  }
}

Tensor patch_split(const EcgRecord& record, const MswConfig& cfg) {
  const EcgRecord* one[] = {&record};
  auto batched = patch_split(std::span<const EcgRecord* const>(one), cfg);
  return Tensor::from_data({cfg.tokens(), cfg.patch_width()},
                           {batched.data().begin(), batched.data().end()});
}

Tensor patch_split(std::span<const EcgRecord* const> records, const MswConfig& cfg) {
  if (cfg.patch == 0 || cfg.seq_len % cfg.patch != 0) {
    throw AdmissibilityError("patch size " + std::to_string(cfg.patch) +
                             " does not divide signal length " + std::to_string(cfg.seq_len) +
                             "; P must divide L");
  }
  const auto len = cfg.seq_len, leads = cfg.n_leads, p = cfg.patch;
  const auto tokens = cfg.tokens();
  const auto width = cfg.patch_width();
  std::vector<double> out(records.size() * tokens * width);
  for (std::size_t b = 0; b < records.size(); ++b) {
    const auto& signal = records[b]->signal;
    if (signal.size() != leads * len) {
      throw DimensionError("record " + records[b]->id + " holds " + std::to_string(signal.size()) +
                           " samples, expected " + std::to_string(leads) + "x" + std::to_string(len));
    }
    for (std::size_t t = 0; t < tokens; ++t) {
      double* dst = out.data() + (b * tokens + t) * width;
      for (std::size_t l = 0; l < leads; ++l) {
        for (std::size_t s = 0; s < p; ++s) dst[l * p + s] = signal[l * len + t * p + s];
      }
    }
  }
  return Tensor::from_data({records.size(), tokens, width}, std::move(out));
}

Tensor linear_embed(const Tensor& patches, const Tensor& weight, const Tensor& bias) {
  return ops::linear(patches, weight, bias);
}

std::vector<std::size_t> rotated_token_order(std::size_t tokens, std::size_t shift) {
  std::vector<std::size_t> order(tokens);
  for (std::size_t p = 0; p < tokens; ++p) order[p] = (p + shift) % tokens;
  return order;
}

std::vector<Tensor> window_partition(const Tensor& tokens, std::size_t scale, std::size_t shift) {
  if (tokens.rank() != 2) throw DimensionError("window_partition expects [T, C], got " + shape_str(tokens.shape()));
  const auto t = tokens.dim(0);
  require_scale(t, scale);
  if (shift >= scale) {
    throw AdmissibilityError("shift " + std::to_string(shift) + " must be smaller than window scale " +
                             std::to_string(scale));
  }
  auto batched = ops::reshape(tokens, {1, t, tokens.dim(1)});
  auto rotated = ops::reshape(reorder_tokens(batched, rotated_token_order(t, shift)), tokens.shape());
  std::vector<std::size_t> lengths(t / scale, scale);
  return ops::split(rotated, 0, lengths);
}

Tensor window_merge(const std::vector<Tensor>& windows, std::size_t shift) {
  auto rotated = ops::concat(windows, 0);
  const auto t = rotated.dim(0);
  auto batched = ops::reshape(rotated, {1, t, rotated.dim(1)});
  auto restored = reorder_tokens(batched, inverse_order(rotated_token_order(t, shift)));
  return ops::reshape(restored, rotated.shape());
}

Tensor relative_bias(const Tensor& table, std::size_t scale) {
  if (scale == 0 || table.rank() != 2 || table.dim(1) != 2 * scale - 1) {
    throw DimensionError("relative bias table " + shape_str(table.shape()) +
                         " does not match window scale " + std::to_string(scale) +
                         " (needs 2M-1 = " + std::to_string(scale == 0 ? 0 : 2 * scale - 1) +
                         " entries per head)");
  }
  const auto heads = table.dim(0);
  const auto width = 2 * scale - 1;
  std::vector<std::size_t> index;
  index.reserve(heads * scale * scale);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < scale; ++i) {
      for (std::size_t j = 0; j < scale; ++j) index.push_back(h * width + (i + scale - 1 - j));
    }
  }
  return ops::gather(table, std::move(index), {heads, scale, scale});
}

AttentionOutput window_attention(const Tensor& x, const ParamStore& params,
                                 const std::string& prefix, const MswConfig& cfg,
                                 std::size_t scale, bool train, Rng& rng) {
  if (x.rank() != 3) throw DimensionError("window_attention expects [B, T, C], got " + shape_str(x.shape()));
  const auto batch = x.dim(0), tokens = x.dim(1), c = x.dim(2);
  require_scale(tokens, scale);
  const auto heads = cfg.heads;
  if (heads == 0 || c % heads != 0) throw DimensionError("head count does not divide " + shape_str(x.shape()));
  const auto d = c / heads;
  const auto windows = tokens / scale;
  const auto group = batch * windows * heads;
  const std::string a = prefix + "attn.";
  const bool shifted = cfg.shift % tokens != 0;

  Tensor h = shifted ? reorder_tokens(x, rotated_token_order(tokens, cfg.shift)) : x;

  Tensor q, k, v;
  {
    MacPhase phase("qkv");
    q = ops::linear(h, params.get(a + "q.weight"), params.get(a + "q.bias"));
    k = ops::linear(h, params.get(a + "k.weight"), params.get(a + "k.bias"));
    v = ops::linear(h, params.get(a + "v.weight"), params.get(a + "v.bias"));
  }
  auto to_heads = [&](const Tensor& t) {
    auto split = ops::reshape(t, {batch, windows, scale, heads, d});
    return ops::reshape(ops::permute(split, {0, 1, 3, 2, 4}), {group, scale, d});
  };
  q = to_heads(q);
  k = to_heads(k);
  v = to_heads(v);

  Tensor logits;
  {
    MacPhase phase("qk");
    logits = ops::bmm(q, k, /*transpose_b=*/true);
  }
  logits = ops::scale(logits, 1.0 / std::sqrt(static_cast<double>(d)));
  auto bias = relative_bias(params.get(a + "rel_bias"), scale);
  logits = ops::reshape(ops::add(ops::reshape(logits, {batch * windows, heads, scale, scale}), bias),
                        {group, scale, scale});
  auto probs = ops::softmax_lastdim(logits);
  auto dropped = ops::dropout(probs, cfg.attn_dropout, train, rng);

  Tensor z;
  {
    MacPhase phase("av");
    z = ops::bmm(dropped, v);
  }
  z = ops::reshape(ops::permute(ops::reshape(z, {batch, windows, heads, scale, d}), {0, 1, 3, 2, 4}),
                   {batch, tokens, c});
  Tensor out;
  {
    MacPhase phase("out");
    out = ops::linear(z, params.get(a + "proj.weight"), params.get(a + "proj.bias"));
  }
  if (shifted) out = reorder_tokens(out, inverse_order(rotated_token_order(tokens, cfg.shift)));
  return {out, probs};
}

AttentionOutput window_attention(const Tensor& window, const ParamStore& params,
                                 const std::string& prefix, const MswConfig& cfg, bool train,
                                 Rng& rng) {
  if (window.rank() != 2) throw DimensionError("window must be [M, C], got " + shape_str(window.shape()));
  auto single = cfg;
  single.shift = 0;
  auto result = window_attention(ops::reshape(window, {1, window.dim(0), window.dim(1)}), params,
                                 prefix, single, window.dim(0), train, rng);
  result.out = ops::reshape(result.out, window.shape());
  return result;
}

Tensor branch_block(const Tensor& tokens, const ParamStore& params, const std::string& prefix,
                    const MswConfig& cfg, std::size_t scale, bool train, Rng& rng,
                    Tensor* attention) {
  auto normed = ops::layernorm(tokens, params.get(prefix + "norm1.gamma"),
                               params.get(prefix + "norm1.beta"));
  auto attn = window_attention(normed, params, prefix, cfg, scale, train, rng);
  if (attention) *attention = attn.probs;
  auto x = ops::add(tokens, attn.out);
  auto normed2 = ops::layernorm(x, params.get(prefix + "norm2.gamma"),
                                params.get(prefix + "norm2.beta"));
  auto hidden = ops::gelu(ops::linear(normed2, params.get(prefix + "mlp.fc1.weight"),
                                      params.get(prefix + "mlp.fc1.bias")));
  auto mlp = ops::linear(hidden, params.get(prefix + "mlp.fc2.weight"),
                         params.get(prefix + "mlp.fc2.bias"));
  return ops::add(x, mlp);
}

std::vector<BranchOutput> msw_block(const Tensor& tokens, const MswConfig& cfg,
                                    const ParamStore& params, bool train, Rng& rng) {
  cfg.validate();
  std::vector<BranchOutput> out;
  out.reserve(cfg.branches());
  for (std::size_t i = 0; i < cfg.branches(); ++i) {
    BranchOutput branch;
    branch.scale = cfg.windows[i];
    const auto prefix = branch_prefix(i);
    branch.tokens = branch_block(tokens, params, prefix, cfg, branch.scale, train, rng,
                                 &branch.attention);
    branch.alpha = branch_project(branch.tokens, branch.scale, params.get(prefix + "head.weight"),
                                  params.get(prefix + "head.bias"));
    out.push_back(std::move(branch));
  }
  return out;
}

Tensor branch_project(const Tensor& tokens, std::size_t scale, const Tensor& weight,
                      const Tensor& bias) {
  if (tokens.rank() != 3) throw DimensionError("branch_project expects [B, T, C], got " + shape_str(tokens.shape()));
  const auto batch = tokens.dim(0), t = tokens.dim(1), c = tokens.dim(2);
  require_scale(t, scale);
  const auto windows = t / scale;
  auto pooled = ops::mean(ops::reshape(tokens, {batch, windows, scale, c}), 2);
  return ops::linear(ops::reshape(pooled, {batch, windows * c}), weight, bias);
}

FusionOutput fuse(std::span<const Tensor> alphas, const Tensor& fusion_weight) {
  if (alphas.empty()) throw DimensionError("fuse needs at least one branch");
  const auto& first = alphas.front().shape();
  if (first.size() != 2) throw DimensionError("branch logits must be [B, K], got " + shape_str(first));
  const auto batch = first[0], k = first[1], n = alphas.size();
  std::vector<Tensor> rows;
  for (const auto& alpha : alphas) {
    if (alpha.shape() != first) {
      throw DimensionError("branch logits disagree: " + shape_str(first) + " vs " +
                           shape_str(alpha.shape()));
    }
    rows.push_back(ops::reshape(alpha, {batch, 1, k}));
  }
  if (fusion_weight.shape() != Shape{n * k, n}) {
    throw DimensionError("fusion weight " + shape_str(fusion_weight.shape()) + " does not match " +
                         std::to_string(n) + " branches of " + std::to_string(k) + " classes");
  }
  auto stacked = ops::concat(rows, 1);  // [B, n, K]
  auto joined = ops::reshape(stacked, {batch, n * k});
  auto beta = ops::softmax_lastdim(ops::matmul(joined, fusion_weight));
  auto logits = ops::reshape(ops::bmm(ops::reshape(beta, {batch, 1, n}), stacked), {batch, k});
  return {ops::sigmoid(logits), logits, beta};
}

ForwardOutput forward(std::span<const EcgRecord* const> records, const MswConfig& cfg,
                      const ParamStore& params, bool train, Rng& rng) {
  cfg.validate();
  auto patches = patch_split(records, cfg);
  auto tokens = linear_embed(patches, params.get("embed.weight"), params.get("embed.bias"));
  ForwardOutput out;
  out.branches = msw_block(tokens, cfg, params, train, rng);
  std::vector<Tensor> alphas;
  for (const auto& b : out.branches) alphas.push_back(b.alpha);
  auto fused = fuse(alphas, params.get("fusion.weight"));
  out.probs = fused.probs;
  out.logits = fused.logits;
  out.beta = fused.beta;
  return out;
}

ForwardOutput forward(const EcgRecord& record, const MswConfig& cfg, const ParamStore& params,
                      bool train, Rng& rng) {
  const EcgRecord* one[] = {&record};
  return forward(std::span<const EcgRecord* const>(one), cfg, params, train, rng);
}

}  // namespace msw

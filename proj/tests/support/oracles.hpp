#pragma once

// Reference implementations written with plain loops over std::vector,
// sharing no code with the tensor engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "msw/metrics.hpp"
#include "msw/model.hpp"

namespace msw::oracle {

using Matrix = std::vector<std::vector<double>>;  // row-major [rows][cols]

inline Matrix param_matrix(const ParamStore& p, const std::string& name) {
  const auto& t = p.get(name);
  const auto rows = t.dim(0), cols = t.dim(1);
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = t.data()[i * cols + j];
  return m;
}

inline std::vector<double> param_vector(const ParamStore& p, const std::string& name) {
  const auto& t = p.get(name);
  return {t.data().begin(), t.data().end()};
}

// x W + b for every row of x.
inline Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  Matrix out(x.size(), std::vector<double>(w[0].size(), 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double acc = b.empty() ? 0.0 : b[j];
      for (std::size_t k = 0; k < w.size(); ++k) acc += x[r][k] * w[k][j];
      out[r][j] = acc;
    }
  }
  return out;
}

inline Matrix layer_norm(const Matrix& x, const std::vector<double>& gamma,
                         const std::vector<double>& beta, double eps = 1e-5) {
  Matrix out = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0.0;
    for (double v : x[r]) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t j = 0; j < x[r].size(); ++j) {
      out[r][j] = (x[r][j] - mean) / std::sqrt(var + eps) * gamma[j] + beta[j];
    }
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline std::vector<double> softmax(const std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += e[i] = std::exp(z[i] - top);
  for (auto& v : e) v /= total;
  return e;
}

struct AttentionResult {
  Matrix out;                   // [T, C]
  std::vector<Matrix> probs;    // per head [T, T]
};

// Unwindowed multi-head attention over the whole sequence (softmax of
// QK^T / sqrt(d) plus the relative bias, times V, projected), using the
// branch's parameters under `prefix`.
inline AttentionResult global_attention(const Matrix& x, const ParamStore& p,
                                        const std::string& prefix, std::size_t heads) {
  const std::string a = prefix + "attn.";
  const Matrix q = affine(x, param_matrix(p, a + "q.weight"), param_vector(p, a + "q.bias"));
  const Matrix k = affine(x, param_matrix(p, a + "k.weight"), param_vector(p, a + "k.bias"));
  const Matrix v = affine(x, param_matrix(p, a + "v.weight"), param_vector(p, a + "v.bias"));
  const Matrix table = param_matrix(p, a + "rel_bias");
  const std::size_t t = x.size(), c = x[0].size(), d = c / heads;

  AttentionResult result;
  Matrix z(t, std::vector<double>(c, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix probs(t);
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> logits(t);
      for (std::size_t j = 0; j < t; ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += q[i][h * d + e] * k[j][h * d + e];
        const auto offset = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j) +
                            static_cast<std::ptrdiff_t>(t) - 1;
        logits[j] = dot / std::sqrt(static_cast<double>(d)) + table[h][static_cast<std::size_t>(offset)];
      }
      probs[i] = softmax(logits);
      for (std::size_t j = 0; j < t; ++j) {
        for (std::size_t e = 0; e < d; ++e) z[i][h * d + e] += probs[i][j] * v[j][h * d + e];
      }
    }
    result.probs.push_back(std::move(probs));
  }
  result.out = affine(z, param_matrix(p, a + "proj.weight"), param_vector(p, a + "proj.bias"));
  return result;
}

// Pre-norm transformer layer: x + attn(LN(x)), then + MLP(LN(.)).
inline Matrix global_layer(const Matrix& x, const ParamStore& p, const std::string& prefix,
                           std::size_t heads) {
  const Matrix n1 = layer_norm(x, param_vector(p, prefix + "norm1.gamma"),
                               param_vector(p, prefix + "norm1.beta"));
  const auto attn = global_attention(n1, p, prefix, heads);
  Matrix y = x;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y[i].size(); ++j) y[i][j] += attn.out[i][j];
  const Matrix n2 = layer_norm(y, param_vector(p, prefix + "norm2.gamma"),
                               param_vector(p, prefix + "norm2.beta"));
  Matrix hidden = affine(n2, param_matrix(p, prefix + "mlp.fc1.weight"),
                         param_vector(p, prefix + "mlp.fc1.bias"));
  for (auto& row : hidden)
    for (auto& v : row) v = gelu(v);
  const Matrix mlp = affine(hidden, param_matrix(p, prefix + "mlp.fc2.weight"),
                            param_vector(p, prefix + "mlp.fc2.bias"));
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y[i].size(); ++j) y[i][j] += mlp[i][j];
  return y;
}

// ---- metrics by direct counting -----------------------------------------

inline bool predicted(const EvalBatch& b, std::size_t r, std::size_t k) {
  return b.scores[r * b.classes + k] >= b.threshold;
}
inline bool truth(const EvalBatch& b, std::size_t r, std::size_t k) {
  return b.labels[r * b.classes + k] != 0;
}

inline double f1_from_counts(double tp, double fp, double fn) {
  const double p = tp + fp == 0 ? 0.0 : tp / (tp + fp);
  const double r = tp + fn == 0 ? 0.0 : tp / (tp + fn);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

inline double accuracy(const EvalBatch& b) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < b.rows; ++r)
    for (std::size_t k = 0; k < b.classes; ++k) correct += predicted(b, r, k) == truth(b, r, k);
  return static_cast<double>(correct) / static_cast<double>(b.rows * b.classes);
}

inline double macro_f1(const EvalBatch& b) {
  double total = 0.0;
  for (std::size_t k = 0; k < b.classes; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < b.rows; ++r) {
      const bool p = predicted(b, r, k), t = truth(b, r, k);
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    total += f1_from_counts(tp, fp, fn);
  }
  return total / static_cast<double>(b.classes);
}

inline double samples_f1(const EvalBatch& b) {
  double total = 0.0;
  for (std::size_t r = 0; r < b.rows; ++r) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < b.classes; ++k) {
      const bool p = predicted(b, r, k), t = truth(b, r, k);
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    total += tp + fp + fn == 0 ? 1.0 : f1_from_counts(tp, fp, fn);
  }
  return total / static_cast<double>(b.rows);
}

// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
// Returns a negative value when the unit has no positive or no negative.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return pairs == 0.0 ? -1.0 : wins / pairs;
}

// Mean pairwise AUC over classes (by_class) or samples; -1 if none valid.
inline double mean_auc(const EvalBatch& b, bool by_class) {
  const std::size_t units = by_class ? b.classes : b.rows;
  const std::size_t members = by_class ? b.rows : b.classes;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<double> s;
    std::vector<bool> l;
    for (std::size_t m = 0; m < members; ++m) {
      const auto r = by_class ? m : u, k = by_class ? u : m;
      s.push_back(b.scores[r * b.classes + k]);
      l.push_back(truth(b, r, k));
    }
    const double auc = pairwise_auc(s, l);
    if (auc >= 0.0) {
      total += auc;
      ++used;
    }
  }
  return used == 0 ? -1.0 : total / static_cast<double>(used);
}

// ---- matched filter for the synthetic motifs -------------------------------

// Hand-built per-class scores on raw synthetic signals. Each lead's signed
// area divided by its nominal gain measures (pulse count x width x
// amplitude); the last lead is the unmodified rhythm reference.
//   WIDE: widened-lead area over reference area
//   AMP:  boosted-lead area over reference area
//   SLOW: reference area alone (fewer pulses)
inline std::vector<double> matched_filter_scores(const EcgRecord& rec, std::size_t leads,
                                                 std::size_t len, std::size_t classes) {
  auto area = [&](std::size_t lead) {
    const double magnitude = 1.0 - 0.5 * static_cast<double>(lead) / static_cast<double>(leads);
    const double gain = lead % 2 == 0 ? magnitude : -magnitude;
    double total = 0.0;
    for (std::size_t t = 0; t < len; ++t) total += rec.signal[lead * len + t];
    return total / gain;
  };
  const std::size_t boosted = std::max<std::size_t>(1, leads / 2);
  const double reference = area(leads - 1);
  std::vector<double> scores{area(boosted) / reference, area(0) / reference, -reference};
  scores.resize(classes);
  return scores;
}

// Per-class pairwise AUC of matched_filter_scores over the given records.
inline std::vector<double> matched_filter_auc(const std::vector<EcgRecord>& records,
                                              std::size_t leads, std::size_t len,
                                              std::size_t classes) {
  std::vector<std::vector<double>> scores(classes);
  std::vector<std::vector<bool>> labels(classes);
  for (const auto& rec : records) {
    const auto s = matched_filter_scores(rec, leads, len, classes);
    for (std::size_t k = 0; k < classes; ++k) {
      scores[k].push_back(s[k]);
      labels[k].push_back(rec.labels[k] != 0);
    }
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < classes; ++k) out.push_back(pairwise_auc(scores[k], labels[k]));
  return out;
}

}  // namespace msw::oracle

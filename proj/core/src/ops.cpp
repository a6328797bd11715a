#include "msw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "msw/errors.hpp"
#include "msw/mac_counter.hpp"

namespace msw::ops {
namespace {

using detail::input_grad;
using detail::make_result;
using detail::Node;

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

// Number of times b repeats inside a when b's shape is a suffix of a's.
std::size_t broadcast_repeats(const std::string& op, const Shape& a, const Shape& b) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    dim_error(op, a, b);
  }
  const auto inner = shape_numel(b);
  return inner == 0 ? 0 : shape_numel(a) / inner;
}

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto reps = broadcast_repeats("add", a.shape(), b.shape());
  const auto inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < inner; ++j) out[r * inner + j] += bd[j];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [reps, inner](Node& self) {
    const auto& g = self.grad;
    if (double* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (double* gb = input_grad(self, 1)) {
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t j = 0; j < inner; ++j) gb[j] += g[r * inner + j];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto reps = broadcast_repeats("mul", a.shape(), b.shape());
  const auto inner = b.numel();
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < inner; ++j) out[r * inner + j] = ad[r * inner + j] * bd[j];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [reps, inner](Node& self) {
    const auto& g = self.grad;
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    double* ga = input_grad(self, 0);
    double* gb = input_grad(self, 1);
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t j = 0; j < inner; ++j) {
        const auto i = r * inner + j;
        if (ga) ga[i] += g[i] * bd[j];
        if (gb) gb[j] += g[i] * ad[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    dim_error("matmul", a.shape(), b.shape());
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::record_macs(static_cast<std::uint64_t>(m) * k * n);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = input_grad(self, 0)) gemm_nt(g, self.parents[1]->data.data(), ga, m, n, k);
    if (double* gb = input_grad(self, 1)) gemm_tn(self.parents[0]->data.data(), g, gb, m, k, n);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) dim_error("bmm", a.shape(), b.shape());
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const auto n = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) dim_error("bmm", a.shape(), b.shape());
  detail::record_macs(static_cast<std::uint64_t>(batch) * m * k * n);
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      gemm_nt(ad + s * m * k, bd + s * n * k, out.data() + s * m * n, m, k, n);
    } else {
      gemm_nn(ad + s * m * k, bd + s * k * n, out.data() + s * m * n, m, k, n);
    }
  }
  return make_result({batch, m, n}, std::move(out), {a, b},
                     [batch, m, k, n, transpose_b](Node& self) {
    const double* g = self.grad.data();
    const double* ad = self.parents[0]->data.data();
    const double* bd = self.parents[1]->data.data();
    double* ga = input_grad(self, 0);
    double* gb = input_grad(self, 1);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* gs = g + s * m * n;
      if (transpose_b) {
        // c = a b^T: da = g b, db = g^T a
        if (ga) gemm_nn(gs, bd + s * n * k, ga + s * m * k, m, n, k);
        if (gb) gemm_tn(gs, ad + s * m * k, gb + s * n * k, m, n, k);
      } else {
        if (ga) gemm_nt(gs, bd + s * k * n, ga + s * m * k, m, n, k);
        if (gb) gemm_tn(ad + s * m * k, gs, gb + s * k * n, m, k, n);
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || x.shape().back() != weight.dim(0)) {
    dim_error("linear", x.shape(), weight.shape());
  }
  const auto in = weight.dim(0);
  const auto out_features = weight.dim(1);
  Shape out_shape = x.shape();
  out_shape.back() = out_features;
  auto flat = x.rank() == 2 ? x : reshape(x, {x.numel() / in, in});
  auto y = matmul(flat, weight);
  if (bias.defined()) {
    if (bias.rank() != 1 || bias.dim(0) != out_features) dim_error("linear bias", weight.shape(), bias.shape());
    y = add(y, bias);
  }
  return out_shape == y.shape() ? y : reshape(y, std::move(out_shape));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) dim_error("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& in_shape = x.shape();
  const auto rank = in_shape.size();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) dim_error("permute", in_shape, Shape(axes.begin(), axes.end()));
  for (auto a : axes) {
    if (a >= rank || seen[a]) dim_error("permute", in_shape, Shape(axes.begin(), axes.end()));
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = strides_of(in_shape);
  // source offset for each output element, walked with an odometer
  const auto total = x.numel();
  std::vector<std::size_t> source(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    source[i] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      const auto stride = in_strides[axes[d]];
      if (++counter[d] < out_shape[d]) {
        offset += stride;
        break;
      }
      offset -= stride * (out_shape[d] - 1);
      counter[d] = 0;
    }
  }
  return gather(x, std::move(source), std::move(out_shape));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const auto& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size()) dim_error("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) dim_error("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  const auto whole = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;  // contiguous chunk length per part
  std::size_t column = 0;
  for (const auto& p : parts) {
    const auto width = p.dim(axis) * whole.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>(o * whole.extent * whole.inner + column));
    }
    widths.push_back(width);
    column += width;
  }
  const auto row = whole.extent * whole.inner;
  return make_result(std::move(out_shape), std::move(out), parts,
                     [widths, row, outer = whole.outer](Node& self) {
    std::size_t column = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (double* gp = input_grad(self, p)) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < widths[p]; ++j) {
            gp[o * widths[p] + j] += self.grad[o * row + column + j];
          }
        }
      }
      column += widths[p];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") along axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const auto s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<std::size_t> index;
  index.reserve(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = start; e < start + length; ++e) {
      for (std::size_t i = 0; i < s.inner; ++i) index.push_back((o * s.extent + e) * s.inner + i);
    }
  }
  return gather(x, std::move(index), std::move(out_shape));
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis,
                          const std::vector<std::size_t>& lengths) {
  const auto total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (axis >= x.rank() || total != x.dim(axis)) {
    throw DimensionError("split lengths sum to " + std::to_string(total) + " for " +
                         shape_str(x.shape()));
  }
  std::vector<Tensor> parts;
  std::size_t start = 0;
  for (auto len : lengths) {
    parts.push_back(slice(x, axis, start, len));
    start += len;
  }
  return parts;
}

Tensor gather(const Tensor& x, std::vector<std::size_t> indices, Shape out_shape) {
  if (shape_numel(out_shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) +
                         " indices for output " + shape_str(out_shape));
  }
  const auto xd = x.data();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xd.size()) {
      throw DimensionError("gather: index " + std::to_string(indices[i]) +
                           " out of range for " + shape_str(x.shape()));
    }
    out[i] = xd[indices[i]];
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [indices = std::move(indices)](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < indices.size(); ++i) gx[indices[i]] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, {x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      const double g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->data.size(); ++i) gx[i] += g;
    }
  });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("mean: axis out of range for " + shape_str(x.shape()));
  const auto s = split_at(x.shape(), axis);
  if (s.extent == 0) throw DimensionError("mean over empty axis of " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xd = x.data();
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += xd[(o * s.extent + e) * s.inner + i];
      }
    }
  }
  for (auto& v : out) v *= inv;
  return make_result(std::move(out_shape), std::move(out), {x}, [s, inv](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t e = 0; e < s.extent; ++e) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            gx[(o * s.extent + e) * s.inner + i] += inv * self.grad[o * s.inner + i];
          }
        }
      }
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("softmax over empty last dimension of " + shape_str(x.shape()));
  }
  const auto width = x.shape().back();
  const auto rows = x.numel() / width;
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * width;
    double* y = out.data() + r * width;
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(in[j] - peak);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < width; ++j) y[j] *= inv;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, width](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * width;
        const double* g = self.grad.data() + r * width;
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < width; ++j) gx[r * width + j] += y[j] * (g[j] - dot);
      }
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw DimensionError("layernorm: eps must be positive");
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.shape().back() || beta.dim(0) != x.shape().back()) {
    dim_error("layernorm", x.shape(), gamma.shape());
  }
  const auto width = x.shape().back();
  const auto rows = x.numel() / width;
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<double> out(x.numel());
  std::vector<double> normed(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += in[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < width; ++j) {
      const auto i = r * width + j;
      normed[i] = (in[j] - mu) * inv_std[r];
      out[i] = normed[i] * gd[j] + bd[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, width, normed = std::move(normed),
                      inv_std = std::move(inv_std)](Node& self) {
    const auto& g = self.grad;
    const auto& gd = self.parents[1]->data;
    double* gx = input_grad(self, 0);
    double* ggamma = input_grad(self, 1);
    double* gbeta = input_grad(self, 2);
    const double n = static_cast<double>(width);
    for (std::size_t r = 0; r < rows; ++r) {
      double mean_g = 0.0;
      double mean_gx = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        const auto i = r * width + j;
        const double gn = g[i] * gd[j];
        mean_g += gn;
        mean_gx += gn * normed[i];
        if (ggamma) ggamma[j] += g[i] * normed[i];
        if (gbeta) gbeta[j] += g[i];
      }
      if (!gx) continue;
      mean_g /= n;
      mean_gx /= n;
      for (std::size_t j = 0; j < width; ++j) {
        const auto i = r * width + j;
        gx[i] += inv_std[r] * (g[i] * gd[j] - mean_g - normed[i] * mean_gx);
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] * std::numbers::sqrt2 * 0.5));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      const auto& xd = self.parents[0]->data;
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < xd.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(xd[i] * std::numbers::sqrt2 * 0.5));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xd[i] * xd[i]);
        gx[i] += self.grad[i] * (cdf + xd[i] * pdf);
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // branch on sign so exp never overflows
    if (xd[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    } else {
      const double e = std::exp(xd[i]);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.data.size(); ++i) {
        const double y = self.data[i];
        gx[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw DimensionError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? factor : 0.0;
    out[i] = xd[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
    }
  });
}

}  // namespace msw::ops

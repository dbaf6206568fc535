#include "deskasr/gradcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deskasr/errors.hpp"

namespace deskasr::gradcore {

namespace {

using detail::Node;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": operand shapes differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void accum(const std::shared_ptr<Node>& p, std::span<const double> g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
    accum(n.parents[0], n.grad);
    accum(n.parents[1], n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
    accum(n.parents[0], n.grad);
    auto& p = n.parents[1];
    if (p->requires_grad) {
      p->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return make_op(a.shape(), std::move(out), {a}, [c](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * c;
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      p->grad[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh_op(const Tensor& a) {
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      p->grad[i] += n.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return make_op(a.shape(), std::move(out), {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (p->value[i] > 0.0) p->grad[i] += n.grad[i];
    }
  });
}

Tensor gradient_reversal(const Tensor& a, double lambda) {
  std::vector<double> out(a.value().begin(), a.value().end());
  return make_op(a.shape(), std::move(out), {a}, [lambda](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] -= lambda * n.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<double> out(M * N, 0.0);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = av[i * K + k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < N; ++j) out[i * N + j] += aik * bv[k * N + j];
    }
  }
  return make_op({M, N}, std::move(out), {a, b}, [M, K, N](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();  // dA = dY * B^T
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          const double g = n.grad[i * N + j];
          if (g == 0.0) continue;
          for (std::size_t k = 0; k < K; ++k)
            pa->grad[i * K + k] += g * pb->value[k * N + j];
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();  // dB = A^T * dY
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          const double aik = pa->value[i * K + k];
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < N; ++j)
            pb->grad[k * N + j] += aik * n.grad[i * N + j];
        }
    }
  });
}

Tensor add_rows(const Tensor& a, const Tensor& bias) {
  if (a.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != a.dim(1)) {
    throw DimensionError("add_rows: " + shape_str(a.shape()) + " + bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t M = a.dim(0), N = a.dim(1);
  std::vector<double> out(M * N);
  auto av = a.value(), bv = bias.value();
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) out[i * N + j] = av[i * N + j] + bv[j];
  return make_op(a.shape(), std::move(out), {a, bias}, [M, N](Node& n) {
    accum(n.parents[0], n.grad);
    auto& pb = n.parents[1];
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) pb->grad[j] += n.grad[i * N + j];
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: " + shape_str(a.shape()) + " | " +
                         shape_str(b.shape()));
  }
  const std::size_t M = a.dim(0), Na = a.dim(1), Nb = b.dim(1);
  std::vector<double> out(M * (Na + Nb));
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < M; ++i) {
    std::copy_n(av.begin() + i * Na, Na, out.begin() + i * (Na + Nb));
    std::copy_n(bv.begin() + i * Nb, Nb, out.begin() + i * (Na + Nb) + Na);
  }
  return make_op({M, Na + Nb}, std::move(out), {a, b}, [M, Na, Nb](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    for (std::size_t i = 0; i < M; ++i) {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t j = 0; j < Na; ++j)
          pa->grad[i * Na + j] += n.grad[i * (Na + Nb) + j];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t j = 0; j < Nb; ++j)
          pb->grad[i * Nb + j] += n.grad[i * (Na + Nb) + Na + j];
      }
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t from, std::size_t to) {
  if (a.ndim() != 2 || from >= to || to > a.dim(1)) {
    throw DimensionError("slice_cols [" + std::to_string(from) + "," +
                         std::to_string(to) + ") of " + shape_str(a.shape()));
  }
  const std::size_t M = a.dim(0), N = a.dim(1), W = to - from;
  std::vector<double> out(M * W);
  auto av = a.value();
  for (std::size_t i = 0; i < M; ++i)
    std::copy_n(av.begin() + i * N + from, W, out.begin() + i * W);
  return make_op({M, W}, std::move(out), {a}, [M, N, W, from](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < W; ++j)
        p->grad[i * N + from + j] += n.grad[i * W + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const std::size_t N = parts[0].dim(1);
  std::size_t M = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(1) != N) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()));
    }
    M += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(M * N);
  for (const auto& p : parts) {
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<std::size_t> row_of(parts.size());
  for (std::size_t i = 0, r = 0; i < parts.size(); ++i) {
    row_of[i] = r;
    r += parts[i].dim(0);
  }
  return make_op({M, N}, std::move(out), parts, [N, row_of](Node& n) {
    for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
      auto& p = n.parents[pi];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      const std::size_t off = row_of[pi] * N;
      for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += n.grad[off + i];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t from, std::size_t to) {
  if (a.ndim() != 2 || from >= to || to > a.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(from) + "," +
                         std::to_string(to) + ") of " + shape_str(a.shape()));
  }
  const std::size_t N = a.dim(1), M = to - from;
  auto av = a.value();
  std::vector<double> out(av.begin() + from * N, av.begin() + to * N);
  return make_op({M, N}, std::move(out), {a}, [N, from](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      p->grad[from * N + i] += n.grad[i];
  });
}

Tensor embed(const Tensor& table, std::span<const int> ids) {
  if (table.ndim() != 2) throw DimensionError("embed: table must be 2-D");
  const std::size_t V = table.dim(0), D = table.dim(1);
  std::vector<double> out(ids.size() * D);
  auto tv = table.value();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw LabelError("embed: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(V));
    }
    std::copy_n(tv.begin() + static_cast<std::size_t>(id) * D, D, out.begin() + i * D);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_op({ids.size(), D}, std::move(out), {table}, [D, idv](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      const std::size_t off = static_cast<std::size_t>(idv[i]) * D;
      for (std::size_t j = 0; j < D; ++j) p->grad[off + j] += n.grad[i * D + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  return make_op({1}, {s}, {a}, [](Node& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (double& g : p->grad) g += n.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                             std::span<const double> row_weights) {
  if (logits.ndim() != 2) throw DimensionError("softmax_cross_entropy: logits must be 2-D");
  const std::size_t T = logits.dim(0), C = logits.dim(1);
  if (targets.size() != T) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(T) + " rows");
  }
  if (!row_weights.empty() && row_weights.size() != T) {
    throw DimensionError("softmax_cross_entropy: bad row weight count");
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= C) {
      throw LabelError("softmax_cross_entropy: target " + std::to_string(targets[t]) +
                       " at row " + std::to_string(t) + " outside [0," +
                       std::to_string(C) + ")");
    }
  }
  auto lv = logits.value();
  std::vector<double> probs(T * C);
  double wsum = 0.0, loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double w = row_weights.empty() ? 1.0 : row_weights[t];
    wsum += w;
    double mx = lv[t * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, lv[t * C + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(lv[t * C + c] - mx);
    const double logz = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c) probs[t * C + c] = std::exp(lv[t * C + c] - logz);
    loss += w * (logz - lv[t * C + static_cast<std::size_t>(targets[t])]);
  }
  if (wsum <= 0.0) throw ConsistencyError("softmax_cross_entropy: all rows masked out");
  loss /= wsum;
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> wts(row_weights.begin(), row_weights.end());
  return make_op({1}, {loss}, {logits},
                 [T, C, probs = std::move(probs), tgt = std::move(tgt),
                  wts = std::move(wts), wsum](Node& n) {
                   auto& p = n.parents[0];
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   const double g = n.grad[0] / wsum;
                   for (std::size_t t = 0; t < T; ++t) {
                     const double w = wts.empty() ? 1.0 : wts[t];
                     if (w == 0.0) continue;
                     for (std::size_t c = 0; c < C; ++c)
                       p->grad[t * C + c] += g * w * probs[t * C + c];
                     p->grad[t * C + static_cast<std::size_t>(tgt[t])] -= g * w;
                   }
                 });
}

Tensor mse(const Tensor& pred, const Tensor& target, std::span<const double> row_weights) {
  check_same_shape(pred, target, "mse");
  const std::size_t n = pred.size();
  std::size_t rows = 1, cols = n;
  if (!row_weights.empty()) {
    if (pred.ndim() != 2 || row_weights.size() != pred.dim(0)) {
      throw DimensionError("mse: row weights require a matching 2-D input");
    }
    rows = pred.dim(0);
    cols = pred.dim(1);
  }
  auto pv = pred.value(), tv = target.value();
  double wsum = 0.0, loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double w = row_weights.empty() ? 1.0 : row_weights[r];
    wsum += w;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = pv[r * cols + c] - tv[r * cols + c];
      loss += w * d * d;
    }
  }
  if (wsum <= 0.0) throw ConsistencyError("mse: all rows masked out");
  const double denom = wsum * static_cast<double>(cols);
  loss /= denom;
  std::vector<double> wts(row_weights.begin(), row_weights.end());
  return make_op({1}, {loss}, {pred, target},
                 [rows, cols, denom, wts = std::move(wts)](Node& n) {
                   auto& pp = n.parents[0];
                   auto& pt = n.parents[1];
                   const double g = n.grad[0];
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double w = wts.empty() ? 1.0 : wts[r];
                     if (w == 0.0) continue;
                     for (std::size_t c = 0; c < cols; ++c) {
                       const std::size_t i = r * cols + c;
                       const double d =
                           2.0 * w * (pp->value[i] - pt->value[i]) / denom;
                       if (pp->requires_grad) {
                         pp->ensure_grad();
                         pp->grad[i] += g * d;
                       }
                       if (pt->requires_grad) {
                         pt->ensure_grad();
                         pt->grad[i] -= g * d;
                       }
                     }
                   }
                 });
}

void log_softmax_rows_inplace(std::vector<double>& m, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = m[r * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, m[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(m[r * cols + c] - mx);
    const double logz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] -= logz;
  }
}

double log_sum_exp(std::span<const double> v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  return mx + std::log(z);
}

}  // namespace deskasr::gradcore

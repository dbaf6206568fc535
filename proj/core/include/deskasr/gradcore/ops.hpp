#pragma once

#include <span>
#include <vector>

#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

// Binary elementwise; operand shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Unary.
Tensor scale(const Tensor& a, double c);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);

// Forward identity; backward multiplies the incoming gradient by -lambda.
Tensor gradient_reversal(const Tensor& a, double lambda);

// a: M x K, b: K x N.
Tensor matmul(const Tensor& a, const Tensor& b);

// a: M x N, bias: N. Adds bias to every row.
Tensor add_rows(const Tensor& a, const Tensor& bias);

// 2-D building blocks used by the recurrent models.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t from, std::size_t to);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t from, std::size_t to);

// Embedding lookup: table V x D, one output row per id.
Tensor embed(const Tensor& table, std::span<const int> ids);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Mean negative log-probability of the target class per row, optionally
// weighted per row (weights outside the graph; 0 masks a row out). The
// backward pass distributes (softmax - onehot) * w_r / sum(w).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                             std::span<const double> row_weights = {});

// Mean squared difference over all elements; optional per-row weights for
// 2-D inputs (masked rows contribute nothing and the mean renormalizes).
Tensor mse(const Tensor& pred, const Tensor& target,
           std::span<const double> row_weights = {});

// Inference-only helpers (no graph).
void log_softmax_rows_inplace(std::vector<double>& m, std::size_t rows, std::size_t cols);
double log_sum_exp(std::span<const double> v);

}  // namespace deskasr::gradcore

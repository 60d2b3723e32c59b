#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "safemarl/diffcore/tape.h"

// Differentiable primitives. Every function appends one node to the tape of
// its first argument and throws ShapeError naming the primitive on shape
// mismatch.
namespace safemarl::diff {

Var matmul(Var a, Var b);

// Elementwise binary ops. `b` may also be a 1 x cols row (broadcast over
// rows), a rows x 1 column (broadcast over columns) or a 1 x 1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var relu(Var a);  // subgradient 0 at 0
Var softplus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var abs(Var a);  // subgradient 0 at 0
Var cos(Var a);
// Elementwise Huber function: 0.5 d^2 for |d| <= kappa, else kappa(|d| - kappa/2).
Var huber(Var a, double kappa);

Var sum(Var a);                            // -> 1 x 1
Var mean(Var a);                           // -> 1 x 1
Var row_mean(Var a);                       // r x c -> r x 1
Var row_max(Var a);                        // r x c -> r x 1, ties to lowest column
Var group_sum_rows(Var a, std::size_t n);  // (g*n) x c -> g x c
Var group_mean_rows(Var a, std::size_t n);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var repeat_rows(Var a, std::size_t n);  // each row n times consecutively
Var tile_rows(Var a, std::size_t n);    // whole block stacked n times
Var repeat_cols(Var a, std::size_t n);
Var tile_cols(Var a, std::size_t n);
// out[r] = a[r, cols[r]]  -> r x 1
Var gather_cols(Var a, std::span<const std::size_t> cols);
// Row-wise matrix-vector product: w is r x (m*k), x is r x k, out is r x m
// with out[r, i] = sum_j w[r, i*k + j] * x[r, j].
Var batched_matvec(Var w, Var x, std::size_t out_dim);
Var reshape(Var a, std::size_t rows, std::size_t cols);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace safemarl::diff

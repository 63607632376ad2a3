#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "affalign/numerics/tape.hpp"

// Differentiable primitives. Each function evaluates eagerly, appends one
// node to the operands' tape and registers the adjoint rule. Operands must
// live on the same tape. Tensors of rank > 2 are viewed as rows x cols with
// cols the innermost extent unless stated otherwise.
namespace affalign {

// [M x K] . [K x P] -> [M x P]
Var matmul(Var a, Var b);
// x . w + bias, bias broadcast over rows. x: [N x in], w: [in x out], bias: [out].
Var linear(Var x, Var w, Var bias);
Var linear(Var x, Var w);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// Adds a vector of length cols(a) to every row of a.
Var add_row(Var a, Var row);

Var sum(Var a);
Var mean(Var a);
// Mean of squared differences over all entries.
Var mse(Var a, Var b);

// Per-row standardization with population variance, no affine terms.
// Requires cols >= 2.
Var layer_norm(Var x, double eps = 1e-5);
Var softmax_rows(Var x);
// Exact x * Phi(x).
Var gelu(Var x);
// Per-row cosine similarity of two [N x D] operands -> [N]. Rows with norm
// below 1e-12 raise DegenerateInputError naming the row.
Var cosine_rows(Var a, Var b);

// Align-corners bilinear resampling of an [Hs x Ws x D] grid.
Var bilinear_resize(Var x, std::size_t target_h, std::size_t target_w);

Var reshape(Var x, Shape shape);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var gather_rows(Var table, std::span<const std::size_t> indices);

// Scaled dot-product attention with `heads` heads over column blocks.
// q: [Tq x D], k, v: [Tk x D]. `mask` (optional, [Tq x Tk]) holds 1 for
// visible and 0 for hidden pairs; every query row needs a visible key.
// With batch > 1 the rows of q and of k/v split into `batch` equal
// segments and segment b of q attends only to segment b of k/v; the mask
// then describes one segment.
Var attention(Var q, Var k, Var v, std::size_t heads, const Tensor* mask = nullptr,
              std::size_t batch = 1);

}  // namespace affalign

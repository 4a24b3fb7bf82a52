#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel compute primitives used by the model forward/backward paths.
// Every kernel assigns each output element to exactly one loop iteration and
// keeps the per-element reduction order fixed, so results are bit-identical
// for any thread count. spax::kernels::ref holds plain serial versions kept
// as the reference implementation for testing and benchmarking.
namespace spax::kernels {

// y[b,o] = sum_i w[o,i]*x[b,i] + bias[o]   (bias may be null)
void linear_forward(const double* x, const double* w, const double* bias,
                    double* y, std::size_t batch, std::size_t in,
                    std::size_t out);

// dx[b,i] = sum_o dy[b,o]*w[o,i]
void linear_backward_input(const double* dy, const double* w, double* dx,
                           std::size_t batch, std::size_t in, std::size_t out);

// dw[o,i] += sum_b dy[b,o]*x[b,i];  db[o] += sum_b dy[b,o]  (db may be null)
void linear_backward_params(const double* dy, const double* x, double* dw,
                            double* db, std::size_t batch, std::size_t in,
                            std::size_t out);

// y[b,:] = gain ⊙ x[b,:] * inv_rms[b],  inv_rms[b] = 1/sqrt(mean(x^2)+eps)
void rmsnorm_forward(const double* x, const double* gain, double* y,
                     double* inv_rms, std::size_t batch, std::size_t dim,
                     double eps);

// dx overwritten; dgain accumulated
void rmsnorm_backward(const double* x, const double* gain,
                      const double* inv_rms, const double* dy, double* dx,
                      double* dgain, std::size_t batch, std::size_t dim);

// In-place rotary transform on (batch, seq, heads*head_dim). Coordinate pairs
// (2i, 2i+1) of each head rotate by angle pos * theta_base^(-2i/head_dim).
// positions may be null (then pos = sequence index); inverse applies the
// adjoint rotation.
void rope_forward(double* x, const std::int64_t* positions, std::size_t batch,
                  std::size_t seq, std::size_t heads, std::size_t head_dim,
                  double theta_base, bool inverse);

// Scaled dot-product attention over q,k,v of shape (batch, seq, heads*hd).
// probs has shape (batch*heads, seq, seq); out matches q. Softmax runs with
// max subtraction; scale is 1/sqrt(head_dim).
void attention_forward(const double* q, const double* k, const double* v,
                       double* probs, double* out, std::size_t batch,
                       std::size_t seq, std::size_t heads,
                       std::size_t head_dim);

// dq, dk, dv are overwritten.
void attention_backward(const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq,
                        double* dk, double* dv, std::size_t batch,
                        std::size_t seq, std::size_t heads,
                        std::size_t head_dim);

void gelu_forward(const double* x, double* y, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);
void relu_forward(const double* x, double* y, std::size_t n);
void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);

// Gated linear unit over rows: pre = [value | gate], out = value*sigmoid(gate)
void glu_forward(const double* pre, double* out, std::size_t batch,
                 std::size_t width);
void glu_backward(const double* pre, const double* dout, double* dpre,
                  std::size_t batch, std::size_t width);

namespace ref {

void linear_forward(const double* x, const double* w, const double* bias,
                    double* y, std::size_t batch, std::size_t in,
                    std::size_t out);
void linear_backward_input(const double* dy, const double* w, double* dx,
                           std::size_t batch, std::size_t in, std::size_t out);
void linear_backward_params(const double* dy, const double* x, double* dw,
                            double* db, std::size_t batch, std::size_t in,
                            std::size_t out);
void rmsnorm_forward(const double* x, const double* gain, double* y,
                     double* inv_rms, std::size_t batch, std::size_t dim,
                     double eps);
void rmsnorm_backward(const double* x, const double* gain,
                      const double* inv_rms, const double* dy, double* dx,
                      double* dgain, std::size_t batch, std::size_t dim);
void rope_forward(double* x, const std::int64_t* positions, std::size_t batch,
                  std::size_t seq, std::size_t heads, std::size_t head_dim,
                  double theta_base, bool inverse);
void attention_forward(const double* q, const double* k, const double* v,
                       double* probs, double* out, std::size_t batch,
                       std::size_t seq, std::size_t heads,
                       std::size_t head_dim);
void attention_backward(const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq,
                        double* dk, double* dv, std::size_t batch,
                        std::size_t seq, std::size_t heads,
                        std::size_t head_dim);
void gelu_forward(const double* x, double* y, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);
void relu_forward(const double* x, double* y, std::size_t n);
void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);
void glu_forward(const double* pre, double* out, std::size_t batch,
                 std::size_t width);
void glu_backward(const double* pre, const double* dout, double* dpre,
                  std::size_t batch, std::size_t width);

}  // namespace ref

}  // namespace spax::kernels

#include "spax/kernels.hpp"

#include <cmath>
#include <vector>

namespace spax::kernels {

namespace {

constexpr std::size_t kParGrain = 16 * 1024;  // min work before forking

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

}  // namespace

void linear_forward(const double* x, const double* w, const double* bias,
                    double* y, std::size_t batch, std::size_t in,
                    std::size_t out) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for if (batch * in * out > kParGrain)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* xb = x + static_cast<std::size_t>(b) * in;
    double* yb = y + static_cast<std::size_t>(b) * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = bias ? bias[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xb[i];
      yb[o] = acc;
    }
  }
}

void linear_backward_input(const double* dy, const double* w, double* dx,
                           std::size_t batch, std::size_t in,
                           std::size_t out) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for if (batch * in * out > kParGrain)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* dyb = dy + static_cast<std::size_t>(b) * out;
    double* dxb = dx + static_cast<std::size_t>(b) * in;
    for (std::size_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += dyb[o] * w[o * in + i];
      dxb[i] = acc;
    }
  }
}

void linear_backward_params(const double* dy, const double* x, double* dw,
                            double* db, std::size_t batch, std::size_t in,
                            std::size_t out) {
  // Parallel over destination rows; each row accumulates over the batch in a
  // fixed order (thread-count invariant) while streaming x sequentially.
  const std::ptrdiff_t orows = static_cast<std::ptrdiff_t>(out);
#pragma omp parallel if (batch * in * out > kParGrain)
  {
    std::vector<double> row(in);
#pragma omp for
    for (std::ptrdiff_t o = 0; o < orows; ++o) {
      std::fill(row.begin(), row.end(), 0.0);
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double dyb = dy[b * out + static_cast<std::size_t>(o)];
        const double* xb = x + b * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += dyb * xb[i];
        acc += dyb;
      }
      double* dwo = dw + static_cast<std::size_t>(o) * in;
      for (std::size_t i = 0; i < in; ++i) dwo[i] += row[i];
      if (db) db[o] += acc;
    }
  }
}

void rmsnorm_forward(const double* x, const double* gain, double* y,
                     double* inv_rms, std::size_t batch, std::size_t dim,
                     double eps) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for if (batch * dim > kParGrain)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* xb = x + static_cast<std::size_t>(b) * dim;
    double* yb = y + static_cast<std::size_t>(b) * dim;
    double ss = 0.0;
    for (std::size_t d = 0; d < dim; ++d) ss += xb[d] * xb[d];
    const double u = 1.0 / std::sqrt(ss / static_cast<double>(dim) + eps);
    inv_rms[b] = u;
    for (std::size_t d = 0; d < dim; ++d) yb[d] = gain[d] * xb[d] * u;
  }
}

void rmsnorm_backward(const double* x, const double* gain,
                      const double* inv_rms, const double* dy, double* dx,
                      double* dgain, std::size_t batch, std::size_t dim) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for if (batch * dim > kParGrain)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* xb = x + static_cast<std::size_t>(b) * dim;
    const double* dyb = dy + static_cast<std::size_t>(b) * dim;
    double* dxb = dx + static_cast<std::size_t>(b) * dim;
    const double u = inv_rms[b];
    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += dyb[d] * gain[d] * xb[d];
    const double c = u * u * u * dot / static_cast<double>(dim);
    for (std::size_t d = 0; d < dim; ++d)
      dxb[d] = u * gain[d] * dyb[d] - c * xb[d];
  }
  // dgain[d] = sum_b dy[b,d]*x[b,d]*u_b, parallel over d
  const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(dim);
#pragma omp parallel for if (batch * dim > kParGrain)
  for (std::ptrdiff_t d = 0; d < cols; ++d) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      acc += dy[b * dim + static_cast<std::size_t>(d)] *
             x[b * dim + static_cast<std::size_t>(d)] * inv_rms[b];
    dgain[d] += acc;
  }
}

void rope_forward(double* x, const std::int64_t* positions, std::size_t batch,
                  std::size_t seq, std::size_t heads, std::size_t head_dim,
                  double theta_base, bool inverse) {
  const std::size_t half = head_dim / 2;
  const std::size_t width = heads * head_dim;
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(batch * seq);
#pragma omp parallel for if (batch * seq * width > kParGrain)
  for (std::ptrdiff_t bs = 0; bs < total; ++bs) {
    const std::size_t s = static_cast<std::size_t>(bs) % seq;
    const double pos = static_cast<double>(
        positions ? positions[s] : static_cast<std::int64_t>(s));
    double* row = x + static_cast<std::size_t>(bs) * width;
    for (std::size_t h = 0; h < heads; ++h) {
      double* hx = row + h * head_dim;
      for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::pow(theta_base, -2.0 * static_cast<double>(i) /
                                     static_cast<double>(head_dim));
        double ang = pos * freq;
        if (inverse) ang = -ang;
        const double c = std::cos(ang);
        const double sn = std::sin(ang);
        const double a = hx[2 * i];
        const double b = hx[2 * i + 1];
        hx[2 * i] = a * c - b * sn;
        hx[2 * i + 1] = a * sn + b * c;
      }
    }
  }
}

void attention_forward(const double* q, const double* k, const double* v,
                       double* probs, double* out, std::size_t batch,
                       std::size_t seq, std::size_t heads,
                       std::size_t head_dim) {
  const std::size_t width = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::ptrdiff_t lanes = static_cast<std::ptrdiff_t>(batch * heads);
#pragma omp parallel for if (batch * heads * seq * seq * head_dim > kParGrain)
  for (std::ptrdiff_t bh = 0; bh < lanes; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / heads;
    const std::size_t h = static_cast<std::size_t>(bh) % heads;
    const std::size_t head_off = h * head_dim;
    double* pb = probs + static_cast<std::size_t>(bh) * seq * seq;
    for (std::size_t s = 0; s < seq; ++s) {
      const double* qs = q + (b * seq + s) * width + head_off;
      double* row = pb + s * seq;
      double mx = -1e300;
      for (std::size_t t = 0; t < seq; ++t) {
        const double* kt = k + (b * seq + t) * width + head_off;
        double acc = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) acc += qs[d] * kt[d];
        row[t] = acc * scale;
        if (row[t] > mx) mx = row[t];
      }
      double z = 0.0;
      for (std::size_t t = 0; t < seq; ++t) {
        row[t] = std::exp(row[t] - mx);
        z += row[t];
      }
      const double inv = 1.0 / z;
      for (std::size_t t = 0; t < seq; ++t) row[t] *= inv;
      double* os = out + (b * seq + s) * width + head_off;
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t t = 0; t < seq; ++t)
          acc += row[t] * v[(b * seq + t) * width + head_off + d];
        os[d] = acc;
      }
    }
  }
}

void attention_backward(const double* q, const double* k, const double* v,
                        const double* probs, const double* dout, double* dq,
                        double* dk, double* dv, std::size_t batch,
                        std::size_t seq, std::size_t heads,
                        std::size_t head_dim) {
  const std::size_t width = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const std::ptrdiff_t lanes = static_cast<std::ptrdiff_t>(batch * heads);
#pragma omp parallel for if (batch * heads * seq * seq * head_dim > kParGrain)
  for (std::ptrdiff_t bh = 0; bh < lanes; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / heads;
    const std::size_t h = static_cast<std::size_t>(bh) % heads;
    const std::size_t head_off = h * head_dim;
    const double* pb = probs + static_cast<std::size_t>(bh) * seq * seq;
    std::vector<double> dlogits(seq * seq);
    // dP then dlogits via softmax jacobian, row by row
    for (std::size_t s = 0; s < seq; ++s) {
      const double* dos = dout + (b * seq + s) * width + head_off;
      const double* prow = pb + s * seq;
      double* lrow = dlogits.data() + s * seq;
      double dot = 0.0;
      for (std::size_t t = 0; t < seq; ++t) {
        const double* vt = v + (b * seq + t) * width + head_off;
        double dp = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) dp += dos[d] * vt[d];
        lrow[t] = dp;
        dot += dp * prow[t];
      }
      for (std::size_t t = 0; t < seq; ++t)
        lrow[t] = prow[t] * (lrow[t] - dot);
    }
    for (std::size_t s = 0; s < seq; ++s) {
      double* dqs = dq + (b * seq + s) * width + head_off;
      const double* lrow = dlogits.data() + s * seq;
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t t = 0; t < seq; ++t)
          acc += lrow[t] * k[(b * seq + t) * width + head_off + d];
        dqs[d] = acc * scale;
      }
    }
    for (std::size_t t = 0; t < seq; ++t) {
      double* dkt = dk + (b * seq + t) * width + head_off;
      double* dvt = dv + (b * seq + t) * width + head_off;
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acck = 0.0;
        double accv = 0.0;
        for (std::size_t s = 0; s < seq; ++s) {
          acck += dlogits[s * seq + t] * q[(b * seq + s) * width + head_off + d];
          accv += pb[s * seq + t] * dout[(b * seq + s) * width + head_off + d];
        }
        dkt[d] = acck * scale;
        dvt[d] = accv;
      }
    }
  }
}

void gelu_forward(const double* x, double* y, std::size_t n) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (n > kParGrain)
  for (std::ptrdiff_t i = 0; i < nn; ++i) y[i] = gelu_value(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (n > kParGrain)
  for (std::ptrdiff_t i = 0; i < nn; ++i) dx[i] = dy[i] * gelu_slope(x[i]);
}

void relu_forward(const double* x, double* y, std::size_t n) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (n > kParGrain)
  for (std::ptrdiff_t i = 0; i < nn; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (n > kParGrain)
  for (std::ptrdiff_t i = 0; i < nn; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void glu_forward(const double* pre, double* out, std::size_t batch,
                 std::size_t width) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for if (batch * width > kParGrain)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* val = pre + static_cast<std::size_t>(b) * 2 * width;
    const double* gate = val + width;
    double* ob = out + static_cast<std::size_t>(b) * width;
    for (std::size_t j = 0; j < width; ++j) ob[j] = val[j] * sigmoid(gate[j]);
  }
}

void glu_backward(const double* pre, const double* dout, double* dpre,
                  std::size_t batch, std::size_t width) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for if (batch * width > kParGrain)
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    const double* val = pre + static_cast<std::size_t>(b) * 2 * width;
    const double* gate = val + width;
    const double* dob = dout + static_cast<std::size_t>(b) * width;
    double* dval = dpre + static_cast<std::size_t>(b) * 2 * width;
    double* dgate = dval + width;
    for (std::size_t j = 0; j < width; ++j) {
      const double s = sigmoid(gate[j]);
      dval[j] = dob[j] * s;
      dgate[j] = dob[j] * val[j] * s * (1.0 - s);
    }
  }
}

}  // namespace spax::kernels

#pragma once

#include <cmath>
#include <random>

#include "matmart/vmca.hpp"

namespace matmart::attention {

struct KernelCheckReport {
  int forward_pass = 0;
  int forward_total = 0;
  int gradient_pass = 0;
  int gradient_total = 0;
  int memory_pass = 0;
  int memory_total = 0;
  double max_forward_error = 0.0;
  double max_gradient_error = 0.0;

  bool ok() const {
    return forward_pass == forward_total && gradient_pass == gradient_total && memory_pass == memory_total;
  }
};

namespace detail {

// softmax(Q [K_t; K_r]^T / sqrt(d)) [V_t; V_r] on stacked matrices.
inline Matrix concat_attention(const AttentionBatch& b) {
  const int nt = b.targets();
  const int nr = b.references();
  const int d = b.dim();
  Matrix k(nt + nr, d), v(nt + nr, d);
  for (int j = 0; j < nt; ++j) {
    for (int c = 0; c < d; ++c) {
      k(j, c) = b.k_tgt(j, c);
      v(j, c) = b.v_tgt(j, c);
    }
  }
  for (int j = 0; j < nr; ++j) {
    for (int c = 0; c < d; ++c) {
      k(nt + j, c) = b.k_ref(j, c);
      v(nt + j, c) = b.v_ref(j, c);
    }
  }
  Matrix kt(d, nt + nr);
  for (int j = 0; j < nt + nr; ++j) {
    for (int c = 0; c < d; ++c) kt(c, j) = k(j, c) / std::sqrt(static_cast<double>(d));
  }
  Matrix s = matmul(b.q_tgt, kt);
  softmax_rows(s);
  return matmul(s, v);
}

inline AttentionBatch random_batch(std::mt19937_64& rng, int nt, int nr, int d) {
  return {Matrix::random(nt, d, rng), Matrix::random(nt, d, rng), Matrix::random(nt, d, rng),
          Matrix::random(nr, d, rng), Matrix::random(nr, d, rng)};
}

inline double weighted_sum(const Matrix& z, const Matrix& w) {
  double s = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    for (int c = 0; c < z.cols(); ++c) s += z(i, c) * w(i, c);
  }
  return s;
}

}  // namespace detail

// Forward vs stacked attention, analytic vs central-difference gradients, and
// formula vs instrumented peak memory.
inline KernelCheckReport run_kernel_checks(int batches = 100, std::uint64_t seed = 0) {
  KernelCheckReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> nt_dist(1, 8), nr_dist(0, 4), d_dist(1, 16);
  for (int n = 0; n < batches; ++n) {
    const int nt = nt_dist(rng), nr = nr_dist(rng), d = d_dist(rng);
    AttentionBatch b = detail::random_batch(rng, nt, nr, d);
    const Matrix z = vmca_forward(b);
    const Matrix ref = detail::concat_attention(b);
    double err = 0.0;
    for (int i = 0; i < nt; ++i) {
      for (int c = 0; c < d; ++c) err = std::max(err, std::abs(z(i, c) - ref(i, c)));
    }
    bool passthrough = true;
    for (int j = 0; j < nr; ++j) {
      for (int c = 0; c < d; ++c) passthrough = passthrough && z(nt + j, c) == b.v_ref(j, c);
    }
    rep.max_forward_error = std::max(rep.max_forward_error, err);
    ++rep.forward_total;
    rep.forward_pass += err <= 1e-6 && passthrough;

    const Matrix w = Matrix::random(nt + nr, d, rng);
    const VmcaGradients g = vmca_backward(b, w);
    const double h = 1e-5;
    double gerr = 0.0;
    Matrix* inputs[] = {&b.q_tgt, &b.k_tgt, &b.v_tgt, &b.k_ref, &b.v_ref};
    const Matrix* grads[] = {&g.q_tgt, &g.k_tgt, &g.v_tgt, &g.k_ref, &g.v_ref};
    for (int m = 0; m < 5; ++m) {
      Matrix& x = *inputs[m];
      for (int i = 0; i < x.rows(); ++i) {
        for (int c = 0; c < x.cols(); ++c) {
          const double orig = x(i, c);
          x(i, c) = orig + h;
          const double fp = detail::weighted_sum(vmca_forward(b), w);
          x(i, c) = orig - h;
          const double fm = detail::weighted_sum(vmca_forward(b), w);
          x(i, c) = orig;
          const double fd = (fp - fm) / (2 * h);
          const double an = (*grads[m])(i, c);
          gerr = std::max(gerr, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
        }
      }
    }
    rep.max_gradient_error = std::max(rep.max_gradient_error, gerr);
    ++rep.gradient_total;
    rep.gradient_pass += gerr <= 1e-4;
  }

  for (std::size_t views : {2, 8, 64}) {
    const std::size_t formula = peak_attention_memory(views, 1, 1, 8, 4);
    const std::size_t measured = instrumented_progressive_peak(views, 1, 1, 8, 4, seed);
    ++rep.memory_total;
    rep.memory_pass += formula == peak_attention_memory(2, 1, 1, 8, 4) &&
                       std::abs(static_cast<double>(measured) - static_cast<double>(formula)) <= 0.01 * formula;
  }
  return rep;
}

}  // namespace matmart::attention

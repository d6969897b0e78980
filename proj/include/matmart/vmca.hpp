#pragma once

// View-material cross-attention (VMCA): target queries attend over the
// concatenation of target and reference keys/values, and the reference values
// are appended to the output unchanged.
//
//   Z = softmax(Q_tgt [K_tgt; K_ref]^T / sqrt(d)) [V_tgt; V_ref]  (+)  V_ref
//
// Matrices here use a counting allocator so the progressive-inference memory
// bound can be checked against what is actually allocated.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "matmart/core_types.hpp"

namespace matmart::attention {

// Live and peak element counts of every Matrix allocation.
struct AllocationCounter {
  static std::atomic<long long>& live() {
    static std::atomic<long long> v{0};
    return v;
  }
  static std::atomic<long long>& peak() {
    static std::atomic<long long> v{0};
    return v;
  }
  static void reset_peak() { peak().store(live().load()); }
  static void add(long long n) {
    const long long now = live().fetch_add(n) + n;
    long long p = peak().load();
    while (now > p && !peak().compare_exchange_weak(p, now)) {
    }
  }
  static void sub(long long n) { live().fetch_sub(n); }
};

template <typename T>
struct CountingAllocator {
  using value_type = T;
  CountingAllocator() = default;
  template <typename U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    AllocationCounter::add(static_cast<long long>(n));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept {
    AllocationCounter::sub(static_cast<long long>(n));
    std::allocator<T>{}.deallocate(p, n);
  }
  template <typename U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw ValidationError("matrix: negative shape");
    data_.assign(static_cast<std::size_t>(rows) * cols, fill);
  }

  static Matrix random(int rows, int cols, std::mt19937_64& rng, double stddev = 1.0) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.data_) v = dist(rng);
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double, CountingAllocator<double>> data_;
};

// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("add: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Matrix rows_of(const Matrix& m, int begin, int end) {
  Matrix out(end - begin, m.cols());
  std::copy(m.row(begin).data(), m.row(begin).data() + out.size(), out.data());
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Row-wise softmax with max subtraction, in place.
inline void softmax_rows(Matrix& m) {
  for (int i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    if (r.empty()) continue;
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : r) v /= sum;
  }
}

// ---------------------------------------------------------------------------
// VMCA kernel
// ---------------------------------------------------------------------------
struct AttentionBatch {
  Matrix q_tgt;  // n_t x d
  Matrix k_tgt;  // n_t x d
  Matrix v_tgt;  // n_t x d
  Matrix k_ref;  // n_r x d
  Matrix v_ref;  // n_r x d

  int targets() const { return q_tgt.rows(); }
  int references() const { return k_ref.rows(); }
  int dim() const { return q_tgt.cols(); }

  void validate() const {
    const int d = dim();
    if (targets() < 1 || d < 1) throw ValidationError("attention batch: need n_t >= 1 and d >= 1");
    if (k_tgt.rows() != targets() || v_tgt.rows() != targets() || k_tgt.cols() != d || v_tgt.cols() != d) {
      throw ValidationError("attention batch: target Q/K/V shapes differ");
    }
    if (v_ref.rows() != k_ref.rows() || (k_ref.rows() > 0 && (k_ref.cols() != d || v_ref.cols() != d))) {
      throw ValidationError("attention batch: reference K/V shapes differ");
    }
    for (const Matrix* m : {&q_tgt, &k_tgt, &v_tgt, &k_ref, &v_ref}) {
      if (!m->all_finite()) throw ValidationError("attention batch: non-finite entries");
    }
  }
};

// Attention probabilities P (n_t x (n_t + n_r)) over [K_tgt; K_ref].
inline Matrix vmca_probabilities(const AttentionBatch& b) {
  const int nt = b.targets();
  const int nr = b.references();
  const double scale = 1.0 / std::sqrt(static_cast<double>(b.dim()));
  Matrix p(nt, nt + nr);
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nt; ++j) p(i, j) = dot(b.q_tgt.row(i), b.k_tgt.row(j)) * scale;
    for (int j = 0; j < nr; ++j) p(i, nt + j) = dot(b.q_tgt.row(i), b.k_ref.row(j)) * scale;
  }
  softmax_rows(p);
  return p;
}

// Z with n_t + n_r rows. With n_r = 0 this is plain self-attention over the
// targets (the first, reference-free round).
inline Matrix vmca_forward(const AttentionBatch& b) {
  b.validate();
  const int nt = b.targets();
  const int nr = b.references();
  const int d = b.dim();
  const Matrix p = vmca_probabilities(b);
  Matrix z(nt + nr, d);
  for (int i = 0; i < nt; ++i) {
    auto out = z.row(i);
    for (int j = 0; j < nt; ++j) {
      const double w = p(i, j);
      const auto v = b.v_tgt.row(j);
      for (int c = 0; c < d; ++c) out[c] += w * v[c];
    }
    for (int j = 0; j < nr; ++j) {
      const double w = p(i, nt + j);
      const auto v = b.v_ref.row(j);
      for (int c = 0; c < d; ++c) out[c] += w * v[c];
    }
  }
  for (int j = 0; j < nr; ++j) std::copy(b.v_ref.row(j).begin(), b.v_ref.row(j).end(), z.row(nt + j).begin());
  return z;
}

struct VmcaGradients {
  Matrix q_tgt;
  Matrix k_tgt;
  Matrix v_tgt;
  Matrix k_ref;
  Matrix v_ref;  // attention path plus the passthrough rows of dZ
};

inline VmcaGradients vmca_backward(const AttentionBatch& b, const Matrix& dz) {
  b.validate();
  const int nt = b.targets();
  const int nr = b.references();
  const int d = b.dim();
  if (dz.rows() != nt + nr || dz.cols() != d) throw ValidationError("vmca_backward: upstream gradient shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Matrix p = vmca_probabilities(b);
  auto value_row = [&](int j) { return j < nt ? b.v_tgt.row(j) : b.v_ref.row(j - nt); };
  auto key_row = [&](int j) { return j < nt ? b.k_tgt.row(j) : b.k_ref.row(j - nt); };

  VmcaGradients g{Matrix(nt, d), Matrix(nt, d), Matrix(nt, d), Matrix(nr, d), Matrix(nr, d)};
  auto dv_row = [&](int j) { return j < nt ? g.v_tgt.row(j) : g.v_ref.row(j - nt); };
  auto dk_row = [&](int j) { return j < nt ? g.k_tgt.row(j) : g.k_ref.row(j - nt); };

  std::vector<double> dp(static_cast<std::size_t>(nt + nr));
  for (int i = 0; i < nt; ++i) {
    const auto dzi = dz.row(i);
    // dV += P^T dO ; dP = dO V^T
    double row_dot = 0.0;
    for (int j = 0; j < nt + nr; ++j) {
      const double pij = p(i, j);
      auto dv = dv_row(j);
      for (int c = 0; c < d; ++c) dv[c] += pij * dzi[c];
      dp[j] = dot(dzi, value_row(j));
      row_dot += pij * dp[j];
    }
    // dS = P * (dP - <P, dP>)
    auto dq = g.q_tgt.row(i);
    const auto qi = b.q_tgt.row(i);
    for (int j = 0; j < nt + nr; ++j) {
      const double ds = p(i, j) * (dp[j] - row_dot) * scale;
      if (ds == 0.0) continue;
      const auto kj = key_row(j);
      auto dk = dk_row(j);
      for (int c = 0; c < d; ++c) {
        dq[c] += ds * kj[c];
        dk[c] += ds * qi[c];
      }
    }
  }
  for (int j = 0; j < nr; ++j) {
    auto dv = g.v_ref.row(j);
    const auto up = dz.row(nt + j);
    for (int c = 0; c < d; ++c) dv[c] += up[c];
  }
  return g;
}

// Element count of the attention tensors alive at once during one full
// progressive round: the batch inputs (Q, K, V for targets, K, V for the
// reference), the score matrix and the output Z. Rounds never hold more than
// n_t_per_round targets and n_r reference views, so the value does not depend
// on the total number of views.
inline std::size_t peak_attention_memory(std::size_t n_views, std::size_t n_t_per_round, std::size_t n_r,
                                         std::size_t d, std::size_t tokens_per_view) {
  if (n_views < 1 || n_t_per_round < 1 || d < 1 || tokens_per_view < 1) {
    throw ValidationError("peak_attention_memory: arguments must be positive");
  }
  const std::size_t t = n_t_per_round * tokens_per_view;
  const std::size_t r = n_r * tokens_per_view;
  const std::size_t inputs = (3 * t + 2 * r) * d;
  const std::size_t scores = t * (t + r);
  const std::size_t output = (t + r) * d;
  return inputs + scores + output;
}

// Runs an actual progressive pass over n_views random views through
// vmca_forward and reports the peak number of live Matrix elements. Round 1
// holds view 0 alone without reference; later rounds hold n_t_per_round views
// and reference the outputs of the first n_r views. Per-view latents live in
// plain vectors outside the counter.
inline std::size_t instrumented_progressive_peak(std::size_t n_views, std::size_t n_t_per_round, std::size_t n_r,
                                                 std::size_t d, std::size_t tokens_per_view,
                                                 std::uint64_t seed = 0) {
  const int tpv = static_cast<int>(tokens_per_view);
  const int dim = static_cast<int>(d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  struct ViewLatent {
    std::vector<double> q, k, v;
  };
  std::vector<ViewLatent> views(n_views);
  for (auto& v : views) {
    for (auto* m : {&v.q, &v.k, &v.v}) {
      m->resize(static_cast<std::size_t>(tpv) * dim);
      for (double& x : *m) x = dist(rng);
    }
  }
  std::vector<std::vector<double>> outputs(n_views);

  auto fill_rows = [&](Matrix& m, int row0, const std::vector<double>& src) {
    std::copy(src.begin(), src.end(), m.row(row0).data());
  };
  const long long base = AllocationCounter::live().load();
  AllocationCounter::reset_peak();
  std::size_t next = 0;
  bool first = true;
  while (next < n_views) {
    const std::size_t count = first ? 1 : std::min(n_t_per_round, n_views - next);
    const std::size_t refs = first ? 0 : std::min(n_r, next);
    AttentionBatch b{Matrix(static_cast<int>(count) * tpv, dim), Matrix(static_cast<int>(count) * tpv, dim),
                     Matrix(static_cast<int>(count) * tpv, dim), Matrix(static_cast<int>(refs) * tpv, dim),
                     Matrix(static_cast<int>(refs) * tpv, dim)};
    for (std::size_t k = 0; k < count; ++k) {
      fill_rows(b.q_tgt, static_cast<int>(k) * tpv, views[next + k].q);
      fill_rows(b.k_tgt, static_cast<int>(k) * tpv, views[next + k].k);
      fill_rows(b.v_tgt, static_cast<int>(k) * tpv, views[next + k].v);
    }
    for (std::size_t k = 0; k < refs; ++k) {
      // Reference keys/values come from earlier outputs.
      fill_rows(b.k_ref, static_cast<int>(k) * tpv, outputs[k]);
      fill_rows(b.v_ref, static_cast<int>(k) * tpv, outputs[k]);
    }
    const Matrix z = vmca_forward(b);
    for (std::size_t k = 0; k < count; ++k) {
      const auto begin = z.data() + static_cast<std::size_t>(k) * tpv * dim;
      outputs[next + k].assign(begin, begin + static_cast<std::size_t>(tpv) * dim);
    }
    next += count;
    first = false;
  }
  return static_cast<std::size_t>(AllocationCounter::peak().load() - base);
}

// ---------------------------------------------------------------------------
// Toy attention block: cross-component, view-material and task attention,
// each wrapped in a residual connection.
// ---------------------------------------------------------------------------
enum class MaterialTask { Albedo, RoughnessMetallic };

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // d x d

  static AttentionWeights zeros(int d) { return {Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d)}; }
  static AttentionWeights random(int d, std::mt19937_64& rng, double stddev) {
    return {Matrix::random(d, d, rng, stddev), Matrix::random(d, d, rng, stddev), Matrix::random(d, d, rng, stddev),
            Matrix::random(d, d, rng, stddev)};
  }
};

struct ToyBlockParams {
  int dim = 0;
  AttentionWeights cross_component;
  AttentionWeights view_material;
  AttentionWeights task;
  Matrix task_albedo;  // m x d embedding for the albedo output type
  Matrix task_rm;      // m x d embedding for the roughness/metallic output type

  static ToyBlockParams zeros(int dim, int task_tokens = 4) {
    return {dim,
            AttentionWeights::zeros(dim),
            AttentionWeights::zeros(dim),
            AttentionWeights::zeros(dim),
            Matrix(task_tokens, dim),
            Matrix(task_tokens, dim)};
  }

  static ToyBlockParams random(int dim, std::uint64_t seed, int task_tokens = 4) {
    std::mt19937_64 rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    ToyBlockParams p;
    p.dim = dim;
    p.cross_component = AttentionWeights::random(dim, rng, s);
    p.view_material = AttentionWeights::random(dim, rng, s);
    p.task = AttentionWeights::random(dim, rng, s);
    p.task_albedo = Matrix::random(task_tokens, dim, rng, 1.0);
    p.task_rm = Matrix::random(task_tokens, dim, rng, 1.0);
    return p;
  }
};

// softmax(Q K^T / sqrt(d)) V for arbitrary row counts.
inline Matrix attend(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw ValidationError("attend: shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix p(q.rows(), k.rows());
  for (int i = 0; i < q.rows(); ++i) {
    for (int j = 0; j < k.rows(); ++j) p(i, j) = dot(q.row(i), k.row(j)) * scale;
  }
  softmax_rows(p);
  return matmul(p, v);
}

struct ReferenceLatents {
  Matrix albedo;
  Matrix rm;
};

struct ToyBlockOutput {
  Matrix albedo;
  Matrix rm;
  // Residual added by each stage, per stream.
  Matrix cross_albedo, cross_rm;
  Matrix view_albedo, view_rm;
  Matrix task_albedo, task_rm;
  // Reference rows of Z, forwarded unchanged.
  Matrix reference_albedo, reference_rm;
};

// Missing references are replaced by `pad_tokens` rows of zeros.
inline ToyBlockOutput toy_block_forward(const ToyBlockParams& params, const Matrix& latent_albedo,
                                        const Matrix& latent_rm, const std::optional<ReferenceLatents>& reference,
                                        MaterialTask task, int pad_tokens) {
  const int d = params.dim;
  if (latent_albedo.cols() != d || latent_rm.cols() != d || latent_albedo.rows() != latent_rm.rows()) {
    throw ValidationError("toy block: latent shapes do not match the parameters");
  }
  ToyBlockOutput out;
  // Cross-component attention between the albedo and rm streams.
  const auto& cc = params.cross_component;
  out.cross_albedo = matmul(attend(matmul(latent_albedo, cc.wq), matmul(latent_rm, cc.wk), matmul(latent_rm, cc.wv)), cc.wo);
  out.cross_rm = matmul(attend(matmul(latent_rm, cc.wq), matmul(latent_albedo, cc.wk), matmul(latent_albedo, cc.wv)), cc.wo);
  Matrix xa = add(latent_albedo, out.cross_albedo);
  Matrix xr = add(latent_rm, out.cross_rm);

  // View-material cross-attention against the reference view.
  const ReferenceLatents ref = reference ? *reference : ReferenceLatents{Matrix(pad_tokens, d), Matrix(pad_tokens, d)};
  if (ref.albedo.cols() != d || ref.rm.cols() != d) throw ValidationError("toy block: reference width mismatch");
  const auto& vm = params.view_material;
  auto vmca_stream = [&](const Matrix& x, const Matrix& r, Matrix& residual, Matrix& passthrough) {
    AttentionBatch b{matmul(x, vm.wq), matmul(x, vm.wk), matmul(x, vm.wv), matmul(r, vm.wk), matmul(r, vm.wv)};
    const Matrix z = vmca_forward(b);
    residual = matmul(rows_of(z, 0, x.rows()), vm.wo);
    passthrough = rows_of(z, x.rows(), z.rows());
  };
  vmca_stream(xa, ref.albedo, out.view_albedo, out.reference_albedo);
  vmca_stream(xr, ref.rm, out.view_rm, out.reference_rm);
  xa = add(xa, out.view_albedo);
  xr = add(xr, out.view_rm);

  // Output-type control: cross-attention to the selected task embedding.
  const Matrix& e = task == MaterialTask::Albedo ? params.task_albedo : params.task_rm;
  const auto& tk = params.task;
  const Matrix ek = matmul(e, tk.wk);
  const Matrix ev = matmul(e, tk.wv);
  out.task_albedo = matmul(attend(matmul(xa, tk.wq), ek, ev), tk.wo);
  out.task_rm = matmul(attend(matmul(xr, tk.wq), ek, ev), tk.wo);
  out.albedo = add(xa, out.task_albedo);
  out.rm = add(xr, out.task_rm);
  return out;
}

}  // namespace matmart::attention

#include "dg/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace dg::kernels {

namespace {
ExecMode g_mode = ExecMode::Parallel;
}

ExecMode exec_mode() { return g_mode; }
void set_exec_mode(ExecMode m) { g_mode = m; }

// ---------------------------------------------------------------------------
// matmul

void matmul_nn_serial(const double* A, const double* B, double* C, int64_t m, int64_t k,
                      int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = C + i * n;
    std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    const double* ai = A + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double a = ai[kk];
      const double* bk = B + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += a * bk[j];
    }
  }
}

void matmul_nn_parallel(const double* A, const double* B, double* C, int64_t m, int64_t k,
                        int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = C + i * n;
    std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    const double* ai = A + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double a = ai[kk];
      const double* bk = B + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += a * bk[j];
    }
  }
}

void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  if (g_mode == ExecMode::Parallel)
    matmul_nn_parallel(A, B, C, m, k, n);
  else
    matmul_nn_serial(A, B, C, m, k, n);
}

void matmul_nt_serial(const double* A, const double* B, double* C, int64_t m, int64_t k,
                      int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = A + i * k;
    double* ci = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = B + j * k;
      double acc = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] = acc;
    }
  }
}

void matmul_nt_parallel(const double* A, const double* B, double* C, int64_t m, int64_t k,
                        int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = A + i * k;
    double* ci = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = B + j * k;
      double acc = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] = acc;
    }
  }
}

void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  if (g_mode == ExecMode::Parallel)
    matmul_nt_parallel(A, B, C, m, k, n);
  else
    matmul_nt_serial(A, B, C, m, k, n);
}

void matmul_tn_serial(const double* A, const double* B, double* C, int64_t m, int64_t k,
                      int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = C + i * n;
    std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    for (int64_t kk = 0; kk < k; ++kk) {
      const double a = A[kk * m + i];
      const double* bk = B + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += a * bk[j];
    }
  }
}

void matmul_tn_parallel(const double* A, const double* B, double* C, int64_t m, int64_t k,
                        int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = C + i * n;
    std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    for (int64_t kk = 0; kk < k; ++kk) {
      const double a = A[kk * m + i];
      const double* bk = B + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += a * bk[j];
    }
  }
}

void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  if (g_mode == ExecMode::Parallel)
    matmul_tn_parallel(A, B, C, m, k, n);
  else
    matmul_tn_serial(A, B, C, m, k, n);
}

// ---------------------------------------------------------------------------
// softmax

namespace {
inline void softmax_one_row(const double* x, double* out, int64_t n) {
  double mx = x[0];
  for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    out[j] = std::exp(x[j] - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (int64_t j = 0; j < n; ++j) out[j] *= inv;
}
}  // namespace

void softmax_rows_serial(const double* x, double* out, int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i) softmax_one_row(x + i * n, out + i * n, n);
}

void softmax_rows_parallel(const double* x, double* out, int64_t m, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) softmax_one_row(x + i * n, out + i * n, n);
}

void softmax_rows(const double* x, double* out, int64_t m, int64_t n) {
  if (g_mode == ExecMode::Parallel)
    softmax_rows_parallel(x, out, m, n);
  else
    softmax_rows_serial(x, out, m, n);
}

// ---------------------------------------------------------------------------
// pairwise spatial features

namespace {
inline void offset_feature_one(const double* cq, const double* ck, double* f) {
  const double dx = ck[0] - cq[0];
  const double dy = ck[1] - cq[1];
  const double dz = ck[2] - cq[2];
  const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (d == 0.0) {
    f[0] = 0.0;
    f[1] = 0.0;
    f[2] = 1.0;
    f[3] = 0.0;
    f[4] = 1.0;
    return;
  }
  const double rho = std::sqrt(dx * dx + dy * dy);
  const double th = std::atan2(dy, dx);   // azimuth in the ground plane
  const double tv = std::atan2(dz, rho);  // elevation above horizontal
  f[0] = d;
  f[1] = std::sin(th);
  f[2] = std::cos(th);
  f[3] = std::sin(tv);
  f[4] = std::cos(tv);
}
}  // namespace

void pairwise_offset_features_serial(const double* cq, int64_t nq, const double* ck, int64_t nk,
                                     double* out) {
  for (int64_t i = 0; i < nq; ++i)
    for (int64_t j = 0; j < nk; ++j) offset_feature_one(cq + i * 3, ck + j * 3, out + (i * nk + j) * 5);
}

void pairwise_offset_features_parallel(const double* cq, int64_t nq, const double* ck, int64_t nk,
                                       double* out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < nq; ++i)
    for (int64_t j = 0; j < nk; ++j) offset_feature_one(cq + i * 3, ck + j * 3, out + (i * nk + j) * 5);
}

void pairwise_offset_features(const double* cq, int64_t nq, const double* ck, int64_t nk,
                              double* out) {
  if (g_mode == ExecMode::Parallel)
    pairwise_offset_features_parallel(cq, nq, ck, nk, out);
  else
    pairwise_offset_features_serial(cq, nq, ck, nk, out);
}

void pairwise_sqdist_serial(const double* q, int64_t nq, const double* k, int64_t nk, double* out) {
  for (int64_t i = 0; i < nq; ++i) {
    const double* qi = q + i * 3;
    double* oi = out + i * nk;
    for (int64_t j = 0; j < nk; ++j) {
      const double* kj = k + j * 3;
      const double dx = qi[0] - kj[0], dy = qi[1] - kj[1], dz = qi[2] - kj[2];
      oi[j] = dx * dx + dy * dy + dz * dz;
    }
  }
}

void pairwise_sqdist_parallel(const double* q, int64_t nq, const double* k, int64_t nk,
                              double* out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < nq; ++i) {
    const double* qi = q + i * 3;
    double* oi = out + i * nk;
    for (int64_t j = 0; j < nk; ++j) {
      const double* kj = k + j * 3;
      const double dx = qi[0] - kj[0], dy = qi[1] - kj[1], dz = qi[2] - kj[2];
      oi[j] = dx * dx + dy * dy + dz * dz;
    }
  }
}

void pairwise_sqdist(const double* q, int64_t nq, const double* k, int64_t nk, double* out) {
  if (g_mode == ExecMode::Parallel)
    pairwise_sqdist_parallel(q, nq, k, nk, out);
  else
    pairwise_sqdist_serial(q, nq, k, nk, out);
}

// ---------------------------------------------------------------------------
// farthest point sampling

namespace {
inline double sqdist3(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Serial argmax scan keeps the lowest-index tie-break exact in both variants.
int64_t argmax_lowest(const double* x, int64_t n) {
  int64_t best = 0;
  for (int64_t i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

template <bool Parallel>
std::vector<int64_t> fps_impl(const double* pts, int64_t n, int64_t m) {
  std::vector<int64_t> sel;
  sel.reserve(static_cast<size_t>(m));
  if (m <= 0 || n <= 0) return sel;

  double cx = 0, cy = 0, cz = 0;
  for (int64_t i = 0; i < n; ++i) {
    cx += pts[i * 3];
    cy += pts[i * 3 + 1];
    cz += pts[i * 3 + 2];
  }
  const double centroid[3] = {cx / static_cast<double>(n), cy / static_cast<double>(n),
                              cz / static_cast<double>(n)};

  std::vector<double> mind(static_cast<size_t>(n));
  if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) mind[static_cast<size_t>(i)] = sqdist3(pts + i * 3, centroid);
  } else {
    for (int64_t i = 0; i < n; ++i) mind[static_cast<size_t>(i)] = sqdist3(pts + i * 3, centroid);
  }

  int64_t cur = argmax_lowest(mind.data(), n);
  std::fill(mind.begin(), mind.end(), HUGE_VAL);
  sel.push_back(cur);

  while (static_cast<int64_t>(sel.size()) < m) {
    const double* p = pts + cur * 3;
    if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        const double d = sqdist3(pts + i * 3, p);
        if (d < mind[static_cast<size_t>(i)]) mind[static_cast<size_t>(i)] = d;
      }
    } else {
      for (int64_t i = 0; i < n; ++i) {
        const double d = sqdist3(pts + i * 3, p);
        if (d < mind[static_cast<size_t>(i)]) mind[static_cast<size_t>(i)] = d;
      }
    }
    cur = argmax_lowest(mind.data(), n);
    sel.push_back(cur);
  }
  return sel;
}
}  // namespace

std::vector<int64_t> farthest_point_sample_serial(const double* pts, int64_t n, int64_t m) {
  return fps_impl<false>(pts, n, m);
}

std::vector<int64_t> farthest_point_sample_parallel(const double* pts, int64_t n, int64_t m) {
  return fps_impl<true>(pts, n, m);
}

std::vector<int64_t> farthest_point_sample(const double* pts, int64_t n, int64_t m) {
  return g_mode == ExecMode::Parallel ? farthest_point_sample_parallel(pts, n, m)
                                      : farthest_point_sample_serial(pts, n, m);
}

}  // namespace dg::kernels

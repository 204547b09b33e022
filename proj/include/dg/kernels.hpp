#pragma once

#include <cstdint>
#include <vector>

#include "dg/tensor.hpp"

// Compute-bound inner loops. Each kernel has a serial reference and an
// OpenMP variant; both compute every output element with the identical
// per-element operation order, so results are bit-equal for any thread
// count. exec_mode() selects the variant used by the dispatchers.
namespace dg::kernels {

enum class ExecMode { Serial, Parallel };

ExecMode exec_mode();
void set_exec_mode(ExecMode m);

// RAII scope guard used by tests to pin the mode.
struct ModeGuard {
  explicit ModeGuard(ExecMode m) : prev(exec_mode()) { set_exec_mode(m); }
  ~ModeGuard() { set_exec_mode(prev); }
  ExecMode prev;
};

// C[m,n] = A[m,k] * B[k,n]
void matmul_nn_serial(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
void matmul_nn_parallel(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
void matmul_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);

// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt_serial(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
void matmul_nt_parallel(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);

// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn_serial(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
void matmul_tn_parallel(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);

// Row-wise softmax, out may alias x. Rows are independent.
void softmax_rows_serial(const double* x, double* out, int64_t m, int64_t n);
void softmax_rows_parallel(const double* x, double* out, int64_t m, int64_t n);
void softmax_rows(const double* x, double* out, int64_t m, int64_t n);

// Pairwise center-to-center features, out[(i*nk+j)*5 ..]:
// [distance, sin/cos azimuth, sin/cos elevation], direction i -> j.
// Coincident centers produce [0, 0, 1, 0, 1].
void pairwise_offset_features_serial(const double* cq, int64_t nq, const double* ck, int64_t nk,
                                     double* out);
void pairwise_offset_features_parallel(const double* cq, int64_t nq, const double* ck, int64_t nk,
                                       double* out);
void pairwise_offset_features(const double* cq, int64_t nq, const double* ck, int64_t nk,
                              double* out);

// out[i,j] = squared distance between q_i and k_j (3-d points).
void pairwise_sqdist_serial(const double* q, int64_t nq, const double* k, int64_t nk, double* out);
void pairwise_sqdist_parallel(const double* q, int64_t nq, const double* k, int64_t nk, double* out);
void pairwise_sqdist(const double* q, int64_t nq, const double* k, int64_t nk, double* out);

// Farthest point sampling over n points (xyz rows). The first seed is the
// point farthest from the centroid; each round picks the point maximizing
// the distance to the selected set. Ties break to the lowest index, so the
// result is a pure function of the point multiset.
std::vector<int64_t> farthest_point_sample_serial(const double* pts, int64_t n, int64_t m);
std::vector<int64_t> farthest_point_sample_parallel(const double* pts, int64_t n, int64_t m);
std::vector<int64_t> farthest_point_sample(const double* pts, int64_t n, int64_t m);

}  // namespace dg::kernels

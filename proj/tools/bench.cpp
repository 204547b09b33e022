#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dg/kernels.hpp"
#include "dg/rng.hpp"

using dg::Rng;
namespace k = dg::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const char* name, const std::function<void()>& serial,
         const std::function<void()>& parallel, int reps) {
  const double ts = time_ms(serial, reps);
  const double tp = time_ms(parallel, reps);
  std::printf("%-28s %10.3f %10.3f %8.2fx\n", name, ts, tp, ts / tp);
}

}  // namespace

int main() {
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("threads: %d\n", threads);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "openmp ms", "speedup");

  Rng rng(7);
  const int64_t m = 256, kk = 256, n = 256;
  std::vector<double> A(m * kk), B(kk * n), Bt(n * kk), C(m * n);
  for (auto& x : A) x = rng.normal();
  for (auto& x : B) x = rng.normal();
  for (auto& x : Bt) x = rng.normal();

  row(
      "matmul_nn 256^3", [&] { k::matmul_nn_serial(A.data(), B.data(), C.data(), m, kk, n); },
      [&] { k::matmul_nn_parallel(A.data(), B.data(), C.data(), m, kk, n); }, 20);
  row(
      "matmul_nt 256^3", [&] { k::matmul_nt_serial(A.data(), Bt.data(), C.data(), m, kk, n); },
      [&] { k::matmul_nt_parallel(A.data(), Bt.data(), C.data(), m, kk, n); }, 20);
  row(
      "matmul_tn 256^3", [&] { k::matmul_tn_serial(A.data(), B.data(), C.data(), m, kk, n); },
      [&] { k::matmul_tn_parallel(A.data(), B.data(), C.data(), m, kk, n); }, 20);

  const int64_t sr = 2048, sc = 512;
  std::vector<double> S(sr * sc), Sout(sr * sc);
  for (auto& x : S) x = rng.normal();
  row(
      "softmax_rows 2048x512", [&] { k::softmax_rows_serial(S.data(), Sout.data(), sr, sc); },
      [&] { k::softmax_rows_parallel(S.data(), Sout.data(), sr, sc); }, 50);

  const int64_t nq = 512, nk = 512;
  std::vector<double> cq(nq * 3), ck(nk * 3), feats(nq * nk * 5), d2(nq * nk);
  for (auto& x : cq) x = rng.uniform(0, 8);
  for (auto& x : ck) x = rng.uniform(0, 8);
  row(
      "pairwise_offset 512x512",
      [&] { k::pairwise_offset_features_serial(cq.data(), nq, ck.data(), nk, feats.data()); },
      [&] { k::pairwise_offset_features_parallel(cq.data(), nq, ck.data(), nk, feats.data()); },
      50);
  row(
      "pairwise_sqdist 512x512",
      [&] { k::pairwise_sqdist_serial(cq.data(), nq, ck.data(), nk, d2.data()); },
      [&] { k::pairwise_sqdist_parallel(cq.data(), nq, ck.data(), nk, d2.data()); }, 50);

  const int64_t np = 8192, mp = 256;
  std::vector<double> pts(np * 3);
  for (auto& x : pts) x = rng.uniform(0, 8);
  row(
      "fps 8192->256", [&] { k::farthest_point_sample_serial(pts.data(), np, mp); },
      [&] { k::farthest_point_sample_parallel(pts.data(), np, mp); }, 5);

  return 0;
}

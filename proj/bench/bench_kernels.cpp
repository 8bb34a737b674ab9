// Timing comparison of the OpenMP kernels against their serial references.
// Each case checks agreement first, then reports best-of-N wall times.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "graphcount/kernels.hpp"
#include "graphcount/rng.hpp"

namespace {

using graphcount::Rng;
namespace kn = graphcount::kernels;

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        best = std::min(best, dt.count());
    }
    return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void report(const std::string& name, double serial_s, double parallel_s, double diff) {
    std::printf("%-22s serial %9.4f ms   parallel %9.4f ms   speedup %5.2fx   max|diff| %.3g\n",
                name.c_str(), serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s, diff);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run the same serial code path\n");
#endif
    Rng rng(7);
    const int reps = 5;

    {
        const int m = 384, k = 384, n = 384;
        const std::vector<double> a = random_vec(std::size_t(m) * k, rng);
        const std::vector<double> b = random_vec(std::size_t(k) * n, rng);
        std::vector<double> c_ser(std::size_t(m) * n), c_par(c_ser.size());
        const double ts = time_best_of(reps, [&] { kn::serial::matmul(a.data(), b.data(), c_ser.data(), m, k, n); });
        const double tp = time_best_of(reps, [&] { kn::matmul(a.data(), b.data(), c_par.data(), m, k, n); });
        report("matmul 384^3", ts, tp, max_abs_diff(c_ser, c_par));
    }

    {
        const int cin = 32, h = 96, w = 96, cout = 32, kk = 3;
        const std::vector<double> x = random_vec(std::size_t(cin) * h * w, rng);
        const std::vector<double> wt = random_vec(std::size_t(cout) * cin * kk * kk, rng);
        const std::vector<double> bias = random_vec(cout, rng);
        std::vector<double> y_ser(std::size_t(cout) * h * w), y_par(y_ser.size());
        const auto run_ser = [&] {
            kn::serial::conv2d_forward(x.data(), wt.data(), bias.data(), y_ser.data(),
                                       cin, h, w, cout, kk, kk, 1, 1, h, w);
        };
        const auto run_par = [&] {
            kn::conv2d_forward(x.data(), wt.data(), bias.data(), y_par.data(),
                               cin, h, w, cout, kk, kk, 1, 1, h, w);
        };
        const double ts = time_best_of(reps, run_ser);
        const double tp = time_best_of(reps, run_par);
        report("conv3x3 32x96x96", ts, tp, max_abs_diff(y_ser, y_par));
    }

    {
        const int n = 1024, k = 8;
        const std::vector<double> v = random_vec(n, rng);
        std::vector<double> s_ser(std::size_t(n) * n), s_par(s_ser.size());
        std::vector<int> row_ser(k + 1), row_par(k + 1);
        const auto run_ser = [&] {
            kn::serial::pairwise_abs_diff(v.data(), n, s_ser.data());
            for (int i = 0; i < n; ++i)
                kn::serial::topk_row(s_ser.data() + std::size_t(i) * n, n, i, k, false, row_ser.data());
        };
        const auto run_par = [&] {
            kn::pairwise_abs_diff(v.data(), n, s_par.data());
#ifdef _OPENMP
#pragma omp parallel for firstprivate(row_par)
#endif
            for (int i = 0; i < n; ++i)
                kn::topk_row(s_par.data() + std::size_t(i) * n, n, i, k, false, row_par.data());
        };
        const double ts = time_best_of(reps, run_ser);
        const double tp = time_best_of(reps, run_par);
        report("pairwise+topk n=1024", ts, tp, max_abs_diff(s_ser, s_par));
    }

    {
        const int n = 4096, k = 9, c = 64;
        std::vector<int> row_ptr(n + 1), cols;
        Rng grng(11);
        for (int i = 0; i < n; ++i) {
            row_ptr[i + 1] = row_ptr[i] + k;
            for (int e = 0; e < k; ++e) cols.push_back(int(grng.uniform_int(0, n - 1)));
        }
        const std::vector<double> vals = random_vec(cols.size(), grng);
        const std::vector<double> h = random_vec(std::size_t(n) * c, grng);
        std::vector<double> o_ser(std::size_t(n) * c), o_par(o_ser.size());
        const double ts = time_best_of(reps, [&] {
            kn::serial::csr_spmm(row_ptr.data(), cols.data(), vals.data(), h.data(), n, c, o_ser.data());
        });
        const double tp = time_best_of(reps, [&] {
            kn::csr_spmm(row_ptr.data(), cols.data(), vals.data(), h.data(), n, c, o_par.data());
        });
        report("spmm n=4096 c=64", ts, tp, max_abs_diff(o_ser, o_par));
    }

    return 0;
}

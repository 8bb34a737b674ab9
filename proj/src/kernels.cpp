#include "graphcount/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace graphcount::kernels {

namespace {

// Valid output-x range for a given kernel tap so the input index stays in
// [0, w): ix = ox*stride + kx - pad.
inline void tap_bounds(int kx, int pad, int stride, int w, int ow, int& lo, int& hi) {
    lo = (kx >= pad) ? 0 : (pad - kx + stride - 1) / stride;
    const int top = w - 1 - kx + pad;
    hi = (top < 0) ? 0 : std::min(ow, top / stride + 1);
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        std::memset(crow, 0, sizeof(double) * n);
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_add_tn(const double* a, const double* dc, double* db, int m, int k, int n) {
    // db[p][j] += sum_i a[i][p] * dc[i][j]; rows of db are independent.
#pragma omp parallel for schedule(static)
    for (int p = 0; p < k; ++p) {
        double* dbrow = db + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = a[static_cast<std::size_t>(i) * k + p];
            const double* dcrow = dc + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

void matmul_add_nt(const double* dc, const double* b, double* da, int m, int k, int n) {
    // da[i][p] += sum_j dc[i][j] * b[p][j]
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* darow = da + static_cast<std::size_t>(i) * k;
        const double* dcrow = dc + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double* brow = b + static_cast<std::size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    int cin, int h, int wdt, int cout, int kh, int kw,
                    int stride, int pad, int oh, int ow) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            double* yrow = y + (static_cast<std::size_t>(co) * oh + oy) * ow;
            const double b0 = bias ? bias[co] : 0.0;
            for (int ox = 0; ox < ow; ++ox) yrow[ox] = b0;
            for (int ci = 0; ci < cin; ++ci) {
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const double* xrow = x + (static_cast<std::size_t>(ci) * h + iy) * wdt;
                    const double* wrow = w + ((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw;
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wrow[kx];
                        int lo, hi;
                        tap_bounds(kx, pad, stride, wdt, ow, lo, hi);
                        const double* xs = xrow + kx - pad;
                        if (stride == 1) {
                            for (int ox = lo; ox < hi; ++ox) yrow[ox] += wv * xs[ox];
                        } else {
                            for (int ox = lo; ox < hi; ++ox) yrow[ox] += wv * xs[static_cast<std::size_t>(ox) * stride];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input_add(const double* dy, const double* w, double* dx,
                               int cin, int h, int wdt, int cout, int kh, int kw,
                               int stride, int pad, int oh, int ow) {
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
        double* dxc = dx + static_cast<std::size_t>(ci) * h * wdt;
        for (int co = 0; co < cout; ++co) {
            const double* dyc = dy + static_cast<std::size_t>(co) * oh * ow;
            const double* wc = w + (static_cast<std::size_t>(co) * cin + ci) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = wc[static_cast<std::size_t>(ky) * kw + kx];
                    if (wv == 0.0) continue;
                    int lo, hi;
                    tap_bounds(kx, pad, stride, wdt, ow, lo, hi);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        double* dxrow = dxc + static_cast<std::size_t>(iy) * wdt + kx - pad;
                        const double* dyrow = dyc + static_cast<std::size_t>(oy) * ow;
                        if (stride == 1) {
                            for (int ox = lo; ox < hi; ++ox) dxrow[ox] += wv * dyrow[ox];
                        } else {
                            for (int ox = lo; ox < hi; ++ox) dxrow[static_cast<std::size_t>(ox) * stride] += wv * dyrow[ox];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernel_add(const double* dy, const double* x, double* dw,
                                int cin, int h, int wdt, int cout, int kh, int kw,
                                int stride, int pad, int oh, int ow) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        const double* dyc = dy + static_cast<std::size_t>(co) * oh * ow;
        double* dwc = dw + static_cast<std::size_t>(co) * cin * kh * kw;
        for (int ci = 0; ci < cin; ++ci) {
            const double* xc = x + static_cast<std::size_t>(ci) * h * wdt;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    int lo, hi;
                    tap_bounds(kx, pad, stride, wdt, ow, lo, hi);
                    double acc = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xc + static_cast<std::size_t>(iy) * wdt + kx - pad;
                        const double* dyrow = dyc + static_cast<std::size_t>(oy) * ow;
                        if (stride == 1) {
                            for (int ox = lo; ox < hi; ++ox) acc += dyrow[ox] * xrow[ox];
                        } else {
                            for (int ox = lo; ox < hi; ++ox) acc += dyrow[ox] * xrow[static_cast<std::size_t>(ox) * stride];
                        }
                    }
                    dwc[(static_cast<std::size_t>(ci) * kh + ky) * kw + kx] += acc;
                }
            }
        }
    }
}

void conv2d_backward_bias_add(const double* dy, double* dbias, int cout, int oh, int ow) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        const double* dyc = dy + static_cast<std::size_t>(co) * oh * ow;
        double acc = 0.0;
        for (int i = 0; i < oh * ow; ++i) acc += dyc[i];
        dbias[co] += acc;
    }
}

void pairwise_abs_diff(const double* v, int n, double* s) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double vi = v[i];
        double* row = s + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] = std::fabs(vi - v[j]);
    }
}

void cosine_matrix(const double* f, int n, int c, double* s, int* zero_rows) {
    std::vector<double> norm(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* fi = f + static_cast<std::size_t>(i) * c;
        double acc = 0.0;
        for (int p = 0; p < c; ++p) acc += fi[p] * fi[p];
        norm[i] = std::sqrt(acc);
    }
    int zeros = 0;
    for (int i = 0; i < n; ++i)
        if (norm[i] == 0.0) ++zeros;
    if (zero_rows) *zero_rows = zeros;

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double* row = s + static_cast<std::size_t>(i) * n;
        const double* fi = f + static_cast<std::size_t>(i) * c;
        if (norm[i] == 0.0) {
            for (int j = 0; j < n; ++j) row[j] = 0.0;
            row[i] = 1.0;
            continue;
        }
        for (int j = 0; j < n; ++j) {
            if (j == i) {
                row[j] = 1.0;
                continue;
            }
            if (norm[j] == 0.0) {
                row[j] = 0.0;
                continue;
            }
            const double* fj = f + static_cast<std::size_t>(j) * c;
            double dot = 0.0;
            for (int p = 0; p < c; ++p) dot += fi[p] * fj[p];
            row[j] = dot / (norm[i] * norm[j]);
        }
    }
}

int topk_row(const double* score, int n, int self, int k, bool largest, int* out) {
    const int kk = std::min(k, n - 1);
    // Insertion into a small buffer kept ordered best-to-worst. "Better"
    // means smaller (or larger) score, with the lower index winning ties.
    std::vector<int> best;
    best.reserve(kk);
    auto better = [&](int a, int b) {
        const double sa = score[a], sb = score[b];
        if (sa != sb) return largest ? (sa > sb) : (sa < sb);
        return a < b;
    };
    for (int j = 0; j < n; ++j) {
        if (j == self) continue;
        if (static_cast<int>(best.size()) < kk) {
            auto pos = std::upper_bound(best.begin(), best.end(), j,
                                        [&](int a, int b) { return better(a, b); });
            best.insert(pos, j);
        } else if (kk > 0 && better(j, best.back())) {
            best.pop_back();
            auto pos = std::upper_bound(best.begin(), best.end(), j,
                                        [&](int a, int b) { return better(a, b); });
            best.insert(pos, j);
        }
    }
    best.push_back(self);
    std::sort(best.begin(), best.end());
    std::copy(best.begin(), best.end(), out);
    return static_cast<int>(best.size());
}

void csr_spmm(const int* row_ptr, const int* cols, const double* vals,
              const double* h, int n, int c, double* out) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double* orow = out + static_cast<std::size_t>(i) * c;
        std::memset(orow, 0, sizeof(double) * c);
        for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
            const double v = vals[e];
            const double* hrow = h + static_cast<std::size_t>(cols[e]) * c;
            for (int p = 0; p < c; ++p) orow[p] += v * hrow[p];
        }
    }
}

void csr_spmm_add(const int* row_ptr, const int* cols, const double* vals,
                  const double* h, int n, int c, double* out) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double* orow = out + static_cast<std::size_t>(i) * c;
        for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
            const double v = vals[e];
            const double* hrow = h + static_cast<std::size_t>(cols[e]) * c;
            for (int p = 0; p < c; ++p) orow[p] += v * hrow[p];
        }
    }
}

namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p)
                acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
}

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    int cin, int h, int wdt, int cout, int kh, int kw,
                    int stride, int pad, int oh, int ow) {
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wdt) continue;
                            acc += x[(static_cast<std::size_t>(ci) * h + iy) * wdt + ix] *
                                   w[((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx];
                        }
                y[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] = acc;
            }
}

void pairwise_abs_diff(const double* v, int n, double* s) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s[static_cast<std::size_t>(i) * n + j] = std::fabs(v[i] - v[j]);
}

void cosine_matrix(const double* f, int n, int c, double* s, int* zero_rows) {
    int zeros = 0;
    std::vector<double> norm(n);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int p = 0; p < c; ++p) acc += f[static_cast<std::size_t>(i) * c + p] * f[static_cast<std::size_t>(i) * c + p];
        norm[i] = std::sqrt(acc);
        if (norm[i] == 0.0) ++zeros;
    }
    if (zero_rows) *zero_rows = zeros;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double& cell = s[static_cast<std::size_t>(i) * n + j];
            if (i == j) {
                cell = 1.0;
            } else if (norm[i] == 0.0 || norm[j] == 0.0) {
                cell = 0.0;
            } else {
                double dot = 0.0;
                for (int p = 0; p < c; ++p)
                    dot += f[static_cast<std::size_t>(i) * c + p] * f[static_cast<std::size_t>(j) * c + p];
                cell = dot / (norm[i] * norm[j]);
            }
        }
}

int topk_row(const double* score, int n, int self, int k, bool largest, int* out) {
    std::vector<int> idx;
    idx.reserve(n - 1);
    for (int j = 0; j < n; ++j)
        if (j != self) idx.push_back(j);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (score[a] != score[b]) return largest ? (score[a] > score[b]) : (score[a] < score[b]);
        return a < b;
    });
    const int kk = std::min(k, n - 1);
    idx.resize(kk);
    idx.push_back(self);
    std::sort(idx.begin(), idx.end());
    std::copy(idx.begin(), idx.end(), out);
    return kk + 1;
}

std::vector<std::vector<int>> topk_adjacency_dense(const double* score, int n, int k, bool largest) {
    std::vector<std::vector<int>> rows(n);
    for (int i = 0; i < n; ++i) {
        rows[i].resize(std::min(k, n - 1) + 1);
        topk_row(score + static_cast<std::size_t>(i) * n, n, i, k, largest, rows[i].data());
    }
    return rows;
}

void csr_spmm(const int* row_ptr, const int* cols, const double* vals,
              const double* h, int n, int c, double* out) {
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < c; ++p) {
            double acc = 0.0;
            for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
                acc += vals[e] * h[static_cast<std::size_t>(cols[e]) * c + p];
            out[static_cast<std::size_t>(i) * c + p] = acc;
        }
}

}  // namespace serial

}  // namespace graphcount::kernels

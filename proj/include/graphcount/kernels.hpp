#pragma once

// Low-level numeric kernels. The default entry points parallelize over
// independent output rows/cells with OpenMP; every reduction happens inside
// one thread in a fixed order, so results are bit-identical for any thread
// count. graphcount::kernels::serial holds plain textbook loops used as the
// reference in tests and in the kernel benchmark.

#include <vector>

namespace graphcount::kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// db[k x n] += a^T[k x m] * dc[m x n]   (a stored m x k)
void matmul_add_tn(const double* a, const double* dc, double* db, int m, int k, int n);

// da[m x k] += dc[m x n] * b^T[n x k]   (b stored k x n)
void matmul_add_nt(const double* dc, const double* b, double* da, int m, int k, int n);

// y[cout x oh x ow] = conv(x[cin x h x w], w[cout x cin x kh x kw]) + bias
// Cross-correlation, no kernel flip. bias may be null.
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    int cin, int h, int wdt, int cout, int kh, int kw,
                    int stride, int pad, int oh, int ow);

// dx += gather of dy through w; parallel over input channels.
void conv2d_backward_input_add(const double* dy, const double* w, double* dx,
                               int cin, int h, int wdt, int cout, int kh, int kw,
                               int stride, int pad, int oh, int ow);

// dw += correlation of dy with x; parallel over output channels.
void conv2d_backward_kernel_add(const double* dy, const double* x, double* dw,
                                int cin, int h, int wdt, int cout, int kh, int kw,
                                int stride, int pad, int oh, int ow);

// dbias[c] += sum over spatial positions of dy[c]
void conv2d_backward_bias_add(const double* dy, double* dbias, int cout, int oh, int ow);

// s[i*n + j] = |v[i] - v[j]|
void pairwise_abs_diff(const double* v, int n, double* s);

// s[i*n + j] = <f_i, f_j> / (|f_i| |f_j|), rows of f are n x c.
// Zero-norm rows get similarity 0 to all others and 1 to themselves; the
// number of such rows is reported through zero_rows (may be null).
void cosine_matrix(const double* f, int n, int c, double* s, int* zero_rows);

// Selects the min(k, n-1) indices j != self with extremal score[j]
// (largest or smallest), ties broken toward the lower index, appends the
// self index, and writes the ascending-sorted result to out. Returns the
// number of indices written (min(k, n-1) + 1).
int topk_row(const double* score, int n, int self, int k, bool largest, int* out);

// out[n x c] = csr * h[n x c]
void csr_spmm(const int* row_ptr, const int* cols, const double* vals,
              const double* h, int n, int c, double* out);

// out[n x c] += csr * h[n x c]
void csr_spmm_add(const int* row_ptr, const int* cols, const double* vals,
                  const double* h, int n, int c, double* out);

namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n);

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    int cin, int h, int wdt, int cout, int kh, int kw,
                    int stride, int pad, int oh, int ow);

void pairwise_abs_diff(const double* v, int n, double* s);

void cosine_matrix(const double* f, int n, int c, double* s, int* zero_rows);

// Full-sort selection over one row; same contract as kernels::topk_row.
int topk_row(const double* score, int n, int self, int k, bool largest, int* out);

// Dense adjacency rows from a full n x n score matrix by sorting each row.
std::vector<std::vector<int>> topk_adjacency_dense(const double* score, int n, int k, bool largest);

void csr_spmm(const int* row_ptr, const int* cols, const double* vals,
              const double* h, int n, int c, double* out);

}  // namespace serial

}  // namespace graphcount::kernels

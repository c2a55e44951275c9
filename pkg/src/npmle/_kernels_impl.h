/* Inner loops for the Gaussian mixture kernels.
 *
 * Accumulation over samples is strictly sequential in i, so every output
 * is a fixed-order sum regardless of how callers schedule work.
 */
#ifndef NPMLE_KERNELS_IMPL_H
#define NPMLE_KERNELS_IMPL_H

#include <math.h>
#include <stddef.h>

/* muT and PT are d x m (particle index fastest) so the j loops vectorize. */
static void npmle_mixture_stats(const double *restrict X, const double *restrict muT,
                                const double *restrict logw, double *restrict logmarg,
                                double *restrict Q, double *restrict PT,
                                double *restrict a, double *restrict invw,
                                ptrdiff_t N, ptrdiff_t m, ptrdiff_t d, int want_stats)
{
    const double cst = -0.5 * (double)d * log(2.0 * M_PI);
    for (ptrdiff_t j = 0; j < m; j++) {
        invw[j] = exp(-logw[j]);
        if (want_stats) Q[j] = 0.0;
    }
    if (want_stats)
        for (ptrdiff_t j = 0; j < m * d; j++) PT[j] = 0.0;
    for (ptrdiff_t i = 0; i < N; i++) {
        const double *xi = X + i * d;
        for (ptrdiff_t j = 0; j < m; j++) a[j] = 0.0;
        for (ptrdiff_t k = 0; k < d; k++) {
            const double xk = xi[k];
            const double *mk = muT + k * m;
            for (ptrdiff_t j = 0; j < m; j++) {
                double t = xk - mk[j];
                a[j] += t * t;
            }
        }
        double mx = -HUGE_VAL;
        for (ptrdiff_t j = 0; j < m; j++) {
            a[j] = logw[j] - 0.5 * a[j];
            mx = a[j] > mx ? a[j] : mx;
        }
        double tot = 0.0;
        for (ptrdiff_t j = 0; j < m; j++) {
            a[j] = exp(a[j] - mx);
            tot += a[j];
        }
        logmarg[i] = mx + log(tot) + cst;
        if (want_stats) {
            const double inv = 1.0 / tot;
            for (ptrdiff_t j = 0; j < m; j++) {
                a[j] = a[j] * invw[j] * inv;
                Q[j] += a[j];
            }
            for (ptrdiff_t k = 0; k < d; k++) {
                const double xk = xi[k];
                double *pk = PT + k * m;
                for (ptrdiff_t j = 0; j < m; j++) pk[j] += a[j] * xk;
            }
        }
    }
}

static void npmle_field_values(const double *restrict X, const double *restrict logmarg,
                               const double *restrict pts, double *restrict vals,
                               double *restrict grads, double *restrict c,
                               double *restrict e, ptrdiff_t N, ptrdiff_t n,
                               ptrdiff_t d, int want_grad)
{
    const double cst = -0.5 * (double)d * log(2.0 * M_PI);
    const double invN = 1.0 / (double)N;
    for (ptrdiff_t i = 0; i < N; i++) c[i] = cst - logmarg[i];
    for (ptrdiff_t p = 0; p < n; p++) {
        const double *x = pts + p * d;
        if (d == 1) {
            const double x0 = x[0];
            for (ptrdiff_t i = 0; i < N; i++) {
                double t = x0 - X[i];
                e[i] = c[i] - 0.5 * t * t;
            }
        } else {
            for (ptrdiff_t i = 0; i < N; i++) {
                double s = 0.0;
                for (ptrdiff_t k = 0; k < d; k++) {
                    double t = x[k] - X[i * d + k];
                    s += t * t;
                }
                e[i] = c[i] - 0.5 * s;
            }
        }
        double v = 0.0;
        for (ptrdiff_t i = 0; i < N; i++) {
            e[i] = exp(e[i]);
            v += e[i];
        }
        vals[p] = -v * invN;
        if (want_grad) {
            double *g = grads + p * d;
            for (ptrdiff_t k = 0; k < d; k++) g[k] = 0.0;
            for (ptrdiff_t i = 0; i < N; i++)
                for (ptrdiff_t k = 0; k < d; k++) g[k] += e[i] * (X[i * d + k] - x[k]);
            for (ptrdiff_t k = 0; k < d; k++) g[k] = -g[k] * invN;
        }
    }
}

#endif

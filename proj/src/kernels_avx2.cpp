// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the CPUID check in kernels_dispatch.cpp.
#include "durdecomp/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace durdecomp::kernels {
namespace {

// exp(x) for four doubles. Cody-Waite reduction x = n ln2 + r, |r| <= ln2/2,
// then the Cephes (3,3) Pade form for exp(r). Max relative error is about
// 2 ulp against std::exp over the normal range; NaN propagates, +-inf map to
// inf/0, and the scale is applied in two halves so subnormal results survive.
inline __m256d exp4(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125E-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212E-6);
    const __m256d hi_lim = _mm256_set1_pd(709.782712893384);
    const __m256d lo_lim = _mm256_set1_pd(-745.2);

    const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
    const __m256d over = _mm256_cmp_pd(x, hi_lim, _CMP_GT_OQ);
    const __m256d under = _mm256_cmp_pd(x, lo_lim, _CMP_LT_OQ);
    __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo_lim), hi_lim);

    __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, xc);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    const __m256d rr = _mm256_mul_pd(r, r);
    __m256d p = _mm256_set1_pd(1.26177193074810590878E-4);
    p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300E-2));
    p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910E-1));
    p = _mm256_mul_pd(p, r);
    __m256d q = _mm256_set1_pd(3.00198505138664455042E-6);
    q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192E-3));
    q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766E-1));
    q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009E0));
    __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
    e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

    // 2^n split as 2^n1 * 2^n2 with n1 = floor(n/2), each within exponent range.
    const __m256d n1 = _mm256_floor_pd(_mm256_mul_pd(n, _mm256_set1_pd(0.5)));
    const __m256d n2 = _mm256_sub_pd(n, n1);
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
    const __m256i bias = _mm256_set1_epi64x(1023);
    auto pow2 = [&](__m256d k) {
        __m256i ki = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)),
                                      _mm256_castpd_si256(magic));
        return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(ki, bias), 52));
    };
    e = _mm256_mul_pd(_mm256_mul_pd(e, pow2(n1)), pow2(n2));

    e = _mm256_blendv_pd(e, _mm256_set1_pd(HUGE_VAL), over);
    e = _mm256_blendv_pd(e, _mm256_setzero_pd(), under);
    return _mm256_blendv_pd(e, x, nan_mask);
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void exp_avx2(const double* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(in + i)));
    for (; i < n; ++i) out[i] = std::exp(in[i]);
}

void exp_neg_scaled_avx2(const double* u, double c, double* out, std::size_t n) {
    const __m256d nc = _mm256_set1_pd(-c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, exp4(_mm256_mul_pd(nc, _mm256_loadu_pd(u + i))));
    for (; i < n; ++i) out[i] = std::exp(-c * u[i]);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_avx2(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i];
    return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

double survival_sum_avx2(const double* w, const double* u, double c, std::size_t n) {
    const __m256d nc = _mm256_set1_pd(-c);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d s = exp4(_mm256_mul_pd(nc, _mm256_loadu_pd(u + i)));
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), s, acc);
    }
    double total = hsum(acc);
    for (; i < n; ++i) total += w[i] * std::exp(-c * u[i]);
    return total;
}

}  // namespace

const Table& avx2_table_impl() noexcept {
    static const Table t{Isa::avx2, exp_avx2, exp_neg_scaled_avx2, dot_avx2,
                         sum_avx2,  axpy_avx2, mul_avx2,           survival_sum_avx2};
    return t;
}

}  // namespace durdecomp::kernels

#include "durdecomp/kernels.hpp"

#include <cmath>

namespace durdecomp::kernels {
namespace {

void exp_scalar(const double* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
}

void exp_neg_scaled_scalar(const double* u, double c, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(-c * u[i]);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double survival_sum_scalar(const double* w, const double* u, double c, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * std::exp(-c * u[i]);
    return acc;
}

}  // namespace

const Table& scalar_table() noexcept {
    static const Table t{Isa::scalar,  exp_scalar, exp_neg_scaled_scalar, dot_scalar,
                         sum_scalar,   axpy_scalar, mul_scalar,           survival_sum_scalar};
    return t;
}

}  // namespace durdecomp::kernels

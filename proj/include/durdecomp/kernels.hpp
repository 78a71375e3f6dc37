#pragma once
// Data-parallel inner loops shared by the likelihood and the prediction code.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2+FMA
// variant. The variant is chosen once at startup from CPUID; setting the
// environment variable DURDECOMP_ISA=scalar forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace durdecomp::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

struct Table {
    Isa isa;
    // out[i] = exp(in[i])
    void (*exp)(const double* in, double* out, std::size_t n);
    // out[i] = exp(-c * u[i])
    void (*exp_neg_scaled)(const double* u, double c, double* out, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[i] = a[i] * b[i]
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    // sum_i w[i] * exp(-c * u[i])
    double (*survival_sum)(const double* w, const double* u, double c, std::size_t n);
};

const Table& scalar_table() noexcept;
/// nullptr when the build or the host CPU lacks AVX2/FMA.
const Table* avx2_table() noexcept;

/// The dispatch table in use.
const Table& active() noexcept;
/// Override the dispatch choice (tests and benchmarks). Falls back to scalar
/// when the requested ISA is unavailable; returns the ISA actually selected.
Isa select(Isa isa) noexcept;

// Span wrappers over the active table.

inline void exp(std::span<const double> in, std::span<double> out) {
    active().exp(in.data(), out.data(), in.size());
}
inline void exp_neg_scaled(std::span<const double> u, double c, std::span<double> out) {
    active().exp_neg_scaled(u.data(), c, out.data(), u.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}
inline double sum(std::span<const double> a) { return active().sum(a.data(), a.size()); }
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    active().mul(a.data(), b.data(), out.data(), a.size());
}
inline double survival_sum(std::span<const double> w, std::span<const double> u, double c) {
    return active().survival_sum(w.data(), u.data(), c, w.size());
}

}  // namespace durdecomp::kernels

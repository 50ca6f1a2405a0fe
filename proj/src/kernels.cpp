#include "ovlm/kernels.hpp"

#include <algorithm>

namespace ovlm::kernels {

namespace scalar {

float dot(const float* a, const float* b, std::size_t n) {
    float s = 0.f;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(float* y, float a, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void vadd(float* out, const float* a, const float* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vmul(float* out, const float* a, const float* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(float* y, float a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

float reduce_max(const float* x, std::size_t n) {
    float m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

float reduce_sum(const float* x, std::size_t n) {
    float s = 0.f;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

}  // namespace scalar

namespace {

struct Dispatch {
    float (*dot)(const float*, const float*, std::size_t);
    void (*axpy)(float*, float, const float*, std::size_t);
    void (*vadd)(float*, const float*, const float*, std::size_t);
    void (*vmul)(float*, const float*, const float*, std::size_t);
    void (*vscale)(float*, float, std::size_t);
    float (*reduce_max)(const float*, std::size_t);
    float (*reduce_sum)(const float*, std::size_t);
    const char* name;
};

Dispatch pick_backend() {
    if (avx2::available()) {
        return {avx2::dot, avx2::axpy, avx2::vadd, avx2::vmul,
                avx2::vscale, avx2::reduce_max, avx2::reduce_sum, "avx2"};
    }
    return {scalar::dot, scalar::axpy, scalar::vadd, scalar::vmul,
            scalar::vscale, scalar::reduce_max, scalar::reduce_sum, "scalar"};
}

const Dispatch& table() {
    static const Dispatch d = pick_backend();
    return d;
}

}  // namespace

const char* active_backend() { return table().name; }

float dot(const float* a, const float* b, std::size_t n) { return table().dot(a, b, n); }
void axpy(float* y, float a, const float* x, std::size_t n) { table().axpy(y, a, x, n); }
void vadd(float* out, const float* a, const float* b, std::size_t n) { table().vadd(out, a, b, n); }
void vmul(float* out, const float* a, const float* b, std::size_t n) { table().vmul(out, a, b, n); }
void vscale(float* y, float a, std::size_t n) { table().vscale(y, a, n); }
float reduce_max(const float* x, std::size_t n) { return table().reduce_max(x, n); }
float reduce_sum(const float* x, std::size_t n) { return table().reduce_sum(x, n); }

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}
void axpy(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
void vadd(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void vmul(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void vscale(double* y, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}
double reduce_max(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}
double reduce_sum(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

}  // namespace ovlm::kernels

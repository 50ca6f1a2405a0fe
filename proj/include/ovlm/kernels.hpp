#pragma once

#include <cstddef>

// Vectorized inner loops for the f32 compute path. Every kernel has a scalar
// reference implementation; an AVX2 variant is selected once at startup when
// the CPU supports it. The two variants are equivalence-tested against each
// other. The f64 verification build always takes the scalar path.
namespace ovlm::kernels {

const char* active_backend();  // "avx2" or "scalar"

float dot(const float* a, const float* b, std::size_t n);
void axpy(float* y, float a, const float* x, std::size_t n);  // y += a * x
void vadd(float* out, const float* a, const float* b, std::size_t n);
void vmul(float* out, const float* a, const float* b, std::size_t n);
void vscale(float* y, float a, std::size_t n);  // y *= a
float reduce_max(const float* x, std::size_t n);
float reduce_sum(const float* x, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, double a, const double* x, std::size_t n);
void vadd(double* out, const double* a, const double* b, std::size_t n);
void vmul(double* out, const double* a, const double* b, std::size_t n);
void vscale(double* y, double a, std::size_t n);
double reduce_max(const double* x, std::size_t n);
double reduce_sum(const double* x, std::size_t n);

// Scalar references, exposed for equivalence tests.
namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
void axpy(float* y, float a, const float* x, std::size_t n);
void vadd(float* out, const float* a, const float* b, std::size_t n);
void vmul(float* out, const float* a, const float* b, std::size_t n);
void vscale(float* y, float a, std::size_t n);
float reduce_max(const float* x, std::size_t n);
float reduce_sum(const float* x, std::size_t n);
}  // namespace scalar

// AVX2 variants; null function table entries when unavailable.
namespace avx2 {
bool available();
float dot(const float* a, const float* b, std::size_t n);
void axpy(float* y, float a, const float* x, std::size_t n);
void vadd(float* out, const float* a, const float* b, std::size_t n);
void vmul(float* out, const float* a, const float* b, std::size_t n);
void vscale(float* y, float a, std::size_t n);
float reduce_max(const float* x, std::size_t n);
float reduce_sum(const float* x, std::size_t n);
}  // namespace avx2

}  // namespace ovlm::kernels

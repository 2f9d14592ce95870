#pragma once

// Data-parallel float32 kernels behind the inference engine, the TFC novelty
// check, the distance constraint and k-means.
//
// Every kernel has a scalar reference implementation and, on x86-64 builds,
// an AVX2 variant. The active backend is chosen once at startup from CPUID
// (override with NNFUZZ_SIMD=scalar|avx2) and can be switched by tests.
//
// Elementwise kernels (axpy, relu) are bit-identical across backends.
// Reductions (dot, sum, squared_l2) reassociate in the vector path and agree
// with the scalar path to float rounding only. max_abs_diff is exact.

#include <cstddef>
#include <span>
#include <string_view>

namespace nnfuzz::kernels {

enum class Backend { scalar, avx2 };

std::string_view backend_name(Backend b) noexcept;
bool backend_supported(Backend b) noexcept;
Backend active_backend() noexcept;
/// Throws std::invalid_argument if the backend is not compiled in or the CPU lacks it.
void set_backend(Backend b);

struct KernelTable {
  float (*dot)(const float* a, const float* b, std::size_t n);
  float (*sum)(const float* a, std::size_t n);
  void (*axpy)(float* y, const float* x, float alpha, std::size_t n);
  void (*relu)(float* a, std::size_t n);
  float (*squared_l2)(const float* a, const float* b, std::size_t n);
  float (*max_abs_diff)(const float* a, const float* b, std::size_t n);
};

const KernelTable& table(Backend b);

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
float sum(const float* a, std::size_t n);
void axpy(float* y, const float* x, float alpha, std::size_t n);
void relu(float* a, std::size_t n);
float squared_l2(const float* a, const float* b, std::size_t n);
float max_abs_diff(const float* a, const float* b, std::size_t n);
}  // namespace scalar

#if defined(NNFUZZ_HAS_AVX2)
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
float sum(const float* a, std::size_t n);
void axpy(float* y, const float* x, float alpha, std::size_t n);
void relu(float* a, std::size_t n);
float squared_l2(const float* a, const float* b, std::size_t n);
float max_abs_diff(const float* a, const float* b, std::size_t n);
}  // namespace avx2
#endif

// Dispatching entry points.
float dot(std::span<const float> a, std::span<const float> b);
float sum(std::span<const float> a);
void axpy(std::span<float> y, std::span<const float> x, float alpha);
void relu(std::span<float> a);
float squared_l2(std::span<const float> a, std::span<const float> b);
float max_abs_diff(std::span<const float> a, std::span<const float> b);

}  // namespace nnfuzz::kernels

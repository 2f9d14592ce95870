#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "nnfuzz/kernels.hpp"

namespace nnfuzz::kernels {
namespace {

constexpr KernelTable kScalarTable{scalar::dot,        scalar::sum,        scalar::axpy,
                                   scalar::relu,       scalar::squared_l2, scalar::max_abs_diff};

#if defined(NNFUZZ_HAS_AVX2)
constexpr KernelTable kAvx2Table{avx2::dot,        avx2::sum,        avx2::axpy,
                                 avx2::relu,       avx2::squared_l2, avx2::max_abs_diff};
#endif

bool cpu_has_avx2() noexcept {
#if defined(NNFUZZ_HAS_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend detect() noexcept {
  if (const char* env = std::getenv("NNFUZZ_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Backend::scalar;
    if (want == "avx2" && cpu_has_avx2()) return Backend::avx2;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "unknown";
}

bool backend_supported(Backend b) noexcept {
  return b == Backend::scalar || (b == Backend::avx2 && cpu_has_avx2());
}

Backend active_backend() noexcept { return active().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_supported(b)) {
    throw std::invalid_argument("kernel backend not available: " + std::string(backend_name(b)));
  }
  active().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
#if defined(NNFUZZ_HAS_AVX2)
  if (b == Backend::avx2) return kAvx2Table;
#endif
  (void)b;
  return kScalarTable;
}

float dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  return table(active_backend()).dot(a.data(), b.data(), a.size());
}

float sum(std::span<const float> a) { return table(active_backend()).sum(a.data(), a.size()); }

void axpy(std::span<float> y, std::span<const float> x, float alpha) {
  assert(y.size() == x.size());
  table(active_backend()).axpy(y.data(), x.data(), alpha, y.size());
}

void relu(std::span<float> a) { table(active_backend()).relu(a.data(), a.size()); }

float squared_l2(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  return table(active_backend()).squared_l2(a.data(), b.data(), a.size());
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  return table(active_backend()).max_abs_diff(a.data(), b.data(), a.size());
}

}  // namespace nnfuzz::kernels

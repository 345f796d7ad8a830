#include <atomic>
#include <cstdlib>
#include <string>

#include "decompound/error.hpp"
#include "decompound/kernels.hpp"

namespace decompound::kernels {

#ifndef DECOMPOUND_HAVE_AVX2
namespace avx2 {
double log_density(const ComponentTable& table, const double* x) { return scalar::log_density(table, x); }
void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out) {
  scalar::log_density_batch(table, points, out);
}
}  // namespace avx2
#endif

namespace {

struct KernelSet {
  Isa isa;
  double (*log_density)(const ComponentTable&, const double*);
  void (*log_density_batch)(const ComponentTable&, std::span<const double>, std::span<double>);
};

constexpr KernelSet kScalar{Isa::scalar, &scalar::log_density, &scalar::log_density_batch};
constexpr KernelSet kAvx2{Isa::avx2, &avx2::log_density, &avx2::log_density_batch};

const KernelSet* detect() {
  if (const char* env = std::getenv("DECOMPOUND_ISA"); env && std::string(env) == "scalar") return &kScalar;
  return isa_available(Isa::avx2) ? &kAvx2 : &kScalar;
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> active{detect()};
  return active;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(DECOMPOUND_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return current().load()->isa; }

void set_isa(Isa isa) {
  if (!isa_available(isa)) throw UnsupportedError("kernel ISA not available: " + std::string(isa_name(isa)));
  current().store(isa == Isa::avx2 ? &kAvx2 : &kScalar);
}

double log_density(const ComponentTable& table, const double* x) {
  return current().load(std::memory_order_relaxed)->log_density(table, x);
}

void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out) {
  current().load(std::memory_order_relaxed)->log_density_batch(table, points, out);
}

}  // namespace decompound::kernels

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "decompound/grid.hpp"
#include "decompound/likelihood.hpp"
#include "decompound/model.hpp"
#include "json.hpp"

namespace decompound {

/// K(x, y) = x log(x/y) - x + y for positive reals.
double scalar_k(double x, double y);
/// V(x, y) = x log^2(x/y).
double scalar_v(double x, double y);
/// h(x, y) = |sqrt(x) - sqrt(y)|.
double scalar_h(double x, double y);

enum class DivergenceKind { hellinger, kl, v };
enum class Method { automatic, quadrature, monte_carlo };
std::string_view kind_name(DivergenceKind kind);
std::string_view method_name(Method method);

struct MetricOptions {
  /// automatic: quadrature for d <= 2, Monte Carlo otherwise.
  Method method = Method::automatic;
  /// Quadrature nodes per axis; 0 picks 4096 (d = 1) or 1024 (d = 2).
  /// Refined automatically when the spacing would not resolve the narrowest component.
  std::size_t points_per_axis = 0;
  /// Half-width of the quadrature box in standard deviations of the widest component.
  double reach = 8.0;
  std::size_t mc_draws = 1'000'000;
  std::uint64_t mc_seed = 0x6d63;
  /// Increment densities; mesh is the observation spacing of the Q level.
  DensityOptions density{};
};

nlohmann::json metric_options_to_json(const MetricOptions& options);

/// One divergence between two laws. For the Hellinger distance `value` is h
/// itself (h^2 <= 2); `atom_term` and `continuous_term` always split h^2, K or V.
struct DivergenceEstimate {
  DivergenceKind kind = DivergenceKind::kl;
  double value = 0.0;
  Method method = Method::quadrature;
  double mc_std_error = 0.0;
  /// Error bar on value: Monte Carlo standard error, or quadrature refinement
  /// difference plus series truncation and a rounding floor.
  double numerical_error = 0.0;
  double atom_term = 0.0;
  double continuous_term = 0.0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

/// h, K and V from a single pass over the same nodes or draws.
struct DivergenceSet {
  DivergenceEstimate h, k, v;
  const DivergenceEstimate& get(DivergenceKind kind) const;
};

DivergenceSet divergences_p(const NormalMixture& r0, const NormalMixture& r, const MetricOptions& options = {});
DivergenceEstimate divergence_p(DivergenceKind kind, const NormalMixture& r0, const NormalMixture& r,
                                const MetricOptions& options = {});

/// Increment laws: atom at 0 (scalar formula on e^{-lambda mesh}) plus the continuous part.
DivergenceSet divergences_q(const CppModel& model0, const CppModel& model, const MetricOptions& options = {});
DivergenceEstimate divergence_q(DivergenceKind kind, const CppModel& model0, const CppModel& model,
                                const MetricOptions& options = {});

/// Path laws on [0, mesh]. With L0 = lambda0 mesh and L = lambda mesh:
///   K(R0, R) = L0 K(P0, P) + K(L0, L).
double path_kl(const CppModel& model0, const CppModel& model, const MetricOptions& options = {});

/// V(R0, R) = III + IV with
///   III = L0 int (log(L0/L) + log(r0/r))^2 r0 <= 2 V(L0, L) + 2 L0 V(P0, P)
///   IV  = (L0 K(P0, P) + K(L0, L))^2          <= 2 L0^2 V(P0, P) + 2 K(L0, L)^2
struct PathVBound {
  double iii = 0.0;
  double iv = 0.0;
  double bound_iii = 0.0;
  double bound_iv = 0.0;
  double error = 0.0;  // numerical error on iii + iv
  bool iii_ok = false;
  bool iv_ok = false;

  double total() const { return iii + iv; }
  nlohmann::json to_json() const;
};
PathVBound path_v_bound(const CppModel& model0, const CppModel& model, const MetricOptions& options = {});

/// sqrt(L0) h(P0, P) + h(L0, L), an upper bound on h(R0, R).
double path_hellinger_bound(const CppModel& model0, const CppModel& model, const MetricOptions& options = {});

/// Intensity interval the constant C-bar is built for (in units of lambda * mesh).
struct LambdaRange {
  double lo = 0.5;
  double hi = 2.0;
};

/// Constants for the interval forms of the inequalities, all sups over [lo, hi]^2:
///   c_k   = sup K(a, b) / (a - b)^2
///   c_vr  = sup V(a, b) / (a - b)^2
///   k_max = sup K(a, b)
///   c_v   = 2 c_vr + 4 c_k + 2 c_k k_max   (bounds 2V + 4K + 2K^2 of the rates by c_v (a - b)^2)
///   kl    = max(hi, c_k)
///   v     = max(2 hi (1 + hi), 4 hi, c_v)
///   hell  = max(sqrt(hi), 1 / (2 sqrt(lo)))
///   c_bar = max(kl, v, hell)
struct LemmaOneConstant {
  double c_k, c_vr, k_max, c_v, kl, v, hell, c_bar;
  nlohmann::json to_json() const;
};
LemmaOneConstant lemma1_constant(LambdaRange range);

struct InequalityRecord {
  std::string id;
  double lhs = 0.0;
  double rhs = 0.0;
  double error = 0.0;  // combined numerical error of both sides
  bool pass = false;

  double margin() const { return rhs - lhs; }
  /// lhs / rhs, absent when rhs is 0.
  std::optional<double> tightness() const;
  nlohmann::json to_json() const;
};

/// Pass rule shared by every record: lhs <= rhs + 3 * error.
InequalityRecord make_record(std::string id, double lhs, double rhs, double error);

struct LemmaOneReport {
  /// eq5 .. eq10 in order: K, V, h path-level forms, then K, V, h with C-bar.
  std::array<InequalityRecord, 6> records;
  LemmaOneConstant constant{};
  LambdaRange range{};
  DivergenceSet p, q;

  bool all_pass() const;
  nlohmann::json to_json() const;
};

/// The range is widened to contain both intensities if needed.
LemmaOneReport check_lemma1(const CppModel& model0, const CppModel& model, const MetricOptions& options = {},
                            LambdaRange range = {});

/// h(Q0,Q) <= h-path bound, K(Q0,Q) <= K(R0,R), and V(Q0,Q) <= V(R0,R) + 4 K(Q0,Q).
/// The tighter V(Q0,Q) <= V(R0,R) is reported separately and does not gate the result.
struct DataProcessingReport {
  InequalityRecord h, k, v;
  InequalityRecord v_strict;
  PathVBound path_v;

  bool all_pass() const { return h.pass && k.pass && v.pass; }
  nlohmann::json to_json() const;
};
DataProcessingReport check_data_processing(const CppModel& model0, const CppModel& model,
                                           const MetricOptions& options = {});

/// Hellinger distance between r0 and a nonnegative density tabulated on a d <= 2 grid (trapezoid rule).
double hellinger_gridded(const NormalMixture& r0, const Grid& grid, std::span<const double> values);

/// Certification CSV rows: pair_id,inequality,lhs,rhs,margin,pass.
std::string certification_csv_header();
std::string certification_csv_rows(std::size_t pair_id, std::span<const InequalityRecord> records);

}  // namespace decompound

#pragma once

// The 36 per-flow statistics: packet sizes and inter-arrival times per
// direction over the handshake window, the six hello-header fields, and
// application-data packet sizes per direction.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "earlyid/reassembly.hpp"

namespace earlyid {

inline constexpr std::size_t kFeatureCount = 36;

using FeatureVector = std::array<double, kFeatureCount>;

/// Feature positions (0-based) within a FeatureVector.
namespace feature {
inline constexpr std::size_t kFwdCommon = 0;
inline constexpr std::size_t kBwdCommon = 9;
inline constexpr std::size_t kClientSessionIdLen = 18;
inline constexpr std::size_t kClientCipherSuites = 19;
inline constexpr std::size_t kClientExtensionsLen = 20;
inline constexpr std::size_t kServerSessionIdLen = 21;
inline constexpr std::size_t kServerCipherSuite = 22;
inline constexpr std::size_t kServerExtensionsLen = 23;
inline constexpr std::size_t kFwdAppdata = 24;
inline constexpr std::size_t kBwdAppdata = 30;
}  // namespace feature

/// Canonical CSV column names, in vector order.
const std::array<std::string_view, kFeatureCount>& feature_names();

/// True for features that are integers by construction (percentiles, maxima,
/// header fields); false for means and variances.
bool is_integer_feature(std::size_t index);

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nearest-rank percentile: the element at 1-based rank ceil(p/100 * n) of the
/// sorted values. Throws FeatureError on empty input.
double percentile(std::span<const double> values, unsigned p);

/// Same, for values already sorted ascending.
double percentile_sorted(std::span<const double> sorted, unsigned p);

struct SizeStats {
  double mean = 0, p25 = 0, p50 = 0, p75 = 0, variance = 0, max = 0;
  bool operator==(const SizeStats&) const = default;
};

/// All zeros for an empty list; population variance otherwise.
SizeStats size_stats(std::span<const double> sizes);

struct IatStats {
  double p25 = 0, p50 = 0, p75 = 0;
  bool operator==(const IatStats&) const = default;
};

/// Nearest-rank percentiles of successive gaps; zeros with fewer than two
/// timestamps.
IatStats iat_percentiles(std::span<const TimestampMicros> ascending);

/// Features of a ready flow using the handshake packets plus the first
/// min(d, available) application-data packets. Throws FeatureError when the
/// flow is not Ready.
FeatureVector extract(const FlowState& flow, unsigned d_threshold);

struct InstanceMeta {
  std::string flow;   // client-oriented 4-tuple
  std::string trace;  // source trace / partition id
  std::uint32_t appdata_available = 0;
  std::uint32_t d = 0;
};

struct LabeledInstance {
  FeatureVector features{};
  std::string label;
  InstanceMeta meta;
};

// Feature CSV: the 36 canonical columns, then label, meta_flow, meta_trace,
// meta_appdata, meta_d. One row per flow, LF line endings.

class SchemaMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_feature_csv(std::ostream& out, std::span<const LabeledInstance> rows);
std::vector<LabeledInstance> read_feature_csv(std::istream& in);

/// Formats one feature value the way the CSV does.
std::string format_feature(std::size_t index, double value);

}  // namespace earlyid

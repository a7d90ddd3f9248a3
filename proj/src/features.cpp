#include "earlyid/features.hpp"

#include <algorithm>

namespace earlyid {

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static const std::array<std::string_view, kFeatureCount> names = {
      "fwd_pkt_size_mean", "fwd_pkt_size_p25", "fwd_pkt_size_p50", "fwd_pkt_size_p75",
      "fwd_pkt_size_var",  "fwd_pkt_size_max", "fwd_iat_p25",      "fwd_iat_p50",
      "fwd_iat_p75",
      "bwd_pkt_size_mean", "bwd_pkt_size_p25", "bwd_pkt_size_p50", "bwd_pkt_size_p75",
      "bwd_pkt_size_var",  "bwd_pkt_size_max", "bwd_iat_p25",      "bwd_iat_p50",
      "bwd_iat_p75",
      "ch_session_id_len", "ch_cipher_suites_count", "ch_extensions_len",
      "sh_session_id_len", "sh_cipher_suite",        "sh_extensions_len",
      "fwd_app_size_mean", "fwd_app_size_p25", "fwd_app_size_p50", "fwd_app_size_p75",
      "fwd_app_size_var",  "fwd_app_size_max",
      "bwd_app_size_mean", "bwd_app_size_p25", "bwd_app_size_p50", "bwd_app_size_p75",
      "bwd_app_size_var",  "bwd_app_size_max",
  };
  return names;
}

bool is_integer_feature(std::size_t index) {
  switch (index) {
    case 0: case 4:    // fwd mean, var
    case 9: case 13:   // bwd mean, var
    case 24: case 28:  // fwd appdata mean, var
    case 30: case 34:  // bwd appdata mean, var
      return false;
    default:
      return index < kFeatureCount;
  }
}

double percentile_sorted(std::span<const double> sorted, unsigned p) {
  if (sorted.empty()) throw FeatureError("percentile of an empty list");
  const std::size_t n = sorted.size();
  std::size_t rank = (static_cast<std::size_t>(p) * n + 99) / 100;  // ceil(p*n/100)
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

double percentile(std::span<const double> values, unsigned p) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, p);
}

SizeStats size_stats(std::span<const double> sizes) {
  SizeStats s;
  if (sizes.empty()) return s;
  std::vector<double> sorted(sizes.begin(), sizes.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double sum = 0;
  for (double v : sorted) sum += v;
  s.mean = sum / n;
  double sq = 0;
  for (double v : sorted) sq += (v - s.mean) * (v - s.mean);
  s.variance = sq / n;
  s.p25 = percentile_sorted(sorted, 25);
  s.p50 = percentile_sorted(sorted, 50);
  s.p75 = percentile_sorted(sorted, 75);
  s.max = sorted.back();
  return s;
}

IatStats iat_percentiles(std::span<const TimestampMicros> ascending) {
  IatStats s;
  if (ascending.size() < 2) return s;
  std::vector<double> gaps;
  gaps.reserve(ascending.size() - 1);
  for (std::size_t i = 1; i < ascending.size(); ++i) {
    gaps.push_back(static_cast<double>(ascending[i] - ascending[i - 1]));
  }
  std::sort(gaps.begin(), gaps.end());
  s.p25 = percentile_sorted(gaps, 25);
  s.p50 = percentile_sorted(gaps, 50);
  s.p75 = percentile_sorted(gaps, 75);
  return s;
}

namespace {

struct DirectionWindow {
  std::vector<double> all_sizes;
  std::vector<TimestampMicros> all_times;
  std::vector<double> app_sizes;
};

void put_sizes(FeatureVector& fv, std::size_t at, const SizeStats& s) {
  fv[at + 0] = s.mean;
  fv[at + 1] = s.p25;
  fv[at + 2] = s.p50;
  fv[at + 3] = s.p75;
  fv[at + 4] = s.variance;
  fv[at + 5] = s.max;
}

void put_common(FeatureVector& fv, std::size_t at, DirectionWindow& w) {
  put_sizes(fv, at, size_stats(w.all_sizes));
  // Held-back segments can be delivered after later arrivals.
  std::sort(w.all_times.begin(), w.all_times.end());
  IatStats iat = iat_percentiles(w.all_times);
  fv[at + 6] = iat.p25;
  fv[at + 7] = iat.p50;
  fv[at + 8] = iat.p75;
}

}  // namespace

FeatureVector extract(const FlowState& flow, unsigned d_threshold) {
  if (flow.phase != FlowPhase::Ready) throw FeatureError("flow is not ready");

  DirectionWindow fwd, bwd;
  auto window = [&](Direction d) -> DirectionWindow& {
    return d == Direction::Forward ? fwd : bwd;
  };
  for (const PacketRecord& p : flow.handshake_pkts) {
    DirectionWindow& w = window(p.direction);
    w.all_sizes.push_back(p.payload_len);
    w.all_times.push_back(p.ts_micros);
  }
  const std::size_t used = std::min<std::size_t>(d_threshold, flow.appdata_pkts.size());
  for (std::size_t i = 0; i < used; ++i) {
    const PacketRecord& p = flow.appdata_pkts[i];
    DirectionWindow& w = window(p.direction);
    w.all_sizes.push_back(p.payload_len);
    w.all_times.push_back(p.ts_micros);
    w.app_sizes.push_back(p.payload_len);
  }

  FeatureVector fv{};
  put_common(fv, feature::kFwdCommon, fwd);
  put_common(fv, feature::kBwdCommon, bwd);
  if (flow.client_hello) {
    fv[feature::kClientSessionIdLen] = flow.client_hello->session_id_len;
    fv[feature::kClientCipherSuites] = flow.client_hello->cipher_suites_count;
    fv[feature::kClientExtensionsLen] = flow.client_hello->extensions_total_len;
  }
  if (flow.server_hello) {
    fv[feature::kServerSessionIdLen] = flow.server_hello->session_id_len;
    fv[feature::kServerCipherSuite] = flow.server_hello->chosen_cipher_suite;
    fv[feature::kServerExtensionsLen] = flow.server_hello->extensions_total_len;
  }
  put_sizes(fv, feature::kFwdAppdata, size_stats(fwd.app_sizes));
  put_sizes(fv, feature::kBwdAppdata, size_stats(bwd.app_sizes));
  return fv;
}

}  // namespace earlyid

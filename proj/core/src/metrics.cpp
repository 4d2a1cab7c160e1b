#include "mbbsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace mbbsim {

SequenceComponents sequence_components(const PhasorSet& v) {
  const Complex& va = v[0];
  const Complex& vb = v[1];
  const Complex& vc = v[2];
  SequenceComponents s;
  s.v0 = (va + vb + vc) / 3.0;
  s.v1 = (va + kAlpha * vb + kAlphaSq * vc) / 3.0;
  s.v2 = (va + kAlphaSq * vb + kAlpha * vc) / 3.0;
  return s;
}

PhasorSet from_sequence(const SequenceComponents& s) {
  PhasorSet v;
  v[0] = s.v0 + s.v1 + s.v2;
  v[1] = s.v0 + kAlphaSq * s.v1 + kAlpha * s.v2;
  v[2] = s.v0 + kAlpha * s.v1 + kAlphaSq * s.v2;
  return v;
}

UnbalanceMetrics vuf(const PhasorSet& v, double v1_floor) {
  const SequenceComponents s = sequence_components(v);
  UnbalanceMetrics m;
  const double v1 = std::abs(s.v1);
  if (v1 <= v1_floor) {
    m.degenerate = true;
    return m;
  }
  m.vuf2_percent = std::abs(s.v2) / v1 * 100.0;
  m.vuf0_percent = std::abs(s.v0) / v1 * 100.0;
  return m;
}

std::array<double, 3> rms_pu(const PhasorSet& v, double base_ll) {
  const double base_ln = base_ll / kSqrt3;
  return {std::abs(v[0]) / base_ln, std::abs(v[1]) / base_ln, std::abs(v[2]) / base_ln};
}

std::vector<LimitCrossing> threshold_report(const std::vector<VufSample>& series,
                                            double limit_percent) {
  std::vector<LimitCrossing> out;
  // Open crossing per (bus, metric) while scanning in time order.
  struct OpenState {
    bool open = false;
    LimitCrossing current;
  };
  std::map<std::pair<std::string, std::string>, OpenState> open;

  auto feed = [&](const std::string& bus, const std::string& metric, double t, double value) {
    OpenState& st = open[{bus, metric}];
    if (value > limit_percent) {
      if (!st.open) {
        st.open = true;
        st.current = LimitCrossing{bus, metric, t, t, value};
      } else {
        st.current.t_end = t;
        st.current.peak_percent = std::max(st.current.peak_percent, value);
      }
    } else if (st.open) {
      out.push_back(st.current);
      st.open = false;
    }
  };

  for (const VufSample& s : series) {
    feed(s.bus, "vuf2", s.t, s.vuf2_percent);
    feed(s.bus, "vuf0", s.t, s.vuf0_percent);
  }
  for (auto& [key, st] : open) {
    if (st.open) out.push_back(st.current);
  }
  std::sort(out.begin(), out.end(), [](const LimitCrossing& a, const LimitCrossing& b) {
    if (a.t_begin != b.t_begin) return a.t_begin < b.t_begin;
    if (a.bus != b.bus) return a.bus < b.bus;
    return a.metric < b.metric;
  });
  return out;
}

}  // namespace mbbsim

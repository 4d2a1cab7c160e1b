#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mbbsim {

using Complex = std::complex<double>;

/// Phase identifiers for a three-phase system. Ordering A < B < C is stable
/// and used for array indexing throughout.
enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

inline constexpr int index_of(Phase p) { return static_cast<int>(p); }

inline char phase_letter(Phase p) {
  switch (p) {
    case Phase::A: return 'A';
    case Phase::B: return 'B';
    case Phase::C: return 'C';
  }
  return '?';
}

/// Bit set over {A,B,C}. Value semantics, three bits.
class PhaseMask {
 public:
  constexpr PhaseMask() = default;
  constexpr explicit PhaseMask(std::uint8_t bits) : bits_(bits & 0x7u) {}

  static constexpr PhaseMask abc() { return PhaseMask(0x7u); }
  static constexpr PhaseMask none() { return PhaseMask(0x0u); }
  static constexpr PhaseMask single(Phase p) {
    return PhaseMask(static_cast<std::uint8_t>(1u << static_cast<int>(p)));
  }

  constexpr bool has(Phase p) const { return (bits_ >> static_cast<int>(p)) & 1u; }
  constexpr void add(Phase p) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<int>(p)); }
  constexpr int count() const {
    return static_cast<int>(has(Phase::A)) + static_cast<int>(has(Phase::B)) +
           static_cast<int>(has(Phase::C));
  }
  constexpr bool contains(PhaseMask other) const { return (bits_ & other.bits_) == other.bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  friend constexpr bool operator==(PhaseMask a, PhaseMask b) { return a.bits_ == b.bits_; }

  /// Parses strings like "ABC", "B", "AC". Throws std::invalid_argument on junk.
  static PhaseMask parse(const std::string& s);
  std::string to_string() const;

 private:
  std::uint8_t bits_ = 0;
};

inline PhaseMask PhaseMask::parse(const std::string& s) {
  PhaseMask m;
  for (char c : s) {
    switch (c) {
      case 'A': case 'a': m.add(Phase::A); break;
      case 'B': case 'b': m.add(Phase::B); break;
      case 'C': case 'c': m.add(Phase::C); break;
      default: throw std::invalid_argument("bad phase designator: " + s);
    }
  }
  return m;
}

inline std::string PhaseMask::to_string() const {
  std::string s;
  for (Phase p : kAllPhases) {
    if (has(p)) s.push_back(phase_letter(p));
  }
  return s;
}

/// One complex value per phase; entries for absent phases are zero.
/// Used for voltages (V), currents (A) and per-phase powers (VA) alike.
using PhasorSet = std::array<Complex, 3>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt3 = 1.7320508075688772;

/// Rotation operator a = 1 `/_` 120 degrees.
inline const Complex kAlpha{-0.5, 0.5 * kSqrt3};
inline const Complex kAlphaSq{-0.5, -0.5 * kSqrt3};

inline Complex polar_deg(double magnitude, double angle_deg) {
  return std::polar(magnitude, angle_deg * kPi / 180.0);
}

/// Balanced positive-sequence set with phase A at `angle_rad`.
inline PhasorSet balanced_set(double magnitude, double angle_rad = 0.0) {
  return {std::polar(magnitude, angle_rad),
          std::polar(magnitude, angle_rad - 2.0 * kPi / 3.0),
          std::polar(magnitude, angle_rad + 2.0 * kPi / 3.0)};
}

}  // namespace mbbsim

#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace kdpe {

// DGP1: (x, a, y). DGP2: (x, a0, l1, a1, y).
enum class Schema { Dgp1, Dgp2 };

constexpr int discrete_count(Schema s) { return s == Schema::Dgp1 ? 2 : 4; }
// Number of joint configurations of the binary coordinates.
constexpr int combo_count(Schema s) { return 1 << discrete_count(s); }

std::string_view to_string(Schema s);
Schema parse_schema(std::string_view name);

// One sample point. The binary coordinates are packed into a code, most
// significant coordinate first: DGP1 code = 2a + y, DGP2 code = 8a0 + 4l1 + 2a1 + y.
struct Observation {
  Schema schema = Schema::Dgp1;
  double x = 0.0;
  std::array<int, 4> bits{};

  static Observation dgp1(double x, int a, int y);
  static Observation dgp2(double x, int a0, int l1, int a1, int y);
  static Observation from_code(Schema schema, double x, int code);

  [[nodiscard]] int code() const;
  [[nodiscard]] int bit(int k) const { return bits[static_cast<std::size_t>(k)]; }

  // Named accessors; throw InvalidInput when the coordinate is absent from the schema.
  [[nodiscard]] int a() const;
  [[nodiscard]] int a0() const;
  [[nodiscard]] int l1() const;
  [[nodiscard]] int a1() const;
  [[nodiscard]] int y() const;

  bool operator==(const Observation&) const = default;
};

// Bit k of a combination code for the given schema.
constexpr int code_bit(Schema s, int code, int k) {
  return (code >> (discrete_count(s) - 1 - k)) & 1;
}

}  // namespace kdpe

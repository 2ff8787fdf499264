#include "kdpe/observation.hpp"

#include <string>

#include "kdpe/errors.hpp"

namespace kdpe {

std::string_view to_string(Schema s) { return s == Schema::Dgp1 ? "dgp1" : "dgp2"; }

Schema parse_schema(std::string_view name) {
  if (name == "dgp1" || name == "DGP1") return Schema::Dgp1;
  if (name == "dgp2" || name == "DGP2") return Schema::Dgp2;
  throw InvalidInput("unknown schema '" + std::string(name) + "'");
}

namespace {

int checked_bit(int v, const char* name) {
  if (v != 0 && v != 1) throw InvalidInput(std::string("coordinate ") + name + " must be 0 or 1");
  return v;
}

}  // namespace

Observation Observation::dgp1(double x, int a, int y) {
  Observation o;
  o.schema = Schema::Dgp1;
  o.x = x;
  o.bits = {checked_bit(a, "a"), checked_bit(y, "y"), 0, 0};
  return o;
}

Observation Observation::dgp2(double x, int a0, int l1, int a1, int y) {
  Observation o;
  o.schema = Schema::Dgp2;
  o.x = x;
  o.bits = {checked_bit(a0, "a0"), checked_bit(l1, "l1"), checked_bit(a1, "a1"), checked_bit(y, "y")};
  return o;
}

Observation Observation::from_code(Schema schema, double x, int code) {
  if (code < 0 || code >= combo_count(schema)) throw InvalidInput("combination code out of range");
  Observation o;
  o.schema = schema;
  o.x = x;
  for (int k = 0; k < discrete_count(schema); ++k) o.bits[static_cast<std::size_t>(k)] = code_bit(schema, code, k);
  return o;
}

int Observation::code() const {
  int c = 0;
  for (int k = 0; k < discrete_count(schema); ++k) c = (c << 1) | bits[static_cast<std::size_t>(k)];
  return c;
}

int Observation::a() const {
  if (schema != Schema::Dgp1) throw InvalidInput("'a' is a DGP1 coordinate");
  return bits[0];
}
int Observation::a0() const {
  if (schema != Schema::Dgp2) throw InvalidInput("'a0' is a DGP2 coordinate");
  return bits[0];
}
int Observation::l1() const {
  if (schema != Schema::Dgp2) throw InvalidInput("'l1' is a DGP2 coordinate");
  return bits[1];
}
int Observation::a1() const {
  if (schema != Schema::Dgp2) throw InvalidInput("'a1' is a DGP2 coordinate");
  return bits[2];
}
int Observation::y() const { return schema == Schema::Dgp1 ? bits[1] : bits[3]; }

}  // namespace kdpe

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "only/errors.hpp"

namespace only {

enum class Method { Regular, Only, Vcd, M3id };

inline constexpr std::array<Method, 4> kAllMethods = {Method::Regular, Method::Only, Method::Vcd, Method::M3id};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Regular: return "regular";
    case Method::Only: return "only";
    case Method::Vcd: return "vcd";
    case Method::M3id: return "m3id";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (s == method_name(m)) return m;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected regular, only, vcd or m3id)");
}

}  // namespace only

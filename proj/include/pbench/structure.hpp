#pragma once

#include <optional>
#include <string>

#include "pbench/errors.hpp"

namespace pbench {

// The four sentence constructions under study. Active/Passive and PO/DO
// form meaning-preserving alternation pairs.
enum class StructureLabel { Active, Passive, PO, DO };

inline const char* to_string(StructureLabel s) {
  switch (s) {
    case StructureLabel::Active:
      return "Active";
    case StructureLabel::Passive:
      return "Passive";
    case StructureLabel::PO:
      return "PO";
    case StructureLabel::DO:
      return "DO";
  }
  return "?";
}

inline std::optional<StructureLabel> structure_from_string(
    const std::string& s) {
  if (s == "Active") return StructureLabel::Active;
  if (s == "Passive") return StructureLabel::Passive;
  if (s == "PO") return StructureLabel::PO;
  if (s == "DO") return StructureLabel::DO;
  return std::nullopt;
}

// The alternate construction within the same alternation pair.
inline StructureLabel paired_alternate(StructureLabel s) {
  switch (s) {
    case StructureLabel::Active:
      return StructureLabel::Passive;
    case StructureLabel::Passive:
      return StructureLabel::Active;
    case StructureLabel::PO:
      return StructureLabel::DO;
    case StructureLabel::DO:
      return StructureLabel::PO;
  }
  throw ValueError("bad structure label");
}

constexpr StructureLabel kAllStructures[] = {
    StructureLabel::Active, StructureLabel::Passive, StructureLabel::PO,
    StructureLabel::DO};

}  // namespace pbench

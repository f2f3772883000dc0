#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace tracelab {

// Identifier of a host or router. Unique within one scenario.
enum class NodeId : std::uint32_t {};

// Identifier of an autonomous system.
enum class AsId : std::uint32_t {};

constexpr NodeId node(std::uint32_t v) noexcept { return NodeId{v}; }
constexpr AsId as_id(std::uint32_t v) noexcept { return AsId{v}; }

template <typename E>
constexpr auto raw(E e) noexcept -> std::underlying_type_t<E> {
  return static_cast<std::underlying_type_t<E>>(e);
}

inline std::ostream& operator<<(std::ostream& os, NodeId id) { return os << raw(id); }
inline std::ostream& operator<<(std::ostream& os, AsId id) { return os << raw(id); }

// Failure categories surfaced by the traceback strategies and experiment
// harness. Precondition violations use InvalidArgument.
enum class ErrorCode {
  InvalidArgument,
  AmbiguousOrder,
  IncompleteEvidence,
  NoConvergedTrials,
  AttackEnded,
  NoMatchingIngress,
  InconclusiveLink,
  ParseError,
  IoError,
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AmbiguousOrder: return "AmbiguousOrder";
    case ErrorCode::IncompleteEvidence: return "IncompleteEvidence";
    case ErrorCode::NoConvergedTrials: return "NoConvergedTrials";
    case ErrorCode::AttackEnded: return "AttackEnded";
    case ErrorCode::NoMatchingIngress: return "NoMatchingIngress";
    case ErrorCode::InconclusiveLink: return "InconclusiveLink";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorCode::InvalidArgument, what);
}

inline void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(name) + " must lie in [0,1], got " + std::to_string(p));
  }
}

}  // namespace tracelab

#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vanet {

/// Invalid parameters or experiment description. Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fixed-point iteration that did not settle. Carries the last residual.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Absorbing chain that never absorbs (idle probability of zero).
class DivergenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Protocol { HdEdca, FdEdca, Pbma };

inline constexpr std::array<Protocol, 3> kAllProtocols = {
    Protocol::HdEdca, Protocol::FdEdca, Protocol::Pbma};

constexpr std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::HdEdca: return "HD_EDCA";
    case Protocol::FdEdca: return "FD_EDCA";
    case Protocol::Pbma: return "PBMA";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  if (s == "HD_EDCA" || s == "hd") return Protocol::HdEdca;
  if (s == "FD_EDCA" || s == "fd") return Protocol::FdEdca;
  if (s == "PBMA" || s == "pbma") return Protocol::Pbma;
  throw ConfigError("unknown protocol '" + std::string(s) + "'");
}

/// CAM priority classes, highest first.
enum class Priority { Critical, Emergency, Normal };

inline constexpr std::array<Priority, 3> kAllPriorities = {
    Priority::Critical, Priority::Emergency, Priority::Normal};

constexpr std::string_view to_string(Priority p) {
  switch (p) {
    case Priority::Critical: return "Mc";
    case Priority::Emergency: return "Me";
    case Priority::Normal: return "Mn";
  }
  return "?";
}

constexpr std::size_t index_of(Priority p) { return static_cast<std::size_t>(p); }

}  // namespace vanet

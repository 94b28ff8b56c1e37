#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace irdual {

/// Malformed or out-of-contract input (bad parameters, bad files, bad ids).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Enumeration would exceed the configured size guard.
class EnumerationGuardError : public std::length_error {
 public:
  EnumerationGuardError(const std::string& what, std::size_t requested, std::size_t limit)
      : std::length_error(what + " (requested " + std::to_string(requested) + ", limit " +
                          std::to_string(limit) + ")"),
        requested_(requested),
        limit_(limit) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t requested_;
  std::size_t limit_;
};

/// A policy produced a decision outside the constraint set, or drove wealth to zero.
class AdmissibilityError : public std::runtime_error {
 public:
  AdmissibilityError(int stage, const std::string& why)
      : std::runtime_error("inadmissible decision at stage " + std::to_string(stage) + ": " + why),
        stage_(stage) {}

  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

/// The per-node Bellman maximization failed to converge.
class NodeSolveError : public std::runtime_error {
 public:
  NodeSolveError(int stage, double phi, const std::string& why)
      : std::runtime_error("Bellman node solve failed at stage " + std::to_string(stage) +
                           ", phi=" + std::to_string(phi) + ": " + why),
        stage_(stage),
        phi_(phi) {}

  int stage() const noexcept { return stage_; }
  double phi() const noexcept { return phi_; }

 private:
  int stage_;
  double phi_;
};

/// Two artifacts that must agree (e.g. a value grid and a config) do not.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace irdual

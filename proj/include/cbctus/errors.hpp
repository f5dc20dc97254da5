#pragma once

#include <stdexcept>
#include <string>

namespace cbctus {

/// Base class for all library errors. Carries the module and operation that
/// raised it so the CLI can print a precise diagnostic.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string operation, const std::string& what)
      : std::runtime_error(module + "::" + operation + ": " + what),
        module_(std::move(module)),
        operation_(std::move(operation)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& operation() const noexcept { return operation_; }

 private:
  std::string module_;
  std::string operation_;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Hand-eye motion set does not constrain the solution (parallel axes,
/// too little rotation).
class DegenerateMotion : public Error {
 public:
  using Error::Error;
};

/// Region grower escaped the vessel (bad prompt).
class Oversegmentation : public Error {
 public:
  using Error::Error;
};

/// Requested probe pose violates the in-plane rotation window.
class Infeasible : public Error {
 public:
  using Error::Error;
};

}  // namespace cbctus

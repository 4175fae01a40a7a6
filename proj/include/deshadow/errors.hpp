#pragma once

#include <stdexcept>
#include <string>

namespace deshadow {

// Argument errors use std::invalid_argument; the types below cover the rest.

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training step produces a non-finite loss. `component()`
/// names the offending term ("l_mat", "l_sm", "l_bd", "l_adv", "d_loss").
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::string component, const std::string& what)
      : std::runtime_error(what), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace deshadow

#pragma once

#include <stdexcept>
#include <string>

namespace chainscore {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/* bad manifest, unresolved reference, schema/task mismatch */
struct ConfigError : Error {
  using Error::Error;
};

/* file problems; message carries path and line number where known */
struct IoError : Error {
  using Error::Error;
};

/* judge transport or protocol failure; scoring must not continue past one */
struct GatewayError : Error {
  using Error::Error;
};

/* invalid numeric or structural argument */
struct ValueError : Error {
  using Error::Error;
};

}  // namespace chainscore

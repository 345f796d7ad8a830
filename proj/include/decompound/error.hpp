#pragma once

#include <stdexcept>
#include <string>

namespace decompound {

/// Bad caller input: dimension mismatches, out-of-range parameters, malformed files.
class InputError : public std::invalid_argument {
public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Requested route exists in principle but is not provided (e.g. grid quadrature above d = 2).
class UnsupportedError : public std::runtime_error {
public:
  explicit UnsupportedError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation produced a non-finite value where the contract forbids one.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace decompound

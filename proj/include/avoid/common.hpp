// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace avoid {

using TokenId = std::int32_t;

/// Last-layer hidden state of one token.
using HiddenVector = std::vector<float>;

/// Base class for every error this library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A sequence would exceed the model's maximum context.
class ContextOverflowError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or wire content.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace avoid

// Copyright 2026 The adapters-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace adapters {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the call itself was violated (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An adapter configuration is malformed or incompatible with the model dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Adapter, head, or fusion name clashes with an existing registration.
class RegistryError : public Error {
 public:
  using Error::Error;
};

/// A name could not be resolved.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// The requested operation is illegal in the current object state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Model inputs are out of range (token ids, masks).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Sequence growth exceeded the model's position capacity.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Composition tree is malformed: parse failure, forbidden nesting, or bad arity.
class CompositionError : public Error {
 public:
  using Error::Error;
};

/// A composition block's split sizes, batch sizes, or weights do not fit the input.
class ArithmeticError : public CompositionError {
 public:
  using CompositionError::CompositionError;
};

/// Checkpoint files are unreadable, corrupted, or incompatible.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace adapters

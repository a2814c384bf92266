#pragma once

#include <stdexcept>
#include <string>

namespace nbr {

/// Base class for all library errors.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thread registry is full.
class capacity_exceeded : public error {
 public:
  using error::error;
};

/// A phase transition that the phase state machine does not permit.
/// Signals a data-structure integration bug.
class illegal_transition : public error {
 public:
  using error::error;
};

/// A record lifecycle transition that skips a state or goes backward.
class illegal_lifecycle_transition : public error {
 public:
  using error::error;
};

/// More records passed to end_read_phase than the reservation row holds.
class too_many_reservations : public error {
 public:
  using error::error;
};

/// The same record was passed to retire twice (validation mode only).
class double_retire : public error {
 public:
  using error::error;
};

/// A guarded access touched a quarantine-poisoned record. This is the
/// detector firing: it means some reclaimer freed a record that was
/// still in use.
class poison_error : public error {
 public:
  using error::error;
};

class invalid_spec : public error {
 public:
  using error::error;
};

class unsupported_combination : public error {
 public:
  using error::error;
};

class io_failure : public error {
 public:
  using error::error;
};

class malformed_csv : public error {
 public:
  using error::error;
};

/// An interleaving script referenced an unknown op, worker or record.
class script_error : public error {
 public:
  using error::error;
};

}  // namespace nbr

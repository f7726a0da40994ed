#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmgp {

enum class ErrorKind {
  // dag
  CycleDetected,
  MultipleRoots,
  UnreachableNode,
  DanglingEdge,
  DuplicateEdge,
  UnknownNode,
  // numerics
  DimensionMismatch,
  InvalidDataset,
  SingularCorrelation,
  RankDeficientTrend,
  SingularCovariance,
  SingularConditioningBlock,
  // multi-fidelity
  NotNested,
  InTreeRequired,
  // design
  SizeNotMultiple,
  SizeMonotonicityViolated,
  BudgetTooSmall,
  EmptyDesign,
  // bench / metrics
  OutOfDomain,
  EmptyInput,
  NegativeVariance,
  // plumbing
  InvalidArgument,
  Parse,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace gmgp

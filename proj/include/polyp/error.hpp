#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polyp {

enum class ErrorCode {
  InvalidArgument,
  NoEvents,
  SingularHessian,
  MissingCovariate,
  NoOobTrees,
  NoUsablePairs,
  DegenerateLabels,
  UnrenderableSummary,
  NoCompleteCases,
  IneligibleHistory,
  InvalidConfig,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace polyp

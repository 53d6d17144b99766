#pragma once

// Verification suites shared by the command line and the acceptance binary.
// Each suite returns a flat list of named checks; a suite passes when every
// check does.

#include <cstdint>
#include <string>
#include <vector>

#include "eurnet/costmodel.hpp"

namespace eurnet::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;  // observed error, mismatch count, ...
  double limit = 0;  // the bound it was held to
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0;

  bool passed() const;
  std::size_t failures() const;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  /// Cost formula handed to the closed forms; a wrong constant must make
  /// flops-exact fail.
  GrmpFormula formula{};
  std::size_t gradcheck_seeds = 5;
  std::size_t e3_transforms = 100;
  std::size_t e3_residues = 40;
};

/// gradcheck, flops-exact, e3, oracles.
const std::vector<std::string>& suite_names();
SuiteResult run_suite(const std::string& name, const SuiteOptions& options = {});

SuiteResult gradcheck_suite(const SuiteOptions& options);
/// Checks are prefixed "rgconv/" (RGConv) or "grmp/" (GRMP).
SuiteResult flops_exact_suite(const SuiteOptions& options);
SuiteResult e3_suite(const SuiteOptions& options);
SuiteResult oracle_suite(const SuiteOptions& options);

}  // namespace eurnet::verify

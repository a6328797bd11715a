#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msw::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericAbort = 4,
};

// Runs one subcommand (train, eval, flops, attn, synth, gradcheck).
// `args` excludes the program name. Normal output goes to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace msw::cli

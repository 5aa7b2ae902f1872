#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vd {

// Subcommands: freqs, encode, decode, mask, augment, synth, train, eval.
// Returns 0 on success, 2 on usage errors and 1 on runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vd

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ttlora {

/// Entry point of the `ttlora` tool. `args[0]` is the program name.
/// Returns 0 on success, 1 on usage errors, contract violations and I/O
/// errors, 2 on numerical failure (divergence, non-finite values, failed
/// gradient check).
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(const std::vector<std::string>& args);

}  // namespace ttlora

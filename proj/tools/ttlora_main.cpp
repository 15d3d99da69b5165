#include <string>
#include <vector>

#include "ttlora/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ttlora::cli_main(args);
}

#include <iostream>
#include <string>
#include <vector>

#include "bridgeprobe/cli.h"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bridgeprobe::Run(args, std::cout, std::cerr);
}

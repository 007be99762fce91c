#include <vector>

#include "selftalk/cli.hpp"

int main(int argc, char** argv) {
  return selftalk::cli::run_command(std::vector<std::string>(argv + 1, argv + argc));
}

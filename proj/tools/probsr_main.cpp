// SPDX-License-Identifier: Apache-2.0

#include "probsr/cli.hpp"

int main(int argc, char **argv)
{
  return probsr::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

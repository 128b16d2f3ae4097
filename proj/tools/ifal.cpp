// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "ifal/cli/commands.hpp"

int main(int argc, char** argv) {
  return ifal::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "lesionaid/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return lesionaid::run_cli(args, std::cout, std::cerr);
}

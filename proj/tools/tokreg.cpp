// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "tokreg/cli/commands.hpp"
#include "tokreg/numerics/tensor.hpp"

int main(int argc, char** argv) {
  tokreg::numerics::tune_allocator();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return tokreg::cli::run_cli(args, std::cout, std::cerr);
}

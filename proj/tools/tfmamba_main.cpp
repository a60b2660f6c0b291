// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#include <iostream>
#include <string>
#include <vector>

#include "tfmamba/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tfmamba::cli::run_cli(args, std::cout, std::cerr);
}

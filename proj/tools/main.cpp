// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "fm3/cli.hpp"

int main(int argc, char** argv) {
  return fm3::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

// SPDX-License-Identifier: Apache-2.0
#include "krisk/cli.hpp"

int main(int argc, char** argv) { return krisk::run_cli(argc, argv); }

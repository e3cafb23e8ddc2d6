// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace krisk {

/// Entry point of the `krisk` command. Returns the process exit code:
/// 0 success, 2 configuration error, 3 data/model error, 4 runtime error.
int run_cli(int argc, const char* const* argv);

}  // namespace krisk

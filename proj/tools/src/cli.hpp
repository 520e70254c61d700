// Copyright 2026 The ocsd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ocsd::cli {

/// Entry point of the `ocsd` tool. `args` excludes the program name.
/// Results go to `out`; the resolved configuration, progress and errors go
/// to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Expands the flat JSON object in `--config <file>` into flags placed
/// directly after the subcommand name, so later command-line flags win.
/// Values: numbers and strings verbatim, arrays joined with commas, true as
/// a bare flag, false and null dropped.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace ocsd::cli

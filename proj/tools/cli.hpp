// Copyright (c) 2026 The dunet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DUNET_TOOLS_CLI_HPP_
#define DUNET_TOOLS_CLI_HPP_

namespace dunet::cli {

// Exit codes: 0 success, 2 usage or config error, 3 numeric failure.
int run_cli(int argc, char** argv);

}  // namespace dunet::cli

#endif  // DUNET_TOOLS_CLI_HPP_

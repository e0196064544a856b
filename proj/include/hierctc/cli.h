// hierctc/cli.h

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef HIERCTC_CLI_H_
#define HIERCTC_CLI_H_

namespace hierctc {

// Subcommand dispatch for the hierctc tool. Returns the process exit
// code: 0 on success, 1 on a runtime failure (one-line diagnostic on
// stderr), 2 on a usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace hierctc

#endif  // HIERCTC_CLI_H_

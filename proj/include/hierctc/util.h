// hierctc/util.h

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

#ifndef HIERCTC_UTIL_H_
#define HIERCTC_UTIL_H_

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace hierctc {

using Rng = std::mt19937_64;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// SplitMix64 finalizer; used to derive independent stream seeds from
// (base seed, index) pairs so per-utterance randomness stays stable no
// matter the generation order.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// log(exp(a) + exp(b)), safe for -inf arguments.
double log_sum_exp(double a, double b);
double log_sum_exp(double a, double b, double c);

// Whitespace runs collapsed to a single blank, ends trimmed.
std::string collapse_whitespace(const std::string& s);
std::vector<std::string> split_whitespace(const std::string& s);

// Shortest string that parses back to exactly the same double.
std::string format_double(double v);

std::string read_text_file(const std::string& path);   // throws on failure
void write_text_file(const std::string& path, const std::string& content);

}  // namespace hierctc

#endif  // HIERCTC_UTIL_H_

/*
 * Copyright (c) 2026, The vencode Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vencode {

/// Generator used throughout the library. Its output sequence is fixed by
/// the standard, so seeded streams are reproducible across platforms.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a.
std::uint64_t hash_string(std::string_view s) noexcept;

/// Independent stream seed for (seed, tag). Used to give every stimulus,
/// split, or generator purpose its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Uniform integer in [0, bound) by rejection; bound must be positive.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// Fisher-Yates permutation of [0, n). Implemented here rather than with
/// std::shuffle so the sequence does not depend on the standard library.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

double standard_normal(Rng& rng);
double uniform01(Rng& rng);

}  // namespace vencode

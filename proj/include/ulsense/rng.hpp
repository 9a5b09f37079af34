// SPDX-License-Identifier: Apache-2.0
//
// ulsense: asynchronous multi-user uplink OFDMA sensing with cluster sparse Bayesian learning
// Copyright (C) 2026 The ulsense authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include "ulsense/types.hpp"

#include <cstdint>
#include <random>

namespace ulsense
{

// Portable random source. The conversions to uniform / normal variates are
// written out here because the std:: distributions are implementation-defined,
// and result files must be byte-identical across standard libraries.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform(); // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n); // [0, n)
    double normal();
    cdouble complex_normal(double variance); // CN(0, variance)

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer over (base, stream); independent sub-streams per purpose.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

namespace stream
{
inline constexpr std::uint64_t scenario = 1;
inline constexpr std::uint64_t offsets = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t inference = 4;
} // namespace stream

} // namespace ulsense

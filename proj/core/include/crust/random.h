// Copyright 2026 The Authors.
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

#ifndef CRUST_RANDOM_H_
#define CRUST_RANDOM_H_

#include <cstdint>
#include <initializer_list>

namespace crust {

// SplitMix64 finalizer.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed for a (base seed, purpose tags...) tuple, so that
// e.g. the shuffle of epoch 3 in experience 2 never shares a stream with the
// label-flip draw.
constexpr std::uint64_t DeriveSeed(std::uint64_t base,
                                   std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = Mix64(base);
  for (std::uint64_t t : tags) h = Mix64(h ^ Mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace crust

#endif  // CRUST_RANDOM_H_

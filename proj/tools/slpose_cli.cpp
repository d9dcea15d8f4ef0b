// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT

#include <cstdio>

int main() {
  std::puts("slpose cli placeholder");
  return 0;
}

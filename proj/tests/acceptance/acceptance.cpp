// SPDX-License-Identifier: Apache-2.0
// Usage: acceptance [criterion ids...]
#include <iostream>
#include <string>
#include <vector>

#include "acceptance/criteria.hpp"

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::stoi(argv[i]));
  takd::log::quiet() = true;
  takd::acceptance::Options opt;
  opt.cli = TAKD_CLI_PATH;
  opt.work = std::filesystem::temp_directory_path() / "takd_acceptance";
  std::filesystem::create_directories(opt.work);
  const int failed = takd::acceptance::run(opt, only, std::cout);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}

#include <cstdlib>
#include <iostream>
#include <string>

#include "setctl/verify/acceptance.hpp"

// One line per criterion; nonzero exit if any fails.
int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  int failed = 0;
  for (int id : setctl::acceptance::suite(which)) {
    const auto r = setctl::acceptance::run(id);
    setctl::acceptance::print(std::cout, r);
    std::cout.flush();
    failed += !r.pass;
  }
  std::cout << (failed ? "FAILED: " + std::to_string(failed) + " criterion(s)" : std::string("all criteria passed")) << '\n';
  return failed ? EXIT_FAILURE : EXIT_SUCCESS;
}

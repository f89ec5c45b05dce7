#pragma once

// Acceptance criteria 1-10: each runs a fixed instance against its oracle
// and reports the measured values next to the tolerance.

#include <iosfwd>
#include <string>
#include <vector>

namespace setctl::acceptance {

struct Result {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string measured;   // what was observed
  std::string tolerance;  // what was required
  double seconds = 0;
  double budget = 0;      // wall-clock limit (s), 0 if none
};

// "unit", "containment", "oracle" or "all".
std::vector<int> suite(const std::string& name);

Result run(int id, unsigned long long seed = 1);
std::vector<Result> run_all(const std::vector<int>& ids, unsigned long long seed = 1);

// One line per result: PASS/FAIL, id, title, measured | tolerance, runtime.
void print(std::ostream& os, const Result& r);

}  // namespace setctl::acceptance

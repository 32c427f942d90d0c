// Acceptance harness: runs one numbered criterion at full size and prints a
// single machine-greppable pass/fail line plus its sub-checks.

#include <cstdlib>
#include <iostream>

#include "ddpm/experiment.hpp"
#include "ddpm/verification.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance <criterion id 1..13>\n";
    return 2;
  }
  const int id = std::atoi(argv[1]);
  try {
    ddpm::CriterionReport rep = ddpm::run_criterion(id, /*quick=*/false);
    std::cout << "acceptance criterion " << rep.id << " (" << rep.name
              << "): " << (rep.pass ? "PASS" : "FAIL") << "\n";
    for (const auto& c : rep.checks)
      std::cout << "  " << (c.pass ? "pass" : "FAIL") << "  " << c.name
                << " = " << ddpm::format_float_shortest(c.value) << " " << c.op
                << " " << ddpm::format_float_shortest(c.threshold) << "\n";
    return rep.pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance criterion " << id << ": ERROR " << e.what()
              << "\n";
    return 2;
  }
}

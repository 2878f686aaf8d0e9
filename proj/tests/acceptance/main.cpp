// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <iostream>

#include "CLI11.hpp"
#include "acceptance.hpp"

using namespace mrsg::acceptance;

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  int seeds = 20;
  app.add_option("--seeds", seeds, "Noisy seeds per mode")->check(CLI::Range(1, 1000));
  CLI11_PARSE(app, argc, argv);

  std::cout << "SIM-A runs (4 modes per run):" << std::endl;
  const Runs runs = run_sim_a(seeds);
  std::vector<Verdict> verdicts{zero_noise(runs), noisy(runs), ablation(runs), bandwidth(runs)};
  std::cout << "descriptor, optimizer, registration and protocol suites..." << std::endl;
  verdicts.push_back(descriptors());
  verdicts.push_back(optimizer(runs));
  verdicts.push_back(registration());
  verdicts.push_back(protocol(runs));

  int failed = 0;
  std::cout << '\n';
  for (const auto& v : verdicts) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << v.id << " (" << v.name << "): " << v.detail << '\n';
    failed += v.pass ? 0 : 1;
  }
  std::cout << verdicts.size() - static_cast<std::size_t>(failed) << "/" << verdicts.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}

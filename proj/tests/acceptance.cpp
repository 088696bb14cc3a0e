// SPDX-License-Identifier: Apache-2.0
//
// Acceptance criteria, one PASS/FAIL line each. Exit status is nonzero when
// any criterion fails.

#include "dmgd/verify.hpp"

#include <cstdio>
#include <functional>
#include <utility>
#include <vector>

int main() {
  using namespace dmgd;
  const std::vector<std::pair<int, std::function<CheckResult()>>> criteria = {
      {1, [] { return check_sinkhorn_exact(200); }},
      {2, [] { return check_exact_1d(100); }},
      {3, [] { return check_lemma1(100); }},
      {4, [] { return check_prop1(50); }},
      {5, [] { return check_prop2(200); }},
      {6, [] { return check_corollary1(100); }},
      {7, [] { return check_ot_gradient(100); }},
      {8, [] { return check_end_to_end(10); }},
      {9, [] { return check_ablation(10); }},
      {10, [] { return check_downstream(10); }},
      {11, [] { return check_determinism(); }},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r.name = "criterion";
      r.detail = std::string("threw: ") + e.what();
    }
    std::printf("criterion %2d %-12s %s  %s (%.2f s)\n", id, r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.detail.c_str(), r.seconds);
    std::fflush(stdout);
    failed += r.passed ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

#include <cstdio>
#include <cstdlib>
#include <string>

#include "graphonforge/verify.hpp"

// One line per criterion. Tolerances live in the checks; this runner adds the
// runtime limits and the repeat-run comparison of the serialized report.
int main() {
  using namespace graphonforge;
  verify::VerifyOptions opt;
  opt.seed = 0;
  bool all = true;
  verify::Report first;
  for (const auto& c : verify::all_checks()) {
    auto r = c.fn(opt);
    bool ok = r.passed && r.within_time();
    std::string note = r.within_time() ? "" : ", over the time limit";
    if (c.criterion == 8 && ok) {
      // Second pass over every check on a single thread must serialize identically.
      setenv("GRAPHONFORGE_THREADS", "1", 1);
      verify::Report again;
      for (const auto& d : verify::all_checks()) again.checks.push_back(d.criterion == 8 ? r : d.fn(opt));
      unsetenv("GRAPHONFORGE_THREADS");
      first.checks.push_back(r);
      const bool same = again.to_json().dump() == first.to_json().dump();
      if (!same) note += ", repeated report differs";
      ok = ok && same;
    } else {
      first.checks.push_back(r);
    }
    all = all && ok;
    std::printf("criterion %d [%s]: %s (%.2f s%s)\n", c.criterion, r.id.c_str(), ok ? "PASS" : "FAIL", r.seconds,
                note.c_str());
    if (!r.passed) std::printf("  detail: %s\n", r.detail.dump().c_str());
    std::fflush(stdout);
  }
  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return all ? 0 : 1;
}
